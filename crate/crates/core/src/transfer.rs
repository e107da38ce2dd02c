//! Transfer operators, sequential RPF triplets and Gibbs cylinder masses.
//!
//! All operator images are kept on the working-depth word space `D_w`: an
//! operator whose weights depend on `D_w` coordinates maps depth-`D_w`
//! functions to depth `D_w - 1`, so that space is invariant.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::funcspace::{FiniteDepthFn, FnSeq, Functional, RealFn, Scalar};
use crate::symbolic::{System, Word};

/// `sum_{a: A(a, x_0) = 1} w(a x) f(a x)`, with `mul(w, f)` the product.
///
/// The result lives at base `j+1` with depth `max(depth w, depth f, 2) - 1`.
pub(crate) fn apply_core<W: Scalar, T: Scalar>(
    sys: &System,
    weights: &FiniteDepthFn<W>,
    f: &FiniteDepthFn<T>,
    mul: impl Fn(W, T) -> T,
) -> Result<FiniteDepthFn<T>> {
    let j = f.base();
    if weights.base() != j {
        return Err(Error::BaseMismatch);
    }
    let de = weights.depth().max(f.depth()).max(2);
    let src = sys.space(j, de)?;
    let dst = sys.space(j + 1, de - 1)?;
    let step = sys.step(j, de, de - 1)?;
    let (wd, fd) = (weights.depth(), f.depth());
    let (wv, fv) = (weights.values(), f.values());
    let (ws, fs) = (weights.space(), f.space());
    let mut out = Vec::with_capacity(step.out_len());
    for y in 0..step.out_len() {
        let mut acc = T::zero();
        for &u in step.preimages(y) {
            let u = u as usize;
            let wi = if wd == de { u } else { ws.index_of_code(src.prefix_code(u, wd)).expect("prefix") };
            let fi = if fd == de { u } else { fs.index_of_code(src.prefix_code(u, fd)).expect("prefix") };
            acc = acc + mul(wv[wi], fv[fi]);
        }
        out.push(acc);
    }
    Ok(FiniteDepthFn::from_parts(sys, j + 1, dst, out))
}

/// `L_j f` for the potential `phi`, embedded at depth `max(depth f - 1, working_depth)`.
pub fn raw_apply(sys: &System, phi: &FnSeq, f: &RealFn, working_depth: usize) -> Result<RealFn> {
    let j = f.base();
    let dw = working_depth.max(phi.depth()).max(2);
    let w = phi.at_depth(sys, j, dw)?.exp();
    let out = apply_core(sys, &w, f, |a, b| a * b)?;
    let d = out.depth().max(dw);
    out.embed(d)
}

/// Tuning knobs of [`rpf_solve`].
#[derive(Clone, Debug)]
pub struct RpfOptions {
    pub tol: f64,
    /// Largest burn-in tried before giving up.
    pub k_cap: usize,
    /// Lower bound for the working depth (it is raised to the potential depth and 2).
    pub working_depth: usize,
    /// Index range `[lo, hi]`; defaults to the system window.
    pub range: Option<(i64, i64)>,
    /// Law of `x_lo` for chain-type models. When set, `h_lo` is chosen so that
    /// `mu_lo` has this first-coordinate marginal instead of burning in from the past.
    pub initial_law: Option<Vec<f64>>,
}

impl Default for RpfOptions {
    fn default() -> Self {
        RpfOptions { tol: 1e-10, k_cap: 200, working_depth: 2, range: None, initial_law: None }
    }
}

impl RpfOptions {
    /// Raises the working depth so that every sequence in `seqs` fits.
    pub fn fit_depths(mut self, seqs: &[&FnSeq]) -> Self {
        for s in seqs {
            self.working_depth = self.working_depth.max(s.depth());
        }
        self
    }
}

/// Sequential RPF triplets `(lambda_j, h_j, nu_j)` with the normalized potential.
#[derive(Clone, Debug)]
pub struct RpfData {
    sys: System,
    potential: FnSeq,
    lo: i64,
    hi: i64,
    working_depth: usize,
    burn_in_forward: usize,
    burn_in_backward: usize,
    lambda: Vec<f64>,
    h: Vec<RealFn>,
    nu: Vec<Functional<f64>>,
    mu: Vec<Functional<f64>>,
    g: Vec<RealFn>,
    exp_g: Vec<RealFn>,
    delta_forward: f64,
    delta_backward: f64,
    tail_forward: f64,
    tail_backward: f64,
}

struct Probe {
    steps: usize,
    distances: Vec<f64>,
}

/// Log-linear fit of a distance curve; `0` when it collapses immediately.
fn contraction_ratio(distances: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 1e-13)
        .map(|(k, &d)| (k as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxy / sxx).exp()
}

fn seed_pair(sys: &System, base: i64, depth: usize) -> Result<(RealFn, RealFn)> {
    let one = RealFn::constant(sys, base, depth, 1.0)?;
    let n = one.space().len();
    let other = RealFn::from_values(sys, base, depth, seed_values(n))?;
    Ok((one, other))
}

/// Irregular positive values for the second seed. A structured pattern can be
/// mapped onto a multiple of the constant seed after one step, which would
/// fake convergence.
fn seed_values(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
}

fn mean_normalized(f: RealFn) -> RealFn {
    let m = f.values().iter().sum::<f64>() / f.values().len() as f64;
    f.scale(1.0 / m)
}

impl RpfData {
    fn adjoint_step(sys: &System, phi: &FnSeq, dw: usize, nu_next: &Functional<f64>) -> Result<(Functional<f64>, f64)> {
        let j = nu_next.base() - 1;
        let space = sys.space(j, dw)?;
        let w = phi.at_depth(sys, j, dw)?;
        let marg = nu_next.marginal(dw - 1)?;
        let ms = marg.space();
        let weights: Vec<f64> = (0..space.len())
            .map(|u| {
                let t = ms.index_of_code(space.tail_code(u)).expect("tail admissible");
                w.values()[u].exp() * marg.weights()[t]
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|x| x / total).collect();
        Ok((Functional::from_parts(sys, j, space, weights), total))
    }

    fn forward_probe(sys: &System, phi: &FnSeq, dw: usize, lo: i64, k: usize) -> Result<(Probe, RealFn)> {
        let start = lo - k as i64;
        let (mut a, mut b) = seed_pair(sys, start, dw)?;
        let mut distances = Vec::with_capacity(k);
        for _ in 0..k {
            a = mean_normalized(raw_apply(sys, phi, &a, dw)?);
            b = mean_normalized(raw_apply(sys, phi, &b, dw)?);
            distances.push(a.max_abs_diff(&b)?);
        }
        Ok((Probe { steps: k, distances }, a))
    }

    fn backward_probe(sys: &System, phi: &FnSeq, dw: usize, hi: i64, k: usize) -> Result<(Probe, Functional<f64>)> {
        let start = hi + k as i64;
        let space = sys.space(start, dw)?;
        let n = space.len();
        let ua = vec![1.0 / n as f64; n];
        let raw = seed_values(n);
        let s: f64 = raw.iter().sum();
        let ub = raw.into_iter().map(|x| x / s).collect();
        let mut a = Functional::from_parts(sys, start, space.clone(), ua);
        let mut b = Functional::from_parts(sys, start, space, ub);
        let mut distances = Vec::with_capacity(k);
        for _ in 0..k {
            a = Self::adjoint_step(sys, phi, dw, &a)?.0;
            b = Self::adjoint_step(sys, phi, dw, &b)?.0;
            let d: f64 = a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()).sum();
            distances.push(d);
        }
        Ok((Probe { steps: k, distances }, a))
    }

    fn adaptive<R>(
        what: &str,
        tol: f64,
        k_cap: usize,
        mut run: impl FnMut(usize) -> Result<(Probe, R)>,
    ) -> Result<(Probe, R)> {
        let mut k = 8usize.min(k_cap.max(1));
        loop {
            let (probe, out) = run(k)?;
            let last = probe.distances.last().copied().unwrap_or(0.0);
            if last <= tol {
                return Ok((probe, out));
            }
            if k >= k_cap {
                return Err(Error::NoConvergence { what: what.into(), iterations: k_cap });
            }
            k = (2 * k).min(k_cap);
        }
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn potential(&self) -> &FnSeq {
        &self.potential
    }

    /// Covered index range `[lo, hi]`; operators exist for `lo <= j < hi`.
    pub fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn working_depth(&self) -> usize {
        self.working_depth
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in_forward.max(self.burn_in_backward)
    }

    pub fn burn_in_forward(&self) -> usize {
        self.burn_in_forward
    }

    pub fn burn_in_backward(&self) -> usize {
        self.burn_in_backward
    }

    /// Measured geometric contraction ratio of the burn-in iterations.
    pub fn contraction_estimate(&self) -> f64 {
        self.delta_forward.max(self.delta_backward)
    }

    pub fn contraction_forward(&self) -> f64 {
        self.delta_forward
    }

    pub fn contraction_backward(&self) -> f64 {
        self.delta_backward
    }

    /// Distance between two independently seeded iterates at the end of burn-in.
    pub fn tail_error(&self) -> f64 {
        self.tail_forward.max(self.tail_backward)
    }

    fn point(&self, j: i64) -> Result<usize> {
        if j < self.lo || j > self.hi {
            return Err(Error::IndexOutOfWindow { j, lo: self.lo, hi: self.hi });
        }
        Ok((j - self.lo) as usize)
    }

    fn edge(&self, j: i64) -> Result<usize> {
        if j < self.lo || j >= self.hi {
            return Err(Error::IndexOutOfWindow { j, lo: self.lo, hi: self.hi - 1 });
        }
        Ok((j - self.lo) as usize)
    }

    pub fn lambda(&self, j: i64) -> Result<f64> {
        Ok(self.lambda[self.edge(j)?])
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn h(&self, j: i64) -> Result<&RealFn> {
        Ok(&self.h[self.point(j)?])
    }

    pub fn nu(&self, j: i64) -> Result<&Functional<f64>> {
        Ok(&self.nu[self.point(j)?])
    }

    /// `mu_j = h_j nu_j` on working-depth cylinders.
    pub fn mu(&self, j: i64) -> Result<&Functional<f64>> {
        Ok(&self.mu[self.point(j)?])
    }

    /// Normalized potential `g_j`.
    pub fn g(&self, j: i64) -> Result<&RealFn> {
        Ok(&self.g[self.edge(j)?])
    }

    pub(crate) fn exp_g(&self, j: i64) -> Result<&RealFn> {
        Ok(&self.exp_g[self.edge(j)?])
    }

    /// `L^_j f` at natural depth (`max(depth f, D_w) - 1`).
    pub(crate) fn normalized_natural<T: Scalar>(&self, f: &FiniteDepthFn<T>) -> Result<FiniteDepthFn<T>> {
        let w = self.exp_g(f.base())?;
        apply_core(&self.sys, w, f, |a, b| b.scale_real(a))
    }

    /// `L^_j f`, embedded at depth `max(depth f - 1, D_w)`.
    pub fn normalized_apply<T: Scalar>(&self, f: &FiniteDepthFn<T>) -> Result<FiniteDepthFn<T>> {
        let out = self.normalized_natural(f)?;
        let d = out.depth().max(self.working_depth);
        out.embed(d)
    }

    /// `L_j f` for the original potential.
    pub fn raw_apply(&self, f: &RealFn) -> Result<RealFn> {
        raw_apply(&self.sys, &self.potential, f, self.working_depth)
    }

    /// `mu_j(f)` for a function of any depth, pushing it forward with `L^`
    /// until it fits the working depth.
    pub fn expect<T: Scalar>(&self, f: &FiniteDepthFn<T>) -> Result<T> {
        let mut cur = f.clone();
        while cur.depth() > self.working_depth {
            cur = self.normalized_natural(&cur)?;
        }
        let j = cur.base();
        let mu = self.mu(j)?;
        let g = cur.embed(self.working_depth)?;
        let mut acc = T::zero();
        for (&w, &v) in mu.weights().iter().zip(g.values()) {
            acc = acc + v.scale_real(w);
        }
        Ok(acc)
    }

    pub fn expect_complex(&self, f: &FiniteDepthFn<Complex64>) -> Result<Complex64> {
        self.expect(f)
    }

    /// `mu_j([w])`; `0` for inadmissible words.
    pub fn gibbs_cylinder(&self, w: &Word) -> Result<f64> {
        if w.is_empty() {
            return Ok(1.0);
        }
        if !self.sys.is_admissible(w) {
            return Ok(0.0);
        }
        let target = w.symbols.clone();
        let d = target.len();
        let ind = RealFn::from_fn(&self.sys, w.base, d, |x| if x == &target[..] { 1.0 } else { 0.0 })?;
        Ok(self.expect(&ind)?.clamp(0.0, 1.0))
    }

    /// `mu_j([w]) lambda_{j,n} e^{-S_{j,n} phi}` along the lexicographically
    /// first continuation of `w`.
    pub fn sandwich_ratio(&self, w: &Word) -> Result<f64> {
        if !self.sys.is_admissible(w) || w.is_empty() {
            return Err(Error::Inadmissible(format!("{w} at {}", w.base)));
        }
        let ext = first_continuation(&self.sys, w, self.potential.depth() - 1);
        let n = w.len();
        let mut log = 0.0;
        for k in 0..n {
            let j = w.base + k as i64;
            log += self.lambda(j)?.ln() - self.potential.eval(j, &ext[k..]);
        }
        Ok(self.gibbs_cylinder(w)? * log.exp())
    }

    /// `sup |L^_j 1 - 1|`.
    pub fn normalization_residual(&self, j: i64) -> Result<f64> {
        let one = RealFn::constant(&self.sys, j, 1, 1.0)?;
        let out = self.normalized_apply(&one)?;
        Ok(out.values().iter().fold(0.0, |m, v| m.max((v - 1.0).abs())))
    }

    /// `sup |L_j h_j - lambda_j h_{j+1}|`.
    pub fn eigen_residual(&self, j: i64) -> Result<f64> {
        let lh = self.raw_apply(self.h(j)?)?;
        let rhs = self.h(j + 1)?.scale(self.lambda(j)?);
        lh.max_abs_diff(&rhs)
    }

    /// `|mu_j((f o T_j) g) - mu_{j+1}(f L^_j g)|` for `f` at `j+1` and `g` at `j`.
    pub fn duality_residual(&self, f: &RealFn, g: &RealFn) -> Result<f64> {
        let j = g.base();
        if f.base() != j + 1 {
            return Err(Error::BaseMismatch);
        }
        let lhs = self.expect(&f.compose_shift()?.mul(g)?)?;
        let rhs = self.expect(&f.mul(&self.normalized_apply(g)?)?)?;
        Ok((lhs - rhs).abs())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let tables = |f: &RealFn| -> serde_json::Value {
            f.table().into_iter().map(|(k, v)| (k, json!(v))).collect::<serde_json::Map<_, _>>().into()
        };
        let nu_tables = |f: &Functional<f64>| -> serde_json::Value {
            let s = f.space();
            (0..s.len())
                .map(|i| (crate::symbolic::symbols_to_string(&s.symbols(i)), json!(f.weights()[i])))
                .collect::<serde_json::Map<_, _>>()
                .into()
        };
        json!({
            "window": [self.lo, self.hi],
            "working_depth": self.working_depth,
            "burn_in": self.burn_in(),
            "burn_in_forward": self.burn_in_forward,
            "burn_in_backward": self.burn_in_backward,
            "contraction_estimate": self.contraction_estimate(),
            "tail_error": self.tail_error(),
            "lambda": self.lambda,
            "h": self.h.iter().map(tables).collect::<Vec<_>>(),
            "nu": self.nu.iter().map(nu_tables).collect::<Vec<_>>(),
        })
    }
}

/// `w` followed by `extra` symbols, each the smallest admissible successor.
pub(crate) fn first_continuation(sys: &System, w: &Word, extra: usize) -> Vec<u8> {
    let mut s = w.symbols.clone();
    for _ in 0..extra {
        let j = w.base + s.len() as i64 - 1;
        let last = *s.last().expect("nonempty word") as usize;
        let next = (0..sys.alphabet(j + 1)).find(|&b| sys.allowed(j, last, b)).expect("no dead symbols");
        s.push(next as u8);
    }
    s
}

/// Solves for the RPF triplets of `phi` on the requested range.
pub fn rpf_solve(sys: &System, phi: &FnSeq, opts: &RpfOptions) -> Result<RpfData> {
    let (lo, hi) = opts.range.unwrap_or((0, sys.window()));
    if hi <= lo {
        return Err(Error::InvalidArgument(format!("empty rpf range [{lo}, {hi}]")));
    }
    let dw = opts.working_depth.max(phi.depth()).max(2);

    let (bprobe, nu_hi) = RpfData::adaptive("backward conformal iteration", opts.tol, opts.k_cap, |k| {
        RpfData::backward_probe(sys, phi, dw, hi, k)
    })?;
    let len = (hi - lo + 1) as usize;
    let mut nu = Vec::with_capacity(len);
    let mut lambda = Vec::with_capacity(len - 1);
    nu.push(nu_hi);
    for _ in 0..len - 1 {
        let (prev, total) = RpfData::adjoint_step(sys, phi, dw, nu.last().expect("nonempty"))?;
        lambda.push(total);
        nu.push(prev);
    }
    nu.reverse();
    lambda.reverse();

    let (fprobe, h_lo) = match &opts.initial_law {
        Some(law) => {
            let d = sys.alphabet(lo);
            if law.len() != d {
                return Err(Error::ShapeMismatch(format!("initial law of length {} for alphabet {d}", law.len())));
            }
            let marg = nu[0].marginal(1)?;
            let ms = marg.space();
            let h1 = RealFn::from_fn(sys, lo, 1, |x| {
                let i = ms.index_of(x).expect("symbol admissible");
                law[x[0] as usize] / marg.weights()[i]
            })?;
            (Probe { steps: 0, distances: vec![] }, h1.embed(dw)?)
        }
        None => RpfData::adaptive("forward density iteration", opts.tol, opts.k_cap, |k| {
            RpfData::forward_probe(sys, phi, dw, lo, k)
        })?,
    };
    let c = nu[0].pair(&h_lo)?;
    let mut h = Vec::with_capacity(len);
    h.push(h_lo.scale(1.0 / c));
    for i in 0..len - 1 {
        let next = raw_apply(sys, phi, &h[i], dw)?.scale(1.0 / lambda[i]);
        h.push(next);
    }

    let mut mu = Vec::with_capacity(len);
    for (hj, nj) in h.iter().zip(&nu) {
        let w = hj.values().iter().zip(nj.weights()).map(|(a, b)| a * b).collect();
        mu.push(Functional::from_parts(sys, nj.base(), nj.space().clone(), w));
    }

    let mut g = Vec::with_capacity(len - 1);
    let mut exp_g = Vec::with_capacity(len - 1);
    for i in 0..len - 1 {
        let j = lo + i as i64;
        let phij = phi.at_depth(sys, j, dw)?;
        let next = h[i + 1].truncate(dw - 1)?.compose_shift()?;
        let gj = phij
            .add(&h[i].ln())?
            .sub(&next.ln())?
            .map(|v| v - lambda[i].ln());
        exp_g.push(gj.exp());
        g.push(gj);
    }

    Ok(RpfData {
        sys: sys.clone(),
        potential: phi.clone(),
        lo,
        hi,
        working_depth: dw,
        burn_in_forward: fprobe.steps,
        burn_in_backward: bprobe.steps,
        lambda,
        h,
        nu,
        mu,
        g,
        exp_g,
        delta_forward: contraction_ratio(&fprobe.distances),
        delta_backward: contraction_ratio(&bprobe.distances),
        tail_forward: fprobe.distances.last().copied().unwrap_or(0.0),
        tail_backward: bprobe.distances.last().copied().unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{validate, Adjacency, SystemSpec};

    fn full2(n: i64) -> System {
        validate(SystemSpec::full_shift(2, n)).unwrap()
    }

    fn golden(n: i64) -> System {
        let a = Adjacency::from_rows(&[vec![1, 1], vec![1, 0]]).unwrap();
        validate(SystemSpec::homogeneous(a, n)).unwrap()
    }

    fn chain_potential(p: [[f64; 2]; 2]) -> FnSeq {
        FnSeq::new(2, "chain", move |_, x| p[x[0] as usize][x[1] as usize].ln())
    }

    #[test]
    fn raw_apply_examples() {
        let sys = full2(4);
        let one = RealFn::constant(&sys, 0, 1, 1.0).unwrap();
        let half = raw_apply(&sys, &FnSeq::constant(-(2f64.ln())), &one, 2).unwrap();
        assert!(half.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let two = raw_apply(&sys, &FnSeq::constant(0.0), &one, 2).unwrap();
        assert!(two.values().iter().all(|v| *v == 2.0));
        let g = golden(4);
        let out = raw_apply(&g, &FnSeq::constant(0.0), &RealFn::constant(&g, 0, 1, 1.0).unwrap(), 2).unwrap();
        for (x, v) in out.space().iter_symbols().zip(out.values()) {
            assert_eq!(*v, if x[0] == 0 { 2.0 } else { 1.0 });
        }
    }

    #[test]
    fn uniform_coin_triplet() {
        let sys = full2(8);
        let rpf = rpf_solve(&sys, &FnSeq::constant(-(2f64.ln())), &RpfOptions::default()).unwrap();
        for j in 0..8 {
            assert!((rpf.lambda(j).unwrap() - 1.0).abs() < 1e-14);
            assert!(rpf.g(j).unwrap().values().iter().all(|v| (v + 2f64.ln()).abs() < 1e-14));
        }
        for j in 0..=8 {
            assert!(rpf.h(j).unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-14));
            assert!(rpf.nu(j).unwrap().weights().iter().all(|v| (v - 0.25).abs() < 1e-14));
        }
        let w = Word::parse(2, "101").unwrap();
        assert!((rpf.gibbs_cylinder(&w).unwrap() - 0.125).abs() < 1e-14);
    }

    #[test]
    fn golden_mean_pressure() {
        let sys = golden(10);
        let rpf = rpf_solve(&sys, &FnSeq::constant(0.0), &RpfOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        for j in 0..10 {
            assert!((rpf.lambda(j).unwrap() - phi).abs() < 1e-8);
            assert!(rpf.normalization_residual(j).unwrap() < 1e-14);
            assert!(rpf.eigen_residual(j).unwrap() < 1e-9);
        }
        assert_eq!(rpf.gibbs_cylinder(&Word::parse(0, "11").unwrap()).unwrap(), 0.0);
        assert!(rpf.contraction_estimate() < 0.9);
    }

    #[test]
    fn doubly_stochastic_chain_is_already_normalized() {
        let sys = full2(6);
        let rpf = rpf_solve(&sys, &chain_potential([[0.7, 0.3], [0.3, 0.7]]), &RpfOptions::default()).unwrap();
        for j in 0..6 {
            assert!((rpf.lambda(j).unwrap() - 1.0).abs() < 1e-12);
            let g = rpf.g(j).unwrap();
            let phi = chain_potential([[0.7, 0.3], [0.3, 0.7]]).at_depth(&sys, j, 2).unwrap();
            assert!(g.max_abs_diff(&phi).unwrap() < 1e-10);
        }
        for j in 0..=6 {
            assert!(rpf.h(j).unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn chain_cylinder_with_initial_law() {
        let sys = full2(6);
        let opts = RpfOptions { initial_law: Some(vec![0.5, 0.5]), ..RpfOptions::default() };
        let p = [[0.7, 0.3], [0.4, 0.6]];
        let rpf = rpf_solve(&sys, &chain_potential(p), &opts).unwrap();
        let m = rpf.gibbs_cylinder(&Word::parse(0, "01").unwrap()).unwrap();
        assert!((m - 0.15).abs() < 1e-12);
        let ind = FnSeq::indicator(vec![0]).at(&sys, 0).unwrap();
        let out = rpf.normalized_apply(&ind).unwrap();
        for (x, v) in out.space().iter_symbols().zip(out.values()) {
            let prob0 = [0.5, 0.5][0] * p[0][x[0] as usize];
            let marg = 0.5 * p[0][x[0] as usize] + 0.5 * p[1][x[0] as usize];
            assert!((v - prob0 / marg).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_apply_averages_first_symbol() {
        let sys = full2(6);
        let rpf = rpf_solve(&sys, &FnSeq::constant(-(2f64.ln())), &RpfOptions::default()).unwrap();
        let f = FnSeq::first_symbol().at(&sys, 1).unwrap();
        let out = rpf.normalized_apply(&f).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        let one_next = RealFn::constant(&sys, 2, 1, 1.0).unwrap();
        let one = RealFn::constant(&sys, 1, 1, 1.0).unwrap();
        assert!(rpf.duality_residual(&one_next, &one).unwrap() < 1e-15);
        let f2 = FnSeq::first_symbol().at(&sys, 2).unwrap();
        assert!(rpf.duality_residual(&f2, &f).unwrap() < 1e-12);
    }

    #[test]
    fn out_of_window_is_reported() {
        let sys = full2(4);
        let rpf = rpf_solve(&sys, &FnSeq::constant(0.0), &RpfOptions::default()).unwrap();
        assert!(matches!(rpf.lambda(4), Err(Error::IndexOutOfWindow { .. })));
        let f = RealFn::constant(&sys, 7, 2, 1.0).unwrap();
        assert!(rpf.normalized_apply(&f).is_err());
    }

    #[test]
    fn sandwich_bounded_on_golden() {
        let sys = golden(12);
        let rpf = rpf_solve(&sys, &FnSeq::constant(0.0), &RpfOptions::default()).unwrap();
        for len in 1..=6 {
            for w in crate::symbolic::enumerate_words(&sys, 0, len).unwrap() {
                let r = rpf.sandwich_ratio(&w).unwrap();
                assert!(r > 1.0 / 50.0 && r < 50.0, "{w}: {r}");
            }
        }
    }
}
