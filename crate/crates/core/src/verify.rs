//! Discrepancy statistics for central and local limit theorems.
//!
//! Every statistic is computed from exact laws: lattice PMFs, smoothed
//! densities obtained by Fourier inversion, or a forward dynamic program over
//! the Gibbs chain when the observable is not integer-valued.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::decomp::{check_density, moment_curve, Moments};
use crate::dist::{fejer_transform, integer_ranges, lattice_pmf, smoothed_density, LatticePmf};
use crate::error::{Error, Result};
use crate::funcspace::{ComplexFn, FnSeq, RealFn};
use crate::sampler::forward_kernels;
use crate::spectral::{value_gcd_guess, Twisted};
use crate::transfer::RpfData;

/// Smallest `sigma_n` accepted by the CLT statistic.
pub const MIN_SIGMA_CLT: f64 = 0.5;
/// Smallest `sigma_n` accepted by the local and Edgeworth statistics.
pub const MIN_SIGMA_LOCAL: f64 = 3.0;

pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// A finitely supported law on the real line, atoms sorted by position.
#[derive(Clone, Debug)]
pub struct DiscreteLaw {
    atoms: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl DiscreteLaw {
    /// Atoms `(position, mass)`; equal positions are merged.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.retain(|a| a.1 > 0.0);
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite atoms"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        let mut acc = 0.0;
        let cumulative = merged
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        DiscreteLaw { atoms: merged, cumulative }
    }

    pub fn from_pmf(pmf: &LatticePmf) -> Self {
        let (a, _) = pmf.support();
        Self::new(pmf.masses.iter().enumerate().map(|(i, &p)| ((a + i as i64) as f64, p)).collect())
    }

    /// Empirical law of samples.
    pub fn empirical(samples: &[f64]) -> Self {
        let w = 1.0 / samples.len() as f64;
        Self::new(samples.iter().map(|&s| (s, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.0 * a.1).sum::<f64>() / self.total()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|a| a.1 * (a.0 - m).powi(2)).sum::<f64>() / self.total()
    }

    pub fn third_central(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|a| a.1 * (a.0 - m).powi(3)).sum::<f64>() / self.total()
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 < x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

/// Exact law of `S_n f` under `q0 dmu_lo` by a forward dynamic program over
/// the Gibbs chain; values closer than `1e-9` are merged.
pub fn exact_law(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize, max_atoms: usize) -> Result<DiscreteLaw> {
    check_density(rpf, q0)?;
    let lo = q0.base();
    let dw = rpf.working_depth();
    let sys = rpf.system();
    let kernels = forward_kernels(rpf)?;
    let key = |v: f64| (v * 1e9).round() as i64;
    let space0 = sys.space(lo, dw)?;
    let q = q0.embed(dw)?;
    let mu = rpf.mu(lo)?;
    let mut layer: Vec<HashMap<i64, (f64, f64)>> = vec![HashMap::new(); space0.len()];
    for (i, cell) in layer.iter_mut().enumerate() {
        let p = q.values()[i] * mu.weights()[i];
        if p > 0.0 {
            cell.insert(0, (0.0, p));
        }
    }
    let mut space = space0;
    for k in 0..n {
        let j = lo + k as i64;
        let fj = f.at_depth(sys, j, dw)?;
        if fj.depth() != dw {
            return Err(Error::InvalidArgument(format!("observable depth {} exceeds working depth {dw}", f.depth())));
        }
        let last = k + 1 == n;
        let next_space = sys.space(j + 1, dw)?;
        let mut next: Vec<HashMap<i64, (f64, f64)>> = vec![HashMap::new(); if last { 1 } else { next_space.len() }];
        let mut atoms = 0usize;
        for (i, cell) in layer.iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let fv = fj.values()[i];
            let s = space.symbols(i);
            let targets: Vec<(usize, f64)> = if last {
                vec![(0, 1.0)]
            } else {
                let ctx = &s[1..];
                let d = sys.alphabet(j + dw as i64);
                let mut t = Vec::new();
                for b in 0..d as u8 {
                    let p = kernels.conditional(j + 1, ctx, b)?;
                    if p > 0.0 {
                        let mut w = ctx.to_vec();
                        w.push(b);
                        t.push((next_space.index_of(&w).expect("admissible continuation"), p));
                    }
                }
                t
            };
            for &(v, mass) in cell.values() {
                let nv = v + fv;
                for &(ti, p) in &targets {
                    let e = next[ti].entry(key(nv)).or_insert((nv, 0.0));
                    e.1 += mass * p;
                }
            }
        }
        for c in &next {
            atoms += c.len();
        }
        if atoms > max_atoms {
            return Err(Error::RangeOverflow { range: atoms as u64, cap: max_atoms as u64 });
        }
        layer = next;
        space = next_space;
    }
    if n == 0 {
        return Ok(DiscreteLaw::new(vec![(0.0, 1.0)]));
    }
    Ok(DiscreteLaw::new(layer.into_iter().flat_map(|c| c.into_values()).collect()))
}

fn sigma_guard(m: &Moments, min: f64) -> Result<f64> {
    let s = m.sigma();
    if s < min {
        return Err(Error::DegenerateVariance { sigma: s });
    }
    Ok(s)
}

/// Kolmogorov distance between the standardized law and the standard normal,
/// on a `t`-grid of step 0.01 together with both one-sided limits at every atom.
pub fn clt_error(law: &DiscreteLaw) -> Result<f64> {
    let tot = law.total();
    let mean = law.mean();
    let sigma = law.variance().max(0.0).sqrt();
    if sigma < MIN_SIGMA_CLT {
        return Err(Error::DegenerateVariance { sigma });
    }
    let mut sup = 0.0f64;
    for k in -800..=800 {
        let t = k as f64 * 0.01;
        let x = mean + sigma * t;
        sup = sup.max((law.cdf(x) / tot - normal_cdf(t)).abs());
    }
    for &(x, _) in law.atoms() {
        let t = (x - mean) / sigma;
        let g = normal_cdf(t);
        sup = sup.max((law.cdf(x) / tot - g).abs()).max((law.cdf_left(x) / tot - g).abs());
    }
    Ok(sup)
}

/// `clt_error` of `S_n f`, through the lattice PMF when `f` is integer-valued.
pub fn clt_error_for(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize) -> Result<f64> {
    clt_error(&law_of_sum(rpf, f, q0, n)?)
}

/// Default atom cap of [`exact_law`] when used by the report.
pub const MAX_ATOMS: usize = 4_000_000;

fn law_of_sum(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize) -> Result<DiscreteLaw> {
    match lattice_pmf(rpf, f, q0, n) {
        Ok(p) => Ok(DiscreteLaw::from_pmf(&p)),
        Err(Error::NotIntegerValued { .. }) => exact_law(rpf, f, q0, n, MAX_ATOMS),
        Err(e) => Err(e),
    }
}

/// The evaluation points of the non-lattice statistic: step `sigma/50` over
/// `E +- 5 sigma` plus 20 far-field points.
pub fn nonlattice_grid(mean: f64, sigma: f64) -> Vec<f64> {
    let mut u: Vec<f64> = (-250..=250).map(|k| mean + sigma * k as f64 / 50.0).collect();
    for k in 1..=10 {
        let d = sigma * (5.0 + 1.5 * k as f64);
        u.push(mean - d);
        u.push(mean + d);
    }
    u
}

/// `sup_u |sqrt(2 pi) sigma_n E[g(S_n - u)] - e^{-(u - E)^2 / (2 sigma_n^2)}|`
/// with `g` the Fejér kernel of bandwidth `t0`.
pub fn nonlattice_llt_error(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize, t0: f64) -> Result<f64> {
    let m = moment_curve(rpf, f, q0, n)?[n];
    let sigma = sigma_guard(&m, MIN_SIGMA_LOCAL)?;
    let u = nonlattice_grid(m.mean, sigma);
    let dens = smoothed_density(rpf, f, q0, n, t0, &u, None)?;
    let c = (2.0 * PI).sqrt() * sigma;
    Ok(u.iter()
        .zip(&dens.values)
        .map(|(u, d)| (c * d - (-(u - m.mean).powi(2) / (2.0 * sigma * sigma)).exp()).abs())
        .fold(0.0, f64::max))
}

fn detect_span(rpf: &RpfData, f: &FnSeq, lo: i64, n: usize) -> Result<Option<f64>> {
    let tw = Twisted::new(rpf, f, lo, n)?;
    Ok(value_gcd_guess(&tw))
}

/// `sup_{u in Z} |sqrt(2 pi) sigma_n P(S_n = u) - e^{-(u - E)^2 / (2 sigma_n^2)}|`.
///
/// `span` is the lattice span reported by the resonance scan, if known;
/// otherwise the gcd of the value differences is used.
pub fn lattice_llt_error(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize, span: Option<f64>) -> Result<f64> {
    let span = match span {
        Some(a) => Some(a),
        None => detect_span(rpf, f, q0.base(), n)?,
    };
    if let Some(a) = span {
        if (a - 1.0).abs() > 1e-9 {
            return Err(Error::SpanMismatch { span: a });
        }
    }
    let pmf = lattice_pmf(rpf, f, q0, n)?;
    let mean = pmf.mean();
    let sigma = pmf.variance().max(0.0).sqrt();
    if sigma < MIN_SIGMA_LOCAL {
        return Err(Error::DegenerateVariance { sigma });
    }
    let (a, b) = pmf.support();
    let lo = a.min((mean - 12.0 * sigma).floor() as i64);
    let hi = b.max((mean + 12.0 * sigma).ceil() as i64);
    let c = (2.0 * PI).sqrt() * sigma;
    Ok((lo..=hi)
        .map(|u| {
            let g = (-(u as f64 - mean).powi(2) / (2.0 * sigma * sigma)).exp();
            (c * pmf.mass(u) - g).abs()
        })
        .fold(0.0, f64::max))
}

/// Shape of the first-order correction term in the Edgeworth statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeworthForm {
    /// `-kappa_3 (t^2 - 1) phi(t) / (6 sigma^3)`, the classical CDF expansion.
    Classical,
    /// `+kappa_3 (t^3 - 3t) phi(t) / (6 sigma^3)`, the Hermite polynomial of
    /// the density expansion, kept for comparison.
    Hermite3,
}

impl EdgeworthForm {
    pub fn correction(self, kappa3: f64, sigma: f64, t: f64) -> f64 {
        let c = kappa3 / (6.0 * sigma.powi(3)) * normal_pdf(t);
        match self {
            EdgeworthForm::Classical => -c * (t * t - 1.0),
            EdgeworthForm::Hermite3 => c * (t.powi(3) - 3.0 * t),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EdgeworthError {
    /// `sigma_n * sup_t |F_n(t) - Phi(t) - correction(t)|`.
    pub value: f64,
    /// `sup_t |correction(t)|`.
    pub correction_sup: f64,
    /// Whether the CDF was evaluated at mid-lattice points.
    pub mid_lattice: bool,
    pub form: EdgeworthForm,
}

/// First-order Edgeworth discrepancy scaled by `sigma_n`.
///
/// For integer-valued observables the CDF is evaluated at the mid-lattice
/// points `(u + 1/2 - E) / sigma_n`, which removes the jump of size
/// `O(1 / sigma_n)` that no smooth expansion can follow.
pub fn edgeworth_error(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize, form: EdgeworthForm) -> Result<EdgeworthError> {
    let m = moment_curve(rpf, f, q0, n)?[n];
    let sigma = sigma_guard(&m, MIN_SIGMA_LOCAL)?;
    let k3 = m.third_central;
    let (points, law, mid) = match lattice_pmf(rpf, f, q0, n) {
        Ok(p) => {
            let (a, b) = p.support();
            let pts: Vec<f64> = (a - 1..=b).map(|u| u as f64 + 0.5).collect();
            (pts, DiscreteLaw::from_pmf(&p), true)
        }
        Err(Error::NotIntegerValued { .. }) => {
            let law = exact_law(rpf, f, q0, n, MAX_ATOMS)?;
            let mut pts: Vec<f64> = (-800..=800).map(|k| m.mean + sigma * k as f64 * 0.01).collect();
            pts.extend(law.atoms().iter().map(|a| a.0));
            (pts, law, false)
        }
        Err(e) => return Err(e),
    };
    let mut sup = 0.0f64;
    let mut corr_sup = 0.0f64;
    for &x in &points {
        let t = (x - m.mean) / sigma;
        let c = form.correction(k3, sigma, t);
        corr_sup = corr_sup.max(c.abs());
        let g = normal_cdf(t) + c;
        sup = sup.max((law.cdf(x) - g).abs());
        if !mid {
            sup = sup.max((law.cdf_left(x) - g).abs());
        }
    }
    Ok(EdgeworthError { value: sigma * sup, correction_sup: corr_sup, mid_lattice: mid, form })
}

/// A certified reduction `f_j = a Z_j + M_j + g_j - g_{j+1} o T_j` with
/// `Z_j` integer-valued and `L^_j M_j = 0`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub span: f64,
    pub z: FnSeq,
    pub m: FnSeq,
    pub g: FnSeq,
}

/// Measured quantities of a verified decomposition.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionCheck {
    pub lo: i64,
    pub identity_residual: f64,
    pub martingale_residual: f64,
    /// `Var(M_j)` for every index of the RPF range.
    pub var_m: Vec<f64>,
    /// Estimated ratio of consecutive variances in the tail.
    pub tail_ratio: f64,
    /// Smallest `J` with `sum_{j >= J} Var(M_j) <= 1e-6`.
    pub truncation: usize,
}

/// Tolerances of [`check_decomposition`].
pub const IDENTITY_TOL: f64 = 1e-9;
pub const MARTINGALE_TOL: f64 = 1e-8;
pub const MARTINGALE_TAIL: f64 = 1e-6;

/// Verifies the decomposition on `[lo, lo + len)` and measures the martingale tail.
pub fn check_decomposition(rpf: &RpfData, f: &FnSeq, dec: &Decomposition, lo: i64, len: usize) -> Result<DecompositionCheck> {
    let sys = rpf.system();
    let dw = rpf.working_depth();
    let (_, hi) = rpf.range();
    let bad = Error::DecompositionInvalid;
    if dec.span <= 0.0 {
        return Err(bad(format!("span {} is not positive", dec.span)));
    }
    let d = f.depth().max(dec.z.depth()).max(dec.m.depth()).max(dec.g.depth() + 1);
    let mut identity = 0.0f64;
    for j in lo..lo + len as i64 {
        let space = sys.space(j, d)?;
        for x in space.iter_symbols() {
            let z = dec.z.eval(j, &x);
            if (z - z.round()).abs() > IDENTITY_TOL {
                return Err(bad(format!("Z_{j} = {z} is not an integer on word {x:?}")));
            }
            let rhs = dec.span * z + dec.m.eval(j, &x) + dec.g.eval(j, &x) - dec.g.eval(j + 1, &x[1..]);
            let r = (f.eval(j, &x) - rhs).abs();
            if !(r <= IDENTITY_TOL) {
                return Err(bad(format!("identity fails at j = {j} on word {x:?} (residual {r:e})")));
            }
            identity = identity.max(r);
        }
    }
    if dec.m.depth() > dw {
        return Err(bad(format!("M has depth {} above the working depth {dw}", dec.m.depth())));
    }
    let mut mart = 0.0f64;
    let mut var_m = Vec::new();
    for j in lo..hi {
        let mj = dec.m.at_depth(sys, j, dw)?;
        let r = rpf.normalized_apply(&mj)?.sup_norm();
        if j < lo + len as i64 && r > MARTINGALE_TOL {
            return Err(bad(format!("L^ M_{j} has sup norm {r:e}")));
        }
        if j < lo + len as i64 {
            mart = mart.max(r);
        }
        let mean = rpf.expect(&mj)?;
        var_m.push(rpf.expect(&mj.powi(2))? - mean * mean);
    }
    let (tail_ratio, truncation) = martingale_truncation(&var_m)
        .ok_or_else(|| bad("martingale variances are not summable inside the RPF range".into()))?;
    Ok(DecompositionCheck {
        lo,
        identity_residual: identity,
        martingale_residual: mart,
        var_m,
        tail_ratio,
        truncation,
    })
}

/// Ratio test on the variance tail. Returns the tail ratio and the smallest
/// `J` whose remaining sum, including a geometric extrapolation past the end,
/// is at most [`MARTINGALE_TAIL`].
fn martingale_truncation(var: &[f64]) -> Option<(f64, usize)> {
    let n = var.len();
    if n == 0 {
        return Some((0.0, 0));
    }
    let k = (n / 4).max(2).min(n);
    let tail = &var[n - k..];
    let ratio = if tail.iter().all(|v| *v <= 1e-300) {
        0.0
    } else {
        tail.windows(2)
            .filter(|w| w[0] > 1e-300)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    };
    let last = *var.last().expect("nonempty");
    let extrapolated = if last <= 1e-300 {
        0.0
    } else if ratio < 1.0 {
        last * ratio / (1.0 - ratio)
    } else {
        return None;
    };
    let mut rest = extrapolated;
    let mut j = n;
    while j > 0 && rest + var[j - 1] <= MARTINGALE_TAIL {
        rest += var[j - 1];
        j -= 1;
    }
    (rest <= MARTINGALE_TAIL).then_some((ratio, j))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReducibleLlt {
    pub n: usize,
    pub sigma: f64,
    /// The local constant `a sum_k E[phi(k a + A - g_n)]`.
    pub local_constant: f64,
    /// Martingale truncation `J` used for `A = S_J M + g_0`.
    pub truncation: usize,
    pub value: f64,
    pub check: DecompositionCheck,
}

/// Generalized lattice LLT discrepancy for a reducible observable, with the
/// test function the Fejér kernel of bandwidth `t0`.
///
/// The local constant is evaluated by Poisson summation,
/// `a sum_k phi(k a + y) = sum_m phi^(2 pi m / a) e^{2 pi i m y / a}`, which only
/// needs `E[e^{i s A}]` and `mu_n(e^{-i s g_n})` at the finitely many
/// frequencies inside the support of `phi^`. Both are exact twisted-operator
/// computations.
pub fn reducible_llt_error(rpf: &RpfData, f: &FnSeq, dec: &Decomposition, q0: &RealFn, n: usize, t0: f64) -> Result<ReducibleLlt> {
    let lo = q0.base();
    let check = check_decomposition(rpf, f, dec, lo, n)?;
    let m = moment_curve(rpf, f, q0, n)?[n];
    let sigma = sigma_guard(&m, MIN_SIGMA_LOCAL)?;
    let sys = rpf.system();
    let dw = rpf.working_depth();
    let big_j = check.truncation.max(1);
    let tw_m = Twisted::new(rpf, &dec.m, lo, big_j)?;
    let g0 = dec.g.at_depth(sys, lo, dw)?;
    let gn = dec.g.at_depth(sys, lo + n as i64, dw)?;
    let q = q0.embed(dw)?;
    let a = dec.span;
    let m_max = (t0 * a / (2.0 * PI)).floor() as i64;
    let mut local = 0.0;
    for k in -m_max..=m_max {
        let s = 2.0 * PI * k as f64 / a;
        let w = fejer_transform(s, t0);
        if w == 0.0 {
            continue;
        }
        let start: ComplexFn = q.to_complex().zip_with(&g0.exp_scaled(s), |x, y| x * y)?;
        let ea = tw_m.char_fn(&start, big_j, s)?;
        let eg = rpf.expect_complex(&gn.exp_scaled(-s))?;
        local += (w * ea * eg).re;
    }
    let kmin = ((m.mean - 5.0 * sigma) / a).ceil() as i64;
    let kmax = ((m.mean + 5.0 * sigma) / a).floor() as i64;
    let u: Vec<f64> = (kmin..=kmax).map(|k| k as f64 * a).collect();
    let dens = smoothed_density(rpf, f, q0, n, t0, &u, None)?;
    let c = (2.0 * PI).sqrt() * sigma;
    let value = u
        .iter()
        .zip(&dens.values)
        .map(|(u, d)| (c * d - local * (-(u - m.mean).powi(2) / (2.0 * sigma * sigma)).exp()).abs())
        .fold(0.0, f64::max);
    Ok(ReducibleLlt { n, sigma, local_constant: local, truncation: big_j, value, check })
}

/// Verdict on a sequence of errors over a geometric `n`-grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Trend {
    /// `error(4n) <= 0.7 error(n)`, scaled to the actual grid ratios.
    Decreasing,
    /// Not decreasing, but the last error is below the acceptance level.
    Small,
    /// The error does not grow by more than half over the grid.
    Bounded,
    NotDecreasing,
    /// Fewer than three values.
    Insufficient,
}

/// The "tends to zero" verdict.
pub fn trend_to_zero(ns: &[usize], errs: &[f64], accept: f64) -> Trend {
    if ns.len() < 3 || errs.len() != ns.len() {
        return Trend::Insufficient;
    }
    let decreasing = ns.windows(2).zip(errs.windows(2)).all(|(n, e)| {
        let steps = (n[1] as f64 / n[0] as f64).ln() / 4f64.ln();
        e[1] <= 0.7f64.powf(steps) * e[0]
    });
    if decreasing {
        Trend::Decreasing
    } else if *errs.last().expect("nonempty") <= accept {
        Trend::Small
    } else {
        Trend::NotDecreasing
    }
}

/// The "stays bounded" verdict used for the scaled Edgeworth statistic.
pub fn trend_bounded(ns: &[usize], errs: &[f64]) -> Trend {
    if ns.len() < 3 || errs.len() != ns.len() {
        return Trend::Insufficient;
    }
    let first = errs[0];
    if errs.iter().all(|e| *e <= 1.5 * first + 1e-12) {
        Trend::Bounded
    } else {
        Trend::NotDecreasing
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LltRow {
    pub n: usize,
    pub sigma: f64,
    pub clt_error: Option<f64>,
    /// `(T0, error)` pairs.
    pub nonlattice_error: Vec<(f64, Option<f64>)>,
    pub lattice_error: Option<f64>,
    pub edgeworth_error: Option<f64>,
    pub edgeworth_error_hermite3: Option<f64>,
    pub reducible_error: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LltReport {
    pub model: String,
    pub n_grid: Vec<usize>,
    pub rows: Vec<LltRow>,
    pub trends: BTreeMap<String, Trend>,
}

/// Options of [`llt_report`].
#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub t0: Vec<f64>,
    /// Lattice span from a resonance scan, if one ran.
    pub span: Option<f64>,
    /// Acceptance level for the "small" verdict.
    pub accept: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { t0: vec![8.0], span: None, accept: 0.02 }
    }
}

fn keep<T>(r: Result<T>, what: &str, notes: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            e @ (Error::DegenerateVariance { .. }
            | Error::NotIntegerValued { .. }
            | Error::SpanMismatch { .. }
            | Error::RangeOverflow { .. }),
        ) => {
            notes.push(format!("{what}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// All applicable statistics for `n` in `n_grid`, evaluated in parallel.
pub fn llt_report(
    model: &str,
    rpf: &RpfData,
    f: &FnSeq,
    q0: &RealFn,
    n_grid: &[usize],
    dec: Option<&Decomposition>,
    opts: &ReportOptions,
) -> Result<LltReport> {
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    let moments = moment_curve(rpf, f, q0, n_max)?;
    let integer = {
        let tw = Twisted::new(rpf, f, q0.base(), n_max)?;
        integer_ranges(&tw).is_ok()
    };
    let rows = n_grid
        .par_iter()
        .map(|&n| -> Result<LltRow> {
            let mut notes = Vec::new();
            let clt = keep(clt_error_for(rpf, f, q0, n), "clt", &mut notes)?;
            let mut nl = Vec::new();
            for &t0 in &opts.t0 {
                nl.push((t0, keep(nonlattice_llt_error(rpf, f, q0, n, t0), "nonlattice", &mut notes)?));
            }
            let lat = if integer {
                keep(lattice_llt_error(rpf, f, q0, n, opts.span), "lattice", &mut notes)?
            } else {
                None
            };
            let edge = keep(edgeworth_error(rpf, f, q0, n, EdgeworthForm::Classical), "edgeworth", &mut notes)?;
            let edge3 = keep(edgeworth_error(rpf, f, q0, n, EdgeworthForm::Hermite3), "edgeworth", &mut notes)?;
            let red = match dec {
                Some(d) => {
                    let t0 = opts.t0.first().copied().unwrap_or(8.0);
                    keep(reducible_llt_error(rpf, f, d, q0, n, t0), "reducible", &mut notes)?.map(|r| r.value)
                }
                None => None,
            };
            notes.dedup();
            Ok(LltRow {
                n,
                sigma: moments[n].sigma(),
                clt_error: clt,
                nonlattice_error: nl,
                lattice_error: lat,
                edgeworth_error: edge.map(|e| e.value),
                edgeworth_error_hermite3: edge3.map(|e| e.value),
                reducible_error: red,
                notes,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trends = BTreeMap::new();
    // Rows where an error is undefined (small sigma_n) are skipped; a family
    // with values on fewer than three sizes reports `Insufficient`.
    let series = |get: &dyn Fn(&LltRow) -> Option<f64>| -> Option<(Vec<usize>, Vec<f64>)> {
        let (ns, v): (Vec<usize>, Vec<f64>) = rows.iter().filter_map(|r| get(r).map(|e| (r.n, e))).unzip();
        (!v.is_empty()).then_some((ns, v))
    };
    if let Some((ns, e)) = series(&|r| r.clt_error) {
        trends.insert("clt".into(), trend_to_zero(&ns, &e, opts.accept));
    }
    for (i, t0) in opts.t0.iter().enumerate() {
        if let Some((ns, e)) = series(&|r| r.nonlattice_error[i].1) {
            trends.insert(format!("nonlattice(T0={t0})"), trend_to_zero(&ns, &e, opts.accept));
        }
    }
    if let Some((ns, e)) = series(&|r| r.lattice_error) {
        trends.insert("lattice".into(), trend_to_zero(&ns, &e, opts.accept));
    }
    if let Some((ns, e)) = series(&|r| r.edgeworth_error) {
        trends.insert("edgeworth".into(), trend_bounded(&ns, &e));
    }
    if let Some((ns, e)) = series(&|r| r.reducible_error) {
        trends.insert("reducible".into(), trend_to_zero(&ns, &e, opts.accept));
    }
    Ok(LltReport { model: model.to_string(), n_grid: n_grid.to_vec(), rows, trends })
}

impl LltReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "n_grid": self.n_grid,
            "rows": self.rows,
            "trends": self.trends,
        })
    }

    /// Flat CSV `model,n,sigma,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,n,sigma,metric,value\n");
        for r in &self.rows {
            let mut put = |metric: String, v: Option<f64>| {
                if let Some(v) = v {
                    s.push_str(&format!("{},{},{},{metric},{v:e}\n", self.model, r.n, r.sigma));
                }
            };
            put("clt".into(), r.clt_error);
            for (t0, v) in &r.nonlattice_error {
                put(format!("nonlattice_T0={t0}"), *v);
            }
            put("lattice".into(), r.lattice_error);
            put("edgeworth".into(), r.edgeworth_error);
            put("edgeworth_hermite3".into(), r.edgeworth_error_hermite3);
            put("reducible".into(), r.reducible_error);
        }
        s
    }
}

/// `sqrt(2 pi) sigma_n P(S_n = u) - e^{...}` as a full curve, for plotting.
pub fn lattice_llt_curve(pmf: &LatticePmf) -> Vec<(i64, f64)> {
    let mean = pmf.mean();
    let sigma = pmf.variance().sqrt();
    let (a, b) = pmf.support();
    (a..=b)
        .map(|u| {
            let g = (-(u as f64 - mean).powi(2) / (2.0 * sigma * sigma)).exp();
            (u, (2.0 * PI).sqrt() * sigma * pmf.mass(u) - g)
        })
        .collect()
}

/// `E[e^{i t S_n}]` of a discrete law.
pub fn law_char_fn(law: &DiscreteLaw, t: f64) -> Complex64 {
    law.atoms().iter().map(|&(x, p)| Complex64::from_polar(p, t * x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{validate, SystemSpec};
    use crate::transfer::{rpf_solve, RpfOptions};

    fn coin_p(p: f64, window: i64) -> RpfData {
        let sys = validate(SystemSpec::full_shift(2, window)).unwrap();
        let (a, b) = ((1.0 - p).ln(), p.ln());
        let phi = FnSeq::new(1, "coin", move |_, x| if x[0] == 1 { b } else { a });
        rpf_solve(&sys, &phi, &RpfOptions::default()).unwrap()
    }

    fn one(rpf: &RpfData) -> RealFn {
        RealFn::constant(rpf.system(), 0, 1, 1.0).unwrap()
    }

    fn ln_choose(n: u64, k: u64) -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
    }

    #[test]
    fn erfc_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!((normal_cdf(5.5) - 0.999_999_981_010_4).abs() < 1e-13);
    }

    #[test]
    fn clt_error_binomial_100() {
        let atoms = (0..=100u64).map(|k| (k as f64, (ln_choose(100, k) - 100.0 * 2f64.ln()).exp())).collect();
        let e = clt_error(&DiscreteLaw::new(atoms)).unwrap();
        assert!((e - 0.0398).abs() < 5e-4, "{e}");
    }

    #[test]
    fn point_mass_is_degenerate() {
        let e = clt_error(&DiscreteLaw::new(vec![(3.0, 1.0)]));
        assert!(matches!(e, Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn exact_law_matches_pmf_for_coin() {
        let rpf = coin_p(0.3, 16);
        let law = exact_law(&rpf, &FnSeq::first_symbol(), &one(&rpf), 10, 1000).unwrap();
        let pmf = lattice_pmf(&rpf, &FnSeq::first_symbol(), &one(&rpf), 10).unwrap();
        for &(x, p) in law.atoms() {
            assert!((p - pmf.mass(x as i64)).abs() < 1e-12);
        }
        assert_eq!(law.atoms().len(), 11);
    }

    #[test]
    fn lattice_llt_coin_and_span_mismatch() {
        let rpf = coin_p(0.5, 210);
        let q = one(&rpf);
        let e200 = lattice_llt_error(&rpf, &FnSeq::first_symbol(), &q, 200, None).unwrap();
        let e50 = lattice_llt_error(&rpf, &FnSeq::first_symbol(), &q, 50, None).unwrap();
        assert!(e200 <= 0.02 && e200 < e50, "{e200} {e50}");
        let two = FnSeq::first_symbol().scale(2.0);
        assert!(matches!(lattice_llt_error(&rpf, &two, &q, 50, None), Err(Error::SpanMismatch { .. })));
    }

    #[test]
    fn symmetric_coin_has_no_correction() {
        let rpf = coin_p(0.5, 80);
        let e = edgeworth_error(&rpf, &FnSeq::first_symbol(), &one(&rpf), 64, EdgeworthForm::Classical).unwrap();
        assert!(e.correction_sup < 1e-12);
        assert!(e.mid_lattice);
    }

    #[test]
    fn zero_observable_is_degenerate() {
        let rpf = coin_p(0.5, 80);
        let r = nonlattice_llt_error(&rpf, &FnSeq::constant(0.0), &one(&rpf), 64, 8.0);
        assert!(matches!(r, Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn trend_rules() {
        assert_eq!(trend_to_zero(&[16, 64, 256], &[0.4, 0.2, 0.1], 0.01), Trend::Decreasing);
        assert_eq!(trend_to_zero(&[16, 64, 256], &[0.4, 0.39, 0.005], 0.01), Trend::Small);
        assert_eq!(trend_to_zero(&[16, 64, 256], &[0.4, 0.39, 0.38], 0.01), Trend::NotDecreasing);
        assert_eq!(trend_bounded(&[16, 64, 256], &[0.4, 0.45, 0.41]), Trend::Bounded);
        assert_eq!(trend_to_zero(&[16, 64], &[0.4, 0.2], 0.01), Trend::Insufficient);
    }

    #[test]
    fn truncation_of_geometric_variances() {
        let v: Vec<f64> = (0..40).map(|j| 0.25 * 4f64.powi(-j)).collect();
        let (r, j) = martingale_truncation(&v).unwrap();
        assert!((r - 0.25).abs() < 1e-12);
        let tail: f64 = v[j..].iter().sum::<f64>() + v[39] / 3.0;
        assert!(tail <= MARTINGALE_TAIL);
        assert!(v[j - 1..].iter().sum::<f64>() > MARTINGALE_TAIL);
        assert!(martingale_truncation(&[1.0; 10]).is_none());
    }
}
