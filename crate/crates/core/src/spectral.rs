//! Twisted transfer operators, norm curves, resonance scans and temporal
//! distance diagnostics.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::decomp::{classify_variance, moment_curve, VarianceClass, VarianceEvidence};
use crate::error::{Error, Result};
use crate::funcspace::{ComplexFn, FnSeq, RealFn};
use crate::symbolic::Word;
use crate::transfer::{apply_core, RpfData};

/// The family `L^_{j,t} h = L^_j(e^{i t f_j} h)` for one observable.
pub struct Twisted<'a> {
    rpf: &'a RpfData,
    lo: i64,
    f: Vec<RealFn>,
}

impl<'a> Twisted<'a> {
    /// Tables of `f_j` for `j` in `[lo, lo + len)`.
    pub fn new(rpf: &'a RpfData, f: &FnSeq, lo: i64, len: usize) -> Result<Self> {
        let dw = rpf.working_depth();
        if f.depth() > dw {
            return Err(Error::InvalidArgument(format!(
                "observable depth {} exceeds working depth {dw}",
                f.depth()
            )));
        }
        let tables = (0..len)
            .map(|i| f.at_depth(rpf.system(), lo + i as i64, dw))
            .collect::<Result<Vec<_>>>()?;
        Ok(Twisted { rpf, lo, f: tables })
    }

    pub fn rpf(&self) -> &RpfData {
        self.rpf
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn observable(&self, j: i64) -> Result<&RealFn> {
        usize::try_from(j - self.lo)
            .ok()
            .and_then(|i| self.f.get(i))
            .ok_or(Error::IndexOutOfWindow { j, lo: self.lo, hi: self.lo + self.f.len() as i64 - 1 })
    }

    /// Complex weights `e^{g_j} e^{i t f_j}`.
    pub fn weights(&self, j: i64, t: f64) -> Result<ComplexFn> {
        let f = self.observable(j)?;
        let eg = self.rpf.exp_g(j)?;
        let vals = eg
            .values()
            .iter()
            .zip(f.values())
            .map(|(&e, &v)| Complex64::from_polar(e, t * v))
            .collect();
        Ok(ComplexFn::from_parts(self.rpf.system(), j, eg.space().clone(), vals))
    }

    /// `L^_{j,t} h`, embedded at `max(depth h - 1, D_w)`.
    pub fn apply(&self, j: i64, t: f64, h: &ComplexFn) -> Result<ComplexFn> {
        let w = self.weights(j, t)?;
        let out = apply_core(self.rpf.system(), &w, h, |a, b| a * b)?;
        let d = out.depth().max(self.rpf.working_depth());
        out.embed(d)
    }

    /// `L^_{lo,t}^n h`.
    pub fn iterate(&self, t: f64, h: &ComplexFn, n: usize) -> Result<ComplexFn> {
        let mut cur = h.clone();
        for k in 0..n {
            cur = self.apply(cur.base(), t, &cur)?;
            debug_assert_eq!(cur.base(), self.lo + k as i64 + 1);
        }
        Ok(cur)
    }

    /// `Phi_n(t) = mu_{lo+n}(L^_{lo,t}^n q0)`.
    pub fn char_fn(&self, q0: &ComplexFn, n: usize, t: f64) -> Result<Complex64> {
        let out = self.iterate(t, q0, n)?;
        self.rpf.expect(&out)
    }

    /// `(min, max)` of `f_j` over admissible words.
    pub fn value_range(&self, j: i64) -> Result<(f64, f64)> {
        let f = self.observable(j)?;
        Ok((f.min_value(), f.max_value()))
    }

    /// Exact `sup -> sup` norm of `L^_{lo,t}^n` on the working-depth space.
    pub fn exact_sup_operator_norm(&self, t: f64, n: usize) -> Result<f64> {
        let dw = self.rpf.working_depth();
        let space = self.rpf.system().space(self.lo, dw)?;
        if space.len() > 256 {
            return Err(Error::InvalidArgument(format!(
                "exact norm offered up to dimension 256, got {}",
                space.len()
            )));
        }
        let dim = space.len();
        let mut rows: Option<Vec<f64>> = None;
        for k in 0..dim {
            let mut e = vec![Complex64::new(0.0, 0.0); dim];
            e[k] = Complex64::new(1.0, 0.0);
            let h = ComplexFn::from_parts(self.rpf.system(), self.lo, space.clone(), e);
            let col = self.iterate(t, &h, n)?;
            let r = rows.get_or_insert_with(|| vec![0.0; col.values().len()]);
            for (acc, v) in r.iter_mut().zip(col.values()) {
                *acc += v.norm();
            }
        }
        Ok(rows.unwrap_or_default().into_iter().fold(0.0, f64::max))
    }
}

/// `L^_{j,t} h` for a single step.
pub fn twisted_apply(rpf: &RpfData, f: &FnSeq, j: i64, t: f64, h: &ComplexFn) -> Result<ComplexFn> {
    Twisted::new(rpf, f, j, 1)?.apply(j, t, h)
}

/// Probe functions used to estimate operator norms.
pub fn probe_set(rpf: &RpfData, lo: i64, probe_count: usize, seed: u64) -> Result<Vec<ComplexFn>> {
    let sys = rpf.system();
    let dw = rpf.working_depth();
    let mut probes = vec![ComplexFn::constant(sys, lo, 1, Complex64::new(1.0, 0.0))?];
    let di = dw.min(3);
    let ispace = sys.space(lo, di)?;
    for k in 0..ispace.len() {
        let mut v = vec![Complex64::new(0.0, 0.0); ispace.len()];
        v[k] = Complex64::new(1.0, 0.0);
        probes.push(ComplexFn::from_parts(sys, lo, ispace.clone(), v));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = sys.space(lo, dw)?;
    for _ in 0..probe_count {
        let v = (0..space.len())
            .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)))
            .collect();
        probes.push(ComplexFn::from_parts(sys, lo, space.clone(), v));
    }
    Ok(probes)
}

/// Settings shared by norm curves and scans.
#[derive(Clone, Debug)]
pub struct NormOptions {
    pub alpha: f64,
    pub c1: f64,
    pub probe_count: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { alpha: 1.0, c1: 1.0, probe_count: 8, seed: 0x5eed }
    }
}

/// `rho(t, n)` and the lower bound from the constant probe, for each `n` in a sorted grid.
fn rho_at(tw: &Twisted, probes: &[ComplexFn], t: f64, n_grid: &[usize], opts: &NormOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_max = *n_grid.last().unwrap_or(&0);
    let mut rho = vec![0.0f64; n_grid.len()];
    let mut lower = vec![0.0f64; n_grid.len()];
    for (pi, p) in probes.iter().enumerate() {
        let norm0 = p.star_norm(opts.alpha, opts.c1);
        let mut cur = p.clone();
        let mut gi = 0;
        while gi < n_grid.len() && n_grid[gi] == 0 {
            rho[gi] = rho[gi].max(1.0);
            gi += 1;
        }
        for k in 1..=n_max {
            cur = tw.apply(cur.base(), t, &cur)?;
            while gi < n_grid.len() && n_grid[gi] == k {
                let q = cur.star_norm(opts.alpha, opts.c1) / norm0;
                rho[gi] = rho[gi].max(q);
                if pi == 0 {
                    lower[gi] = q;
                }
                gi += 1;
            }
        }
    }
    Ok((rho, lower))
}

/// Gaussian-envelope regression of `log rho` against `t^2 sigma_n^2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len();
    if n < 2 {
        return LinearFit { slope: 0.0, intercept: 0.0, r2: 0.0, points: n };
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    LinearFit { slope, intercept: my - slope * mx, r2, points: n }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormCurve {
    pub t: Vec<f64>,
    pub n_grid: Vec<usize>,
    /// `rho[i][k]` at `t[i]`, `n_grid[k]`.
    pub rho: Vec<Vec<f64>>,
    pub lower_bound: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Trapezoid integral of `rho(., n)` over the grid, per `n`.
    pub integral: Vec<f64>,
    pub sigma_integral: Vec<f64>,
    pub envelope: LinearFit,
}

impl NormCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,n,rho,lower_bound\n");
        for (i, t) in self.t.iter().enumerate() {
            for (k, n) in self.n_grid.iter().enumerate() {
                s.push_str(&format!("{t},{n},{:e},{:e}\n", self.rho[i][k], self.lower_bound[i][k]));
            }
        }
        s
    }
}

/// `rho(t, n) = max_p ||L^_{0,t}^n p||_* / ||p||_*` over the probe set.
pub fn norm_curve(
    rpf: &RpfData,
    f: &FnSeq,
    q0: &RealFn,
    t_grid: &[f64],
    n_grid: &[usize],
    opts: &NormOptions,
) -> Result<NormCurve> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().ok_or_else(|| Error::InvalidArgument("empty n grid".into()))?;
    let lo = q0.base();
    let tw = Twisted::new(rpf, f, lo, n_max)?;
    let probes = probe_set(rpf, lo, opts.probe_count, opts.seed)?;
    let cells: Vec<(Vec<f64>, Vec<f64>)> = t_grid
        .par_iter()
        .map(|&t| rho_at(&tw, &probes, t, &grid, opts))
        .collect::<Result<Vec<_>>>()?;
    let (rho, lower_bound): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    let moments = moment_curve(rpf, f, q0, n_max)?;
    let sigma: Vec<f64> = grid.iter().map(|&n| moments[n].sigma()).collect();
    let integral: Vec<f64> = (0..grid.len())
        .map(|k| {
            t_grid
                .windows(2)
                .enumerate()
                .map(|(i, w)| 0.5 * (w[1] - w[0]) * (rho[i][k] + rho[i + 1][k]))
                .sum()
        })
        .collect();
    let sigma_integral = integral.iter().zip(&sigma).map(|(a, s)| a * s).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &t) in t_grid.iter().enumerate() {
        for (k, &s) in sigma.iter().enumerate() {
            let x = t * t * s * s;
            if x > 0.0 && x <= 9.0 && rho[i][k] > 0.0 {
                xs.push(x);
                ys.push(rho[i][k].ln());
            }
        }
    }
    let envelope = linear_regression(&xs, &ys);
    Ok(NormCurve { t: t_grid.to_vec(), n_grid: grid, rho, lower_bound, sigma, integral, sigma_integral, envelope })
}

/// Operational Lasota-Yorke constants.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LyConstants {
    pub c1: f64,
    pub theta1: f64,
    pub alpha: f64,
    pub k_max: usize,
}

fn random_complex(rpf: &RpfData, lo: i64, rng: &mut ChaCha8Rng) -> Result<ComplexFn> {
    let space = rpf.system().space(lo, rpf.working_depth())?;
    let amp: f64 = rng.gen_range(0.1..2.0);
    let v = (0..space.len())
        .map(|_| Complex64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)))
        .collect();
    Ok(ComplexFn::from_parts(rpf.system(), lo, space, v))
}

/// Calibrates the Lasota-Yorke constants on a seeded random sample.
///
/// `theta1` is `2^{-alpha}`, the seminorm contraction of one shift. `C1` is
/// twice the largest quotient `G_alpha(L^k h) / (|h|_inf + theta1^k G_alpha(h))`
/// over the sweep `k <= k_max`.
pub fn calibrate_ly(
    rpf: &RpfData,
    f: &FnSeq,
    lo: i64,
    t_cap: f64,
    samples: usize,
    k_max: usize,
    alpha: f64,
    seed: u64,
) -> Result<LyConstants> {
    let tw = Twisted::new(rpf, f, lo, k_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(samples + 2);
    for p in probe_set(rpf, lo, 0, seed)? {
        cases.push((0.0, p));
    }
    for _ in 0..samples {
        let t = rng.gen_range(-t_cap..=t_cap);
        cases.push((t, random_complex(rpf, lo, &mut rng)?));
    }
    let mut sweeps = Vec::with_capacity(cases.len());
    for (t, h) in &cases {
        let sup = h.sup_norm();
        let g0 = h.holder_seminorm(alpha);
        let mut cur = h.clone();
        let mut gk = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            cur = tw.apply(cur.base(), *t, &cur)?;
            gk.push(cur.holder_seminorm(alpha));
        }
        sweeps.push((sup, g0, gk));
    }
    let theta = 2f64.powf(-alpha);
    let mut q = 0.0f64;
    for (sup, g0, gk) in &sweeps {
        for (k, g) in gk.iter().enumerate() {
            let denom = sup + theta.powi(k as i32 + 1) * g0;
            if denom > 0.0 {
                q = q.max(g / denom);
            }
        }
    }
    let c1 = (2.0 * q).max(1e-12);
    Ok(LyConstants { c1, theta1: theta, alpha, k_max })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Classification {
    IrreducibleNonlattice,
    Lattice(f64),
    VarianceBounded,
    Indeterminate,
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub delta: f64,
    pub t_max: f64,
    pub n_max: usize,
    pub threshold: f64,
    pub grid: f64,
    /// Defaults to `{1, 2, 4, ..., n_max}`.
    pub n_grid: Option<Vec<usize>>,
    pub norm: NormOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            delta: 0.1,
            t_max: 14.0,
            n_max: 64,
            threshold: 0.2,
            grid: 0.005,
            n_grid: None,
            norm: NormOptions::default(),
        }
    }
}

impl ScanOptions {
    pub fn n_grid(&self) -> Vec<usize> {
        match &self.n_grid {
            Some(g) => {
                let mut g = g.clone();
                g.push(self.n_max);
                g.retain(|&n| n >= 1 && n <= self.n_max);
                g.sort_unstable();
                g.dedup();
                g
            }
            None => {
                let mut g = Vec::new();
                let mut n = 1;
                while n < self.n_max {
                    g.push(n);
                    n *= 2;
                }
                g.push(self.n_max);
                g
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LatticeReport {
    pub t_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub n_max: usize,
    /// `rho[i][k]` at `t_grid[i]`, `n_grid[k]`; empty when variance is bounded.
    pub rho: Vec<Vec<f64>>,
    pub resonant_t: Vec<f64>,
    pub span_a: Option<f64>,
    pub classification: Classification,
    pub threshold: f64,
    /// Upper end of the cluster attached to the left edge of the scan, which
    /// belongs to the central peak at `t = 0` rather than to a resonance.
    pub central_cluster_end: Option<f64>,
    pub value_gcd_guess: Option<f64>,
    pub variance: VarianceEvidence,
    pub notes: Vec<String>,
}

impl LatticeReport {
    /// `max_t rho(t, n_max)` over the scanned grid.
    pub fn max_rho_at_n_max(&self) -> f64 {
        self.rho.iter().filter_map(|r| r.last().copied()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,n,rho\n");
        for (i, t) in self.t_grid.iter().enumerate() {
            for (k, n) in self.n_grid.iter().enumerate() {
                s.push_str(&format!("{t},{n},{:e}\n", self.rho[i][k]));
            }
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "classification": match self.classification {
                Classification::Lattice(a) => json!({"Lattice": a}),
                c => json!(format!("{c:?}")),
            },
            "span_a": self.span_a,
            "resonant_t": self.resonant_t,
            "threshold": self.threshold,
            "n_max": self.n_max,
            "grid": self.t_grid.get(1).zip(self.t_grid.first()).map(|(b, a)| b - a),
            "central_cluster_end": self.central_cluster_end,
            "value_gcd_guess": self.value_gcd_guess,
            "max_rho_at_n_max": self.max_rho_at_n_max(),
            "variance_class": format!("{:?}", self.variance.class),
            "notes": self.notes,
        })
    }
}

fn float_gcd(a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (a.abs().max(b.abs()), a.abs().min(b.abs()));
    while b > tol {
        let r = a % b;
        a = b;
        b = if r > b - tol { 0.0 } else { r };
    }
    a
}

/// Largest `a` with every difference of observed values in `a Z`, if it is not tiny.
pub fn value_gcd_guess(tw: &Twisted) -> Option<f64> {
    let mut vals: Vec<f64> = tw.f.iter().flat_map(|f| f.values().iter().copied()).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let base = *vals.first()?;
    let mut g = 0.0f64;
    for v in vals {
        let d = v - base;
        if d > 1e-9 {
            g = if g == 0.0 { d } else { float_gcd(g, d, 1e-7) };
        }
    }
    if g < 1e-3 {
        return None;
    }
    let ok = tw.f.iter().flat_map(|f| f.values()).all(|v| {
        let q = (v - base) / g;
        (q - q.round()).abs() < 1e-6
    });
    ok.then_some(g)
}

fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Scans `rho(t, n)` on `[delta, T]` for resonances and estimates the lattice span.
pub fn resonance_scan(rpf: &RpfData, f: &FnSeq, q0: &RealFn, opts: &ScanOptions) -> Result<LatticeReport> {
    if opts.grid > 0.01 {
        return Err(Error::GridTooCoarse { spacing: opts.grid, max: 0.01 });
    }
    let n_grid = opts.n_grid();
    let variance = classify_variance(rpf, f, q0, &n_grid)?;
    let lo = q0.base();
    let tw = Twisted::new(rpf, f, lo, opts.n_max)?;
    let gcd = value_gcd_guess(&tw);
    let mut notes = Vec::new();
    if variance.class == VarianceClass::Bounded {
        return Ok(LatticeReport {
            t_grid: vec![],
            n_grid,
            n_max: opts.n_max,
            rho: vec![],
            resonant_t: vec![],
            span_a: None,
            classification: Classification::VarianceBounded,
            threshold: opts.threshold,
            central_cluster_end: None,
            value_gcd_guess: gcd,
            variance,
            notes,
        });
    }

    let steps = ((opts.t_max - opts.delta) / opts.grid + 1e-9).floor() as usize;
    let t_grid: Vec<f64> = (0..=steps).map(|i| opts.delta + i as f64 * opts.grid).collect();
    let probes = probe_set(rpf, lo, opts.norm.probe_count, opts.norm.seed)?;
    let rho: Vec<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| rho_at(&tw, &probes, t, &n_grid, &opts.norm).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;

    let top = n_grid.len() / 2;
    let resonant: Vec<bool> = rho.iter().map(|r| r[top..].iter().all(|&v| v > opts.threshold)).collect();
    let mut clusters = Vec::new();
    let mut i = 0;
    while i < resonant.len() {
        if resonant[i] {
            let s = i;
            while i < resonant.len() && resonant[i] {
                i += 1;
            }
            clusters.push((s, i - 1));
        } else {
            i += 1;
        }
    }
    let last_n = n_grid.len() - 1;
    let peak_value = |t: f64| -> f64 {
        rho_at(&tw, &probes, t, &n_grid[last_n..], &opts.norm).map(|r| r.0[0]).unwrap_or(0.0)
    };
    let mut resonant_t = Vec::new();
    let mut central_cluster_end = None;
    for (s, e) in clusters {
        let a = (t_grid[s] - opts.grid).max(opts.delta);
        let b = (t_grid[e] + opts.grid).min(opts.t_max);
        let peak = golden_max(a, b, peak_value);
        if s == 0 && peak - opts.delta <= opts.grid {
            central_cluster_end = Some(t_grid[e]);
            continue;
        }
        resonant_t.push(peak);
    }

    let (span_a, classification) = if resonant_t.is_empty() {
        match gcd {
            Some(g) if opts.t_max < 3.0 * 2.0 * PI / g => {
                notes.push(format!(
                    "scan end {} below three resonance periods for value spacing {g}",
                    opts.t_max
                ));
                (None, Classification::Indeterminate)
            }
            _ if variance.class == VarianceClass::Growing => (None, Classification::IrreducibleNonlattice),
            _ => {
                notes.push("variance growth not established".into());
                (None, Classification::Indeterminate)
            }
        }
    } else {
        let t_min = resonant_t[0];
        let ks: Vec<f64> = resonant_t.iter().map(|t| (t / t_min).round()).collect();
        let t1 = ks.iter().zip(&resonant_t).map(|(k, t)| k * t).sum::<f64>()
            / ks.iter().map(|k| k * k).sum::<f64>();
        let fits = ks.iter().zip(&resonant_t).all(|(k, t)| (t - k * t1).abs() <= opts.grid);
        if fits {
            let a = 2.0 * PI / t1;
            (Some(a), Classification::Lattice(a))
        } else {
            notes.push("resonances do not form an arithmetic progression".into());
            (None, Classification::Indeterminate)
        }
    };
    Ok(LatticeReport {
        t_grid,
        n_grid,
        n_max: opts.n_max,
        rho,
        resonant_t,
        span_a,
        classification,
        threshold: opts.threshold,
        central_cluster_end,
        value_gcd_guess: gcd,
        variance,
        notes,
    })
}

/// Four orbits sharing blocks, as in the temporal distance function.
#[derive(Clone, Debug)]
pub struct TemporalDistanceQuery {
    pub j: i64,
    pub y1: Vec<u8>,
    pub y2: Vec<u8>,
    pub w1: Vec<u8>,
    pub w2: Vec<u8>,
    pub v1: Vec<u8>,
    pub v2: Vec<u8>,
    pub x1: Vec<u8>,
    pub x2: Vec<u8>,
}

impl TemporalDistanceQuery {
    pub fn k(&self) -> usize {
        self.y1.len()
    }

    pub fn m(&self) -> usize {
        self.w1.len()
    }

    pub fn ell(&self) -> usize {
        self.k() + self.m()
    }
}

fn birkhoff(f: &FnSeq, j: i64, z: &[u8], ell: usize) -> f64 {
    (0..ell).map(|i| f.eval(j + i as i64, &z[i..])).sum()
}

/// `S(y1 w1 x') + S(y2 v1 x'') - S(y1 w2 x'') - S(y2 v2 x')`, sums of length `k + m`.
pub fn temporal_distance(sys: &crate::symbolic::System, f: &FnSeq, q: &TemporalDistanceQuery) -> Result<f64> {
    let (k, m) = (q.k(), q.m());
    if q.y2.len() != k || [&q.w2, &q.v1, &q.v2].iter().any(|b| b.len() != m) {
        return Err(Error::Inadmissible("block lengths disagree".into()));
    }
    let need = f.depth().saturating_sub(1);
    if q.x1.len() < need || q.x2.len() < need {
        return Err(Error::Inadmissible(format!("tails shorter than {need}")));
    }
    let ell = q.ell();
    let cat = |a: &[u8], b: &[u8], c: &[u8]| -> Result<Vec<u8>> {
        let s: Vec<u8> = a.iter().chain(b).chain(c).copied().collect();
        if !sys.is_admissible(&Word::new(q.j, s.clone())) {
            return Err(Error::Inadmissible(format!("{}", Word::new(q.j, s))));
        }
        Ok(s)
    };
    let o1 = cat(&q.y1, &q.w1, &q.x1)?;
    let o2 = cat(&q.y2, &q.v1, &q.x2)?;
    let o3 = cat(&q.y1, &q.w2, &q.x2)?;
    let o4 = cat(&q.y2, &q.v2, &q.x1)?;
    Ok(birkhoff(f, q.j, &o1, ell) + birkhoff(f, q.j, &o2, ell)
        - birkhoff(f, q.j, &o3, ell)
        - birkhoff(f, q.j, &o4, ell))
}

/// Largest distance from a sample to the grid `(2 pi / t) Z`.
pub fn lattice_residual(samples: &[f64], t: f64) -> f64 {
    let p = 2.0 * PI / t.abs();
    samples
        .iter()
        .map(|&d| {
            let r = d.rem_euclid(p);
            r.min(p - r)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{validate, SystemSpec};
    use crate::transfer::{rpf_solve, RpfOptions};

    fn coin(n: i64) -> RpfData {
        let sys = validate(SystemSpec::full_shift(2, n)).unwrap();
        rpf_solve(&sys, &FnSeq::constant(-(2f64.ln())), &RpfOptions::default()).unwrap()
    }

    fn one(rpf: &RpfData) -> ComplexFn {
        ComplexFn::constant(rpf.system(), 0, 1, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn twisted_examples() {
        let rpf = coin(8);
        let f = FnSeq::first_symbol();
        let h = one(&rpf);
        let z = twisted_apply(&rpf, &f, 0, PI, &h).unwrap();
        assert!(z.sup_norm() < 1e-15);
        let o = twisted_apply(&rpf, &f, 0, 2.0 * PI, &h).unwrap();
        assert!(o.values().iter().all(|v| (v - 1.0).norm() < 1e-14));
        let g = FnSeq::linear(vec![1.0, -0.5]).at(rpf.system(), 0).unwrap().to_complex();
        let a = twisted_apply(&rpf, &f, 0, 0.0, &g).unwrap();
        let b = rpf.normalized_apply(&g).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
    }

    #[test]
    fn modulus_bound() {
        let rpf = coin(8);
        let f = FnSeq::linear(vec![1.0, 2f64.sqrt()]);
        let tw = Twisted::new(&rpf, &f, 0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let h = random_complex(&rpf, 0, &mut rng).unwrap();
            let t = rng.gen_range(-10.0..10.0);
            let lhs = tw.apply(0, t, &h).unwrap().sup_norm();
            let abs = h.map(|v| v.norm());
            let rhs = rpf.normalized_apply(&abs).unwrap().sup_norm();
            assert!(lhs <= rhs + 1e-14);
        }
    }

    #[test]
    fn coin_rho_values() {
        let rpf = coin(16);
        let q0 = RealFn::constant(rpf.system(), 0, 1, 1.0).unwrap();
        let curve = norm_curve(&rpf, &FnSeq::first_symbol(), &q0, &[0.0, PI, 2.0 * PI], &[1, 3, 8], &NormOptions::default()).unwrap();
        assert!(curve.rho[0].iter().all(|&r| r >= 1.0 - 1e-14));
        assert!(curve.rho[1][1] <= 1e-12 && curve.rho[1][2] <= 1e-12);
        assert!(curve.rho[2].iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn exact_norm_bounds_lower_bound() {
        let rpf = coin(8);
        let tw = Twisted::new(&rpf, &FnSeq::first_symbol(), 0, 8).unwrap();
        let e = tw.exact_sup_operator_norm(1.0, 4).unwrap();
        // Two steps absorb the depth-2 input; each further step multiplies by cos(t/2).
        assert!((e - 0.5f64.cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        assert_eq!(lattice_residual(&[0.0, 0.0], 1.3), 0.0);
        let t = 2.0;
        assert!(lattice_residual(&[2.0 * PI / t], t) < 1e-12);
        assert!((lattice_residual(&[PI / t], t) - PI / t).abs() < 1e-12);
    }

    #[test]
    fn temporal_distance_cancels_without_gap() {
        let sys = validate(SystemSpec::full_shift(2, 8)).unwrap();
        let f = FnSeq::first_symbol();
        let q = TemporalDistanceQuery {
            j: 0,
            y1: vec![0, 1],
            y2: vec![1, 1],
            w1: vec![],
            w2: vec![],
            v1: vec![],
            v2: vec![],
            x1: vec![0, 1],
            x2: vec![1, 0],
        };
        assert_eq!(temporal_distance(&sys, &f, &q).unwrap(), 0.0);
    }

    #[test]
    fn gcd_guess() {
        let rpf = coin(8);
        let tw = Twisted::new(&rpf, &FnSeq::first_symbol().scale(2.0), 0, 4).unwrap();
        assert!((value_gcd_guess(&tw).unwrap() - 2.0).abs() < 1e-9);
        let irr = FnSeq::linear(vec![1.0, 2f64.sqrt()]);
        let tw = Twisted::new(&rpf, &irr, 0, 4).unwrap();
        assert_eq!(value_gcd_guess(&tw), None);
    }

    #[test]
    fn grid_too_coarse() {
        let rpf = coin(8);
        let q0 = RealFn::constant(rpf.system(), 0, 1, 1.0).unwrap();
        let opts = ScanOptions { grid: 0.05, ..ScanOptions::default() };
        assert!(matches!(
            resonance_scan(&rpf, &FnSeq::first_symbol(), &q0, &opts),
            Err(Error::GridTooCoarse { .. })
        ));
    }
}
