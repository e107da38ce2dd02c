//! Ready-made sequential systems: Bernoulli and Markov chains, piecewise
//! linear Markov maps, positive matrix cocycles, the reduction of two-sided
//! observables and reducible fixtures with a certified decomposition.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::funcspace::{FnSeq, RealFn};
use crate::symbolic::{enumerate_words, validate, Adjacency, Extension, System, SystemSpec};
use crate::transfer::{rpf_solve, RpfData, RpfOptions};
use crate::verify::{check_decomposition, Decomposition};

/// A system together with its potential, a default observable and, for chain
/// models, the law of the first symbol.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub system: System,
    pub potential: FnSeq,
    pub observable: FnSeq,
    pub initial_law: Option<Vec<f64>>,
    pub decomposition: Option<Decomposition>,
    pub notes: Vec<String>,
}

impl Model {
    fn new(name: impl Into<String>, system: System, potential: FnSeq, observable: FnSeq) -> Self {
        Model {
            name: name.into(),
            system,
            potential,
            observable,
            initial_law: None,
            decomposition: None,
            notes: Vec::new(),
        }
    }

    pub fn with_observable(mut self, f: FnSeq) -> Self {
        self.observable = f;
        self.decomposition = None;
        self
    }

    /// Solver options whose working depth fits the potential and observable.
    pub fn rpf_options(&self) -> RpfOptions {
        RpfOptions { initial_law: self.initial_law.clone(), ..RpfOptions::default() }
            .fit_depths(&[&self.potential, &self.observable])
    }

    pub fn solve(&self) -> Result<RpfData> {
        rpf_solve(&self.system, &self.potential, &self.rpf_options())
    }
}

/// The density `q0 = 1` at the left end of the solved range.
pub fn unit_density(rpf: &RpfData) -> Result<RealFn> {
    RealFn::constant(rpf.system(), rpf.range().0, 1, 1.0)
}

/// Bernoulli(p) on the full 2-shift; the observable is the first symbol.
pub fn coin(p: f64, window: i64) -> Result<Model> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("coin probability {p} outside (0, 1)")));
    }
    let sys = validate(SystemSpec::full_shift(2, window))?;
    let (a, b) = ((1.0 - p).ln(), p.ln());
    let phi = FnSeq::new(1, format!("bernoulli({p})"), move |_, x| if x[0] == 1 { b } else { a });
    Ok(Model::new(format!("coin({p})"), sys, phi, FnSeq::first_symbol()))
}

/// Golden-mean shift with zero potential (its Parry measure).
pub fn golden_parry(window: i64) -> Result<Model> {
    let a = Adjacency::from_rows(&[vec![1, 1], vec![1, 0]])?;
    let sys = validate(SystemSpec::homogeneous(a, window))?;
    Ok(Model::new("golden_parry", sys, FnSeq::constant(0.0), FnSeq::first_symbol()))
}

/// `x -> 2x mod 1` as a two-branch Markov map.
pub fn doubling(window: i64) -> Result<Model> {
    let level = MapLevel { breakpoints: vec![0.0, 0.5, 1.0], images: vec![(0.0, 1.0), (0.0, 1.0)] };
    let mut m = pw_linear_markov_map(&[level], window)?;
    m.name = "doubling".into();
    Ok(m)
}

/// Coin with `f = x_0 + sqrt(2) x_0 x_1`, whose values generate a dense subgroup.
pub fn irr_sqrt2(window: i64) -> Result<Model> {
    let base = coin(0.5, window)?;
    let f = FnSeq::new(2, "x0+sqrt2*x0*x1", |_, x| x[0] as f64 + SQRT_2 * (x[0] * x[1]) as f64);
    let mut m = base.with_observable(f);
    m.name = "irr_sqrt2".into();
    Ok(m)
}

/// Coin with the pure coboundary `f_j = x_j - x_{j+1}`.
pub fn coboundary(window: i64) -> Result<Model> {
    let base = coin(0.5, window)?;
    let mut m = base.with_observable(FnSeq::coboundary(&FnSeq::first_symbol()));
    m.name = "coboundary".into();
    Ok(m)
}

/// Options of [`from_markov_chain`].
#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    /// Lower bound required of every positive transition probability.
    pub epsilon: f64,
    /// Largest number of steps tried when certifying ellipticity.
    pub m_check: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { epsilon: 1e-3, m_check: 8 }
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|c| row.iter().zip(b).map(|(x, br)| x * br[c]).sum())
                .collect()
        })
        .collect()
}

/// Inhomogeneous Markov chain with transition matrices `p_j = transitions[j mod P]`.
///
/// The potential is `ln p_j(x_0, x_1)` and the initial law fixes the marginal
/// of `x_0`, so the Gibbs measure is the path law of the chain.
pub fn from_markov_chain(transitions: &[Vec<Vec<f64>>], initial: &[f64], window: i64, opts: ChainOptions) -> Result<Model> {
    let period = transitions.len();
    if period == 0 {
        return Err(Error::ShapeMismatch("no transition matrices".into()));
    }
    for (j, p) in transitions.iter().enumerate() {
        for (r, row) in p.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::NotStochastic { j: j as i64, row: r, sum });
            }
            if let Some(&v) = row.iter().find(|&&v| v > 0.0 && v < opts.epsilon) {
                return Err(Error::NotElliptic(format!(
                    "p_{j} has entry {v} below the lower bound {}",
                    opts.epsilon
                )));
            }
        }
    }
    let isum: f64 = initial.iter().sum();
    if (isum - 1.0).abs() > 1e-9 || initial.iter().any(|&v| v < 0.0) {
        return Err(Error::NotStochastic { j: -1, row: 0, sum: isum });
    }
    let w = window as usize;
    if period > w {
        return Err(Error::ExtensionMismatch(format!("{period} matrices for window {window}")));
    }
    let mat = |j: usize| &transitions[j % period];
    let adjacency = (0..w)
        .map(|j| Adjacency::from_rows(&mat(j).iter().map(|r| r.iter().map(|&v| u8::from(v > 0.0)).collect()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let mut alphabet_sizes: Vec<usize> = (0..w).map(|j| mat(j).len()).collect();
    alphabet_sizes.push(mat(w - 1)[0].len());
    let spec = SystemSpec { window, alphabet_sizes, adjacency, extension: Extension::Periodic(period) };
    let sys = validate(spec)?;

    for j in 0..period {
        let mut prod = mat(j).clone();
        let mut m = 1;
        while prod.iter().flatten().any(|&v| v <= 0.0) {
            if m >= opts.m_check {
                return Err(Error::NotElliptic(format!("no positive {m}-step transition from index {j}")));
            }
            prod = mat_mul(&prod, mat(j + m));
            m += 1;
        }
    }
    if initial.len() != sys.alphabet(0) {
        return Err(Error::ShapeMismatch(format!("initial law of length {} for alphabet {}", initial.len(), sys.alphabet(0))));
    }

    let logs: Arc<Vec<Vec<Vec<f64>>>> =
        Arc::new(transitions.iter().map(|p| p.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect()).collect());
    let phi = FnSeq::new(2, "ln p_j", move |j, x| {
        logs[j.rem_euclid(period as i64) as usize][x[0] as usize][x[1] as usize]
    });
    let mut m = Model::new(format!("markov({period})"), sys, phi, FnSeq::first_symbol());
    m.initial_law = Some(initial.to_vec());
    Ok(m)
}

/// A seeded inhomogeneous chain on `states` symbols with a distinct matrix
/// at every index, entries drawn from `[0.2, 1]` before normalization.
pub fn random_elliptic_chain(states: usize, window: i64, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transitions: Vec<Vec<Vec<f64>>> = (0..window)
        .map(|_| {
            (0..states)
                .map(|_| {
                    let row: Vec<f64> = (0..states).map(|_| rng.gen_range(0.2..1.0)).collect();
                    let s: f64 = row.iter().sum();
                    row.into_iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect();
    let initial = vec![1.0 / states as f64; states];
    let mut m = from_markov_chain(&transitions, &initial, window, ChainOptions::default())?;
    m.name = format!("random_chain({states},{seed})");
    Ok(m)
}

/// JSON form of a chain model.
#[derive(Clone, Debug, Deserialize)]
pub struct ChainSpecJson {
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub initial: Vec<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub m_check: Option<usize>,
}

/// `f_j = sum_k a_k x_{j+k}`, with a tail bound when the coefficients continue
/// geometrically with ratio `r` past the last one.
pub fn linear_statistic(sys: &System, coeffs: &[f64], geometric_tail: Option<f64>) -> Result<(FnSeq, Option<f64>)> {
    let d = coeffs.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty coefficient list".into()));
    }
    if d > sys.limits().max_word_len {
        return Err(Error::DepthOverflow { depth: d, size: 0 });
    }
    let max_symbol = (sys.max_alphabet() - 1) as f64;
    let bound = match geometric_tail {
        Some(r) if r.abs() < 1.0 => Some(coeffs[d - 1].abs() * r.abs() / (1.0 - r.abs()) * max_symbol),
        Some(r) => return Err(Error::InvalidArgument(format!("tail ratio {r} is not below 1 in modulus"))),
        None => None,
    };
    Ok((FnSeq::linear(coeffs.to_vec()), bound))
}

/// One index of a piecewise linear Markov map: a partition of `[0, 1]` and the
/// image `(start, end)` of each cell (`start > end` for decreasing branches).
#[derive(Clone, Debug, Deserialize)]
pub struct MapLevel {
    pub breakpoints: Vec<f64>,
    pub images: Vec<(f64, f64)>,
}

impl MapLevel {
    pub fn lengths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn slopes(&self) -> Vec<f64> {
        self.lengths().iter().zip(&self.images).map(|(l, im)| (im.1 - im.0).abs() / l).collect()
    }
}

/// Symbolic model of `tau_j` with `A_{k,l} = 1` iff `I_{j+1,l}` lies in
/// `tau_j(I_{j,k})` and potential `-ln |tau_j'|`. Level `j` is `levels[j mod L]`.
pub fn pw_linear_markov_map(levels: &[MapLevel], window: i64) -> Result<Model> {
    let l = levels.len();
    if l == 0 {
        return Err(Error::ShapeMismatch("no map levels".into()));
    }
    for (j, lv) in levels.iter().enumerate() {
        let bp = &lv.breakpoints;
        let ok = bp.len() >= 2
            && bp[0] == 0.0
            && (bp[bp.len() - 1] - 1.0).abs() < 1e-12
            && bp.windows(2).all(|w| w[1] > w[0]);
        if !ok || lv.images.len() != bp.len() - 1 {
            return Err(Error::ShapeMismatch(format!("level {j}: bad partition or image list")));
        }
        for (k, s) in lv.slopes().into_iter().enumerate() {
            if s.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::NotExpanding { j: j as i64, branch: k, slope: s });
            }
        }
    }
    let w = window as usize;
    let mut adjacency = Vec::with_capacity(w);
    for j in 0..w {
        let cur = &levels[j % l];
        let next = &levels[(j + 1) % l];
        let nb = &next.breakpoints;
        let snap = |x: f64| nb.iter().position(|b| (b - x).abs() < 1e-12);
        let mut rows = Vec::with_capacity(cur.images.len());
        for (k, im) in cur.images.iter().enumerate() {
            let (a, b) = (im.0.min(im.1), im.0.max(im.1));
            let (Some(ia), Some(ib)) = (snap(a), snap(b)) else {
                return Err(Error::NotMarkov { j: j as i64, branch: k });
            };
            rows.push((0..nb.len() - 1).map(|c| u8::from(c >= ia && c < ib)).collect());
        }
        adjacency.push(Adjacency::from_rows(&rows)?);
    }
    let mut alphabet_sizes: Vec<usize> = (0..w).map(|j| levels[j % l].images.len()).collect();
    alphabet_sizes.push(levels[w % l].images.len());
    let sys = validate(SystemSpec { window, alphabet_sizes, adjacency, extension: Extension::Periodic(l) })?;
    let logs: Arc<Vec<Vec<f64>>> = Arc::new(levels.iter().map(|lv| lv.slopes().iter().map(|s| -s.ln()).collect()).collect());
    let phi = FnSeq::new(1, "-ln|slope|", move |j, x| logs[j.rem_euclid(l as i64) as usize][x[0] as usize]);
    Ok(Model::new(format!("pw_linear({l})"), sys, phi, FnSeq::first_symbol()))
}

/// Sequential Perron-Frobenius data of a positive matrix product.
#[derive(Clone, Debug)]
pub struct CocycleData {
    /// `B_j h_j = lambda_j h_{j+1}` and `B_j^T nu_{j+1} = lambda_j nu_j`.
    pub lambda: Vec<f64>,
    pub h: Vec<DVector<f64>>,
    pub nu: Vec<DVector<f64>>,
    /// `||Xi_{0,n} / lambda_{0,n} - h_n nu_0^T||` (spectral norm), `n = 1, 2, ...`.
    pub decay: Vec<f64>,
    /// Log-linear fit of `decay`; 0 when it vanishes identically.
    pub decay_ratio: f64,
    /// `max_n |ln ||Xi_{0,n}|| - sum_{j<n} ln lambda_j|`.
    pub log_norm_gap: f64,
}

impl CocycleData {
    /// `Pi_j = ln lambda_j`.
    pub fn log_lambda(&self) -> Vec<f64> {
        self.lambda.iter().map(|l| l.ln()).collect()
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn log_linear_ratio(terms: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = terms
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 1e-13)
        .map(|(k, &t)| (k as f64, t.ln()))
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

/// Power iteration for `B_0, ..., B_{N-1}`, extended periodically for the
/// burn-in from the past and the future. `decay` covers `n <= min(30, N)`.
pub fn positive_matrix_cocycle(matrices: &[DMatrix<f64>], burn_in: usize) -> Result<CocycleData> {
    let n = matrices.len();
    if n == 0 {
        return Err(Error::ShapeMismatch("no matrices".into()));
    }
    let d = matrices[0].nrows();
    for (i, m) in matrices.iter().enumerate() {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::ShapeMismatch(format!("matrix {i} is not {d}x{d}")));
        }
        if m.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NotPositive { index: i });
        }
    }
    let b = |j: i64| &matrices[j.rem_euclid(n as i64) as usize];
    let normalize = |v: DVector<f64>| {
        let s = v.sum();
        v / s
    };
    let mut hv = DVector::from_element(d, 1.0 / d as f64);
    for j in -(burn_in as i64)..0 {
        hv = normalize(b(j) * hv);
    }
    let mut h = vec![hv];
    let mut lambda = Vec::with_capacity(n);
    for j in 0..n {
        let v = &matrices[j] * &h[j];
        let l = v.sum();
        lambda.push(l);
        h.push(v / l);
    }
    let mut nv = DVector::from_element(d, 1.0 / d as f64);
    for j in (n as i64..n as i64 + burn_in as i64).rev() {
        nv = normalize(b(j).transpose() * nv);
    }
    let mut nu_raw = vec![nv];
    for j in (0..n).rev() {
        let v = normalize(matrices[j].transpose() * nu_raw.last().expect("nonempty"));
        nu_raw.push(v);
    }
    nu_raw.reverse();
    let nu: Vec<DVector<f64>> = nu_raw.iter().zip(&h).map(|(v, hj)| v / v.dot(hj)).collect();

    let mut decay = Vec::new();
    let mut prod = DMatrix::<f64>::identity(d, d);
    let mut log_lam = 0.0;
    let mut gap = 0.0f64;
    for k in 0..n {
        prod = &matrices[k] * prod / lambda[k];
        log_lam += lambda[k].ln();
        gap = gap.max((spectral_norm(&prod).ln()).abs());
        if k < 30 {
            let rank_one = &h[k + 1] * nu[0].transpose();
            decay.push(spectral_norm(&(&prod - rank_one)));
        }
    }
    let _ = log_lam;
    Ok(CocycleData { decay_ratio: log_linear_ratio(&decay), lambda, h, nu, decay, log_norm_gap: gap })
}

/// Matrices `B_j` with entries drawn uniformly from `[lo, hi]`.
pub fn random_positive_matrices(count: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(lo..=hi))).collect()
}

/// `ln lambda_j` of the product driven by the symbol path, taking the future
/// `x_j .. x_{j+depth-1}` into account (backward normalization).
fn cocycle_log_lambda(mats: &[DMatrix<f64>], x: &[u8]) -> f64 {
    let d = mats[0].nrows();
    let mut v = DVector::from_element(d, 1.0 / d as f64);
    for &s in x[1..].iter().rev() {
        let w = mats[s as usize].transpose() * v;
        let sum = w.sum();
        v = w / sum;
    }
    (mats[x[0] as usize].transpose() * v).sum().ln()
}

/// JSON form of a symbol-driven cocycle model.
#[derive(Clone, Debug, Deserialize)]
pub struct CocycleSpecJson {
    pub matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[serde(default = "default_cocycle_depth")]
    pub depth: usize,
}

fn default_cocycle_depth() -> usize {
    4
}

/// Bernoulli selection among positive matrices with observable
/// `Pi_j = ln lambda_j` truncated to `depth` future symbols. The truncation
/// error against depth `depth + 4` is recorded in the notes.
pub fn cocycle_model(mats: Vec<DMatrix<f64>>, probs: Option<Vec<f64>>, depth: usize, window: i64) -> Result<Model> {
    let k = mats.len();
    if k == 0 || depth == 0 {
        return Err(Error::ShapeMismatch("cocycle model needs matrices and a positive depth".into()));
    }
    for (i, m) in mats.iter().enumerate() {
        if m.nrows() != mats[0].nrows() || !m.is_square() {
            return Err(Error::ShapeMismatch(format!("matrix {i} has a different shape")));
        }
        if m.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NotPositive { index: i });
        }
    }
    let probs = probs.unwrap_or_else(|| vec![1.0 / k as f64; k]);
    if probs.len() != k || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 || probs.iter().any(|p| *p <= 0.0) {
        return Err(Error::NotStochastic { j: 0, row: 0, sum: probs.iter().sum() });
    }
    let sys = validate(SystemSpec::full_shift(k, window))?;
    let logp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let phi = FnSeq::new(1, "selection", move |_, x| logp[x[0] as usize]);
    let m = Arc::new(mats);
    let mc = m.clone();
    let obs = FnSeq::new(depth, format!("ln lambda (depth {depth})"), move |_, x| cocycle_log_lambda(&mc, &x[..depth]));
    let mut trunc = 0.0f64;
    for w in enumerate_words(&sys, 0, depth + 4)? {
        let a = cocycle_log_lambda(&m, &w.symbols[..depth]);
        let b = cocycle_log_lambda(&m, &w.symbols);
        trunc = trunc.max((a - b).abs());
    }
    let mut model = Model::new(format!("cocycle({k})"), sys, phi, obs);
    model.notes.push(format!("depth-{depth} truncation error of ln lambda: {trunc:e}"));
    Ok(model)
}

/// A function of `x_{j-past} .. x_{j+future}`.
#[derive(Clone)]
pub struct TwoSidedFn {
    pub past: usize,
    pub future: usize,
    label: String,
    f: Arc<dyn Fn(i64, &[u8]) -> f64 + Send + Sync>,
}

impl fmt::Debug for TwoSidedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TwoSidedFn({}, past {}, future {})", self.label, self.past, self.future)
    }
}

impl TwoSidedFn {
    pub fn new(past: usize, future: usize, label: impl Into<String>, f: impl Fn(i64, &[u8]) -> f64 + Send + Sync + 'static) -> Self {
        TwoSidedFn { past, future, label: label.into(), f: Arc::new(f) }
    }

    /// `psi_j(x) = x_{j-1}`.
    pub fn previous_symbol() -> Self {
        TwoSidedFn::new(1, 0, "previous_symbol", |_, x| x[0] as f64)
    }

    /// `x` holds `x_{j-past} ..= x_{j+future}`.
    pub fn eval(&self, j: i64, x: &[u8]) -> f64 {
        (self.f)(j, x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// A periodic reference past, `r_k = pattern[k mod p]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferencePast {
    pub pattern: Vec<u8>,
}

impl ReferencePast {
    pub fn symbol(&self, k: i64) -> u8 {
        self.pattern[k.rem_euclid(self.pattern.len() as i64) as usize]
    }

    fn check(&self, sys: &System, lo: i64, hi: i64) -> Result<()> {
        for j in lo..=hi {
            let r = self.symbol(j - 1) as usize;
            if r >= sys.alphabet(j - 1) {
                return Err(Error::IncompatibleReferencePast { j, detail: format!("symbol {r} outside the alphabet") });
            }
            if !sys.allowed(j - 1, r, self.symbol(j) as usize) {
                return Err(Error::IncompatibleReferencePast { j, detail: "reference word itself is inadmissible".into() });
            }
            for b in 0..sys.alphabet(j) {
                if !sys.allowed(j - 1, r, b) {
                    return Err(Error::IncompatibleReferencePast {
                        j,
                        detail: format!("reference symbol {r} cannot precede {b}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The reduction `psi_j = u_j - u_{j+1} o sigma + phi_j o pi_j`.
#[derive(Clone, Debug)]
pub struct SinaiReduction {
    pub psi: TwoSidedFn,
    pub reference: ReferencePast,
    /// Depends on `x_{j-P} .. x_{j+P+F-1}`.
    pub u: TwoSidedFn,
    /// One-sided, depth `P + F + 1`.
    pub phi: FnSeq,
}

impl SinaiReduction {
    /// `max |psi_j - u_j + u_{j+1} o sigma - phi_j o pi_j|` over every
    /// admissible word on the coordinates the identity touches.
    pub fn identity_residual(&self, sys: &System, j: i64) -> Result<f64> {
        let p = self.psi.past;
        let f = self.psi.future;
        let len = 2 * p + f + 1;
        let mut worst = 0.0f64;
        for w in enumerate_words(sys, j - p as i64, len)? {
            let x = &w.symbols;
            let psi = self.psi.eval(j, &x[..p + f + 1]);
            let u0 = self.u.eval(j, &x[..len - 1]);
            let u1 = self.u.eval(j + 1, &x[1..]);
            let phi = self.phi.eval(j, &x[p..]);
            worst = worst.max((psi - u0 + u1 - phi).abs());
        }
        Ok(worst)
    }

    /// `sup |u_j|` over admissible words at `j`.
    pub fn sup_u(&self, sys: &System, j: i64) -> Result<f64> {
        let p = self.psi.past;
        let len = 2 * p + self.psi.future;
        if len == 0 {
            return Ok(0.0);
        }
        Ok(enumerate_words(sys, j - p as i64, len)?
            .iter()
            .map(|w| self.u.eval(j, &w.symbols).abs())
            .fold(0.0, f64::max))
    }
}

/// The lexicographically least admissible periodic reference past of period
/// at most 4 that can precede every symbol.
pub fn default_reference_past(sys: &System) -> Result<ReferencePast> {
    let d = sys.max_alphabet() as u8;
    let (lo, hi) = (-8, sys.window() + 8);
    let mut candidates: Vec<Vec<u8>> = Vec::new();
    for p in 1..=4u32 {
        for code in 0..(d as u32).pow(p) {
            let mut c = code;
            let pat: Vec<u8> = (0..p)
                .map(|_| {
                    let s = (c % d as u32) as u8;
                    c /= d as u32;
                    s
                })
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            candidates.push(pat);
        }
    }
    let expand = |pat: &Vec<u8>| (0..12).map(|k| pat[k % pat.len()]).collect::<Vec<u8>>();
    candidates.sort_by_key(expand);
    for pat in candidates {
        let r = ReferencePast { pattern: pat };
        if r.check(sys, lo, hi).is_ok() {
            return Ok(r);
        }
    }
    Err(Error::IncompatibleReferencePast { j: 0, detail: "no periodic reference past of period <= 4 fits".into() })
}

/// Rewrites a two-sided finite-range observable as a one-sided one plus a coboundary.
pub fn sinai_reduce(sys: &System, psi: &TwoSidedFn, reference: Option<ReferencePast>) -> Result<SinaiReduction> {
    let reference = match reference {
        Some(r) => {
            if r.pattern.is_empty() {
                return Err(Error::IncompatibleReferencePast { j: 0, detail: "empty pattern".into() });
            }
            r.check(sys, -8, sys.window() + 8)?;
            r
        }
        None => default_reference_past(sys)?,
    };
    let p = psi.past;
    let f = psi.future;

    let (ps, rf) = (psi.clone(), reference.clone());
    // x holds x_{j-P} .. x_{j+P+F-1}.
    let u_eval = Arc::new(move |j: i64, x: &[u8]| -> f64 {
        let mut alt = x.to_vec();
        for (i, s) in alt.iter_mut().enumerate().take(p) {
            *s = rf.symbol(j - p as i64 + i as i64);
        }
        (0..p)
            .map(|k| ps.eval(j + k as i64, &x[k..k + p + f + 1]) - ps.eval(j + k as i64, &alt[k..k + p + f + 1]))
            .sum()
    });
    let ue = u_eval.clone();
    let u = TwoSidedFn::new(p, (p + f).saturating_sub(1), format!("u[{}]", psi.label()), move |j, x| ue(j, x));

    let (ps, rf) = (psi.clone(), reference.clone());
    let depth = p + f + 1;
    let phi = FnSeq::new(depth, format!("reduced[{}]", psi.label()), move |j, y| {
        // a_j(y) on coordinates j-P .. j+P+F.
        let mut z: Vec<u8> = (0..p).map(|i| rf.symbol(j - p as i64 + i as i64)).collect();
        z.extend_from_slice(&y[..depth]);
        let head = ps.eval(j, &z[..p + f + 1]);
        let tail = if p == 0 { 0.0 } else { u_eval(j + 1, &z[1..]) };
        head + tail
    });
    Ok(SinaiReduction { psi: psi.clone(), reference, u, phi })
}

/// Builds `f_j = Z_j + M_j + g_j - g_{j+1} o T_j` with
/// `M_j = c_j (b_j - (L^_j b_j) o T_j)`, which satisfies `L^_j M_j = 0`,
/// and verifies the decomposition on the whole solved range.
pub fn reducible_fixture(
    base: &Model,
    rpf: &RpfData,
    g: FnSeq,
    z: FnSeq,
    c: impl Fn(i64) -> f64,
    b: FnSeq,
) -> Result<Model> {
    let sys = rpf.system().clone();
    let dw = rpf.working_depth();
    let (lo, hi) = rpf.range();
    if b.depth() >= dw || g.depth() >= dw || z.depth() > dw {
        return Err(Error::DecompositionInvalid(format!(
            "fixture components must fit under the working depth {dw}"
        )));
    }
    let mut tables = Vec::with_capacity((hi - lo) as usize);
    for j in lo..hi {
        let bj = b.at_depth(&sys, j, dw)?;
        let lb = rpf.normalized_apply(&bj)?.truncate(dw - 1)?.compose_shift()?;
        tables.push(bj.sub(&lb)?.scale(c(j)));
    }
    let tables = Arc::new(tables);
    let m = FnSeq::new(dw, "martingale", move |j, x| {
        usize::try_from(j - lo)
            .ok()
            .and_then(|i| tables.get(i))
            .map_or(0.0, |t| t.eval(&x[..dw]).unwrap_or(f64::NAN))
    });
    let f = z.add(&m).add(&FnSeq::coboundary(&g)).with_label("reducible fixture");
    let dec = Decomposition { span: 1.0, z, m, g };
    let len = (hi - lo - 1).max(0) as usize;
    check_decomposition(rpf, &f, &dec, lo, len)?;
    let mut model = base.clone().with_observable(f);
    model.decomposition = Some(dec);
    model.name = format!("red_fixture[{}]", base.name);
    Ok(model)
}

/// The standard reducible fixture on the fair coin: `g = gamma x_0`,
/// `Z = x_0`, `c_j = ratio^j` with `b = x_0`.
pub fn red_fixture(window: i64, gamma: f64, ratio: f64) -> Result<(Model, RpfData)> {
    let base = coin(0.5, window)?;
    let rpf = base.solve()?;
    let m = reducible_fixture(
        &base,
        &rpf,
        FnSeq::first_symbol().scale(gamma),
        FnSeq::first_symbol(),
        move |j| ratio.powi(j.max(0) as i32),
        FnSeq::first_symbol(),
    )?;
    Ok((m, rpf))
}

fn parse_params(s: &str) -> Result<Vec<(String, f64)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (k, v) = t.split_once('=').ok_or_else(|| Error::Config {
                path: "model".into(),
                message: format!("expected key=value, got '{t}'"),
            })?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Config {
                path: "model".into(),
                message: format!("bad number in '{t}'"),
            })?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn read_json(path: &str) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })
}

/// Models addressable by name: `coin`, `coin:<p>`, `golden_parry`,
/// `doubling`, `irr_sqrt2`, `coboundary`, `random_chain:<states>,<seed>`,
/// `markov:<file>`, `cocycle:<file>` and `red_fixture[:g=..,c=..]`.
pub fn zoo(name: &str, window: i64) -> Result<Model> {
    let bad = |m: String| Error::Config { path: "model".into(), message: m };
    let (head, arg) = name.split_once(':').map_or((name, None), |(h, a)| (h, Some(a)));
    match head {
        "coin" => {
            let p = match arg {
                Some(a) => a.parse().map_err(|_| bad(format!("bad coin probability '{a}'")))?,
                None => 0.5,
            };
            coin(p, window)
        }
        "golden_parry" => golden_parry(window),
        "doubling" => doubling(window),
        "irr_sqrt2" => irr_sqrt2(window),
        "coboundary" => coboundary(window),
        "random_chain" => {
            let (states, seed) = match arg {
                Some(a) => {
                    let (s, r) = a.split_once(',').ok_or_else(|| bad("random_chain:<states>,<seed>".into()))?;
                    (
                        s.trim().parse().map_err(|_| bad(format!("bad state count '{s}'")))?,
                        r.trim().parse().map_err(|_| bad(format!("bad seed '{r}'")))?,
                    )
                }
                None => (3, 11),
            };
            random_elliptic_chain(states, window, seed)
        }
        "markov" => {
            let path = arg.ok_or_else(|| bad("markov:<file>".into()))?;
            let spec: ChainSpecJson =
                serde_json::from_value(read_json(path)?).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })?;
            let d = ChainOptions::default();
            let opts = ChainOptions { epsilon: spec.epsilon.unwrap_or(d.epsilon), m_check: spec.m_check.unwrap_or(d.m_check) };
            from_markov_chain(&spec.transitions, &spec.initial, window, opts)
        }
        "cocycle" => {
            let path = arg.ok_or_else(|| bad("cocycle:<file>".into()))?;
            let spec: CocycleSpecJson =
                serde_json::from_value(read_json(path)?).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })?;
            let mats = spec
                .matrices
                .iter()
                .map(|rows| {
                    let d = rows.len();
                    if rows.iter().any(|r| r.len() != d) {
                        return Err(bad("cocycle matrices must be square".into()));
                    }
                    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
                })
                .collect::<Result<Vec<_>>>()?;
            cocycle_model(mats, spec.probs, spec.depth, window)
        }
        "red_fixture" => {
            let mut gamma = 0.3;
            let mut ratio = 0.5;
            for (k, v) in parse_params(arg.unwrap_or(""))? {
                match k.as_str() {
                    "g" => gamma = v,
                    "c" => ratio = v,
                    _ => return Err(bad(format!("unknown red_fixture parameter '{k}'"))),
                }
            }
            Ok(red_fixture(window, gamma, ratio)?.0)
        }
        _ => Err(bad(format!("unknown model '{name}'"))),
    }
}
