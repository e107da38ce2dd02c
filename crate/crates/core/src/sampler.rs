//! Forward Monte Carlo sampling of Gibbs paths and empirical cross-checks.
//!
//! For a potential of finite depth the Gibbs measure is a Markov chain of
//! order `D_w - 1`, so paths are drawn forward with kernels obtained from
//! ratios of cylinder masses.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::decomp::moment_curve;
use crate::dist::{char_fn, lattice_pmf, LatticePmf};
use crate::error::{Error, Result};
use crate::funcspace::{FnSeq, RealFn};
use crate::symbolic::{symbols_to_string, WordSpace};
use crate::transfer::RpfData;

/// Conditional law of the next symbol given the previous `memory` symbols at one index.
#[derive(Clone, Debug)]
struct Kernel {
    /// Words of length `memory` at this index.
    context: Arc<WordSpace>,
    /// Per context word: next symbols with cumulative probabilities.
    rows: Vec<Vec<(u8, f64)>>,
    /// Plain probabilities, indexed like `rows`.
    probs: Vec<Vec<f64>>,
}

/// Forward kernels `P(x_{j+m} = b | x_j .. x_{j+m-1} = w) = mu_j([w b]) / mu_j([w])`.
#[derive(Clone, Debug)]
pub struct Kernels {
    lo: i64,
    memory: usize,
    /// Depth-`memory` marginal of `mu_lo`, cumulative.
    init: Vec<(Vec<u8>, f64)>,
    kernels: Vec<Kernel>,
}

impl Kernels {
    pub fn base(&self) -> i64 {
        self.lo
    }

    /// Order of the chain, `D_w - 1`.
    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Longest path that can be sampled.
    pub fn max_len(&self) -> usize {
        self.kernels.len() + self.memory
    }

    /// `P(x_{j+m} = b | w)`, zero when `w b` is not admissible.
    pub fn conditional(&self, j: i64, w: &[u8], b: u8) -> Result<f64> {
        let k = self.kernel(j)?;
        if w.len() != self.memory {
            return Err(Error::ShapeMismatch(format!("context of length {}, expected {}", w.len(), self.memory)));
        }
        let Some(i) = k.context.index_of(w) else {
            return Ok(0.0);
        };
        Ok(k.rows[i]
            .iter()
            .zip(&k.probs[i])
            .find(|((s, _), _)| *s == b)
            .map_or(0.0, |(_, p)| *p))
    }

    /// Largest `|sum_b P(b | w) - 1|` over all kernels.
    pub fn max_row_defect(&self) -> f64 {
        self.kernels
            .iter()
            .flat_map(|k| k.probs.iter())
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn kernel(&self, j: i64) -> Result<&Kernel> {
        let hi = self.lo + self.kernels.len() as i64 - 1;
        usize::try_from(j - self.lo)
            .ok()
            .and_then(|i| self.kernels.get(i))
            .ok_or(Error::IndexOutOfWindow { j, lo: self.lo, hi })
    }

    fn draw(cum: impl Iterator<Item = (u8, f64)>, u: f64) -> u8 {
        let mut last = 0;
        for (s, c) in cum {
            last = s;
            if u < c {
                return s;
            }
        }
        last
    }

    fn path(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let m = self.memory;
        let u: f64 = rng.gen();
        let start = self
            .init
            .iter()
            .find(|(_, c)| u < *c)
            .or(self.init.last())
            .map(|(w, _)| w.clone())
            .expect("nonempty initial law");
        let mut x = start;
        x.truncate(n);
        while x.len() < n {
            let p = x.len();
            let k = &self.kernels[p - m];
            let ctx = k.context.index_of(&x[p - m..]).expect("sampled context admissible");
            let u: f64 = rng.gen();
            x.push(Self::draw(k.rows[ctx].iter().copied(), u));
        }
        x
    }
}

/// Builds the forward kernels at every index of the RPF range.
pub fn forward_kernels(rpf: &RpfData) -> Result<Kernels> {
    let (lo, hi) = rpf.range();
    let dw = rpf.working_depth();
    let memory = dw - 1;
    let init_f = rpf.mu(lo)?.marginal(memory)?;
    let mut acc = 0.0;
    let mut init = Vec::with_capacity(init_f.weights().len());
    for (i, w) in init_f.weights().iter().enumerate() {
        acc += w;
        init.push((init_f.space().symbols(i), acc));
    }
    if (acc - 1.0).abs() > 1e-9 {
        return Err(Error::NoConvergence { what: format!("initial marginal sums to {acc}"), iterations: rpf.burn_in() });
    }
    let kernels = (lo..=hi)
        .into_par_iter()
        .map(|j| {
            let mu = rpf.mu(j)?;
            let marg = mu.marginal(memory)?;
            let context = marg.space().clone();
            let full = mu.space();
            let mut rows = vec![Vec::new(); context.len()];
            let mut probs = vec![Vec::new(); context.len()];
            for idx in 0..full.len() {
                let s = full.symbols(idx);
                let c = context.index_of(&s[..memory]).expect("prefix admissible");
                let p = mu.weights()[idx] / marg.weights()[c];
                probs[c].push(p);
                rows[c].push((s[memory], p));
            }
            for (c, row) in rows.iter_mut().enumerate() {
                let sum: f64 = probs[c].iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::NoConvergence {
                        what: format!("kernel row at index {j} sums to {sum}"),
                        iterations: rpf.burn_in(),
                    });
                }
                let mut acc = 0.0;
                for e in row.iter_mut() {
                    acc += e.1;
                    e.1 = acc;
                }
            }
            Ok(Kernel { context, rows, probs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Kernels { lo, memory, init, kernels })
}

/// Sampled paths `x_lo .. x_{lo+n-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Samples {
    pub base: i64,
    pub n: usize,
    pub seed: u64,
    /// Index of the first path in the global sample numbering.
    pub first: usize,
    pub paths: Vec<Vec<u8>>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// One path per line as a symbol string.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.paths.len() * (self.n + 1));
        for p in &self.paths {
            s.push_str(&symbols_to_string(p));
            s.push('\n');
        }
        s
    }
}

fn rng_for(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Samples with global indices in `range`; sample `i` depends only on `(seed, i)`.
pub fn sample_range(kernels: &Kernels, n: usize, range: std::ops::Range<usize>, seed: u64) -> Result<Samples> {
    if n == 0 || n > kernels.max_len() {
        return Err(Error::IndexOutOfWindow {
            j: kernels.lo + n as i64 - 1,
            lo: kernels.lo,
            hi: kernels.lo + kernels.max_len() as i64 - 1,
        });
    }
    let first = range.start;
    let paths = range.into_par_iter().map(|i| kernels.path(n, &mut rng_for(seed, i))).collect();
    Ok(Samples { base: kernels.lo, n, seed, first, paths })
}

pub fn sample_paths(kernels: &Kernels, n: usize, n_samples: usize, seed: u64) -> Result<Samples> {
    sample_range(kernels, n, 0..n_samples, seed)
}

/// Pairwise summation, blocks of 32 summed directly.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `S_m f` along each path; paths must cover `m + depth(f) - 1` symbols.
pub fn birkhoff_sums(samples: &Samples, f: &FnSeq, m: usize) -> Result<Vec<f64>> {
    let d = f.depth();
    if m + d - 1 > samples.n {
        return Err(Error::InvalidArgument(format!(
            "paths of length {} are too short for S_{m} of a depth-{d} observable",
            samples.n
        )));
    }
    Ok(samples
        .paths
        .par_iter()
        .map(|p| (0..m).map(|k| f.eval(samples.base + k as i64, &p[k..k + d])).sum())
        .collect())
}

/// Empirical masses of all words of length `len` starting at the sample base.
pub fn cylinder_frequencies(samples: &Samples, len: usize) -> HashMap<Vec<u8>, f64> {
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    for p in &samples.paths {
        *counts.entry(p[..len].to_vec()).or_default() += 1;
    }
    let n = samples.len() as f64;
    counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}

/// Exact quantities of `S_n f` under `mu_lo` to compare samples against.
#[derive(Clone, Debug)]
pub struct ExactRefs {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub char_fn: Vec<(f64, Complex64)>,
    pub pmf: Option<LatticePmf>,
}

/// Exact references under the Gibbs measure itself (density 1); the PMF is
/// included when `f` is integer-valued.
pub fn exact_refs(rpf: &RpfData, f: &FnSeq, n: usize, ts: &[f64]) -> Result<ExactRefs> {
    let (lo, _) = rpf.range();
    let q0 = RealFn::constant(rpf.system(), lo, 1, 1.0)?;
    let m = moment_curve(rpf, f, &q0, n)?[n];
    let char_fn = ts
        .iter()
        .map(|&t| char_fn(rpf, f, &q0, n, t).map(|c| (t, c)))
        .collect::<Result<Vec<_>>>()?;
    let pmf = match lattice_pmf(rpf, f, &q0, n) {
        Ok(p) => Some(p),
        Err(Error::NotIntegerValued { .. }) | Err(Error::RangeOverflow { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ExactRefs { n, mean: m.mean, variance: m.variance, char_fn, pmf })
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub metric: String,
    pub empirical: f64,
    pub exact: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalReport {
    pub n: usize,
    pub n_samples: usize,
    pub rows: Vec<CheckRow>,
}

impl EmpiricalReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,empirical,exact,band,pass\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e},{:e},{}\n", r.metric, r.empirical, r.exact, r.band, r.pass));
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"n": self.n, "n_samples": self.n_samples, "all_pass": self.all_pass(), "rows": self.rows})
    }
}

/// Compares sample moments, characteristic function and PMF cells of `S_n f`
/// with exact values at four-sigma bands.
pub fn empirical_check(samples: &Samples, f: &FnSeq, refs: &ExactRefs) -> Result<EmpiricalReport> {
    let n = refs.n;
    let sums = birkhoff_sums(samples, f, n)?;
    let cnt = sums.len() as f64;
    let mut rows = Vec::new();
    let mut push = |metric: String, empirical: f64, exact: f64, band: f64| {
        rows.push(CheckRow { pass: (empirical - exact).abs() <= band, metric, empirical, exact, band });
    };

    let mean = pairwise_sum(&sums) / cnt;
    let dev2: Vec<f64> = sums.iter().map(|s| (s - mean).powi(2)).collect();
    let var = pairwise_sum(&dev2) / cnt;
    let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
    let m4 = pairwise_sum(&dev4) / cnt;
    push("mean".into(), mean, refs.mean, 4.0 * (refs.variance.max(0.0) / cnt).sqrt());
    push("variance".into(), var, refs.variance, 4.0 * ((m4 - var * var).max(0.0) / cnt).sqrt());

    for &(t, exact) in &refs.char_fn {
        let re: Vec<f64> = sums.iter().map(|s| (t * s).cos()).collect();
        let im: Vec<f64> = sums.iter().map(|s| (t * s).sin()).collect();
        let emp = Complex64::new(pairwise_sum(&re) / cnt, pairwise_sum(&im) / cnt);
        push(format!("char_fn_abs_err(t={t})"), (emp - exact).norm(), 0.0, 4.0 / cnt.sqrt());
    }

    if let Some(pmf) = &refs.pmf {
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for s in &sums {
            *counts.entry(s.round() as i64).or_default() += 1;
        }
        let (a, b) = pmf.support();
        for u in a..=b {
            let p = pmf.mass(u);
            let emp = counts.get(&u).copied().unwrap_or(0) as f64 / cnt;
            // A single draw moves a cell by 1/N, so the band never drops below that.
            let band = (4.0 * (p * (1.0 - p) / cnt).sqrt()).max(1.0 / cnt);
            push(format!("pmf({u})"), emp, p, band);
        }
        let outside = counts.iter().filter(|(u, _)| **u < a || **u > b).map(|(_, c)| *c).sum::<usize>();
        push("pmf(outside support)".into(), outside as f64 / cnt, 0.0, 0.0);
    }
    Ok(EmpiricalReport { n, n_samples: samples.len(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{validate, Adjacency, SystemSpec};
    use crate::transfer::{rpf_solve, RpfOptions};

    fn coin(window: i64) -> RpfData {
        let sys = validate(SystemSpec::full_shift(2, window)).unwrap();
        rpf_solve(&sys, &FnSeq::constant(-(2f64.ln())), &RpfOptions::default()).unwrap()
    }

    #[test]
    fn coin_kernels_are_fair() {
        let k = forward_kernels(&coin(8)).unwrap();
        for j in 0..8 {
            for w in 0..2u8 {
                for b in 0..2u8 {
                    assert!((k.conditional(j, &[w], b).unwrap() - 0.5).abs() < 1e-12);
                }
            }
        }
        assert!(k.max_row_defect() < 1e-12);
    }

    #[test]
    fn golden_parry_kernels() {
        let a = Adjacency::from_rows(&[vec![1, 1], vec![1, 0]]).unwrap();
        let sys = validate(SystemSpec::homogeneous(a, 16)).unwrap();
        let rpf = rpf_solve(&sys, &FnSeq::constant(0.0), &RpfOptions::default()).unwrap();
        let k = forward_kernels(&rpf).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert_eq!(k.conditional(4, &[1], 1).unwrap(), 0.0);
        assert!((k.conditional(4, &[0], 1).unwrap() - (2.0 - golden)).abs() < 1e-9);
        let s = sample_paths(&k, 16, 2000, 3).unwrap();
        assert!(s.paths.iter().all(|p| p.windows(2).all(|w| w != [1, 1])));
    }

    #[test]
    fn sampling_is_deterministic_and_batch_independent() {
        let k = forward_kernels(&coin(16)).unwrap();
        let a = sample_paths(&k, 12, 100, 42).unwrap();
        let b = sample_paths(&k, 12, 100, 42).unwrap();
        assert_eq!(a, b);
        let part = sample_range(&k, 12, 40..60, 42).unwrap();
        assert_eq!(&a.paths[40..60], &part.paths[..]);
        let c = sample_paths(&k, 12, 100, 43).unwrap();
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499500.0);
    }

    #[test]
    fn too_long_paths_are_rejected() {
        let k = forward_kernels(&coin(4)).unwrap();
        assert!(sample_paths(&k, 7, 1, 0).is_err());
        assert!(sample_paths(&k, 6, 1, 0).is_ok());
    }
}
