//! Centering, martingale-coboundary decomposition and exact moments of
//! Birkhoff sums.

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::funcspace::{FnSeq, RealFn};
use crate::transfer::RpfData;

/// `f_j - mu_j(f_j)` on a run of indices starting at `lo`.
#[derive(Clone, Debug)]
pub struct Centered {
    pub lo: i64,
    pub f_bar: Vec<RealFn>,
    pub means: Vec<f64>,
}

impl Centered {
    pub fn len(&self) -> usize {
        self.f_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_bar.is_empty()
    }

    pub fn get(&self, j: i64) -> Option<&RealFn> {
        usize::try_from(j - self.lo).ok().and_then(|i| self.f_bar.get(i))
    }
}

/// Centers `f_j` for `j` in `[lo, lo + len)`.
pub fn center(rpf: &RpfData, f: &FnSeq, lo: i64, len: usize) -> Result<Centered> {
    let sys = rpf.system();
    let dw = rpf.working_depth();
    let mut f_bar = Vec::with_capacity(len);
    let mut means = Vec::with_capacity(len);
    for i in 0..len {
        let j = lo + i as i64;
        let fj = f.at_depth(sys, j, dw)?;
        let m = rpf.expect(&fj)?;
        f_bar.push(fj.map(|v| v - m));
        means.push(m);
    }
    Ok(Centered { lo, f_bar, means })
}

/// `f_bar_j = A_j + B_j - B_{j+1} o T_j` with `L^_j A_j = 0`.
#[derive(Clone, Debug)]
pub struct DecompResult {
    pub lo: i64,
    pub a: Vec<RealFn>,
    /// One more entry than `a`.
    pub b: Vec<RealFn>,
    pub martingale_residual: Vec<f64>,
    pub identity_residual: Vec<f64>,
    pub var_a: Vec<f64>,
    pub sup_star_a: f64,
    pub sup_star_b: f64,
    /// Fitted ratio of `sup |L^^k f_bar|` in `k`.
    pub decay_ratio: f64,
}

impl DecompResult {
    pub fn var_a_partial_sums(&self) -> Vec<f64> {
        self.var_a
            .iter()
            .scan(0.0, |s, v| {
                *s += v;
                Some(*s)
            })
            .collect()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_martingale_residual(&self) -> f64 {
        self.martingale_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "lo": self.lo,
            "martingale_residual": self.martingale_residual,
            "identity_residual": self.identity_residual,
            "var_a": self.var_a,
            "var_a_partial_sums": self.var_a_partial_sums(),
            "sup_star_a": self.sup_star_a,
            "sup_star_b": self.sup_star_b,
            "decay_ratio": self.decay_ratio,
        })
    }
}

fn fit_ratio(terms: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = terms
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 1e-14)
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

/// Builds `B_0 = 0`, `B_{j+1} = L^_j(B_j - f_bar_j)` and `A_j` from the identity.
pub fn martingale_coboundary(rpf: &RpfData, fb: &Centered, alpha: f64, c1: f64) -> Result<DecompResult> {
    let sys = rpf.system();
    let dw = rpf.working_depth();
    for (i, f) in fb.f_bar.iter().enumerate() {
        if f.depth() > dw {
            return Err(Error::InvalidArgument(format!(
                "observable depth {} exceeds working depth {dw}",
                f.depth()
            )));
        }
        let m = rpf.expect(f)?;
        if m.abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "observable at {} is not centered (mean {m:e})",
                fb.lo + i as i64
            )));
        }
    }

    // Decay of L^^k f_bar_lo, the terms of the series defining B.
    let horizon = fb.len().min(32);
    let mut terms = Vec::with_capacity(horizon);
    let mut cur = fb.f_bar[0].clone();
    let scale = cur.sup_norm().max(1e-300);
    for _ in 0..horizon {
        cur = rpf.normalized_apply(&cur)?;
        terms.push(cur.sup_norm() / scale);
    }
    let decay_ratio = fit_ratio(&terms);
    if let Some(&last) = terms.last() {
        if last > 1e-8 && decay_ratio >= 1.0 {
            return Err(Error::NoConvergence { what: "coboundary series".into(), iterations: horizon });
        }
    }

    let mut b = Vec::with_capacity(fb.len() + 1);
    b.push(RealFn::constant(sys, fb.lo, dw, 0.0)?);
    let mut a = Vec::with_capacity(fb.len());
    let mut martingale_residual = Vec::with_capacity(fb.len());
    let mut identity_residual = Vec::with_capacity(fb.len());
    let mut var_a = Vec::with_capacity(fb.len());
    let (mut sup_star_a, mut sup_star_b) = (0.0f64, 0.0f64);
    for (i, f) in fb.f_bar.iter().enumerate() {
        let f = f.embed(dw)?;
        let bj = &b[i];
        let next = rpf.normalized_apply(&bj.sub(&f)?)?;
        let next_shift = next.truncate(dw - 1)?.compose_shift()?;
        let aj = f.sub(bj)?.add(&next_shift)?;
        let rebuilt = aj.add(bj)?.sub(&next_shift)?;
        identity_residual.push(rebuilt.max_abs_diff(&f)?);
        martingale_residual.push(rpf.normalized_apply(&aj)?.sup_norm());
        var_a.push(rpf.expect(&aj.powi(2))?);
        sup_star_a = sup_star_a.max(aj.star_norm(alpha, c1));
        sup_star_b = sup_star_b.max(bj.star_norm(alpha, c1));
        a.push(aj);
        b.push(next);
    }
    sup_star_b = sup_star_b.max(b.last().expect("nonempty").star_norm(alpha, c1));
    Ok(DecompResult {
        lo: fb.lo,
        a,
        b,
        martingale_residual,
        identity_residual,
        var_a,
        sup_star_a,
        sup_star_b,
        decay_ratio,
    })
}

/// Mean, variance and third central moment of `S_n f` under `q0 dmu_lo`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
}

impl Moments {
    pub fn sigma(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Checks that `q0` is a probability density for `mu_lo`.
pub fn check_density(rpf: &RpfData, q0: &RealFn) -> Result<()> {
    if q0.depth() > rpf.working_depth() {
        return Err(Error::BadDensity(format!(
            "density depth {} exceeds working depth {}",
            q0.depth(),
            rpf.working_depth()
        )));
    }
    if q0.min_value() < 0.0 {
        return Err(Error::BadDensity(format!("negative value {}", q0.min_value())));
    }
    let m = rpf.expect(q0)?;
    if (m - 1.0).abs() > 1e-9 {
        return Err(Error::BadDensity(format!("mu(q0) = {m}, expected 1")));
    }
    Ok(())
}

/// Moments of `S_n f` for every `n` in `0..=n_max`.
///
/// Runs the pushforward recursion on the centered observable and adds the means
/// back, which keeps the third moment accurate for large sums.
pub fn moment_curve(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n_max: usize) -> Result<Vec<Moments>> {
    check_density(rpf, q0)?;
    let lo = q0.base();
    let dw = rpf.working_depth();
    let fb = center(rpf, f, lo, n_max)?;
    let mut u = [
        q0.embed(dw)?,
        RealFn::constant(rpf.system(), lo, dw, 0.0)?,
        RealFn::constant(rpf.system(), lo, dw, 0.0)?,
        RealFn::constant(rpf.system(), lo, dw, 0.0)?,
    ];
    let mut out = Vec::with_capacity(n_max + 1);
    let mut mean_shift = 0.0;
    out.push(Moments { n: 0, mean: 0.0, variance: 0.0, third_central: 0.0 });
    for (i, f) in fb.f_bar.iter().enumerate() {
        let f = f.embed(dw)?;
        let f2 = f.powi(2);
        let f3 = f.powi(3);
        let pre = [
            u[0].clone(),
            u[1].add(&f.mul(&u[0])?)?,
            u[2].add(&f.mul(&u[1])?.scale(2.0))?.add(&f2.mul(&u[0])?)?,
            u[3]
                .add(&f.mul(&u[2])?.scale(3.0))?
                .add(&f2.mul(&u[1])?.scale(3.0))?
                .add(&f3.mul(&u[0])?)?,
        ];
        for r in 0..4 {
            u[r] = rpf.normalized_apply(&pre[r])?;
        }
        mean_shift += fb.means[i];
        let m1 = rpf.expect(&u[1])?;
        let m2 = rpf.expect(&u[2])?;
        let m3 = rpf.expect(&u[3])?;
        out.push(Moments {
            n: i + 1,
            mean: m1 + mean_shift,
            variance: m2 - m1 * m1,
            third_central: m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3),
        });
    }
    Ok(out)
}

pub fn sum_moments(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize) -> Result<Moments> {
    Ok(*moment_curve(rpf, f, q0, n)?.last().expect("nonempty"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VarianceClass {
    Growing,
    Bounded,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceEvidence {
    pub class: VarianceClass,
    pub n_grid: Vec<usize>,
    pub sigma2: Vec<f64>,
    pub var_a_partial_sums: Vec<f64>,
    pub linear_slope: f64,
    pub linear_r2: f64,
}

/// Threshold on `sigma_n^2` above which growth is accepted.
pub const GROWTH_THRESHOLD: f64 = 10.0;

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Growing versus bounded variance of `S_n f`.
pub fn classify_variance(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n_grid: &[usize]) -> Result<VarianceEvidence> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().ok_or_else(|| Error::InvalidArgument("empty n grid".into()))?;
    let curve = moment_curve(rpf, f, q0, n_max)?;
    let sigma2: Vec<f64> = grid.iter().map(|&n| curve[n].variance).collect();
    let fb = center(rpf, f, q0.base(), n_max)?;
    let dec = martingale_coboundary(rpf, &fb, 1.0, 1.0)?;
    let partial = dec.var_a_partial_sums();

    let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let (slope, r2) = linear_fit(&x, &sigma2);
    let last = *sigma2.last().expect("nonempty");

    let half = n_max / 2;
    let total = partial.last().copied().unwrap_or(0.0);
    let tail = total - partial.get(half.saturating_sub(1)).copied().unwrap_or(0.0);
    let tail_converges = tail <= 1e-6 * total.max(1.0) || fit_ratio(&dec.var_a[half..]) < 1.0;
    let split = sigma2.len() / 2;
    let early = sigma2[..split.max(1)].iter().copied().fold(0.0, f64::max);
    let late = sigma2[split..].iter().copied().fold(0.0, f64::max);
    let bounded_curve = late <= 1.1 * early + 1e-9;

    let class = if last >= GROWTH_THRESHOLD && slope > 0.0 && r2 >= 0.9 {
        VarianceClass::Growing
    } else if grid.len() >= 2 && tail_converges && bounded_curve {
        VarianceClass::Bounded
    } else {
        VarianceClass::Indeterminate
    };
    Ok(VarianceEvidence {
        class,
        n_grid: grid,
        sigma2,
        var_a_partial_sums: partial,
        linear_slope: slope,
        linear_r2: r2,
    })
}
