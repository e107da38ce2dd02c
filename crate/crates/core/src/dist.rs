//! Characteristic functions of Birkhoff sums, exact lattice laws and smoothed
//! densities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde_json::json;

use crate::decomp::{check_density, moment_curve};
use crate::error::{Error, Result};
use crate::funcspace::{FnSeq, RealFn};
use crate::spectral::Twisted;
use crate::transfer::RpfData;

/// Largest value range handled by [`lattice_pmf`].
pub const MAX_LATTICE_RANGE: u64 = 1 << 20;

/// `Phi_n(t) = E_{kappa_0}[e^{i t S_n f}]` with `kappa_0 = q0 dmu_lo`.
pub fn char_fn(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize, t: f64) -> Result<Complex64> {
    check_density(rpf, q0)?;
    let tw = Twisted::new(rpf, f, q0.base(), n)?;
    tw.char_fn(&q0.to_complex(), n, t)
}

#[derive(Clone, Debug)]
pub struct CharFnCurve {
    pub n: usize,
    pub t: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl CharFnCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,re,im\n");
        for (t, v) in self.t.iter().zip(&self.values) {
            s.push_str(&format!("{t},{:e},{:e}\n", v.re, v.im));
        }
        s
    }
}

pub fn char_fn_curve(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize, ts: &[f64]) -> Result<CharFnCurve> {
    check_density(rpf, q0)?;
    let tw = Twisted::new(rpf, f, q0.base(), n)?;
    let q = q0.to_complex();
    let values = ts.par_iter().map(|&t| tw.char_fn(&q, n, t)).collect::<Result<Vec<_>>>()?;
    Ok(CharFnCurve { n, t: ts.to_vec(), values })
}

/// Exact law of an integer-valued `S_n`, masses indexed from `offset`.
#[derive(Clone, Debug)]
pub struct LatticePmf {
    pub n: usize,
    pub offset: i64,
    pub masses: Vec<f64>,
    /// Most negative raw mass before clipping.
    pub min_raw: f64,
    /// Set when a raw mass fell below `-1e-10`.
    pub clip_warning: bool,
}

impl LatticePmf {
    pub fn mass(&self, u: i64) -> f64 {
        usize::try_from(u - self.offset).ok().and_then(|i| self.masses.get(i)).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.masses.len() as i64 - 1)
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn moment_about(&self, c: f64, r: i32) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, p)| p * (self.offset as f64 + i as f64 - c).powi(r))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment_about(0.0, 1)
    }

    pub fn variance(&self) -> f64 {
        self.moment_about(self.mean(), 2)
    }

    pub fn third_central(&self) -> f64 {
        self.moment_about(self.mean(), 3)
    }

    /// `P(S_n <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = (x.floor() as i64 - self.offset + 1).clamp(0, self.masses.len() as i64) as usize;
        self.masses[..k].iter().sum::<f64>().min(1.0)
    }

    /// `sum_u P(u) e^{i t u}`.
    pub fn char_at(&self, t: f64) -> Complex64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, &p)| Complex64::from_polar(p, t * (self.offset as f64 + i as f64)))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,mass\n");
        for (i, p) in self.masses.iter().enumerate() {
            s.push_str(&format!("{},{:e}\n", self.offset + i as i64, p));
        }
        s
    }
}

/// Integer tables of `f_j`, or the first index where a value is not an integer.
pub(crate) fn integer_ranges(tw: &Twisted) -> Result<Vec<(i64, i64)>> {
    (0..tw.len())
        .map(|i| {
            let j = tw.lo() + i as i64;
            let f = tw.observable(j)?;
            if f.values().iter().any(|v| (v - v.round()).abs() > 1e-9) {
                return Err(Error::NotIntegerValued { j });
            }
            Ok((f.min_value().round() as i64, f.max_value().round() as i64))
        })
        .collect()
}

/// Law of `S_n` by inverse DFT of `Phi_n` at the frequencies `2 pi k / V`.
pub fn lattice_pmf(rpf: &RpfData, f: &FnSeq, q0: &RealFn, n: usize) -> Result<LatticePmf> {
    check_density(rpf, q0)?;
    let tw = Twisted::new(rpf, f, q0.base(), n)?;
    let ranges = integer_ranges(&tw)?;
    let offset: i64 = ranges.iter().map(|r| r.0).sum();
    let range: u64 = 1 + ranges.iter().map(|r| (r.1 - r.0) as u64).sum::<u64>();
    if range > MAX_LATTICE_RANGE {
        return Err(Error::RangeOverflow { range, cap: MAX_LATTICE_RANGE });
    }
    let v = range as usize;
    let q = q0.to_complex();
    let half: Vec<Complex64> = (0..=v / 2)
        .into_par_iter()
        .map(|k| tw.char_fn(&q, n, 2.0 * PI * k as f64 / v as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut buf: Vec<Complex64> = (0..v)
        .map(|k| {
            let phi = if k <= v / 2 { half[k] } else { half[v - k].conj() };
            let t = 2.0 * PI * k as f64 / v as f64;
            phi * Complex64::from_polar(1.0 / v as f64, -t * offset as f64)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(v).process(&mut buf);
    let min_raw = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    let masses = buf.iter().map(|c| c.re.max(0.0)).collect();
    Ok(LatticePmf { n, offset, masses, min_raw, clip_warning: min_raw < -1e-10 })
}

/// Fejér-type kernel `(T0 / 2 pi) sinc^2(T0 x / 2)`; its Fourier transform is
/// the tent `max(0, 1 - |t| / T0)` and it integrates to 1.
pub fn fejer_kernel(x: f64, t0: f64) -> f64 {
    let y = 0.5 * t0 * x;
    let s = if y.abs() < 1e-8 { 1.0 - y * y / 6.0 } else { y.sin() / y };
    t0 / (2.0 * PI) * s * s
}

pub fn fejer_transform(t: f64, t0: f64) -> f64 {
    (1.0 - t.abs() / t0).max(0.0)
}

#[derive(Clone, Debug)]
pub struct SmoothedDensity {
    pub n: usize,
    pub t0: f64,
    pub step: f64,
    pub u: Vec<f64>,
    pub values: Vec<f64>,
}

impl SmoothedDensity {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,value\n");
        for (u, v) in self.u.iter().zip(&self.values) {
            s.push_str(&format!("{u},{v:e}\n"));
        }
        s
    }

    pub fn metadata(&self) -> serde_json::Value {
        json!({"n": self.n, "T0": self.t0, "quadrature_step": self.step, "points": self.u.len()})
    }
}

/// Default Simpson step: `min(0.01, pi / (8 R))`, `R` the largest frequency
/// `|S_n - u|` carrying non-negligible mass.
pub fn default_step(u_grid: &[f64], mean: f64, sigma: f64, support: (f64, f64)) -> f64 {
    let spread = u_grid
        .iter()
        .map(|u| (u - mean).abs())
        .fold(0.0, f64::max)
        + 8.0 * sigma;
    let hard = u_grid
        .iter()
        .map(|u| (u - support.0).abs().max((u - support.1).abs()))
        .fold(0.0, f64::max);
    let r = spread.min(hard).max(1.0);
    (PI / (8.0 * r)).min(0.01)
}

/// `E[g_{T0}(S_n - u)]` by Simpson quadrature of the inversion integral.
pub fn smoothed_density(
    rpf: &RpfData,
    f: &FnSeq,
    q0: &RealFn,
    n: usize,
    t0: f64,
    u_grid: &[f64],
    step: Option<f64>,
) -> Result<SmoothedDensity> {
    if t0 <= 0.0 {
        return Err(Error::InvalidArgument("T0 must be positive".into()));
    }
    check_density(rpf, q0)?;
    let tw = Twisted::new(rpf, f, q0.base(), n)?;
    let h = match step {
        Some(h) => h,
        None => {
            let m = moment_curve(rpf, f, q0, n)?[n];
            let (mut lo, mut hi) = (0.0, 0.0);
            for i in 0..n {
                let (a, b) = tw.value_range(q0.base() + i as i64)?;
                lo += a;
                hi += b;
            }
            default_step(u_grid, m.mean, m.sigma(), (lo, hi))
        }
    };
    let mut intervals = (t0 / h).ceil() as usize;
    intervals += intervals % 2;
    let h = t0 / intervals as f64;
    let q = q0.to_complex();
    let nodes: Vec<Complex64> = (0..=intervals)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * h;
            tw.char_fn(&q, n, t).map(|phi| phi * fejer_transform(t, t0))
        })
        .collect::<Result<Vec<_>>>()?;
    let values = u_grid
        .par_iter()
        .map(|&u| {
            let mut acc = 0.0;
            for (i, c) in nodes.iter().enumerate() {
                let w = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let t = i as f64 * h;
                acc += w * (c * Complex64::from_polar(1.0, -t * u)).re;
            }
            acc * h / 3.0 / PI
        })
        .collect();
    Ok(SmoothedDensity { n, t0, step: h, u: u_grid.to_vec(), values })
}
