//! Locally constant functions on word spaces and linear functionals on them.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::symbolic::{symbols_to_string, System, Word, WordSpace};

/// Scalar field of a function table.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn scale_real(self, x: f64) -> Self;
    /// Largest pairwise distance in a slice.
    fn diameter(values: &[Self]) -> f64;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn scale_real(self, x: f64) -> Self {
        self * x
    }
    fn diameter(values: &[Self]) -> f64 {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if values.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

impl Scalar for Complex64 {
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn scale_real(self, x: f64) -> Self {
        self * x
    }
    fn diameter(values: &[Self]) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in values.iter().enumerate() {
            for b in &values[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }
}

/// A function of the first `depth` coordinates `x_j, ..., x_{j+depth-1}`.
#[derive(Clone)]
pub struct FiniteDepthFn<T> {
    sys: System,
    base: i64,
    space: Arc<WordSpace>,
    values: Vec<T>,
}

pub type RealFn = FiniteDepthFn<f64>;
pub type ComplexFn = FiniteDepthFn<Complex64>;

impl<T: Scalar> fmt::Debug for FiniteDepthFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteDepthFn")
            .field("base", &self.base)
            .field("depth", &self.depth())
            .field("values", &self.values)
            .finish()
    }
}

impl<T: Scalar> FiniteDepthFn<T> {
    pub fn from_fn(sys: &System, base: i64, depth: usize, mut f: impl FnMut(&[u8]) -> T) -> Result<Self> {
        let space = sys.space(base, depth)?;
        let mut values = Vec::with_capacity(space.len());
        for i in 0..space.len() {
            values.push(f(&space.symbols(i)));
        }
        Ok(FiniteDepthFn { sys: sys.clone(), base, space, values })
    }

    /// Values listed in lexicographic order of admissible words.
    pub fn from_values(sys: &System, base: i64, depth: usize, values: Vec<T>) -> Result<Self> {
        let space = sys.space(base, depth)?;
        if values.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} admissible words",
                values.len(),
                space.len()
            )));
        }
        Ok(FiniteDepthFn { sys: sys.clone(), base, space, values })
    }

    pub(crate) fn from_parts(sys: &System, base: i64, space: Arc<WordSpace>, values: Vec<T>) -> Self {
        debug_assert_eq!(space.len(), values.len());
        FiniteDepthFn { sys: sys.clone(), base, space, values }
    }

    pub fn constant(sys: &System, base: i64, depth: usize, c: T) -> Result<Self> {
        let space = sys.space(base, depth)?;
        let values = vec![c; space.len()];
        Ok(FiniteDepthFn { sys: sys.clone(), base, space, values })
    }

    pub fn system(&self) -> &System {
        &self.sys
    }

    pub fn base(&self) -> i64 {
        self.base
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn space(&self) -> &Arc<WordSpace> {
        &self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value on any admissible word at least `depth` long.
    pub fn eval(&self, symbols: &[u8]) -> Option<T> {
        if symbols.len() < self.depth() {
            return None;
        }
        self.space.index_of(&symbols[..self.depth()]).map(|i| self.values[i])
    }

    pub fn eval_word(&self, w: &Word) -> Result<T> {
        if w.base != self.base {
            return Err(Error::BaseMismatch);
        }
        self.eval(&w.symbols)
            .ok_or_else(|| Error::Inadmissible(format!("word {w} at base {}", w.base)))
    }

    /// The same function seen as depending on `depth` coordinates.
    pub fn embed(&self, depth: usize) -> Result<Self> {
        let d = self.depth();
        if depth == d {
            return Ok(self.clone());
        }
        if depth < d {
            return Err(Error::InvalidArgument(format!("cannot embed depth {d} into {depth}")));
        }
        let space = self.sys.space(self.base, depth)?;
        let values = (0..space.len())
            .map(|i| {
                let p = space.prefix_code(i, d);
                self.values[self.space.index_of_code(p).expect("prefix admissible")]
            })
            .collect();
        Ok(FiniteDepthFn { sys: self.sys.clone(), base: self.base, space, values })
    }

    /// Restriction to `depth` coordinates, reading each value at the
    /// lexicographically first extension. Exact when `self` ignores the
    /// dropped coordinates.
    pub fn truncate(&self, depth: usize) -> Result<Self> {
        let d = self.depth();
        if depth >= d {
            return self.embed(depth);
        }
        let space = self.sys.space(self.base, depth)?;
        let mut values = vec![T::zero(); space.len()];
        let mut seen = vec![false; space.len()];
        for i in 0..self.space.len() {
            let p = self.space.prefix_code(i, depth);
            let k = space.index_of_code(p).expect("prefix admissible");
            if !seen[k] {
                seen[k] = true;
                values[k] = self.values[i];
            }
        }
        Ok(FiniteDepthFn { sys: self.sys.clone(), base: self.base, space, values })
    }

    /// `f o T_{j-1}`: a function at base `j-1` depending on one more coordinate.
    pub fn compose_shift(&self) -> Result<Self> {
        let d = self.depth();
        let base = self.base - 1;
        let space = self.sys.space(base, d + 1)?;
        let values = (0..space.len())
            .map(|i| {
                let tail = space.tail_code(i);
                self.values[self.space.index_of_code(tail).expect("tail admissible")]
            })
            .collect();
        Ok(FiniteDepthFn { sys: self.sys.clone(), base, space, values })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> FiniteDepthFn<U> {
        FiniteDepthFn {
            sys: self.sys.clone(),
            base: self.base,
            space: self.space.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination after embedding both operands at the larger depth.
    pub fn zip_with(&self, other: &Self, op: impl Fn(T, T) -> T) -> Result<Self> {
        if self.base != other.base {
            return Err(Error::BaseMismatch);
        }
        let d = self.depth().max(other.depth());
        let a = self.embed(d)?;
        let b = other.embed(d)?;
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| op(x, y)).collect();
        Ok(FiniteDepthFn { sys: self.sys.clone(), base: self.base, space: a.space, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// Exact Hölder constant of the locally constant extension:
    /// `max |f(w) - f(w')| 2^{k alpha}` over pairs first differing at `k`.
    pub fn holder_seminorm(&self, alpha: f64) -> f64 {
        let n = self.space.len();
        let mut best = 0.0f64;
        for k in 0..self.depth() {
            let weight = 2f64.powf(k as f64 * alpha);
            let mut start = 0;
            while start < n {
                let p = self.space.prefix_code(start, k);
                let mut end = start + 1;
                while end < n && self.space.prefix_code(end, k) == p {
                    end += 1;
                }
                if end - start > 1 {
                    best = best.max(weight * T::diameter(&self.values[start..end]));
                }
                start = end;
            }
        }
        best
    }

    /// `max(sup |f|, G_alpha(f) / (2 C1))`.
    pub fn star_norm(&self, alpha: f64, c1: f64) -> f64 {
        self.sup_norm().max(self.holder_seminorm(alpha) / (2.0 * c1))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Value table keyed by symbol strings.
    pub fn table(&self) -> Vec<(String, T)> {
        (0..self.space.len())
            .map(|i| (symbols_to_string(&self.space.symbols(i)), self.values[i]))
            .collect()
    }
}

impl RealFn {
    /// `e^{i t f}` pointwise.
    pub fn exp_scaled(&self, t: f64) -> ComplexFn {
        self.map(|v| Complex64::from_polar(1.0, t * v))
    }

    pub fn to_complex(&self) -> ComplexFn {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn exp(&self) -> RealFn {
        self.map(f64::exp)
    }

    pub fn ln(&self) -> RealFn {
        self.map(f64::ln)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn powi(&self, k: i32) -> RealFn {
        self.map(|v| v.powi(k))
    }
}

/// Linear functional on depth-`D` functions, given by weights on cylinders.
#[derive(Clone)]
pub struct Functional<T> {
    sys: System,
    base: i64,
    space: Arc<WordSpace>,
    weights: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Functional<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("base", &self.base)
            .field("depth", &self.depth())
            .field("weights", &self.weights)
            .finish()
    }
}

impl<T: Scalar> Functional<T> {
    pub fn from_weights(sys: &System, base: i64, depth: usize, weights: Vec<T>) -> Result<Self> {
        let space = sys.space(base, depth)?;
        if weights.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} admissible words",
                weights.len(),
                space.len()
            )));
        }
        Ok(Functional { sys: sys.clone(), base, space, weights })
    }

    pub(crate) fn from_parts(sys: &System, base: i64, space: Arc<WordSpace>, weights: Vec<T>) -> Self {
        Functional { sys: sys.clone(), base, space, weights }
    }

    pub fn base(&self) -> i64 {
        self.base
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn space(&self) -> &Arc<WordSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `<self, f>`; `f` may be shallower than the functional.
    pub fn pair(&self, f: &FiniteDepthFn<T>) -> Result<T> {
        if f.base() != self.base {
            return Err(Error::BaseMismatch);
        }
        if f.depth() > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "function of depth {} paired with functional of depth {}",
                f.depth(),
                self.depth()
            )));
        }
        let g = f.embed(self.depth())?;
        Ok(self
            .weights
            .iter()
            .zip(g.values())
            .fold(T::zero(), |acc, (&w, &v)| acc + w * v))
    }

    /// Weights summed down to cylinders of length `depth`.
    pub fn marginal(&self, depth: usize) -> Result<Self> {
        if depth > self.depth() {
            return Err(Error::InvalidArgument("marginal deeper than functional".into()));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        let space = self.sys.space(self.base, depth)?;
        let mut weights = vec![T::zero(); space.len()];
        for i in 0..self.space.len() {
            let k = space
                .index_of_code(self.space.prefix_code(i, depth))
                .expect("prefix admissible");
            weights[k] = weights[k] + self.weights[i];
        }
        Ok(Functional { sys: self.sys.clone(), base: self.base, space, weights })
    }

    pub fn total(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w)
    }
}

impl Functional<f64> {
    pub fn to_complex(&self) -> Functional<Complex64> {
        Functional {
            sys: self.sys.clone(),
            base: self.base,
            space: self.space.clone(),
            weights: self.weights.iter().map(|&w| Complex64::new(w, 0.0)).collect(),
        }
    }

    /// Pairing with a complex function.
    pub fn pair_complex(&self, f: &ComplexFn) -> Result<Complex64> {
        self.to_complex().pair(f)
    }
}

type SeqFn = dyn Fn(i64, &[u8]) -> f64 + Send + Sync;

/// A sequence of real functions `j -> f_j`, all of one depth, evaluated lazily.
#[derive(Clone)]
pub struct FnSeq {
    depth: usize,
    label: String,
    f: Arc<SeqFn>,
}

impl fmt::Debug for FnSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnSeq({}, depth {})", self.label, self.depth)
    }
}

impl FnSeq {
    pub fn new(
        depth: usize,
        label: impl Into<String>,
        f: impl Fn(i64, &[u8]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnSeq { depth: depth.max(1), label: label.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        FnSeq::new(1, format!("const:{c}"), move |_, _| c)
    }

    pub fn first_symbol() -> Self {
        FnSeq::new(1, "first_symbol", |_, x| x[0] as f64)
    }

    pub fn indicator(word: Vec<u8>) -> Self {
        let label = format!("indicator:{}", symbols_to_string(&word));
        FnSeq::new(word.len(), label, move |_, x| if x[..word.len()] == word[..] { 1.0 } else { 0.0 })
    }

    /// `sum_k a_k x_{j+k}`.
    pub fn linear(coeffs: Vec<f64>) -> Self {
        let label = format!("linear:{coeffs:?}");
        FnSeq::new(coeffs.len(), label, move |_, x| {
            coeffs.iter().zip(x).map(|(a, &s)| a * s as f64).sum()
        })
    }

    /// Explicit table; words missing from the table evaluate to NaN and are
    /// rejected when materialized.
    pub fn table(entries: HashMap<Vec<u8>, f64>) -> Result<Self> {
        let depth = entries.keys().map(|k| k.len()).max().unwrap_or(1);
        if entries.keys().any(|k| k.len() != depth) {
            return Err(Error::InvalidArgument("table keys of unequal length".into()));
        }
        Ok(FnSeq::new(depth, "table", move |_, x| {
            entries.get(&x[..depth]).copied().unwrap_or(f64::NAN)
        }))
    }

    /// Per-index tables, `tables[j]` used at index `j` (clamped to the ends).
    pub fn tables(tables: Vec<HashMap<Vec<u8>, f64>>) -> Result<Self> {
        let depth = tables
            .iter()
            .flat_map(|t| t.keys())
            .map(|k| k.len())
            .max()
            .unwrap_or(1);
        if tables.is_empty() || tables.iter().flat_map(|t| t.keys()).any(|k| k.len() != depth) {
            return Err(Error::InvalidArgument("per-index tables must share one depth".into()));
        }
        let last = tables.len() as i64 - 1;
        Ok(FnSeq::new(depth, "tables", move |j, x| {
            tables[j.clamp(0, last) as usize].get(&x[..depth]).copied().unwrap_or(f64::NAN)
        }))
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, j: i64, x: &[u8]) -> f64 {
        (self.f)(j, x)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `f_j` as a table at base `j`, embedded at `depth.max(self.depth)`.
    pub fn at_depth(&self, sys: &System, j: i64, depth: usize) -> Result<RealFn> {
        let d = depth.max(self.depth);
        let f = RealFn::from_fn(sys, j, d, |x| self.eval(j, x))?;
        if let Some((w, _)) = f.table().into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{} has no finite value on word {w} at index {j}",
                self.label
            )));
        }
        Ok(f)
    }

    pub fn at(&self, sys: &System, j: i64) -> Result<RealFn> {
        self.at_depth(sys, j, self.depth)
    }

    pub fn scale(&self, c: f64) -> Self {
        let f = self.f.clone();
        FnSeq::new(self.depth, format!("{}*{c}", self.label), move |j, x| c * f(j, x))
    }

    pub fn add(&self, other: &FnSeq) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        FnSeq::new(
            self.depth.max(other.depth),
            format!("{}+{}", self.label, other.label),
            move |j, x| f(j, x) + g(j, x),
        )
    }

    pub fn mul(&self, other: &FnSeq) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        FnSeq::new(
            self.depth.max(other.depth),
            format!("{}*{}", self.label, other.label),
            move |j, x| f(j, x) * g(j, x),
        )
    }

    /// `j -> c_j f_j`.
    pub fn weighted(&self, c: impl Fn(i64) -> f64 + Send + Sync + 'static) -> Self {
        let f = self.f.clone();
        FnSeq::new(self.depth, format!("weighted {}", self.label), move |j, x| c(j) * f(j, x))
    }

    /// `b_j - b_{j+1} o T_j`.
    pub fn coboundary(b: &FnSeq) -> Self {
        let f = b.f.clone();
        FnSeq::new(b.depth + 1, format!("cob({})", b.label), move |j, x| f(j, x) - f(j + 1, &x[1..]))
    }

    /// Parses a config literal: a table `{"01": 0.3, ...}`, `"first_symbol"`,
    /// `"indicator:<word>"`, `"linear:<c0>,<c1>,..."`, `"const:<c>"`.
    pub fn parse(value: &serde_json::Value) -> Result<Self> {
        let bad = |m: String| Error::Config { path: "observable".into(), message: m };
        match value {
            serde_json::Value::Object(map) => {
                let mut entries = HashMap::new();
                for (k, v) in map {
                    let w = Word::parse(0, k).map_err(|e| bad(e.to_string()))?;
                    let x = v.as_f64().ok_or_else(|| bad(format!("non-numeric value for '{k}'")))?;
                    entries.insert(w.symbols, x);
                }
                FnSeq::table(entries).map_err(|e| bad(e.to_string()))
            }
            serde_json::Value::Number(n) => Ok(FnSeq::constant(n.as_f64().unwrap_or(0.0))),
            serde_json::Value::String(s) => {
                let s = s.trim();
                if s == "first_symbol" {
                    return Ok(FnSeq::first_symbol());
                }
                if let Some(w) = s.strip_prefix("indicator:") {
                    let w = Word::parse(0, w).map_err(|e| bad(e.to_string()))?;
                    return Ok(FnSeq::indicator(w.symbols));
                }
                if let Some(c) = s.strip_prefix("linear:") {
                    let coeffs = c
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| bad(format!("bad coefficient list '{c}': {e}")))?;
                    if coeffs.is_empty() {
                        return Err(bad("empty coefficient list".into()));
                    }
                    return Ok(FnSeq::linear(coeffs));
                }
                if let Some(c) = s.strip_prefix("const:") {
                    let c: f64 = c.parse().map_err(|_| bad(format!("bad constant '{c}'")))?;
                    return Ok(FnSeq::constant(c));
                }
                Err(bad(format!("unknown function literal '{s}'")))
            }
            _ => Err(bad("function literal must be a table or a generator name".into())),
        }
    }
}
