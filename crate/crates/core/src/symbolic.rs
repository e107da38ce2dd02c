//! Sequential subshifts of finite type.
//!
//! A system is a chain of alphabets `d_j` and 0/1 adjacency matrices `A^(j)`
//! of shape `d_j x d_{j+1}`, given on a window `[0, N]` and extended to all of
//! `Z` by an [`Extension`] rule. Admissible words of a fixed length at a fixed
//! base index are laid out in lexicographic order; that layout is shared by
//! every table in [`crate::funcspace`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule prescribing `A^(j)` and `d_j` for indices outside the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extension {
    /// Matrix slots wrap modulo `p` (`A^(j) = A^(j mod p)`).
    Periodic(usize),
    /// The boundary matrices repeat.
    Frozen,
}

impl Default for Extension {
    fn default() -> Self {
        Extension::Periodic(1)
    }
}

impl FromStr for Extension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "frozen" {
            return Ok(Extension::Frozen);
        }
        if let Some(p) = s.strip_prefix("periodic:") {
            let p: usize = p
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad period in '{s}'")))?;
            if p == 0 {
                return Err(Error::InvalidArgument("period must be positive".into()));
            }
            return Ok(Extension::Periodic(p));
        }
        if s == "periodic" {
            return Ok(Extension::Periodic(1));
        }
        Err(Error::InvalidArgument(format!("unknown extension rule '{s}'")))
    }
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extension::Periodic(p) => write!(f, "periodic:{p}"),
            Extension::Frozen => write!(f, "frozen"),
        }
    }
}

impl Extension {
    /// Maps an arbitrary index onto one of `len` stored slots.
    pub fn slot(&self, j: i64, len: usize) -> usize {
        let len_i = len as i64;
        if (0..len_i).contains(&j) {
            return j as usize;
        }
        match *self {
            Extension::Periodic(p) => j.rem_euclid(p.min(len) as i64) as usize,
            Extension::Frozen => {
                if j < 0 {
                    0
                } else {
                    len - 1
                }
            }
        }
    }
}

/// Dense 0/1 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Adjacency {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::ShapeMismatch("adjacency matrix with no rows".into()));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch("ragged adjacency matrix".into()));
            }
            for &v in row {
                if v > 1 {
                    return Err(Error::ShapeMismatch(format!("adjacency entry {v} is not 0/1")));
                }
                data.push(v);
            }
        }
        Ok(Adjacency { rows: r, cols: c, data })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Adjacency { rows, cols, data: vec![1; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> bool {
        self.data[a * self.cols + b] != 0
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.cols).map(|c| c.to_vec()).collect()
    }

    /// Boolean product `self * other`.
    pub fn bool_mul(&self, other: &Adjacency) -> Adjacency {
        let mut data = vec![0u8; self.rows * other.cols];
        for i in 0..self.rows {
            for l in 0..self.cols {
                if !self.get(i, l) {
                    continue;
                }
                for k in 0..other.cols {
                    if other.get(l, k) {
                        data[i * other.cols + k] = 1;
                    }
                }
            }
        }
        Adjacency { rows: self.rows, cols: other.cols, data }
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|&v| v == 1)
    }
}

/// The sequential SFT as supplied by the user.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    /// Right end `N` of the window `[0, N]`.
    pub window: i64,
    /// `d_0, ..., d_N`.
    pub alphabet_sizes: Vec<usize>,
    /// `A^(0), ..., A^(N-1)`.
    pub adjacency: Vec<Adjacency>,
    pub extension: Extension,
}

#[derive(Serialize, Deserialize)]
struct SystemSpecJson {
    window: [i64; 2],
    alphabet_sizes: Vec<usize>,
    adjacency: Vec<Vec<Vec<u8>>>,
    #[serde(default = "default_extension")]
    extension: String,
}

fn default_extension() -> String {
    "periodic:1".into()
}

impl SystemSpec {
    /// Constant structure: the same square matrix at every index.
    pub fn homogeneous(adjacency: Adjacency, window: i64) -> Self {
        let d = adjacency.rows();
        SystemSpec {
            window,
            alphabet_sizes: vec![d; window as usize + 1],
            adjacency: vec![adjacency; window as usize],
            extension: Extension::Periodic(1),
        }
    }

    pub fn full_shift(d: usize, window: i64) -> Self {
        Self::homogeneous(Adjacency::full(d, d), window)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SystemSpecJson = serde_json::from_str(text).map_err(|e| Error::Config {
            path: "system".into(),
            message: e.to_string(),
        })?;
        Self::from_value_parts(raw)
    }

    pub fn from_value(value: &serde_json::Value) -> Result<Self> {
        let raw: SystemSpecJson =
            serde_json::from_value(value.clone()).map_err(|e| Error::Config {
                path: "system".into(),
                message: e.to_string(),
            })?;
        Self::from_value_parts(raw)
    }

    fn from_value_parts(raw: SystemSpecJson) -> Result<Self> {
        if raw.window[0] != 0 {
            return Err(Error::Config {
                path: "system.window".into(),
                message: "window must start at 0".into(),
            });
        }
        let adjacency = raw
            .adjacency
            .iter()
            .map(|m| Adjacency::from_rows(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemSpec {
            window: raw.window[1],
            alphabet_sizes: raw.alphabet_sizes,
            adjacency,
            extension: raw.extension.parse()?,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SystemSpecJson {
            window: [0, self.window],
            alphabet_sizes: self.alphabet_sizes.clone(),
            adjacency: self.adjacency.iter().map(|a| a.to_rows()).collect(),
            extension: self.extension.to_string(),
        })
        .expect("spec serializes")
    }
}

/// Size caps applied by [`validate`].
#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub d_max: usize,
    pub max_word_len: usize,
    /// Maximal number of cells `prod d_{j+k}` of a dense word table.
    pub max_table: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { d_max: 16, max_word_len: 24, max_table: 1 << 24 }
    }
}

/// A finite word `s_j ... s_{j+L-1}` anchored at base index `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    pub base: i64,
    pub symbols: Vec<u8>,
}

impl Word {
    pub fn new(base: i64, symbols: Vec<u8>) -> Self {
        Word { base, symbols }
    }

    /// Parses a symbol string such as `"0110"` (digits, then `a-f`).
    pub fn parse(base: i64, s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|c| {
                c.to_digit(16)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad symbol '{c}' in '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Word { base, symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", symbols_to_string(&self.symbols))
    }
}

pub fn symbols_to_string(symbols: &[u8]) -> String {
    symbols
        .iter()
        .map(|&s| std::char::from_digit(s as u32, 16).unwrap_or('?'))
        .collect()
}

/// Admissible words of one length at one base index, in lexicographic order.
///
/// Words are coded in mixed radix with the first symbol most significant, so
/// ascending codes are lexicographic order.
#[derive(Debug)]
pub struct WordSpace {
    key: i64,
    depth: usize,
    radices: Vec<usize>,
    /// `strides[k] = prod_{m > k} radices[m]`.
    strides: Vec<u64>,
    codes: Vec<u32>,
    lookup: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl WordSpace {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Identity of the underlying structure, used to compare spaces.
    pub fn key(&self) -> (i64, usize) {
        (self.key, self.depth)
    }

    #[inline]
    pub fn code(&self, idx: usize) -> u64 {
        self.codes[idx] as u64
    }

    #[inline]
    pub fn index_of_code(&self, code: u64) -> Option<usize> {
        match self.lookup.get(code as usize) {
            Some(&v) if v != NONE => Some(v as usize),
            _ => None,
        }
    }

    pub fn index_of(&self, symbols: &[u8]) -> Option<usize> {
        if symbols.len() != self.depth {
            return None;
        }
        let mut code = 0u64;
        for (k, &s) in symbols.iter().enumerate() {
            if s as usize >= self.radices[k] {
                return None;
            }
            code = code * self.radices[k] as u64 + s as u64;
        }
        self.index_of_code(code)
    }

    pub fn symbols(&self, idx: usize) -> Vec<u8> {
        let code = self.code(idx);
        (0..self.depth)
            .map(|k| ((code / self.strides[k]) % self.radices[k] as u64) as u8)
            .collect()
    }

    #[inline]
    pub fn symbol_at(&self, idx: usize, k: usize) -> usize {
        ((self.code(idx) / self.strides[k]) % self.radices[k] as u64) as usize
    }

    /// Code of the length-`len` prefix of word `idx`.
    #[inline]
    pub fn prefix_code(&self, idx: usize, len: usize) -> u64 {
        if len == 0 {
            return 0;
        }
        self.code(idx) / self.strides[len - 1]
    }

    /// Code of the word with its first symbol removed.
    #[inline]
    pub fn tail_code(&self, idx: usize) -> u64 {
        self.code(idx) % self.strides[0]
    }

    pub fn iter_symbols(&self) -> impl Iterator<Item = Vec<u8>> + '_ {
        (0..self.len()).map(move |i| self.symbols(i))
    }
}

/// Preimage structure of the shift `T_j` between two word spaces: for each
/// word `y` at `j+1` (depth `d_out`) the words `a . y[..d_in-1]` at `j`.
#[derive(Debug)]
pub(crate) struct StepMap {
    offsets: Vec<u32>,
    pre: Vec<u32>,
}

impl StepMap {
    #[inline]
    pub(crate) fn preimages(&self, y: usize) -> &[u32] {
        &self.pre[self.offsets[y] as usize..self.offsets[y + 1] as usize]
    }

    pub(crate) fn out_len(&self) -> usize {
        self.offsets.len() - 1
    }
}

type SpaceCache = HashMap<(i64, usize), Arc<WordSpace>>;
type StepCache = HashMap<(i64, usize, usize), Arc<StepMap>>;

/// A system that passed [`validate`]; all later operations take this type.
#[derive(Debug)]
pub struct ValidatedSystem {
    spec: SystemSpec,
    limits: Limits,
    homogeneous: bool,
    spaces: Mutex<SpaceCache>,
    steps: Mutex<StepCache>,
}

pub type System = Arc<ValidatedSystem>;

/// Checks shapes, row/column positivity and extension junctions.
pub fn validate(spec: SystemSpec) -> Result<System> {
    validate_with(spec, Limits::default())
}

pub fn validate_with(spec: SystemSpec, limits: Limits) -> Result<System> {
    let n = spec.window;
    if n < 1 {
        return Err(Error::ShapeMismatch("window [0, N] needs N >= 1".into()));
    }
    let n_us = n as usize;
    if spec.alphabet_sizes.len() != n_us + 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} alphabet sizes for window [0, {n}]",
            spec.alphabet_sizes.len()
        )));
    }
    if spec.adjacency.len() != n_us {
        return Err(Error::ShapeMismatch(format!(
            "{} adjacency matrices for window [0, {n}]",
            spec.adjacency.len()
        )));
    }
    for (j, &d) in spec.alphabet_sizes.iter().enumerate() {
        if d == 0 || d > limits.d_max {
            return Err(Error::ShapeMismatch(format!(
                "alphabet size d_{j} = {d} outside [1, {}]",
                limits.d_max
            )));
        }
    }
    for (j, a) in spec.adjacency.iter().enumerate() {
        let (dr, dc) = (spec.alphabet_sizes[j], spec.alphabet_sizes[j + 1]);
        if a.rows() != dr || a.cols() != dc {
            return Err(Error::ShapeMismatch(format!(
                "A^({j}) is {}x{}, expected {dr}x{dc}",
                a.rows(),
                a.cols()
            )));
        }
        for r in 0..a.rows() {
            if !(0..a.cols()).any(|c| a.get(r, c)) {
                return Err(Error::DeadSymbol { j: j as i64, kind: "row", symbol: r });
            }
        }
        for c in 0..a.cols() {
            if !(0..a.rows()).any(|r| a.get(r, c)) {
                return Err(Error::DeadSymbol { j: j as i64, kind: "column", symbol: c });
            }
        }
    }
    match spec.extension {
        Extension::Periodic(p) => {
            if p > n_us {
                return Err(Error::ExtensionMismatch(format!("period {p} longer than window {n}")));
            }
            let last = &spec.adjacency[p - 1];
            if last.cols() != spec.adjacency[0].rows() {
                return Err(Error::ExtensionMismatch(format!(
                    "A^({}) has {} columns but A^(0) has {} rows",
                    p - 1,
                    last.cols(),
                    spec.adjacency[0].rows()
                )));
            }
            let wrap = &spec.adjacency[n_us % p];
            if spec.adjacency[n_us - 1].cols() != wrap.rows() {
                return Err(Error::ExtensionMismatch(format!(
                    "A^({}) does not chain into A^({})",
                    n_us - 1,
                    n_us % p
                )));
            }
        }
        Extension::Frozen => {
            let first = &spec.adjacency[0];
            let last = &spec.adjacency[n_us - 1];
            if first.rows() != first.cols() || last.rows() != last.cols() {
                return Err(Error::ExtensionMismatch(
                    "frozen extension needs square boundary matrices".into(),
                ));
            }
        }
    }
    let homogeneous = spec.adjacency.iter().all(|a| *a == spec.adjacency[0]);
    Ok(Arc::new(ValidatedSystem {
        spec,
        limits,
        homogeneous,
        spaces: Mutex::new(HashMap::new()),
        steps: Mutex::new(HashMap::new()),
    }))
}

impl ValidatedSystem {
    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    /// Right end `N` of the window.
    pub fn window(&self) -> i64 {
        self.spec.window
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn extension(&self) -> Extension {
        self.spec.extension
    }

    /// `A^(j)` for any `j`, through the extension rule.
    pub fn adjacency(&self, j: i64) -> &Adjacency {
        let slot = self.spec.extension.slot(j, self.spec.adjacency.len());
        &self.spec.adjacency[slot]
    }

    /// `d_j` for any `j`.
    pub fn alphabet(&self, j: i64) -> usize {
        if (0..=self.spec.window).contains(&j) {
            self.spec.alphabet_sizes[j as usize]
        } else {
            self.adjacency(j).rows()
        }
    }

    #[inline]
    pub fn allowed(&self, j: i64, a: usize, b: usize) -> bool {
        self.adjacency(j).get(a, b)
    }

    pub fn max_alphabet(&self) -> usize {
        self.spec.alphabet_sizes.iter().copied().max().unwrap_or(1)
    }

    pub fn is_admissible(&self, w: &Word) -> bool {
        for (k, &s) in w.symbols.iter().enumerate() {
            if s as usize >= self.alphabet(w.base + k as i64) {
                return false;
            }
        }
        w.symbols
            .windows(2)
            .enumerate()
            .all(|(k, p)| self.allowed(w.base + k as i64, p[0] as usize, p[1] as usize))
    }

    fn structure_key(&self, j: i64) -> i64 {
        if self.homogeneous {
            0
        } else {
            j
        }
    }

    /// Admissible words of length `depth` at base `j`.
    pub fn space(&self, j: i64, depth: usize) -> Result<Arc<WordSpace>> {
        let key = (self.structure_key(j), depth);
        if let Some(s) = self.spaces.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let space = Arc::new(self.build_space(j, depth, key.0)?);
        let mut cache = self.spaces.lock().expect("cache lock");
        Ok(cache.entry(key).or_insert(space).clone())
    }

    fn build_space(&self, j: i64, depth: usize, key: i64) -> Result<WordSpace> {
        if depth == 0 {
            return Err(Error::InvalidArgument("word depth must be at least 1".into()));
        }
        let radices: Vec<usize> = (0..depth).map(|k| self.alphabet(j + k as i64)).collect();
        let size: u128 = radices.iter().map(|&r| r as u128).product();
        if depth > self.limits.max_word_len || size > self.limits.max_table as u128 {
            return Err(Error::DepthOverflow { depth, size });
        }
        let mut strides = vec![1u64; depth];
        for k in (0..depth.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * radices[k + 1] as u64;
        }
        let mut codes: Vec<u32> = (0..radices[0] as u32).collect();
        for k in 1..depth {
            let adj = self.adjacency(j + k as i64 - 1);
            let r = radices[k] as u32;
            let prev_r = radices[k - 1] as u32;
            let mut next = Vec::with_capacity(codes.len() * 2);
            for &c in &codes {
                let last = (c % prev_r) as usize;
                for b in 0..r {
                    if adj.get(last, b as usize) {
                        next.push(c * r + b);
                    }
                }
            }
            codes = next;
        }
        let mut lookup = vec![NONE; size as usize];
        for (i, &c) in codes.iter().enumerate() {
            lookup[c as usize] = i as u32;
        }
        Ok(WordSpace { key, depth, radices, strides, codes, lookup })
    }

    /// Preimage map of `T_j` from depth `d_in` words at `j` to depth `d_out`
    /// words at `j+1`; requires `d_out >= d_in - 1`.
    pub(crate) fn step(&self, j: i64, d_in: usize, d_out: usize) -> Result<Arc<StepMap>> {
        debug_assert!(d_out + 1 >= d_in);
        let key = (self.structure_key(j), d_in, d_out);
        if let Some(s) = self.steps.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let src = self.space(j, d_in)?;
        let dst = self.space(j + 1, d_out)?;
        let adj = self.adjacency(j);
        let d = self.alphabet(j) as u64;
        let lead = if d_in >= 2 { src.strides[0] } else { 1 };
        let mut offsets = Vec::with_capacity(dst.len() + 1);
        let mut pre = Vec::with_capacity(dst.len() * 2);
        offsets.push(0u32);
        for y in 0..dst.len() {
            let y0 = dst.symbol_at(y, 0);
            let p = dst.prefix_code(y, d_in - 1);
            for a in 0..d {
                if adj.get(a as usize, y0) {
                    let idx = src
                        .index_of_code(a * lead + p)
                        .expect("extension of an admissible word by an allowed symbol");
                    pre.push(idx as u32);
                }
            }
            offsets.push(pre.len() as u32);
        }
        let map = Arc::new(StepMap { offsets, pre });
        let mut cache = self.steps.lock().expect("cache lock");
        Ok(cache.entry(key).or_insert(map).clone())
    }
}

/// Smallest `M >= 0` with every product `A^(j) ... A^(j+M)` entrywise positive.
///
/// Indices `j` in `[-(m_cap+1), N-1]` are checked, so the certificate covers the
/// extended system on both sides of the window.
pub fn aperiodicity_window(sys: &ValidatedSystem, m_cap: usize) -> Result<usize> {
    let mut m_max = 0usize;
    let lo = -(m_cap as i64) - 1;
    // Structure repeats under the extension, so a homogeneous system needs one index.
    let hi = if sys.is_homogeneous() { lo + 1 } else { sys.window() };
    for j in lo..hi {
        let mut prod = sys.adjacency(j).clone();
        let mut m = 0usize;
        while !prod.is_positive() {
            m += 1;
            if m > m_cap {
                return Err(Error::NotMixing { m_cap });
            }
            prod = prod.bool_mul(sys.adjacency(j + m as i64));
        }
        m_max = m_max.max(m);
    }
    Ok(m_max)
}

/// All admissible words of length `len` at `j`, lexicographic.
pub fn enumerate_words(sys: &ValidatedSystem, j: i64, len: usize) -> Result<Vec<Word>> {
    if len == 0 {
        return Ok(vec![Word::new(j, vec![])]);
    }
    if len > sys.limits().max_word_len {
        return Err(Error::DepthOverflow { depth: len, size: 0 });
    }
    let mut words: Vec<Vec<u8>> = (0..sys.alphabet(j) as u8).map(|s| vec![s]).collect();
    for k in 1..len {
        let idx = j + k as i64;
        let d = sys.alphabet(idx);
        let mut next = Vec::with_capacity(words.len() * 2);
        for w in &words {
            let last = *w.last().expect("nonempty") as usize;
            for b in 0..d {
                if sys.allowed(idx - 1, last, b) {
                    let mut v = w.clone();
                    v.push(b as u8);
                    next.push(v);
                }
            }
        }
        words = next;
    }
    Ok(words.into_iter().map(|s| Word::new(j, s)).collect())
}

/// Shift metric `2^{-k}`, `k` the first disagreement; `0` for equal words.
pub fn metric(x: &Word, y: &Word) -> Result<f64> {
    if x.base != y.base || x.len() != y.len() {
        return Err(Error::BaseMismatch);
    }
    Ok(match x.symbols.iter().zip(&y.symbols).position(|(a, b)| a != b) {
        Some(k) => 2f64.powi(-(k as i32)),
        None => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden(window: i64) -> System {
        let a = Adjacency::from_rows(&[vec![1, 1], vec![1, 0]]).unwrap();
        validate(SystemSpec::homogeneous(a, window)).unwrap()
    }

    #[test]
    fn full_shift_is_valid() {
        let sys = validate(SystemSpec::full_shift(2, 8)).unwrap();
        assert!(sys.is_homogeneous());
        assert_eq!(sys.alphabet(-5), 2);
    }

    #[test]
    fn zero_row_is_dead_symbol() {
        let mut spec = SystemSpec::full_shift(2, 3);
        spec.adjacency[0] = Adjacency::from_rows(&[vec![0, 0], vec![1, 1]]).unwrap();
        assert_eq!(
            validate(spec).unwrap_err(),
            Error::DeadSymbol { j: 0, kind: "row", symbol: 0 }
        );
    }

    #[test]
    fn zero_column_is_dead_symbol() {
        let mut spec = SystemSpec::full_shift(2, 3);
        spec.adjacency[2] = Adjacency::from_rows(&[vec![1, 0], vec![1, 0]]).unwrap();
        assert!(matches!(
            validate(spec).unwrap_err(),
            Error::DeadSymbol { j: 2, kind: "column", .. }
        ));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut spec = SystemSpec::full_shift(2, 3);
        spec.alphabet_sizes[1] = 3;
        assert!(matches!(validate(spec).unwrap_err(), Error::ShapeMismatch(_)));
    }

    #[test]
    fn golden_mean_is_valid() {
        golden(4);
    }

    #[test]
    fn mixing_windows() {
        let full = validate(SystemSpec::full_shift(2, 4)).unwrap();
        assert_eq!(aperiodicity_window(&full, 64).unwrap(), 0);
        assert_eq!(aperiodicity_window(&golden(4), 64).unwrap(), 1);
        let perm = Adjacency::from_rows(&[vec![0, 1], vec![1, 0]]).unwrap();
        let sys = validate(SystemSpec::homogeneous(perm, 4)).unwrap();
        assert_eq!(aperiodicity_window(&sys, 64).unwrap_err(), Error::NotMixing { m_cap: 64 });
    }

    #[test]
    fn golden_words_of_length_three() {
        let words = enumerate_words(&golden(6), 0, 3).unwrap();
        let s: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        assert_eq!(s, vec!["000", "001", "010", "100", "101"]);
    }

    #[test]
    fn word_counts_small_cases() {
        let full = validate(SystemSpec::full_shift(2, 4)).unwrap();
        assert_eq!(enumerate_words(&full, 0, 2).unwrap().len(), 4);
        assert_eq!(enumerate_words(&full, 3, 1).unwrap().len(), 2);
    }

    #[test]
    fn space_matches_enumeration() {
        let sys = golden(6);
        let space = sys.space(2, 4).unwrap();
        let words = enumerate_words(&sys, 2, 4).unwrap();
        assert_eq!(space.len(), words.len());
        for (i, w) in words.iter().enumerate() {
            assert_eq!(space.symbols(i), w.symbols);
            assert_eq!(space.index_of(&w.symbols), Some(i));
        }
        assert_eq!(space.index_of(&[1, 1, 0, 0]), None);
    }

    #[test]
    fn metric_values() {
        let x = Word::parse(0, "0101").unwrap();
        let y = Word::parse(0, "0100").unwrap();
        let z = Word::parse(0, "1101").unwrap();
        assert_eq!(metric(&x, &x).unwrap(), 0.0);
        assert_eq!(metric(&x, &z).unwrap(), 1.0);
        assert_eq!(metric(&x, &y).unwrap(), 0.125);
        assert_eq!(metric(&x, &Word::parse(1, "0101").unwrap()), Err(Error::BaseMismatch));
    }

    #[test]
    fn extension_rules() {
        assert_eq!(Extension::Periodic(2).slot(-1, 4), 1);
        assert_eq!(Extension::Periodic(2).slot(5, 4), 1);
        assert_eq!(Extension::Frozen.slot(-3, 4), 0);
        assert_eq!(Extension::Frozen.slot(9, 4), 3);
        assert_eq!("periodic:3".parse::<Extension>().unwrap(), Extension::Periodic(3));
        assert!("sideways".parse::<Extension>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"window":[0,2],"alphabet_sizes":[2,2,2],
            "adjacency":[[[1,1],[1,0]],[[1,1],[1,0]]],"extension":"periodic:1"}"#;
        let spec = SystemSpec::from_json(text).unwrap();
        assert_eq!(spec.window, 2);
        let again = SystemSpec::from_value(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }
}
