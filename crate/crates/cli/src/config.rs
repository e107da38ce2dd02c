use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Rpf,
    Decompose,
    Scan,
    Distribution,
    Verify,
    Sample,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: String,
    #[serde(default)]
    pub observable: Option<Value>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "default_window")]
    pub window: i64,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub rpf: RpfConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub distribution: DistributionConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub expect: Expectations,
}

fn one() -> f64 {
    1.0
}

fn default_window() -> i64 {
    300
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpfConfig {
    pub tol: f64,
    pub k_cap: usize,
}

impl Default for RpfConfig {
    fn default() -> Self {
        RpfConfig { tol: 1e-10, k_cap: 200 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub delta: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub n_max: usize,
    pub grid: f64,
    pub threshold: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { delta: 0.1, t_max: 14.0, n_max: 256, grid: 0.005, threshold: 0.2, probes: 8, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionConfig {
    pub n: usize,
    /// Number of points of the characteristic-function curve on `[-pi, pi]`.
    pub t_points: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        DistributionConfig { n: 64, t_points: 257, t0: 8.0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub n_grid: Vec<usize>,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub accept: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { n_grid: vec![16, 64, 256], t0: 8.0, accept: 0.02 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub count: usize,
    pub seed: u64,
    pub write_paths: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { n: 64, count: 100_000, seed: 7, write_paths: false }
    }
}

/// Assertions checked after the stages ran; each one decides the exit code.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Expectations {
    /// `Lattice`, `IrreducibleNonlattice`, `VarianceBounded` or `Indeterminate`.
    pub classification: Option<String>,
    pub span: Option<f64>,
    pub span_tol: Option<f64>,
    /// `Growing`, `Bounded` or `Indeterminate`.
    pub variance: Option<String>,
    /// Trend name to accepted verdicts, e.g. `"lattice": ["Decreasing", "Small"]`.
    pub trends: BTreeMap<String, Vec<String>>,
    pub sample_pass: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.into() }
}

/// Sets `key` (dotted path) to `value`, parsed as JSON when possible.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| invalid(spec, "override must be key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cur.as_object_mut().ok_or_else(|| invalid(key, format!("'{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(invalid(key, "empty override key"))
}

/// Reads the document, applies overrides and checks it against the schema.
pub fn load(path: &Path, overrides: &[String]) -> Result<(Config, Value, Vec<u8>), ConfigError> {
    let p = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| invalid(&p, e.to_string()))?;
    let mut doc: Value = serde_json::from_slice(&bytes).map_err(|e| invalid(&p, e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: Config = serde_json::from_value(doc.clone()).map_err(|e| invalid(&p, e.to_string()))?;
    if cfg.stages.is_empty() {
        return Err(invalid(format!("{p}: stages"), "no stages requested"));
    }
    if cfg.window < 2 {
        return Err(invalid(format!("{p}: window"), "window must be at least 2"));
    }
    Ok((cfg, doc, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let mut doc = serde_json::json!({"model": "coin", "scan": {"n_max": 64}});
        apply_override(&mut doc, "scan.n_max=128").unwrap();
        apply_override(&mut doc, "model=golden_parry").unwrap();
        apply_override(&mut doc, "verify.n_grid=[8,16]").unwrap();
        assert_eq!(doc["scan"]["n_max"], 128);
        assert_eq!(doc["model"], "golden_parry");
        assert_eq!(doc["verify"]["n_grid"][1], 16);
        assert!(apply_override(&mut doc, "novalue").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = serde_json::json!({"model": "coin", "stages": ["rpf"], "bogus": 1});
        assert!(serde_json::from_value::<Config>(doc).is_err());
        let doc = serde_json::json!({"model": "coin", "stages": ["rpf"], "scan": {"T": 6.0}});
        let cfg: Config = serde_json::from_value(doc).unwrap();
        assert_eq!(cfg.scan.t_max, 6.0);
        assert_eq!(cfg.scan.n_max, 256);
    }
}
