//! Config-driven batch runs over the model zoo.

mod config;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use seqgibbs::decomp::{center, classify_variance, martingale_coboundary};
use seqgibbs::dist::{char_fn_curve, lattice_pmf, smoothed_density};
use seqgibbs::models::{self, Model};
use seqgibbs::sampler::{empirical_check, exact_refs, forward_kernels, sample_paths};
use seqgibbs::spectral::{resonance_scan, Classification, NormOptions, ScanOptions};
use seqgibbs::symbolic::aperiodicity_window;
use seqgibbs::verify::{llt_report, nonlattice_grid, ReportOptions};
use seqgibbs::{Error, FnSeq, RpfData, RpfOptions};

use config::{Config, ConfigError, Stage};

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "seqgibbs", version, about = "Sequential Gibbs measure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stages of a JSON config and write reports to the output directory.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; affects wall time only.
        #[arg(long)]
        threads: Option<usize>,
        /// `key=value` with a dotted key, e.g. `scan.n_max=128`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Error },
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RunError {
    fn exit_code(&self) -> u8 {
        match self {
            RunError::Stage { source: Error::NoConvergence { .. } | Error::NotMixing { .. }, .. } => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Validate => "validate",
        Stage::Rpf => "rpf",
        Stage::Decompose => "decompose",
        Stage::Scan => "scan",
        Stage::Distribution => "distribution",
        Stage::Verify => "verify",
        Stage::Sample => "sample",
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

struct Assertion {
    name: String,
    pass: bool,
    detail: String,
}

struct Run {
    cfg: Config,
    out: PathBuf,
    model: Model,
    rpf: Option<RpfData>,
    span: Option<f64>,
    files: Vec<(String, String)>,
    assertions: Vec<Assertion>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), RunError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| RunError::Io { path: path.display().to_string(), source: e })?;
        self.files.push((name.to_string(), sha256_hex(contents)));
        Ok(())
    }

    fn write_json(&mut self, name: &str, v: &Value) -> Result<(), RunError> {
        let mut s = serde_json::to_string_pretty(v).expect("serializable");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), pass, detail: detail.into() });
    }

    fn solve(&mut self, stage: &'static str) -> Result<RpfData, RunError> {
        if let Some(r) = &self.rpf {
            return Ok(r.clone());
        }
        let opts = RpfOptions { tol: self.cfg.rpf.tol, k_cap: self.cfg.rpf.k_cap, ..self.model.rpf_options() };
        let r = seqgibbs::rpf_solve(&self.model.system, &self.model.potential, &opts)
            .map_err(|source| RunError::Stage { stage, source })?;
        self.rpf = Some(r.clone());
        Ok(r)
    }

    fn stage(&mut self, stage: Stage) -> Result<(), RunError> {
        let name = stage_name(stage);
        let err = |source: Error| RunError::Stage { stage: name, source };
        match stage {
            Stage::Validate => {
                let m = aperiodicity_window(&self.model.system, 64).map_err(err)?;
                let v = json!({
                    "system": self.model.system.spec().to_json(),
                    "aperiodicity_window": m,
                    "model": self.model.name,
                    "observable": self.model.observable.label(),
                    "notes": self.model.notes,
                });
                self.write_json("system.json", &v)?;
            }
            Stage::Rpf => {
                let rpf = self.solve(name)?;
                self.write_json("rpf.json", &rpf.to_json())?;
            }
            Stage::Decompose => {
                let rpf = self.solve(name)?;
                let q0 = models::unit_density(&rpf).map_err(err)?;
                let len = (rpf.range().1 - rpf.range().0 - 1).max(1) as usize;
                let fb = center(&rpf, &self.model.observable, rpf.range().0, len).map_err(err)?;
                let dec = martingale_coboundary(&rpf, &fb, self.cfg.alpha, 1.0).map_err(err)?;
                self.write_json("decomposition.json", &dec.to_json())?;
                let grid: Vec<usize> = self.cfg.verify.n_grid.iter().copied().filter(|&n| n <= len).collect();
                let grid = if grid.is_empty() { vec![len] } else { grid };
                let ev = classify_variance(&rpf, &self.model.observable, &q0, &grid).map_err(err)?;
                let class = format!("{:?}", ev.class);
                self.write_json("variance.json", &serde_json::to_value(&ev).expect("serializable"))?;
                if let Some(want) = self.cfg.expect.variance.clone() {
                    self.check("variance", class == want, format!("classified {class}, expected {want}"));
                }
            }
            Stage::Scan => {
                let rpf = self.solve(name)?;
                let q0 = models::unit_density(&rpf).map_err(err)?;
                let s = &self.cfg.scan;
                let opts = ScanOptions {
                    delta: s.delta,
                    t_max: s.t_max,
                    n_max: s.n_max,
                    threshold: s.threshold,
                    grid: s.grid,
                    n_grid: None,
                    norm: NormOptions { alpha: self.cfg.alpha, c1: 1.0, probe_count: s.probes, seed: s.seed },
                };
                let report = resonance_scan(&rpf, &self.model.observable, &q0, &opts).map_err(err)?;
                self.write("lattice.csv", report.to_csv().as_bytes())?;
                self.write_json("lattice.json", &report.summary_json())?;
                self.span = report.span_a;
                let got = match report.classification {
                    Classification::Lattice(_) => "Lattice",
                    Classification::IrreducibleNonlattice => "IrreducibleNonlattice",
                    Classification::VarianceBounded => "VarianceBounded",
                    Classification::Indeterminate => "Indeterminate",
                };
                if let Some(want) = self.cfg.expect.classification.clone() {
                    self.check("classification", got == want, format!("{:?}, expected {want}", report.classification));
                }
                if let Some(want) = self.cfg.expect.span {
                    let tol = self.cfg.expect.span_tol.unwrap_or(1e-3);
                    let pass = report.span_a.is_some_and(|a| (a - want).abs() <= tol);
                    self.check("span", pass, format!("span {:?}, expected {want} +- {tol}", report.span_a));
                }
            }
            Stage::Distribution => {
                let rpf = self.solve(name)?;
                let q0 = models::unit_density(&rpf).map_err(err)?;
                let d = &self.cfg.distribution;
                let (n, t0) = (d.n, d.t0);
                let k = d.t_points.max(2);
                let ts: Vec<f64> = (0..k).map(|i| -PI + 2.0 * PI * i as f64 / (k - 1) as f64).collect();
                let curve = char_fn_curve(&rpf, &self.model.observable, &q0, n, &ts).map_err(err)?;
                self.write("charfn.csv", curve.to_csv().as_bytes())?;
                match lattice_pmf(&rpf, &self.model.observable, &q0, n) {
                    Ok(pmf) => self.write("pmf.csv", pmf.to_csv().as_bytes())?,
                    Err(Error::NotIntegerValued { .. }) | Err(Error::RangeOverflow { .. }) => {
                        let m = seqgibbs::decomp::sum_moments(&rpf, &self.model.observable, &q0, n).map_err(err)?;
                        let grid = nonlattice_grid(m.mean, m.sigma());
                        let sd = smoothed_density(&rpf, &self.model.observable, &q0, n, t0, &grid, None).map_err(err)?;
                        self.write("smoothed_density.csv", sd.to_csv().as_bytes())?;
                    }
                    Err(e) => return Err(err(e)),
                }
            }
            Stage::Verify => {
                let rpf = self.solve(name)?;
                let q0 = models::unit_density(&rpf).map_err(err)?;
                let v = &self.cfg.verify;
                let opts = ReportOptions { t0: vec![v.t0], span: self.span, accept: v.accept };
                let n_grid = v.n_grid.clone();
                let report = llt_report(
                    &self.model.name,
                    &rpf,
                    &self.model.observable,
                    &q0,
                    &n_grid,
                    self.model.decomposition.as_ref(),
                    &opts,
                )
                .map_err(err)?;
                self.write("llt.csv", report.to_csv().as_bytes())?;
                self.write_json("llt.json", &report.to_json())?;
                for (key, accepted) in self.cfg.expect.trends.clone() {
                    let got = report.trends.get(&key).map(|t| format!("{t:?}"));
                    let pass = got.as_ref().is_some_and(|g| accepted.contains(g));
                    self.check(format!("trend {key}"), pass, format!("{got:?}, accepted {accepted:?}"));
                }
            }
            Stage::Sample => {
                let rpf = self.solve(name)?;
                let s = self.cfg.sample.clone();
                let kernels = forward_kernels(&rpf).map_err(err)?;
                // Paths cover the symbols S_n reads: n + depth - 1 of them.
                let len = s.n + self.model.observable.depth() - 1;
                let samples = sample_paths(&kernels, len, s.count, s.seed).map_err(err)?;
                if s.write_paths {
                    self.write("samples.txt", samples.to_text().as_bytes())?;
                }
                let refs = exact_refs(&rpf, &self.model.observable, s.n, &[PI, 1.0, 0.5]).map_err(err)?;
                let report = empirical_check(&samples, &self.model.observable, &refs).map_err(err)?;
                self.write("sample_check.csv", report.to_csv().as_bytes())?;
                self.write_json("sample_check.json", &report.to_json())?;
                if self.cfg.expect.sample_pass {
                    let fails: Vec<String> = report.failures().iter().map(|r| r.metric.clone()).collect();
                    self.check("sample", fails.is_empty(), format!("failed rows {fails:?}"));
                }
            }
        }
        Ok(())
    }
}

fn build_model(cfg: &Config) -> Result<Model, ConfigError> {
    let bad = |e: Error| ConfigError::Invalid { path: "model".into(), message: e.to_string() };
    let mut model = models::zoo(&cfg.model, cfg.window).map_err(bad)?;
    if let Some(obs) = &cfg.observable {
        let f = FnSeq::parse(obs).map_err(|e| ConfigError::Invalid { path: "observable".into(), message: e.to_string() })?;
        model = model.with_observable(f);
    }
    Ok(model)
}

fn run(config_path: &Path, out: &Path, threads: Option<usize>, overrides: &[String]) -> Result<u8, RunError> {
    let (cfg, effective, raw) = config::load(config_path, overrides)?;
    if let Some(k) = threads {
        // A second call in the same process keeps the first pool; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let model = build_model(&cfg)?;
    fs::create_dir_all(out).map_err(|e| RunError::Io { path: out.display().to_string(), source: e })?;

    let mut stages = cfg.stages.clone();
    stages.sort();
    stages.dedup();
    let mut run = Run { cfg, out: out.to_path_buf(), model, rpf: None, span: None, files: Vec::new(), assertions: Vec::new() };
    let mut timings = BTreeMap::new();
    let mut stage_files = BTreeMap::new();
    let mut failure = None;
    for s in stages {
        let start = Instant::now();
        let before = run.files.len();
        let result = run.stage(s);
        timings.insert(stage_name(s), start.elapsed().as_secs_f64());
        stage_files.insert(stage_name(s), run.files[before..].iter().map(|f| f.0.clone()).collect::<Vec<_>>());
        if let Err(e) = result {
            failure = Some(e);
            break;
        }
    }

    let assertions: Vec<Value> = run
        .assertions
        .iter()
        .map(|a| json!({"name": a.name, "pass": a.pass, "detail": a.detail}))
        .collect();
    let all_pass = run.assertions.iter().all(|a| a.pass);
    let code = match &failure {
        Some(e) => e.exit_code(),
        None if all_pass => 0,
        None => EXIT_ASSERTION,
    };
    let manifest = json!({
        "tool": "seqgibbs",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_path.display().to_string(),
        "config_sha256": sha256_hex(&raw),
        "effective_config": effective,
        "overrides": overrides,
        "threads": threads,
        "model": run.model.name,
        "seeds": {"sample": run.cfg.sample.seed, "probes": run.cfg.scan.seed},
        "timings_s": timings,
        "stage_files": stage_files,
        "files": run.files.iter().map(|(n, h)| json!({"name": n, "sha256": h})).collect::<Vec<_>>(),
        "assertions": assertions,
        "error": failure.as_ref().map(|e| e.to_string()),
        "exit_code": code,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    let path = out.join("manifest.json");
    fs::write(&path, text).map_err(|e| RunError::Io { path: path.display().to_string(), source: e })?;

    for a in &run.assertions {
        println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(code),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads, overrides } => match run(&config, &out, threads, &overrides) {
            Ok(code) => ExitCode::from(code),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}
