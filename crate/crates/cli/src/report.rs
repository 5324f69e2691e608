//! Report types and their CSV / JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use quantpol::bounds::SystemConstants;
use quantpol::measures::GeometricFit;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Bumped whenever a CSV column or JSON field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const PASS: &str = "PASS";
pub const FAIL: &str = "FAIL";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    /// Resolved config, every default filled in.
    pub config: ExperimentConfig,
    /// Derived run parameters (tolerance, horizons, slope window, ...).
    pub resolved: BTreeMap<String, f64>,
}

impl Metadata {
    pub fn new(config: &ExperimentConfig, config_text: &str) -> Self {
        Self {
            config_sha256: config_hash(config_text),
            seed: config.seeds.root,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            resolved: BTreeMap::new(),
        }
    }
}

pub fn config_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Named pass/fail outcome of a whole-report check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn verdict(pass: bool) -> String {
    if pass { PASS } else { FAIL }.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Common interface of everything the CLI can print or write.
pub trait Report: Serialize {
    fn command(&self) -> &str;
    fn header(&self) -> &'static [&'static str];
    fn records(&self) -> Vec<Vec<String>>;
    fn passed(&self) -> bool;
    fn summary(&self) -> Vec<String>;
}

pub fn render_csv<R: Report>(report: &R) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report.header()).expect("in-memory write");
    for r in report.records() {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn render_json<R: Report>(report: &R) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn render<R: Report>(report: &R, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(report),
        OutputFormat::Json => render_json(report),
    }
}

/// Writes `<command>.csv` and `<command>.json` into `dir`.
pub fn write_report<R: Report>(report: &R, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", report.command()));
    let json_path = dir.join(format!("{}.json", report.command()));
    std::fs::write(&csv_path, render_csv(report))?;
    std::fs::write(&json_path, render_json(report))?;
    Ok(vec![csv_path, json_path])
}

/// One codebook size in a convergence or bounds run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub k: usize,
    /// Levels actually used, `⌊k^{1/d}⌋^d`.
    pub levels: usize,
    pub rate_bits: f64,
    pub radius: f64,
    /// Mean of `cost(π^k) − cost(π)` over paired rollouts.
    pub gap: f64,
    pub gap_ci95: f64,
    pub gap_std_error: f64,
    pub n_rollouts: usize,
    pub horizon: usize,
    pub bias_bound: f64,
    pub upper_bound: Option<f64>,
    pub upper_degenerate: bool,
    pub lower_bound: Option<f64>,
    pub verdict: String,
}

/// Per-rollout costs of `π^k` and `π` for one codebook size.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutDump {
    pub k: usize,
    pub replication: usize,
    pub pairs: Vec<(f64, f64)>,
}

pub fn render_rollouts(dumps: &[RolloutDump]) -> String {
    let mut out = String::from("k,replication,rollout,cost_quantized,cost_policy\n");
    for d in dumps {
        for (i, (q, p)) in d.pairs.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", d.k, d.replication, i, q, p);
        }
    }
    out
}

/// Result of `convergence` and `bounds`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub command: String,
    pub metadata: Metadata,
    pub system: String,
    pub policy: String,
    pub criterion: String,
    pub constants: Option<SystemConstants>,
    pub rows: Vec<GapRow>,
    /// Least-squares slope of `ln|gap|` against `ln k`.
    pub slope: Option<f64>,
    pub slope_points: usize,
    pub slope_window: Option<[f64; 2]>,
    pub slope_note: Option<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
    #[serde(skip)]
    pub rollouts: Vec<RolloutDump>,
}

impl Report for ExperimentReport {
    fn command(&self) -> &str {
        &self.command
    }

    fn header(&self) -> &'static [&'static str] {
        &["k", "rate_bits", "radius", "gap", "gap_ci95", "upper_bound", "lower_bound", "verdict"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    r.rate_bits.to_string(),
                    r.radius.to_string(),
                    r.gap.to_string(),
                    r.gap_ci95.to_string(),
                    opt(r.upper_bound),
                    opt(r.lower_bound),
                    r.verdict.clone(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.pass
    }

    fn summary(&self) -> Vec<String> {
        let mut out = vec![format!("{} | {} | {} | {}", self.command, self.system, self.policy, self.criterion)];
        match (self.slope, &self.slope_note) {
            (Some(s), _) => out.push(format!("slope {s:.4} over {} points", self.slope_points)),
            (None, Some(note)) => out.push(format!("slope: {note}")),
            _ => {}
        }
        for c in &self.checks {
            out.push(format!("{} {}: {}", verdict(c.pass), c.name, c.detail));
        }
        out.push(format!("overall: {}", verdict(self.pass)));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicityRow {
    pub n: usize,
    pub tv: f64,
    pub bound: f64,
    pub noise_floor: f64,
    pub verdict: String,
}

/// Result of `ergodicity`: `TV(λ̂_n, ν̂)` against `Cκⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub schema_version: u32,
    pub command: String,
    pub metadata: Metadata,
    pub c: f64,
    pub kappa: f64,
    pub noise_floor: f64,
    pub fit: Option<GeometricFit>,
    pub rows: Vec<ErgodicityRow>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report for ErgodicityReport {
    fn command(&self) -> &str {
        &self.command
    }

    fn header(&self) -> &'static [&'static str] {
        &["n", "tv", "bound", "noise_floor", "verdict"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.tv.to_string(),
                    r.bound.to_string(),
                    r.noise_floor.to_string(),
                    r.verdict.clone(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.pass
    }

    fn summary(&self) -> Vec<String> {
        let mut out = vec![format!("ergodicity | C = {} | kappa = {} | floor = {:.4}", self.c, self.kappa, self.noise_floor)];
        for c in &self.checks {
            out.push(format!("{} {}: {}", verdict(c.pass), c.name, c.detail));
        }
        out.push(format!("overall: {}", verdict(self.pass)));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvRow {
    pub k: usize,
    pub n: usize,
    pub tv: f64,
    pub bound: f64,
    pub noise_floor: f64,
    pub verdict: String,
}

/// Result of `tvcheck`: marginal TV between `π` and `π^k` against its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvCheckReport {
    pub schema_version: u32,
    pub command: String,
    pub metadata: Metadata,
    pub alpha: f64,
    pub k2: f64,
    pub rows: Vec<TvRow>,
    pub pass: bool,
}

impl Report for TvCheckReport {
    fn command(&self) -> &str {
        &self.command
    }

    fn header(&self) -> &'static [&'static str] {
        &["k", "n", "tv", "bound", "noise_floor", "verdict"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    r.n.to_string(),
                    r.tv.to_string(),
                    r.bound.to_string(),
                    r.noise_floor.to_string(),
                    r.verdict.clone(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.pass
    }

    fn summary(&self) -> Vec<String> {
        let failed = self.rows.iter().filter(|r| r.verdict == FAIL).count();
        vec![
            format!("tvcheck | alpha = {} | K2 = {}", self.alpha, self.k2),
            format!("overall: {} ({failed} of {} rows failed)", verdict(self.pass), self.rows.len()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlbRow {
    pub k: usize,
    pub rate_bits: f64,
    pub per_stage: f64,
    pub discounted: f64,
    pub average: f64,
}

/// Result of `slb`: distortion floors for each codebook size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlbReport {
    pub schema_version: u32,
    pub command: String,
    pub metadata: Metadata,
    pub d: usize,
    pub entropy_bits: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub rows: Vec<SlbRow>,
}

impl Report for SlbReport {
    fn command(&self) -> &str {
        &self.command
    }

    fn header(&self) -> &'static [&'static str] {
        &["k", "rate_bits", "per_stage", "discounted", "average"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    r.rate_bits.to_string(),
                    r.per_stage.to_string(),
                    r.discounted.to_string(),
                    r.average.to_string(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        true
    }

    fn summary(&self) -> Vec<String> {
        vec![format!("slb | d = {} | h = {} bits | L = {}", self.d, self.entropy_bits, self.l)]
    }
}

pub(crate) fn pass_fail(pass: bool) -> String {
    verdict(pass)
}
