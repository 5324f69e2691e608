//! Experiment configuration files.
//!
//! Configs are TOML. Keys are checked against a fixed schema before
//! deserialization so typos get a "did you mean" hint instead of being
//! silently ignored. Every default is filled in by [`parse_config_str`] and the
//! resolved config is echoed into report metadata.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYSTEM_KINDS: &[&str] = &["linear_tracking", "bounded_drift", "additive_noise"];
pub const POLICY_KINDS: &[&str] = &["identity", "clamped_identity", "linear_gain", "constant"];
pub const BUILTIN_POLICIES: &[&str] = &["identity", "clamped_identity"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{key}` in [{table}]{}", suggestion.as_ref().map(|s| format!(", did you mean `{s}`?")).unwrap_or_default())]
    UnknownKey {
        table: String,
        key: String,
        suggestion: Option<String>,
    },
    #[error("unknown system `{0}`; available systems: {list}", list = SYSTEM_KINDS.join(", "))]
    UnknownSystem(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Scalar times identity, or explicit rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, dim: usize) -> Result<nalgebra::DMatrix<f64>, ConfigError> {
        match self {
            MatrixSpec::Scalar(s) => Ok(nalgebra::DMatrix::identity(dim, dim) * *s),
            MatrixSpec::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(ConfigError::Invalid(format!("matrix must be {dim}x{dim}")));
                }
                Ok(nalgebra::DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

/// Either `half_width` (symmetric) or explicit `lo`/`hi` corners.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
}

impl BoxSpec {
    pub fn symmetric(half_width: f64) -> Self {
        Self {
            half_width: Some(half_width),
            lo: None,
            hi: None,
        }
    }

    pub fn corners(&self, dim: usize, what: &str) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        match (self.half_width, &self.lo, &self.hi) {
            (Some(w), None, None) => Ok((vec![-w; dim], vec![w; dim])),
            (None, Some(lo), Some(hi)) => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(ConfigError::Invalid(format!("{what} corners must have dimension {dim}")));
                }
                Ok((lo.clone(), hi.clone()))
            }
            _ => Err(ConfigError::Invalid(format!("{what} needs either half_width or both lo and hi"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `min(‖x − a‖, cap)`
    Tracking,
    /// `min(‖x‖, cap)`
    StateNorm,
    /// `1{x₁ > 0}`
    Indicator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// `F ≡ 0`
    Zero,
    /// `L·tanh(x)`
    Tanh,
    /// `L·tanh(x + a₁)`
    TanhAction,
    /// `clamp(a₁, −L, L)`
    ClipAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    LinearTracking {
        #[serde(default = "one")]
        dim: usize,
        a: MatrixSpec,
        b: MatrixSpec,
        sigma: f64,
        #[serde(default = "tracking")]
        cost: CostKind,
        cost_cap: Option<f64>,
        #[serde(default = "default_discount")]
        discount: f64,
        action_box: BoxSpec,
    },
    BoundedDrift {
        drift_bound: f64,
        sigma: f64,
        drift: DriftKind,
        #[serde(default = "tracking")]
        cost: CostKind,
        cost_cap: Option<f64>,
        #[serde(default = "default_discount")]
        discount: f64,
        action_box: BoxSpec,
    },
    AdditiveNoise {
        #[serde(default = "one")]
        dim: usize,
        a: MatrixSpec,
        b: MatrixSpec,
        noise: NoiseKind,
        noise_scale: f64,
        #[serde(default = "tracking")]
        cost: CostKind,
        cost_cap: Option<f64>,
        #[serde(default = "default_discount")]
        discount: f64,
        action_box: BoxSpec,
    },
}

impl SystemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            SystemConfig::LinearTracking { .. } => "linear_tracking",
            SystemConfig::BoundedDrift { .. } => "bounded_drift",
            SystemConfig::AdditiveNoise { .. } => "additive_noise",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemConfig::LinearTracking { dim, .. } | SystemConfig::AdditiveNoise { dim, .. } => *dim,
            SystemConfig::BoundedDrift { .. } => 1,
        }
    }

    pub fn discount(&self) -> f64 {
        match self {
            SystemConfig::LinearTracking { discount, .. }
            | SystemConfig::BoundedDrift { discount, .. }
            | SystemConfig::AdditiveNoise { discount, .. } => *discount,
        }
    }

    pub fn cost(&self) -> CostKind {
        match self {
            SystemConfig::LinearTracking { cost, .. }
            | SystemConfig::BoundedDrift { cost, .. }
            | SystemConfig::AdditiveNoise { cost, .. } => *cost,
        }
    }

    pub fn action_box(&self) -> &BoxSpec {
        match self {
            SystemConfig::LinearTracking { action_box, .. }
            | SystemConfig::BoundedDrift { action_box, .. }
            | SystemConfig::AdditiveNoise { action_box, .. } => action_box,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    Identity,
    ClampedIdentity,
    LinearGain { gain: f64 },
    Constant { value: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub weights: Vec<f64>,
    pub components: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyChoice {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Discounted,
    Average,
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    #[serde(default = "default_rollouts")]
    pub n_rollouts: usize,
    /// Defaults to `10⁻³·M/(1−β)`.
    pub tol: Option<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_burn_in")]
    pub n_steps: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Start of average-cost chains; defaults to the origin.
    pub x0: Option<Vec<f64>>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_rollouts: default_rollouts(),
            tol: None,
            burn_in: default_burn_in(),
            n_steps: default_burn_in(),
            horizon: default_horizon(),
            x0: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedConfig {
    #[serde(default)]
    pub root: u64,
    #[serde(default = "one")]
    pub replications: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { root: 0, replications: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    #[serde(flatten)]
    pub region: BoxSpec,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            region: BoxSpec::symmetric(10.0),
            bins: default_bins(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            n_list: default_n_list(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityConfig {
    #[serde(default = "default_ergodic_x0")]
    pub x0: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_samples")]
    pub invariant_samples: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Allowed excess of the fitted rate over the closed-form `κ`.
    #[serde(default = "default_kappa_slack")]
    pub kappa_slack: f64,
}

impl Default for ErgodicityConfig {
    fn default() -> Self {
        Self {
            x0: default_ergodic_x0(),
            n_max: default_n_max(),
            samples: default_samples(),
            burn_in: default_burn_in(),
            invariant_samples: default_samples(),
            thinning: default_thinning(),
            kappa_slack: default_kappa_slack(),
        }
    }
}

/// Explicit values replacing derived constants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantOverrides {
    pub alpha: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub m: Option<f64>,
    pub c: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Defaults to `−1/d ± 0.3/d`.
    pub slope_window: Option<[f64; 2]>,
    #[serde(default = "yes")]
    pub check_slope: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            slope_window: None,
            check_slope: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub policies: BTreeMap<String, PolicyConfig>,
    pub policy: PolicyChoice,
    pub codebook_schedule: Vec<usize>,
    #[serde(default = "discounted")]
    pub criterion: CriterionKind,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub binning: BinningConfig,
    #[serde(default)]
    pub tv: TvConfig,
    #[serde(default)]
    pub ergodicity: ErgodicityConfig,
    #[serde(default)]
    pub constants: ConstantOverrides,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn tracking() -> CostKind {
    CostKind::Tracking
}
fn discounted() -> CriterionKind {
    CriterionKind::Discounted
}
fn default_discount() -> f64 {
    0.9
}
fn default_rollouts() -> usize {
    10_000
}
fn default_burn_in() -> usize {
    1_000
}
fn default_horizon() -> usize {
    100
}
fn default_bins() -> usize {
    50
}
fn default_n_list() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_samples() -> usize {
    100_000
}
fn default_ergodic_x0() -> f64 {
    10.0
}
fn default_n_max() -> usize {
    40
}
fn default_thinning() -> usize {
    10
}
fn default_kappa_slack() -> f64 {
    0.05
}

impl ExperimentConfig {
    /// Default tracking/state-norm cap `20σ√d` (noise scale for non-Gaussian noise).
    pub fn cost_cap(&self) -> f64 {
        let d = self.system.dim() as f64;
        match &self.system {
            SystemConfig::LinearTracking { sigma, cost_cap, .. } | SystemConfig::BoundedDrift { sigma, cost_cap, .. } => {
                cost_cap.unwrap_or(20.0 * sigma * d.sqrt())
            }
            SystemConfig::AdditiveNoise {
                noise_scale, cost_cap, ..
            } => cost_cap.unwrap_or(20.0 * noise_scale * d.sqrt()),
        }
    }

    pub fn slope_window(&self) -> [f64; 2] {
        self.report.slope_window.unwrap_or_else(|| {
            let d = self.system.dim() as f64;
            [-1.3 / d, -0.7 / d]
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.codebook_schedule.is_empty() {
            return bad("codebook_schedule must not be empty".into());
        }
        if self.codebook_schedule.contains(&0) {
            return bad("codebook_schedule entries must be >= 1".into());
        }
        if self.codebook_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("codebook_schedule must be strictly increasing".into());
        }
        let d = self.system.dim();
        if d == 0 {
            return bad("system dim must be >= 1".into());
        }
        self.system.action_box().corners(d, "system.action_box")?;
        self.binning.region.corners(d, "binning")?;
        match (&self.policy.name, &self.policy.mixture) {
            (Some(name), None) => self.check_policy_name(name)?,
            (None, Some(m)) => {
                if m.components.is_empty() || m.weights.len() != m.components.len() {
                    return bad("policy.mixture needs one weight per component".into());
                }
                for c in &m.components {
                    self.check_policy_name(c)?;
                }
            }
            _ => return bad("[policy] needs exactly one of `name` or `mixture`".into()),
        }
        if self.seeds.replications == 0 {
            return bad("seeds.replications must be >= 1".into());
        }
        if self.mc.n_rollouts < 2 {
            return bad("mc.n_rollouts must be >= 2".into());
        }
        if let Some(x0) = &self.mc.x0 {
            if x0.len() != d {
                return bad(format!("mc.x0 must have dimension {d}"));
            }
        }
        if self.report.slope_window.is_some_and(|[lo, hi]| lo >= hi) {
            return bad("report.slope_window must be [lo, hi] with lo < hi".into());
        }
        if self.tv.n_list.is_empty() {
            return bad("tv.n_list must not be empty".into());
        }
        Ok(())
    }

    fn check_policy_name(&self, name: &str) -> Result<(), ConfigError> {
        if self.policies.contains_key(name) || BUILTIN_POLICIES.contains(&name) {
            return Ok(());
        }
        let mut known: Vec<&str> = self.policies.keys().map(String::as_str).collect();
        known.extend(BUILTIN_POLICIES);
        Err(ConfigError::Invalid(format!(
            "unresolved policy `{name}`; defined policies: {}",
            known.join(", ")
        )))
    }
}

fn allowed_keys(path: &[&str], system_kind: Option<&str>) -> Option<&'static [&'static str]> {
    const SYSTEM_COMMON: [&str; 6] = ["kind", "cost", "cost_cap", "discount", "action_box", "sigma"];
    Some(match path {
        [] => &[
            "system",
            "policies",
            "policy",
            "codebook_schedule",
            "criterion",
            "mc",
            "seeds",
            "binning",
            "tv",
            "ergodicity",
            "constants",
            "report",
            "output",
        ],
        ["system"] => match system_kind? {
            "linear_tracking" => &["kind", "cost", "cost_cap", "discount", "action_box", "sigma", "dim", "a", "b"],
            "bounded_drift" => &["kind", "cost", "cost_cap", "discount", "action_box", "sigma", "drift_bound", "drift"],
            "additive_noise" => &[
                "kind",
                "cost",
                "cost_cap",
                "discount",
                "action_box",
                "dim",
                "a",
                "b",
                "noise",
                "noise_scale",
            ],
            _ => &SYSTEM_COMMON,
        },
        ["system", "action_box"] => &["half_width", "lo", "hi"],
        ["binning"] => &["half_width", "lo", "hi", "bins"],
        ["policies"] => return None,
        ["policies", _] => &["kind", "gain", "value"],
        ["policy"] => &["name", "mixture"],
        ["policy", "mixture"] => &["weights", "components"],
        ["mc"] => &["n_rollouts", "tol", "burn_in", "n_steps", "horizon", "x0"],
        ["seeds"] => &["root", "replications"],
        ["tv"] => &["n_list", "samples"],
        ["ergodicity"] => &[
            "x0",
            "n_max",
            "samples",
            "burn_in",
            "invariant_samples",
            "thinning",
            "kappa_slack",
        ],
        ["constants"] => &["alpha", "k1", "k2", "m", "c", "kappa"],
        ["report"] => &["slope_window", "check_slope"],
        ["output"] => &["dir"],
        _ => return None,
    })
}

fn suggest(key: &str, candidates: &[&str]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(key, c), *c))
        .filter(|(s, _)| *s > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

fn check_keys(table: &toml::Table, path: &mut Vec<String>, system_kind: Option<&str>) -> Result<(), ConfigError> {
    let view: Vec<&str> = path.iter().map(String::as_str).collect();
    let allowed = allowed_keys(&view, system_kind);
    for (key, value) in table {
        if let Some(allowed) = allowed {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    table: if path.is_empty() { "root".into() } else { path.join(".") },
                    key: key.clone(),
                    suggestion: suggest(key, allowed),
                });
            }
        }
        if let toml::Value::Table(inner) = value {
            path.push(key.clone());
            check_keys(inner, path, system_kind)?;
            path.pop();
        }
    }
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a config, applying all defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let kind = table
        .get("system")
        .and_then(|s| s.get("kind"))
        .and_then(|k| k.as_str())
        .map(str::to_string);
    if let Some(kind) = &kind {
        if !SYSTEM_KINDS.contains(&kind.as_str()) {
            return Err(ConfigError::UnknownSystem(kind.clone()));
        }
    }
    check_keys(&table, &mut Vec::new(), kind.as_deref())?;
    if let Some(toml::Value::Table(policies)) = table.get("policies") {
        for (name, p) in policies {
            if let Some(k) = p.get("kind").and_then(|k| k.as_str()) {
                if !POLICY_KINDS.contains(&k) {
                    return Err(ConfigError::Invalid(format!(
                        "policy `{name}` has unknown kind `{k}`; available kinds: {}",
                        POLICY_KINDS.join(", ")
                    )));
                }
            }
        }
    }
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok((parse_config_str(&text)?, text))
}
