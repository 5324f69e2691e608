//! Experiment runners behind the CLI subcommands.

use std::sync::Arc;

use quantpol::bounds::{
    average_gap_bound, covering_alpha_for_box, discounted_gap_bound, slb_constant, slb_lower_bound, Entropy,
    HorizonChoice, SlbCriterion, SystemConstants,
};
use quantpol::mdp::{ActionBox, ActionVector, CostFunction, CostSchedule, DeterministicMap, MdpModel, Policy, StateVector};
use quantpol::measures::{check_marginal_tv_bound, ergodicity_profile, ChainSampling, Grid};
use quantpol::quantizer::{build_uniform_net, quantize_policy, Codebook};
use quantpol::randomized::{from_finite_mixture, quantize_randomized};
use quantpol::simulate::{default_tolerance, paired_cost_samples, CostEstimate, Criterion, InitialState, RunSeed};
use quantpol::systems::{AdditiveNoiseSystem, BoundedDriftSystem, LinearTrackingSystem, NoiseSpec};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    ConfigError, CostKind, CriterionKind, DriftKind, ExperimentConfig, NoiseKind, PolicyConfig, SystemConfig,
};
use crate::report::{
    pass_fail, Check, ErgodicityReport, ErgodicityRow, ExperimentReport, GapRow, Metadata, RolloutDump, SlbReport,
    SlbRow, TvCheckReport, TvRow, FAIL, PASS, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] quantpol::Error),
    #[error("{0}")]
    Unsupported(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Multiplier on the 95% half-width used by every statistical verdict.
type ScalarDrift = Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

pub const CI_MULTIPLIER: f64 = 3.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub dump_rollouts: bool,
}

/// Model, policy and codebook region resolved from a config.
pub struct Setup {
    pub model: MdpModel,
    pub policy: Policy,
    pub codebook_box: ActionBox,
    pub d: usize,
    /// The configured policy has zero cost, so the Shannon bound bounds the gap from below.
    pub slb_applies: bool,
}

fn cost_function(kind: CostKind, cap: f64) -> quantpol::Result<CostFunction> {
    match kind {
        CostKind::Tracking => CostFunction::tracking(cap),
        CostKind::StateNorm => CostFunction::state_norm(cap),
        CostKind::Indicator => CostFunction::positive_indicator(),
    }
}

fn action_box(cfg: &ExperimentConfig) -> Result<ActionBox> {
    let (lo, hi) = cfg.system.action_box().corners(cfg.system.dim(), "system.action_box")?;
    Ok(ActionBox::new(lo, hi)?)
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<MdpModel> {
    let cap = cfg.cost_cap();
    let bx = action_box(cfg)?;
    let model = match &cfg.system {
        SystemConfig::LinearTracking {
            dim, a, b, sigma, cost, discount, ..
        } => LinearTrackingSystem::new(*dim, a.to_matrix(*dim)?, b.to_matrix(*dim)?, *sigma, cap, *discount)?
            .with_cost(cost_function(*cost, cap)?)
            .with_action_box(bx)?
            .build()?,
        SystemConfig::BoundedDrift {
            drift_bound,
            sigma,
            drift,
            cost,
            discount,
            ..
        } => {
            let l = *drift_bound;
            let (f, lipschitz): (ScalarDrift, f64) = match drift {
                DriftKind::Zero => (Box::new(|_, _| 0.0), 0.0),
                DriftKind::Tanh => (Box::new(move |x, _| l * x.tanh()), 0.0),
                DriftKind::TanhAction => (Box::new(move |x, a| l * (x + a[0]).tanh()), l),
                DriftKind::ClipAction => (Box::new(move |_, a| a[0].clamp(-l, l)), 1.0),
            };
            BoundedDriftSystem::new(l, *sigma, f, bx, cost_function(*cost, cap)?)
                .with_discount(*discount)
                .with_drift_action_lipschitz(lipschitz)
                .build()?
        }
        SystemConfig::AdditiveNoise {
            dim,
            a,
            b,
            noise,
            noise_scale,
            cost,
            discount,
            ..
        } => {
            let (am, bm) = (a.to_matrix(*dim)?, b.to_matrix(*dim)?);
            let lipschitz = quantpol::systems::operator_norm(&bm);
            let d = *dim;
            let drift = move |x: &StateVector, u: &ActionVector| -> Vec<f64> {
                (0..d)
                    .map(|i| (0..d).map(|j| am[(i, j)] * x[j] + bm[(i, j)] * u[j]).sum())
                    .collect()
            };
            let noise = match noise {
                NoiseKind::Gaussian => NoiseSpec::gaussian(d, *noise_scale)?,
                NoiseKind::Uniform => NoiseSpec::uniform(d, *noise_scale)?,
            };
            AdditiveNoiseSystem {
                state_dim: d,
                drift: Arc::new(drift),
                noise,
                action_box: bx,
                cost: cost_function(*cost, cap)?,
                discount: *discount,
                drift_action_lipschitz: Some(lipschitz),
            }
            .build()?
        }
    };
    Ok(match cfg.criterion {
        CriterionKind::Total => {
            let c = model.cost().clone();
            model.with_schedule(CostSchedule::stationary(c))
        }
        _ => model,
    })
}

fn named_map(cfg: &ExperimentConfig, name: &str, bx: &ActionBox) -> Result<DeterministicMap> {
    let d = cfg.system.dim();
    let spec = match cfg.policies.get(name) {
        Some(p) => p.clone(),
        None => match name {
            "identity" => PolicyConfig::Identity,
            "clamped_identity" => PolicyConfig::ClampedIdentity,
            _ => return Err(ConfigError::Invalid(format!("unresolved policy `{name}`")).into()),
        },
    };
    Ok(match spec {
        PolicyConfig::Identity => DeterministicMap::identity(d),
        PolicyConfig::ClampedIdentity => DeterministicMap::clamped_identity(bx.clone()),
        PolicyConfig::LinearGain { gain } => DeterministicMap::linear_gain(d, gain),
        PolicyConfig::Constant { value } => {
            let a = ActionVector::new(value).map_err(|_| ConfigError::Invalid(format!("policy `{name}` needs a finite value")))?;
            if a.dim() != d {
                return Err(ConfigError::Invalid(format!("policy `{name}` value must have dimension {d}")).into());
            }
            DeterministicMap::constant(d, a)
        }
    })
}

fn is_identity(cfg: &ExperimentConfig, name: &str) -> bool {
    match cfg.policies.get(name) {
        Some(p) => *p == PolicyConfig::Identity,
        None => name == "identity",
    }
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let model = build_model(cfg)?;
    let bx = action_box(cfg)?;
    let (policy, zero_cost) = match (&cfg.policy.name, &cfg.policy.mixture) {
        (Some(name), _) => (Policy::Deterministic(named_map(cfg, name, &bx)?), is_identity(cfg, name)),
        (None, Some(m)) => {
            let maps = m
                .components
                .iter()
                .map(|c| named_map(cfg, c, &bx))
                .collect::<Result<Vec<_>>>()?;
            (Policy::Randomized(from_finite_mixture(&m.weights, maps)?), false)
        }
        (None, None) => return Err(ConfigError::Invalid("[policy] needs `name` or `mixture`".into()).into()),
    };
    let slb_applies = zero_cost && cfg.system.cost() == CostKind::Tracking && model.hints().noise_entropy_bits.is_some();
    Ok(Setup {
        d: bx.dim(),
        model,
        policy,
        codebook_box: bx,
        slb_applies,
    })
}

/// Derived constants with config overrides applied; missing ones are named.
pub fn resolve_constants(cfg: &ExperimentConfig, setup: &Setup) -> Result<SystemConstants> {
    let o = &cfg.constants;
    let hints = setup.model.hints();
    let (c, kappa) = hints.ergodicity.unzip();
    let k1 = o.k1.or(setup.model.cost().action_lipschitz());
    let k2 = o.k2.or(hints.kernel_tv_lipschitz);
    let missing: Vec<&str> = [("K1", k1), ("K2", k2)]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(quantpol::Error::MissingConstant(missing.join(", ")).into());
    }
    Ok(SystemConstants {
        alpha: o.alpha.unwrap_or_else(|| covering_alpha_for_box(&setup.codebook_box)),
        beta: setup.model.discount(),
        k1: k1.unwrap_or_default(),
        k2: k2.unwrap_or_default(),
        m: o.m.unwrap_or(setup.model.cost_bound()),
        c: o.c.or(c),
        kappa: o.kappa.or(kappa),
        d: setup.d,
    })
}

fn criterion(cfg: &ExperimentConfig, setup: &Setup, meta: &mut Metadata) -> Criterion {
    match cfg.criterion {
        CriterionKind::Discounted => {
            let tol = cfg
                .mc
                .tol
                .unwrap_or_else(|| default_tolerance(setup.model.cost_bound(), setup.model.discount()));
            meta.resolved.insert("tol".into(), tol);
            Criterion::Discounted { tol }
        }
        CriterionKind::Average => {
            let x0 = cfg.mc.x0.clone().unwrap_or_else(|| vec![0.0; setup.model.state_dim()]);
            meta.resolved.insert("burn_in".into(), cfg.mc.burn_in as f64);
            meta.resolved.insert("n_steps".into(), cfg.mc.n_steps as f64);
            Criterion::Average {
                x0: InitialState::Point(StateVector::from(x0)),
                burn_in: cfg.mc.burn_in,
                n_steps: cfg.mc.n_steps,
            }
        }
        CriterionKind::Total => {
            meta.resolved.insert("horizon".into(), cfg.mc.horizon as f64);
            Criterion::Total { horizon: cfg.mc.horizon }
        }
    }
}

pub fn quantize(policy: &Policy, codebook: Arc<Codebook>) -> Result<Policy> {
    Ok(match policy {
        Policy::Randomized(spec) => Policy::Randomized(quantize_randomized(spec, codebook)?),
        other => quantize_policy(other, codebook)?,
    })
}

/// Seed of replication `r` at codebook size `k`.
pub fn replication_seed(root: u64, k: usize, r: usize) -> RunSeed {
    RunSeed::new(root).child(k as u64).child(r as u64)
}

struct Measured {
    codebook: Arc<Codebook>,
    gap: CostEstimate,
    dumps: Vec<RolloutDump>,
}

fn measure_gaps(cfg: &ExperimentConfig, setup: &Setup, crit: &Criterion) -> Result<Vec<Measured>> {
    let reps = cfg.seeds.replications;
    let jobs: Vec<(usize, usize)> = cfg
        .codebook_schedule
        .iter()
        .flat_map(|&k| (0..reps).map(move |r| (k, r)))
        .collect();
    let codebooks = cfg
        .codebook_schedule
        .iter()
        .map(|&k| Ok((k, Arc::new(build_uniform_net(&setup.codebook_box, k)?))))
        .collect::<Result<Vec<_>>>()?;
    let quantized = codebooks
        .iter()
        .map(|(_, cb)| quantize(&setup.policy, cb.clone()))
        .collect::<Result<Vec<_>>>()?;
    let runs = jobs
        .par_iter()
        .map(|&(k, r)| {
            let i = cfg.codebook_schedule.iter().position(|&x| x == k).expect("k from schedule");
            paired_cost_samples(
                &setup.model,
                &quantized[i],
                &setup.policy,
                crit,
                cfg.mc.n_rollouts,
                replication_seed(cfg.seeds.root, k, r),
            )
            .map(|s| (k, r, s))
        })
        .collect::<quantpol::Result<Vec<_>>>()?;
    Ok(codebooks
        .into_iter()
        .map(|(k, codebook)| {
            let mine: Vec<_> = runs.iter().filter(|(kk, _, _)| *kk == k).collect();
            let diffs: Vec<f64> = mine.iter().flat_map(|(_, _, s)| s.differences()).collect();
            let (horizon, bias) = (mine[0].2.horizon, 2.0 * mine[0].2.bias_bound);
            Measured {
                codebook,
                gap: CostEstimate::from_samples(&diffs, horizon, bias),
                dumps: mine
                    .iter()
                    .map(|(k, r, s)| RolloutDump {
                        k: *k,
                        replication: *r,
                        pairs: s.pairs.clone(),
                    })
                    .collect(),
            }
        })
        .collect())
}

/// Least-squares slope of `ln|gap|` on `ln k` over rows with `|gap| > 3·CI`.
pub fn fit_slope(rows: &[GapRow]) -> (Option<f64>, usize) {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.gap.abs() > CI_MULTIPLIER * r.gap_ci95 && r.gap != 0.0)
        .map(|r| ((r.k as f64).ln(), r.gap.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return (None, pts.len());
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (Some(sxy / sxx), pts.len())
}

fn upper_bound(cfg: &ExperimentConfig, c: &SystemConstants, k: usize) -> Result<(f64, bool)> {
    let b = match cfg.criterion {
        CriterionKind::Discounted => discounted_gap_bound(c, k)?,
        CriterionKind::Average => average_gap_bound(c, k, HorizonChoice::optimize())?,
        CriterionKind::Total => {
            return Err(ExperimentError::Unsupported(
                "upper bounds exist for the discounted and average criteria only".into(),
            ))
        }
    };
    Ok((b.value, b.degenerate))
}

fn lower_bound(cfg: &ExperimentConfig, setup: &Setup, k: usize) -> Result<Option<f64>> {
    if !setup.slb_applies {
        return Ok(None);
    }
    let crit = match cfg.criterion {
        CriterionKind::Discounted => SlbCriterion::Discounted(setup.model.discount()),
        CriterionKind::Average => SlbCriterion::Average,
        CriterionKind::Total => return Ok(None),
    };
    let h = setup.model.hints().noise_entropy_bits.expect("checked in slb_applies");
    Ok(Some(slb_lower_bound(setup.d, Entropy::bits(h), crit, k)?.value))
}

fn row(k: usize, m: &Measured, upper: Option<(f64, bool)>, lower: Option<f64>) -> GapRow {
    GapRow {
        k,
        levels: m.codebook.len(),
        rate_bits: m.codebook.rate_bits(),
        radius: m.codebook.covering_radius().expect("uniform nets know their radius"),
        gap: m.gap.mean,
        gap_ci95: m.gap.ci95_halfwidth,
        gap_std_error: m.gap.std_error,
        n_rollouts: m.gap.n_rollouts,
        horizon: m.gap.horizon_used,
        bias_bound: m.gap.truncation_bias_bound,
        upper_bound: upper.map(|u| u.0),
        upper_degenerate: upper.is_some_and(|u| u.1),
        lower_bound: lower,
        verdict: PASS.into(),
    }
}

fn criterion_name(kind: CriterionKind) -> String {
    match kind {
        CriterionKind::Discounted => "discounted",
        CriterionKind::Average => "average",
        CriterionKind::Total => "total",
    }
    .to_string()
}

fn empty_report(command: &str, cfg: &ExperimentConfig, setup: &Setup, meta: Metadata) -> ExperimentReport {
    ExperimentReport {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        metadata: meta,
        system: setup.model.label().to_string(),
        policy: setup.policy.label(),
        criterion: criterion_name(cfg.criterion),
        constants: None,
        rows: Vec::new(),
        slope: None,
        slope_points: 0,
        slope_window: None,
        slope_note: None,
        checks: Vec::new(),
        pass: true,
        rollouts: Vec::new(),
    }
}

/// Paired gaps `cost(π^k) − cost(π)` over the codebook schedule with a slope fit.
///
/// Rows fail when the gap grows by more than `3·CI` from one `k` to the next.
pub fn run_convergence(cfg: &ExperimentConfig, meta: Metadata, opts: RunOptions) -> Result<ExperimentReport> {
    let setup = build_setup(cfg)?;
    let mut meta = meta;
    let crit = criterion(cfg, &setup, &mut meta);
    let window = cfg.slope_window();
    meta.resolved.insert("slope_window_lo".into(), window[0]);
    meta.resolved.insert("slope_window_hi".into(), window[1]);
    let constants = resolve_constants(cfg, &setup).ok();
    let measured = measure_gaps(cfg, &setup, &crit)?;
    let mut report = empty_report("convergence", cfg, &setup, meta);
    report.constants = constants;
    let mut previous: Option<CostEstimate> = None;
    for (k, m) in cfg.codebook_schedule.iter().zip(&measured) {
        let upper = constants.and_then(|c| upper_bound(cfg, &c, *k).ok());
        let mut r = row(*k, m, upper, lower_bound(cfg, &setup, *k)?);
        if let Some(p) = previous {
            let slack = CI_MULTIPLIER * 1.96 * (p.std_error.powi(2) + m.gap.std_error.powi(2)).sqrt();
            r.verdict = pass_fail(m.gap.mean.abs() <= p.mean.abs() + slack);
        }
        previous = Some(m.gap);
        report.rows.push(r);
    }
    let (slope, points) = fit_slope(&report.rows);
    report.slope = slope;
    report.slope_points = points;
    let trend_ok = report.rows.iter().all(|r| r.verdict == PASS);
    report.checks.push(Check {
        name: "monotone trend".into(),
        pass: trend_ok,
        detail: format!("gap never grows by more than {CI_MULTIPLIER}·CI as k increases"),
    });
    match slope {
        None => report.slope_note = Some("insufficient points".into()),
        Some(s) if cfg.report.check_slope => {
            report.slope_window = Some(window);
            report.checks.push(Check {
                name: "slope".into(),
                pass: s >= window[0] && s <= window[1],
                detail: format!("{s:.4} in [{}, {}]", window[0], window[1]),
            });
        }
        Some(_) => {}
    }
    report.pass = report.checks.iter().all(|c| c.pass);
    if opts.dump_rollouts {
        report.rollouts = measured.into_iter().flat_map(|m| m.dumps).collect();
    }
    Ok(report)
}

/// Measured gaps against the closed-form upper bound and, when it applies, the Shannon lower bound.
pub fn run_bounds_check(cfg: &ExperimentConfig, meta: Metadata, opts: RunOptions) -> Result<ExperimentReport> {
    if cfg.criterion == CriterionKind::Total {
        return Err(ExperimentError::Unsupported(
            "bounds supports the discounted and average criteria only".into(),
        ));
    }
    let setup = build_setup(cfg)?;
    let constants = resolve_constants(cfg, &setup)?;
    if cfg.criterion == CriterionKind::Average {
        let missing: Vec<&str> = [("C", constants.c), ("kappa", constants.kappa)]
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| *n)
            .collect();
        if !missing.is_empty() {
            return Err(quantpol::Error::MissingConstant(missing.join(", ")).into());
        }
    }
    let mut meta = meta;
    let crit = criterion(cfg, &setup, &mut meta);
    let measured = measure_gaps(cfg, &setup, &crit)?;
    let mut report = empty_report("bounds", cfg, &setup, meta);
    report.constants = Some(constants);
    for (k, m) in cfg.codebook_schedule.iter().zip(&measured) {
        let (upper, degenerate) = upper_bound(cfg, &constants, *k)?;
        let lower = lower_bound(cfg, &setup, *k)?;
        let mut r = row(*k, m, Some((upper, degenerate)), lower);
        let slack = CI_MULTIPLIER * r.gap_ci95;
        let below_upper = r.gap.abs() <= upper + slack;
        let above_lower = lower.is_none_or(|l| r.gap >= l - slack);
        r.verdict = pass_fail(below_upper && above_lower);
        report.rows.push(r);
    }
    let (slope, points) = fit_slope(&report.rows);
    report.slope = slope;
    report.slope_points = points;
    if slope.is_none() {
        report.slope_note = Some("insufficient points".into());
    }
    let failed = report.rows.iter().filter(|r| r.verdict == FAIL).count();
    report.checks.push(Check {
        name: "bounds".into(),
        pass: failed == 0,
        detail: format!("{failed} of {} rows outside [lower − {CI_MULTIPLIER}·CI, upper + {CI_MULTIPLIER}·CI]", report.rows.len()),
    });
    report.pass = failed == 0;
    if opts.dump_rollouts {
        report.rollouts = measured.into_iter().flat_map(|m| m.dumps).collect();
    }
    Ok(report)
}

fn grid(cfg: &ExperimentConfig) -> Result<Grid> {
    let (lo, hi) = cfg.binning.region.corners(cfg.system.dim(), "binning")?;
    Ok(Grid::new(lo, hi, cfg.binning.bins)?)
}

/// `TV(λ̂_n, ν̂)` from a fixed start against `Cκⁿ` on a scalar bounded-drift system.
pub fn run_ergodicity(cfg: &ExperimentConfig, meta: Metadata) -> Result<ErgodicityReport> {
    if !matches!(cfg.system, SystemConfig::BoundedDrift { .. }) {
        return Err(ExperimentError::Unsupported(
            "ergodicity requires a scalar bounded_drift system".into(),
        ));
    }
    let setup = build_setup(cfg)?;
    let (c0, k0) = setup.model.hints().ergodicity.expect("bounded drift systems carry (C, kappa)");
    let c = cfg.constants.c.unwrap_or(c0);
    let kappa = cfg.constants.kappa.unwrap_or(k0);
    let e = &cfg.ergodicity;
    let g = grid(cfg)?;
    let profile = ergodicity_profile(
        &setup.model,
        &setup.policy,
        StateVector::from(vec![e.x0]),
        e.n_max,
        e.samples,
        &g,
        ChainSampling::new(e.burn_in, e.invariant_samples, e.thinning),
        RunSeed::new(cfg.seeds.root),
    )?;
    let rows: Vec<ErgodicityRow> = profile
        .tv_by_n
        .iter()
        .enumerate()
        .map(|(i, &tv)| {
            let n = i + 1;
            let bound = c * kappa.powi(n as i32);
            ErgodicityRow {
                n,
                tv,
                bound,
                noise_floor: profile.noise_floor,
                verdict: pass_fail(tv <= bound + profile.noise_floor),
            }
        })
        .collect();
    let failed = rows.iter().filter(|r| r.verdict == FAIL).count();
    let mut checks = vec![Check {
        name: "geometric envelope".into(),
        pass: failed == 0,
        detail: format!("{failed} of {} stages above C·kappa^n + floor", rows.len()),
    }];
    match profile.fit {
        Some(fit) => checks.push(Check {
            name: "fitted rate".into(),
            pass: fit.kappa <= kappa + e.kappa_slack,
            detail: format!("fit kappa {:.4} <= {kappa:.6} + {}", fit.kappa, e.kappa_slack),
        }),
        None => checks.push(Check {
            name: "fitted rate".into(),
            pass: true,
            detail: "unresolved: fewer than two stages above the noise floor".into(),
        }),
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ErgodicityReport {
        schema_version: SCHEMA_VERSION,
        command: "ergodicity".into(),
        metadata: meta,
        c,
        kappa,
        noise_floor: profile.noise_floor,
        fit: profile.fit,
        rows,
        checks,
        pass,
    })
}

/// Binned marginal TV between `π` and `π^k` against `αK₂(2n − 1)(1/k)^{1/d}`.
pub fn run_tvcheck(cfg: &ExperimentConfig, meta: Metadata) -> Result<TvCheckReport> {
    let setup = build_setup(cfg)?;
    if setup.policy.is_randomized() {
        return Err(ExperimentError::Unsupported("tvcheck needs a deterministic policy".into()));
    }
    let constants = resolve_constants(cfg, &setup)?;
    let g = grid(cfg)?;
    let mut rows = Vec::new();
    for &k in &cfg.codebook_schedule {
        let cb = Arc::new(build_uniform_net(&setup.codebook_box, k)?);
        let checked = check_marginal_tv_bound(
            &setup.model,
            &setup.policy,
            cb,
            &cfg.tv.n_list,
            cfg.tv.samples,
            &g,
            constants.alpha,
            constants.k2,
            k,
            setup.d,
            RunSeed::new(cfg.seeds.root).child(k as u64),
        )?;
        rows.extend(checked.into_iter().map(|r| TvRow {
            k,
            n: r.n,
            tv: r.tv,
            bound: r.bound,
            noise_floor: r.noise_floor,
            verdict: pass_fail(r.pass),
        }));
    }
    let pass = rows.iter().all(|r| r.verdict == PASS);
    Ok(TvCheckReport {
        schema_version: SCHEMA_VERSION,
        command: "tvcheck".into(),
        metadata: meta,
        alpha: constants.alpha,
        k2: constants.k2,
        rows,
        pass,
    })
}

/// Shannon lower bounds for every codebook size in the schedule.
pub fn run_slb(cfg: &ExperimentConfig, meta: Metadata) -> Result<SlbReport> {
    let model = build_model(cfg)?;
    let h = model
        .hints()
        .noise_entropy_bits
        .ok_or_else(|| ExperimentError::Unsupported("noise entropy is unavailable for this system".into()))?;
    let d = model.action_dim();
    let entropy = Entropy::bits(h);
    let beta = model.discount();
    let rows = cfg
        .codebook_schedule
        .iter()
        .map(|&k| {
            Ok(SlbRow {
                k,
                rate_bits: (k as f64).log2(),
                per_stage: slb_lower_bound(d, entropy, SlbCriterion::PerStage, k)?.value,
                discounted: slb_lower_bound(d, entropy, SlbCriterion::Discounted(beta), k)?.value,
                average: slb_lower_bound(d, entropy, SlbCriterion::Average, k)?.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SlbReport {
        schema_version: SCHEMA_VERSION,
        command: "slb".into(),
        metadata: meta,
        d,
        entropy_bits: h,
        l: slb_constant(d, entropy),
        rows,
    })
}
