//! Rollouts and Monte Carlo estimates of discounted, average and total cost.
//!
//! Rollout `i` of a run draws from ChaCha8 stream `i` of the run's root seed,
//! so results do not depend on how rollouts are scheduled across threads.
//! Within a rollout the draws are, in order: the initial state (when
//! sampled), then per stage one uniform `z` followed by the transition
//! noise. `z` is drawn for every policy, randomized or not, which keeps two
//! policies on the same noise path under common random numbers.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionVector, MdpModel, Policy, StateVector, StreamRng, Trajectory};

/// Root seed from which per-rollout streams are split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeed {
    pub root: u64,
}

impl RunSeed {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    /// Stream `i`: ChaCha8 keyed by the root seed, stream id `i`.
    pub fn stream(&self, i: u64) -> StreamRng {
        let mut rng = StreamRng::seed_from_u64(self.root);
        rng.set_stream(i);
        rng
    }

    /// Independent root for a sub-experiment (e.g. one per `k`).
    pub fn child(&self, tag: u64) -> RunSeed {
        // splitmix64 finalizer
        let mut z = self.root ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        RunSeed::new(z ^ (z >> 31))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// Draw `x₀` from the model's initial distribution.
    Sample,
    Point(StateVector),
}

/// Sample mean with standard error and truncation bias.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    #[serde(rename = "ci95")]
    pub ci95_halfwidth: f64,
    pub n_rollouts: usize,
    #[serde(rename = "horizon")]
    pub horizon_used: usize,
    #[serde(rename = "bias_bound")]
    pub truncation_bias_bound: f64,
}

impl CostEstimate {
    /// Welford mean/variance over samples taken in index order.
    pub fn from_samples(samples: &[f64], horizon_used: usize, truncation_bias_bound: f64) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let n = samples.len();
        let std_error = if n >= 2 {
            (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            ci95_halfwidth: 1.96 * std_error,
            n_rollouts: n,
            horizon_used,
            truncation_bias_bound,
        }
    }
}

/// Drives one rollout, calling `visit(t, x_t, a_t)` for `t = 0..=last_stage`.
pub(crate) fn walk<F>(model: &MdpModel, policy: &Policy, x0: &InitialState, last_stage: usize, rng: &mut StreamRng, mut visit: F)
where
    F: FnMut(usize, &StateVector, &ActionVector),
{
    let mut x = match x0 {
        InitialState::Sample => model.sample_initial(rng),
        InitialState::Point(x) => x.clone(),
    };
    for t in 0..=last_stage {
        let z: f64 = rng.random();
        let a = policy.act(&x, z);
        visit(t, &x, &a);
        if t < last_stage {
            x = model.step(&x, &a, rng);
        }
    }
}

pub(crate) fn check_inputs(model: &MdpModel, policy: &Policy, x0: &InitialState) -> Result<()> {
    policy.check_against(model)?;
    if let InitialState::Point(x) = x0 {
        model.check_state(x)?;
        if !x.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
    }
    Ok(())
}

/// Simulates `x₀ … x_N` with actions and stage costs at every stage.
pub fn rollout(model: &MdpModel, policy: &Policy, x0: InitialState, horizon: usize, mut rng: StreamRng) -> Result<Trajectory> {
    check_inputs(model, policy, &x0)?;
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        actions: Vec::with_capacity(horizon + 1),
        costs: Vec::with_capacity(horizon + 1),
    };
    walk(model, policy, &x0, horizon, &mut rng, |_, x, a| {
        traj.costs.push(model.cost().eval(x, a));
        traj.states.push(x.clone());
        traj.actions.push(a.clone());
    });
    Ok(traj)
}

/// `M β^{N+1} / (1 − β)`: bound on the discounted tail after stage `N`.
pub fn truncation_tail(m: f64, beta: f64, horizon: usize) -> f64 {
    m * beta.powf(horizon as f64 + 1.0) / (1.0 - beta)
}

/// Smallest `N` with `M β^{N+1}/(1 − β) ≤ tol`.
pub fn horizon_for_tolerance(m: f64, beta: f64, tol: f64) -> usize {
    if truncation_tail(m, beta, 0) <= tol {
        return 0;
    }
    let guess = ((tol * (1.0 - beta) / m).ln() / beta.ln()).ceil() - 1.0;
    let mut n = if guess.is_finite() { guess.max(0.0) as usize } else { 0 };
    while truncation_tail(m, beta, n) > tol {
        n += 1;
    }
    while n > 0 && truncation_tail(m, beta, n - 1) <= tol {
        n -= 1;
    }
    n
}

/// `10⁻³ · M/(1 − β)`.
pub fn default_tolerance(m: f64, beta: f64) -> f64 {
    1e-3 * m / (1.0 - beta)
}

/// Cost criterion evaluated per rollout.
#[derive(Clone, Debug, PartialEq)]
pub enum Criterion {
    /// `Σ_{n ≤ N} βⁿ c(x_n, a_n)` with `N` from the tolerance; `x₀ ~ μ`.
    Discounted { tol: f64 },
    /// `(1/T) Σ_{t=B}^{B+T−1} c(x_t, a_t)`.
    Average {
        x0: InitialState,
        burn_in: usize,
        n_steps: usize,
    },
    /// `Σ_{n ≤ N} c_n(x_n, a_n)` using the model's schedule; `x₀ ~ μ`.
    Total { horizon: usize },
}

impl Criterion {
    /// Horizon and truncation bias for a model.
    fn plan(&self, model: &MdpModel) -> Result<(usize, f64)> {
        match self {
            Criterion::Discounted { tol } => {
                if tol.is_nan() || *tol <= 0.0 {
                    return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
                }
                let m = model.cost_bound();
                let n = horizon_for_tolerance(m, model.discount(), *tol);
                Ok((n, truncation_tail(m, model.discount(), n)))
            }
            Criterion::Average { n_steps, burn_in, x0 } => {
                if *n_steps == 0 {
                    return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
                }
                if let InitialState::Point(x) = x0 {
                    model.check_state(x)?;
                }
                Ok((burn_in + n_steps - 1, 0.0))
            }
            Criterion::Total { horizon } => {
                let schedule = model.schedule().ok_or(Error::MissingSchedule)?;
                if !schedule.covers(*horizon) {
                    return Err(Error::ScheduleExhausted(*horizon));
                }
                Ok((*horizon, 0.0))
            }
        }
    }

    fn initial(&self) -> &InitialState {
        match self {
            Criterion::Average { x0, .. } => x0,
            _ => &InitialState::Sample,
        }
    }

    /// Cost of one rollout drawn from `rng`.
    fn evaluate(&self, model: &MdpModel, policy: &Policy, last_stage: usize, rng: &mut StreamRng) -> f64 {
        let mut acc = 0.0;
        match self {
            Criterion::Discounted { .. } => {
                let beta = model.discount();
                let mut weight = 1.0;
                walk(model, policy, &InitialState::Sample, last_stage, rng, |_, x, a| {
                    acc += weight * model.cost().eval(x, a);
                    weight *= beta;
                });
                acc
            }
            Criterion::Average { x0, burn_in, n_steps } => {
                walk(model, policy, x0, last_stage, rng, |t, x, a| {
                    if t >= *burn_in {
                        acc += model.cost().eval(x, a);
                    }
                });
                acc / *n_steps as f64
            }
            Criterion::Total { .. } => {
                let schedule = model.schedule().expect("checked in plan");
                walk(model, policy, &InitialState::Sample, last_stage, rng, |t, x, a| {
                    acc += schedule.at(t).expect("checked in plan").eval(x, a);
                });
                acc
            }
        }
    }
}

/// Per-rollout costs of one policy, in rollout-index order.
pub fn cost_samples(
    model: &MdpModel,
    policy: &Policy,
    criterion: &Criterion,
    n_rollouts: usize,
    seed: RunSeed,
) -> Result<(Vec<f64>, usize, f64)> {
    check_inputs(model, policy, criterion.initial())?;
    let (last, bias) = criterion.plan(model)?;
    let samples = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|i| criterion.evaluate(model, policy, last, &mut seed.stream(i)))
        .collect();
    Ok((samples, last, bias))
}

fn estimate(model: &MdpModel, policy: &Policy, criterion: &Criterion, n_rollouts: usize, seed: RunSeed) -> Result<CostEstimate> {
    let (samples, horizon, bias) = cost_samples(model, policy, criterion, n_rollouts, seed)?;
    Ok(CostEstimate::from_samples(&samples, horizon, bias))
}

/// Discounted cost `w_β(π, μ)` truncated at the tolerance horizon.
pub fn estimate_discounted_cost(model: &MdpModel, policy: &Policy, n_rollouts: usize, tol: f64, seed: RunSeed) -> Result<CostEstimate> {
    if n_rollouts < 2 {
        return Err(Error::InvalidParameter("need at least 2 rollouts".into()));
    }
    estimate(model, policy, &Criterion::Discounted { tol }, n_rollouts, seed)
}

/// Long-run average cost from time averages after a burn-in.
pub fn estimate_average_cost(
    model: &MdpModel,
    policy: &Policy,
    x0: InitialState,
    burn_in: usize,
    n_steps: usize,
    n_rollouts: usize,
    seed: RunSeed,
) -> Result<CostEstimate> {
    estimate(model, policy, &Criterion::Average { x0, burn_in, n_steps }, n_rollouts, seed)
}

/// Finite-horizon total cost under the model's schedule `c_n`.
pub fn estimate_total_cost(model: &MdpModel, policy: &Policy, horizon: usize, n_rollouts: usize, seed: RunSeed) -> Result<CostEstimate> {
    estimate(model, policy, &Criterion::Total { horizon }, n_rollouts, seed)
}

/// Per-rollout `(cost_a, cost_b)` pairs under common random numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSamples {
    pub pairs: Vec<(f64, f64)>,
    pub horizon: usize,
    pub bias_bound: f64,
}

impl PairedSamples {
    pub fn differences(&self) -> Vec<f64> {
        self.pairs.iter().map(|(a, b)| a - b).collect()
    }

    /// Estimate of `E[cost_a − cost_b]`. Both truncations contribute bias.
    pub fn gap(&self) -> CostEstimate {
        CostEstimate::from_samples(&self.differences(), self.horizon, 2.0 * self.bias_bound)
    }
}

pub fn paired_cost_samples(
    model: &MdpModel,
    policy_a: &Policy,
    policy_b: &Policy,
    criterion: &Criterion,
    n_rollouts: usize,
    seed: RunSeed,
) -> Result<PairedSamples> {
    check_inputs(model, policy_a, criterion.initial())?;
    check_inputs(model, policy_b, criterion.initial())?;
    let (last, bias) = criterion.plan(model)?;
    let pairs = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|i| {
            let a = criterion.evaluate(model, policy_a, last, &mut seed.stream(i));
            let b = criterion.evaluate(model, policy_b, last, &mut seed.stream(i));
            (a, b)
        })
        .collect();
    Ok(PairedSamples {
        pairs,
        horizon: last,
        bias_bound: bias,
    })
}

/// Mean and CI of `cost_a − cost_b` with identical noise streams for both policies.
pub fn paired_cost_gap(
    model: &MdpModel,
    policy_a: &Policy,
    policy_b: &Policy,
    criterion: &Criterion,
    n_rollouts: usize,
    seed: RunSeed,
) -> Result<CostEstimate> {
    Ok(paired_cost_samples(model, policy_a, policy_b, criterion, n_rollouts, seed)?.gap())
}
