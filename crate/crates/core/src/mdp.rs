//! Core MDP types on vector state and action spaces.
//!
//! States live in ℝⁿ and actions in ℝᵈ. A model bundles a transition
//! sampler, a bounded one-stage cost (optionally a per-stage schedule
//! `c_n`), a discount factor and an initial-state sampler. Policies are
//! stationary: deterministic maps `x ↦ f(x)`, their nearest-neighbor
//! quantizations, or finite mixtures driven by a uniform variable `z`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::Codebook;
use crate::randomized::RandomizedPolicySpec;

/// Random source threaded through every sampler. One stream per rollout.
pub type StreamRng = ChaCha8Rng;

macro_rules! real_vector {
    ($name:ident, $what:literal) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Checked constructor: non-empty, all coordinates finite.
            pub fn new(coords: Vec<f64>) -> Result<Self> {
                if coords.is_empty() {
                    return Err(Error::InvalidParameter(concat!($what, " must have dimension >= 1").into()));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok(Self(coords))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|c| c.is_finite())
            }

            pub fn distance(&self, other: &[f64]) -> f64 {
                euclidean(&self.0, other)
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        /// Unchecked conversion used on hot simulation paths.
        impl From<Vec<f64>> for $name {
            fn from(coords: Vec<f64>) -> Self {
                Self(coords)
            }
        }
    };
}

real_vector!(StateVector, "state");
real_vector!(ActionVector, "action");

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Axis-aligned box `[lo_i, hi_i]` in ℝᵈ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidBox(format!(
                "lower corner has {} coordinates, upper corner {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox(format!("axis {i} is unbounded")));
            }
            if l > h {
                return Err(Error::InvalidBox(format!("axis {i}: lo {l} > hi {h}")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[-half_width, half_width]ᵈ`.
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn sides(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn max_side(&self) -> f64 {
        self.sides().into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim()
            && a.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn clamp(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| x.clamp(*l, *h))
            .collect()
    }
}

type CostEval = dyn Fn(&StateVector, &ActionVector) -> f64 + Send + Sync;

/// A bounded one-stage cost `c(x, a) ∈ [0, M]`.
#[derive(Clone)]
pub struct CostFunction {
    label: String,
    bound: f64,
    action_lipschitz: Option<f64>,
    eval: Arc<CostEval>,
}

impl CostFunction {
    pub fn new<F>(label: impl Into<String>, bound: f64, eval: F) -> Result<Self>
    where
        F: Fn(&StateVector, &ActionVector) -> f64 + Send + Sync + 'static,
    {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cost bound must be finite and nonnegative, got {bound}"
            )));
        }
        Ok(Self {
            label: label.into(),
            bound,
            action_lipschitz: None,
            eval: Arc::new(eval),
        })
    }

    /// Records `K₁` with `|c(x,ã) − c(x,a)| ≤ K₁‖ã − a‖`.
    pub fn with_action_lipschitz(mut self, k1: f64) -> Self {
        self.action_lipschitz = Some(k1);
        self
    }

    /// `c ≡ value`.
    pub fn constant(value: f64) -> Result<Self> {
        Ok(Self::new(format!("constant({value})"), value, move |_, _| value)?.with_action_lipschitz(0.0))
    }

    /// Clipped tracking cost `min(‖x − a‖, cap)`; clipping keeps K₁ = 1.
    pub fn tracking(cap: f64) -> Result<Self> {
        positive("cost cap", cap)?;
        Ok(Self::new(format!("tracking(cap={cap})"), cap, move |x, a| {
            euclidean(x, a).min(cap)
        })?
        .with_action_lipschitz(1.0))
    }

    /// Clipped state norm `min(‖x‖, cap)`; independent of the action.
    pub fn state_norm(cap: f64) -> Result<Self> {
        positive("cost cap", cap)?;
        Ok(Self::new(format!("state_norm(cap={cap})"), cap, move |x, _| {
            x.iter().map(|c| c * c).sum::<f64>().sqrt().min(cap)
        })?
        .with_action_lipschitz(0.0))
    }

    /// `1{x₀ > 0}`.
    pub fn positive_indicator() -> Result<Self> {
        Ok(Self::new("positive_indicator", 1.0, |x, _| if x[0] > 0.0 { 1.0 } else { 0.0 })?
            .with_action_lipschitz(0.0))
    }

    /// `scale · c`, used to build discounted schedules `c_n = βⁿ c`.
    pub fn scaled(&self, scale: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            label: format!("{scale}*{}", self.label),
            bound: self.bound * scale.abs(),
            action_lipschitz: self.action_lipschitz.map(|k| k * scale.abs()),
            eval: Arc::new(move |x, a| scale * inner(x, a)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn action_lipschitz(&self) -> Option<f64> {
        self.action_lipschitz
    }

    #[inline]
    pub fn eval(&self, x: &StateVector, a: &ActionVector) -> f64 {
        (self.eval)(x, a)
    }
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .finish()
    }
}

/// Per-stage costs `c_0 … c_{N₀−1}` followed by an optional default tail.
#[derive(Clone, Debug)]
pub struct CostSchedule {
    stages: Vec<CostFunction>,
    tail: Option<CostFunction>,
}

impl CostSchedule {
    pub fn new(stages: Vec<CostFunction>, tail: Option<CostFunction>) -> Self {
        Self { stages, tail }
    }

    /// `c_n = c` for every n.
    pub fn stationary(cost: CostFunction) -> Self {
        Self::new(Vec::new(), Some(cost))
    }

    /// `c_n = βⁿ c` for `n ≤ horizon`, undefined afterwards.
    pub fn discounted(cost: &CostFunction, beta: f64, horizon: usize) -> Self {
        let stages = (0..=horizon).map(|n| cost.scaled(beta.powi(n as i32))).collect();
        Self::new(stages, None)
    }

    pub fn at(&self, n: usize) -> Result<&CostFunction> {
        self.stages
            .get(n)
            .or(self.tail.as_ref())
            .ok_or(Error::ScheduleExhausted(n))
    }

    /// Whether `c_n` exists for every `n ≤ horizon`.
    pub fn covers(&self, horizon: usize) -> bool {
        self.tail.is_some() || horizon < self.stages.len()
    }

    pub fn bound(&self) -> f64 {
        self.stages
            .iter()
            .chain(self.tail.iter())
            .map(CostFunction::bound)
            .fold(0.0, f64::max)
    }
}

pub type TransitionFn = Arc<dyn Fn(&StateVector, &ActionVector, &mut StreamRng) -> StateVector + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(&mut StreamRng) -> StateVector + Send + Sync>;

/// Analytic constants a constructor knows about its model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantHints {
    /// `K₂`: `‖p(·|x,ã) − p(·|x,a)‖_TV ≤ K₂‖ã − a‖`.
    pub kernel_tv_lipschitz: Option<f64>,
    /// `(C, κ)` of a geometric ergodicity bound valid for every stationary policy.
    pub ergodicity: Option<(f64, f64)>,
    /// Differential entropy (bits) of the additive noise, when it has a density.
    pub noise_entropy_bits: Option<f64>,
}

/// A discounted MDP `(X, A, p, c, μ, β)` on `ℝⁿ × ℝᵈ`.
#[derive(Clone)]
pub struct MdpModel {
    label: String,
    state_dim: usize,
    action_dim: usize,
    action_box: Option<ActionBox>,
    transition: TransitionFn,
    cost: CostFunction,
    schedule: Option<CostSchedule>,
    discount: f64,
    initial: InitialFn,
    hints: ConstantHints,
}

impl fmt::Debug for MdpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MdpModel")
            .field("label", &self.label)
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .field("action_box", &self.action_box)
            .field("cost", &self.cost)
            .field("discount", &self.discount)
            .field("hints", &self.hints)
            .finish()
    }
}

pub struct MdpModelBuilder {
    label: String,
    state_dim: usize,
    action_dim: usize,
    action_box: Option<ActionBox>,
    transition: Option<TransitionFn>,
    cost: Option<CostFunction>,
    schedule: Option<CostSchedule>,
    discount: f64,
    initial: Option<InitialFn>,
    hints: ConstantHints,
}

impl MdpModelBuilder {
    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn action_box(mut self, b: ActionBox) -> Self {
        self.action_box = Some(b);
        self
    }

    pub fn transition<F>(mut self, f: F) -> Self
    where
        F: Fn(&StateVector, &ActionVector, &mut StreamRng) -> StateVector + Send + Sync + 'static,
    {
        self.transition = Some(Arc::new(f));
        self
    }

    pub fn cost(mut self, cost: CostFunction) -> Self {
        self.cost = Some(cost);
        self
    }

    pub fn schedule(mut self, schedule: CostSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn discount(mut self, beta: f64) -> Self {
        self.discount = beta;
        self
    }

    pub fn initial<F>(mut self, f: F) -> Self
    where
        F: Fn(&mut StreamRng) -> StateVector + Send + Sync + 'static,
    {
        self.initial = Some(Arc::new(f));
        self
    }

    pub fn initial_point(self, x0: StateVector) -> Self {
        self.initial(move |_| x0.clone())
    }

    pub fn hints(mut self, hints: ConstantHints) -> Self {
        self.hints = hints;
        self
    }

    pub fn build(self) -> Result<MdpModel> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::InvalidParameter("state and action dimensions must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        if let Some(b) = &self.action_box {
            if b.dim() != self.action_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.action_dim,
                    actual: b.dim(),
                    context: "action box",
                });
            }
        }
        let transition = self
            .transition
            .ok_or_else(|| Error::InvalidParameter("model needs a transition sampler".into()))?;
        let cost = self
            .cost
            .ok_or_else(|| Error::InvalidParameter("model needs a cost function".into()))?;
        let initial = self
            .initial
            .ok_or_else(|| Error::InvalidParameter("model needs an initial distribution".into()))?;
        Ok(MdpModel {
            label: self.label,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            action_box: self.action_box,
            transition,
            cost,
            schedule: self.schedule,
            discount: self.discount,
            initial,
            hints: self.hints,
        })
    }
}

impl MdpModel {
    pub fn builder(state_dim: usize, action_dim: usize) -> MdpModelBuilder {
        MdpModelBuilder {
            label: "mdp".into(),
            state_dim,
            action_dim,
            action_box: None,
            transition: None,
            cost: None,
            schedule: None,
            discount: 0.9,
            initial: None,
            hints: ConstantHints::default(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn action_box(&self) -> Option<&ActionBox> {
        self.action_box.as_ref()
    }

    pub fn cost(&self) -> &CostFunction {
        &self.cost
    }

    pub fn schedule(&self) -> Option<&CostSchedule> {
        self.schedule.as_ref()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `M = sup c`.
    pub fn cost_bound(&self) -> f64 {
        self.cost.bound()
    }

    pub fn hints(&self) -> &ConstantHints {
        &self.hints
    }

    /// Same model with a different discount factor.
    pub fn with_discount(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            discount: beta,
            ..self.clone()
        })
    }

    /// Same model with a per-stage cost schedule attached.
    pub fn with_schedule(&self, schedule: CostSchedule) -> Self {
        Self {
            schedule: Some(schedule),
            ..self.clone()
        }
    }

    /// Same model with its initial distribution replaced by a point mass.
    pub fn with_initial_point(&self, x0: StateVector) -> Self {
        Self {
            initial: Arc::new(move |_| x0.clone()),
            ..self.clone()
        }
    }

    #[inline]
    pub fn step(&self, x: &StateVector, a: &ActionVector, rng: &mut StreamRng) -> StateVector {
        (self.transition)(x, a, rng)
    }

    #[inline]
    pub fn sample_initial(&self, rng: &mut StreamRng) -> StateVector {
        (self.initial)(rng)
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        check_dim(self.state_dim, x.len(), "state")
    }

    pub fn check_action(&self, a: &[f64]) -> Result<()> {
        check_dim(self.action_dim, a.len(), "action")
    }

    /// One-stage cost, using `c_n` when a stage is given and a schedule exists.
    pub fn stage_cost(&self, x: &StateVector, a: &ActionVector, n: Option<usize>) -> Result<f64> {
        self.check_state(x)?;
        self.check_action(a)?;
        let cost = match (n, &self.schedule) {
            (Some(n), Some(schedule)) => schedule.at(n)?,
            _ => &self.cost,
        };
        let value = cost.eval(x, a);
        if !(0.0..=cost.bound()).contains(&value) {
            return Err(Error::CostOutOfRange {
                value,
                bound: cost.bound(),
            });
        }
        Ok(value)
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        })
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")))
    }
}

type MapFn = dyn Fn(&StateVector) -> ActionVector + Send + Sync;

/// A measurable map `f: X → A` inducing a deterministic stationary policy.
#[derive(Clone)]
pub struct DeterministicMap {
    label: String,
    state_dim: usize,
    action_dim: usize,
    map: Arc<MapFn>,
}

impl fmt::Debug for DeterministicMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeterministicMap({}: ℝ^{} → ℝ^{})", self.label, self.state_dim, self.action_dim)
    }
}

impl DeterministicMap {
    pub fn new<F>(label: impl Into<String>, state_dim: usize, action_dim: usize, map: F) -> Self
    where
        F: Fn(&StateVector) -> ActionVector + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            state_dim,
            action_dim,
            map: Arc::new(map),
        }
    }

    /// `f(x) = x`.
    pub fn identity(dim: usize) -> Self {
        Self::new("identity", dim, dim, |x| ActionVector::from(x.to_vec()))
    }

    /// `f(x) = clamp(x, box)`, the identity restricted to a compact action set.
    pub fn clamped_identity(action_box: ActionBox) -> Self {
        let d = action_box.dim();
        Self::new("clamped_identity", d, d, move |x| ActionVector::from(action_box.clamp(x)))
    }

    /// `f(x) = gain · x`.
    pub fn linear_gain(dim: usize, gain: f64) -> Self {
        Self::new(format!("linear_gain({gain})"), dim, dim, move |x| {
            ActionVector::from(x.iter().map(|c| gain * c).collect::<Vec<_>>())
        })
    }

    /// `f ≡ a`.
    pub fn constant(state_dim: usize, a: ActionVector) -> Self {
        Self::new(format!("constant({:?})", a.as_slice()), state_dim, a.dim(), move |_| a.clone())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    #[inline]
    pub fn apply(&self, x: &StateVector) -> ActionVector {
        (self.map)(x)
    }
}

/// Stationary policy taxonomy.
#[derive(Clone, Debug)]
pub enum Policy {
    Deterministic(DeterministicMap),
    Quantized {
        base: DeterministicMap,
        codebook: Arc<Codebook>,
    },
    Randomized(RandomizedPolicySpec),
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Deterministic(f) => f.label().to_string(),
            Policy::Quantized { base, codebook } => format!("q[{}]({})", codebook.len(), base.label()),
            Policy::Randomized(spec) => spec.description().to_string(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Policy::Deterministic(f) | Policy::Quantized { base: f, .. } => f.state_dim(),
            Policy::Randomized(spec) => spec.state_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Policy::Deterministic(f) | Policy::Quantized { base: f, .. } => f.action_dim(),
            Policy::Randomized(spec) => spec.action_dim(),
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, Policy::Randomized(_))
    }

    /// Unchecked action used by rollouts; `z` is ignored unless randomized.
    #[inline]
    pub fn act(&self, x: &StateVector, z: f64) -> ActionVector {
        match self {
            Policy::Deterministic(f) => f.apply(x),
            Policy::Quantized { base, codebook } => codebook.nearest_unchecked(&base.apply(x)).1.clone(),
            Policy::Randomized(spec) => spec.select(x, z),
        }
    }

    /// `f(x)`, `q_k(x)` or `f(x, z)`.
    pub fn policy_action(&self, x: &StateVector, z: Option<f64>) -> Result<ActionVector> {
        check_dim(self.state_dim(), x.dim(), "policy state")?;
        if !x.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        let z = match (self, z) {
            (Policy::Randomized(_), None) => return Err(Error::MissingRandomization),
            (Policy::Randomized(_), Some(z)) if !(0.0..=1.0).contains(&z) => {
                return Err(Error::InvalidRandomization(z))
            }
            (_, z) => z.unwrap_or(0.0),
        };
        let a = self.act(x, z);
        check_dim(self.action_dim(), a.dim(), "policy action")?;
        Ok(a)
    }

    pub(crate) fn check_against(&self, model: &MdpModel) -> Result<()> {
        check_dim(model.state_dim(), self.state_dim(), "policy state dimension")?;
        check_dim(model.action_dim(), self.action_dim(), "policy action dimension")
    }
}

/// Simulated history `x₀, a₀, c₀, …, x_N, a_N, c_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub actions: Vec<ActionVector>,
    pub costs: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn discounted_cost(&self, beta: f64) -> f64 {
        let mut weight = 1.0;
        let mut acc = 0.0;
        for c in &self.costs {
            acc += weight * c;
            weight *= beta;
        }
        acc
    }
}
