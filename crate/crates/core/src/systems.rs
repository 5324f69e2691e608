//! Ready-made additive-noise systems with analytically known constants.
//!
//! * [`LinearTrackingSystem`]: `x' = A x + B a + v`, `v ~ N(0, σ²I)`, cost
//!   `min(‖x − a‖, cap)`. The identity policy tracks exactly and has cost 0.
//! * [`BoundedDriftSystem`]: scalar `x' = F(x, a) + v` with `|F| ≤ L`, for
//!   which every stationary policy is geometrically ergodic with explicit
//!   `(C, κ)`.
//! * [`AdditiveNoiseSystem`]: the general `x' = F(x, a) + v`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::bounds::{ergodicity_constants_bounded_gaussian, gaussian_kernel_tv_lipschitz};
use crate::error::{Error, Result};
use crate::mdp::{ActionBox, ActionVector, ConstantHints, CostFunction, MdpModel, StateVector, StreamRng};

type Sampler = dyn Fn(&mut StreamRng) -> Vec<f64> + Send + Sync;
type Density = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Distribution of the additive disturbance `v_n` (also used for `x₀`).
#[derive(Clone)]
pub enum NoiseSpec {
    Gaussian { dim: usize, sigma: f64 },
    Uniform { dim: usize, half_width: f64 },
    Custom {
        dim: usize,
        sampler: Arc<Sampler>,
        density: Option<Arc<Density>>,
        entropy_bits: Option<f64>,
    },
}

impl fmt::Debug for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Gaussian { dim, sigma } => write!(f, "Gaussian(d={dim}, σ={sigma})"),
            NoiseSpec::Uniform { dim, half_width } => write!(f, "Uniform(d={dim}, ±{half_width})"),
            NoiseSpec::Custom { dim, .. } => write!(f, "Custom(d={dim})"),
        }
    }
}

impl NoiseSpec {
    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        require_positive("sigma", sigma)?;
        Ok(NoiseSpec::Gaussian { dim, sigma })
    }

    pub fn uniform(dim: usize, half_width: f64) -> Result<Self> {
        require_positive("half_width", half_width)?;
        Ok(NoiseSpec::Uniform { dim, half_width })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::Gaussian { dim, .. } | NoiseSpec::Uniform { dim, .. } | NoiseSpec::Custom { dim, .. } => *dim,
        }
    }

    pub fn gaussian_sigma(&self) -> Option<f64> {
        match self {
            NoiseSpec::Gaussian { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            NoiseSpec::Gaussian { dim, sigma } => (0..*dim)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            NoiseSpec::Uniform { dim, half_width } => (0..*dim)
                .map(|_| rng.random_range(-*half_width..=*half_width))
                .collect(),
            NoiseSpec::Custom { sampler, .. } => sampler(rng),
        }
    }

    /// Density at `v`, when one is declared.
    pub fn density(&self, v: &[f64]) -> Option<f64> {
        match self {
            NoiseSpec::Gaussian { sigma, .. } => {
                let sq: f64 = v.iter().map(|c| c * c).sum();
                let norm = (2.0 * PI * sigma * sigma).powf(v.len() as f64 / 2.0);
                Some((-sq / (2.0 * sigma * sigma)).exp() / norm)
            }
            NoiseSpec::Uniform { dim, half_width } => {
                let inside = v.iter().all(|c| c.abs() <= *half_width);
                Some(if inside { (2.0 * half_width).powi(-(*dim as i32)) } else { 0.0 })
            }
            NoiseSpec::Custom { density, .. } => density.as_ref().map(|g| g(v)),
        }
    }

    /// Differential entropy `h(g)` in bits.
    pub fn entropy_bits(&self) -> Option<f64> {
        match self {
            NoiseSpec::Gaussian { dim, sigma } => Some(0.5 * *dim as f64 * (2.0 * PI * E * sigma * sigma).log2()),
            NoiseSpec::Uniform { dim, half_width } => Some(*dim as f64 * (2.0 * half_width).log2()),
            NoiseSpec::Custom { entropy_bits, .. } => *entropy_bits,
        }
    }
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")))
    }
}

fn check_discount(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {beta}")))
    }
}

/// Default cap on the tracking cost: `20σ√d`.
pub fn default_tracking_cap(sigma: f64, d: usize) -> f64 {
    20.0 * sigma * (d as f64).sqrt()
}

/// Spectral norm of a matrix (largest singular value).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `x_{n+1} = A x_n + B a_n + v_n` with `v_n ~ N(0, σ²I)`.
#[derive(Clone, Debug)]
pub struct LinearTrackingSystem {
    pub dim: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma: f64,
    pub cost: CostFunction,
    pub discount: f64,
    /// Box the action codebooks are built on; actions themselves are unconstrained.
    pub action_box: Option<ActionBox>,
}

impl LinearTrackingSystem {
    pub fn new(dim: usize, a: DMatrix<f64>, b: DMatrix<f64>, sigma: f64, cost_cap: f64, discount: f64) -> Result<Self> {
        require_positive("sigma", sigma)?;
        require_positive("cost_cap", cost_cap)?;
        check_discount(discount)?;
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            dim,
            a,
            b,
            sigma,
            cost: CostFunction::tracking(cost_cap)?,
            discount,
            action_box: None,
        })
    }

    /// Replace the tracking cost, e.g. by a state-only cost.
    pub fn with_cost(mut self, cost: CostFunction) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_action_box(mut self, action_box: ActionBox) -> Result<Self> {
        if action_box.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: action_box.dim(),
                context: "action box",
            });
        }
        self.action_box = Some(action_box);
        Ok(self)
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec::Gaussian {
            dim: self.dim,
            sigma: self.sigma,
        }
    }

    /// `K₂ = 2‖B‖/(σ√(2π))`.
    pub fn kernel_tv_lipschitz(&self) -> f64 {
        gaussian_kernel_tv_lipschitz(operator_norm(&self.b), self.sigma)
    }

    pub fn build(&self) -> Result<MdpModel> {
        let d = self.dim;
        let (a, b, sigma) = (self.a.clone(), self.b.clone(), self.sigma);
        let noise = self.noise();
        let init_noise = noise.clone();
        let mut builder = MdpModel::builder(d, d)
            .label(format!("linear_tracking(d={d}, σ={sigma})"))
            .transition(move |x, u, rng| {
                let v = noise.sample(rng);
                let next = (0..d)
                    .map(|i| {
                        let ax: f64 = (0..d).map(|j| a[(i, j)] * x[j]).sum();
                        let bu: f64 = (0..d).map(|j| b[(i, j)] * u[j]).sum();
                        ax + bu + v[i]
                    })
                    .collect::<Vec<_>>();
                StateVector::from(next)
            })
            .cost(self.cost.clone())
            .discount(self.discount)
            .initial(move |rng| StateVector::from(init_noise.sample(rng)))
            .hints(ConstantHints {
                kernel_tv_lipschitz: Some(self.kernel_tv_lipschitz()),
                ergodicity: None,
                noise_entropy_bits: self.noise().entropy_bits(),
            });
        if let Some(bx) = &self.action_box {
            builder = builder.action_box(bx.clone());
        }
        builder.build()
    }
}

/// Linear system with the clipped tracking cost; `f(x) = x` is optimal with cost 0.
pub fn make_linear_tracking(
    d: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma: f64,
    cost_cap: f64,
    beta: f64,
) -> Result<MdpModel> {
    LinearTrackingSystem::new(d, a, b, sigma, cost_cap, beta)?.build()
}

type ScalarDrift = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Scalar `x_{n+1} = F(x_n, a_n) + v_n` with `F(ℝ × A) ⊂ [−L, L]`, Gaussian `v_n`.
#[derive(Clone)]
pub struct BoundedDriftSystem {
    pub drift_bound: f64,
    pub sigma: f64,
    pub drift: Arc<ScalarDrift>,
    pub action_box: ActionBox,
    pub cost: CostFunction,
    pub discount: f64,
    /// Lipschitz constant of `a ↦ F(x, a)`, uniform in `x`.
    pub drift_action_lipschitz: Option<f64>,
    /// Half-width of the state interval the drift bound is checked on.
    pub test_half_width: f64,
}

impl fmt::Debug for BoundedDriftSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedDriftSystem")
            .field("drift_bound", &self.drift_bound)
            .field("sigma", &self.sigma)
            .field("action_box", &self.action_box)
            .field("cost", &self.cost)
            .finish()
    }
}

/// Number of random points the drift bound is checked on.
pub const DRIFT_CHECK_SAMPLES: usize = 100_000;

impl BoundedDriftSystem {
    pub fn new<F>(drift_bound: f64, sigma: f64, drift: F, action_box: ActionBox, cost: CostFunction) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            drift_bound,
            sigma,
            drift: Arc::new(drift),
            action_box,
            cost,
            discount: 0.9,
            drift_action_lipschitz: None,
            test_half_width: 100.0,
        }
    }

    pub fn with_drift_action_lipschitz(mut self, l: f64) -> Self {
        self.drift_action_lipschitz = Some(l);
        self
    }

    pub fn with_discount(mut self, beta: f64) -> Self {
        self.discount = beta;
        self
    }

    /// Falsification check of `|F| ≤ L` on random points.
    ///
    /// Half of the states are uniform on `[−w, w]`, the other half have
    /// log-uniform magnitudes in `[10⁻³, 10⁶]` so unbounded drifts show up.
    pub fn check_drift(&self) -> Result<()> {
        let mut rng = StreamRng::seed_from_u64(0x5eed_d41f);
        let w = self.test_half_width;
        for i in 0..DRIFT_CHECK_SAMPLES {
            let x = if i % 2 == 0 {
                rng.random_range(-w..=w)
            } else {
                let mag = 10f64.powf(rng.random_range(-3.0..6.0));
                if rng.random::<bool>() { mag } else { -mag }
            };
            let a: Vec<f64> = self
                .action_box
                .lo()
                .iter()
                .zip(self.action_box.hi())
                .map(|(l, h)| if l < h { rng.random_range(*l..=*h) } else { *l })
                .collect();
            let value = (self.drift)(x, &a);
            if value.is_nan() || value.abs() > self.drift_bound {
                return Err(Error::DriftUnbounded {
                    bound: self.drift_bound,
                    x: vec![x],
                    a,
                    value: value.abs(),
                });
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<MdpModel> {
        require_positive("drift bound", self.drift_bound)?;
        require_positive("sigma", self.sigma)?;
        check_discount(self.discount)?;
        self.check_drift()?;
        let (c, kappa, _) = ergodicity_constants_bounded_gaussian(self.drift_bound, self.sigma)?;
        let noise = NoiseSpec::gaussian(1, self.sigma)?;
        let init_noise = noise.clone();
        let drift = self.drift.clone();
        MdpModel::builder(1, self.action_box.dim())
            .label(format!("bounded_drift(L={}, σ={})", self.drift_bound, self.sigma))
            .action_box(self.action_box.clone())
            .transition(move |x, a, rng| StateVector::from(vec![drift(x[0], a) + noise.sample(rng)[0]]))
            .cost(self.cost.clone())
            .discount(self.discount)
            .initial(move |rng| StateVector::from(init_noise.sample(rng)))
            .hints(ConstantHints {
                kernel_tv_lipschitz: self
                    .drift_action_lipschitz
                    .map(|l| gaussian_kernel_tv_lipschitz(l, self.sigma)),
                ergodicity: Some((c, kappa)),
                noise_entropy_bits: NoiseSpec::gaussian(1, self.sigma)?.entropy_bits(),
            })
            .build()
    }
}

/// Scalar bounded-drift model; fails if sampling finds `|F(x, a)| > L`.
pub fn make_bounded_drift<F>(
    drift_bound: f64,
    sigma: f64,
    drift: F,
    action_box: ActionBox,
    cost: CostFunction,
) -> Result<MdpModel>
where
    F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
{
    BoundedDriftSystem::new(drift_bound, sigma, drift, action_box, cost).build()
}

type VectorDrift = dyn Fn(&StateVector, &ActionVector) -> Vec<f64> + Send + Sync;

/// `x_{n+1} = F(x_n, a_n) + v_n`, `x₀` drawn from the noise law unless set.
#[derive(Clone)]
pub struct AdditiveNoiseSystem {
    pub state_dim: usize,
    pub drift: Arc<VectorDrift>,
    pub noise: NoiseSpec,
    pub action_box: ActionBox,
    pub cost: CostFunction,
    pub discount: f64,
    pub drift_action_lipschitz: Option<f64>,
}

impl fmt::Debug for AdditiveNoiseSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveNoiseSystem")
            .field("state_dim", &self.state_dim)
            .field("noise", &self.noise)
            .field("action_box", &self.action_box)
            .finish()
    }
}

impl AdditiveNoiseSystem {
    pub fn with_discount(mut self, beta: f64) -> Self {
        self.discount = beta;
        self
    }

    pub fn with_drift_action_lipschitz(mut self, l: f64) -> Self {
        self.drift_action_lipschitz = Some(l);
        self
    }

    pub fn build(&self) -> Result<MdpModel> {
        check_discount(self.discount)?;
        let n = self.state_dim;
        if self.noise.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.noise.dim(),
                context: "noise dimension",
            });
        }
        let (drift, noise) = (self.drift.clone(), self.noise.clone());
        let init_noise = self.noise.clone();
        let k2 = match (self.noise.gaussian_sigma(), self.drift_action_lipschitz) {
            (Some(sigma), Some(l)) => Some(gaussian_kernel_tv_lipschitz(l, sigma)),
            _ => None,
        };
        MdpModel::builder(n, self.action_box.dim())
            .label(format!("additive_noise({:?})", self.noise))
            .action_box(self.action_box.clone())
            .transition(move |x, a, rng| {
                let v = noise.sample(rng);
                StateVector::from(drift(x, a).into_iter().zip(v).map(|(f, v)| f + v).collect::<Vec<_>>())
            })
            .cost(self.cost.clone())
            .discount(self.discount)
            .initial(move |rng| StateVector::from(init_noise.sample(rng)))
            .hints(ConstantHints {
                kernel_tv_lipschitz: k2,
                ergodicity: None,
                noise_entropy_bits: self.noise.entropy_bits(),
            })
            .build()
    }
}

/// General additive-noise model.
pub fn make_additive_noise<F>(drift: F, noise: NoiseSpec, action_box: ActionBox, cost: CostFunction) -> Result<MdpModel>
where
    F: Fn(&StateVector, &ActionVector) -> Vec<f64> + Send + Sync + 'static,
{
    AdditiveNoiseSystem {
        state_dim: noise.dim(),
        drift: Arc::new(drift),
        noise,
        action_box,
        cost,
        discount: 0.9,
        drift_action_lipschitz: None,
    }
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{DeterministicMap, Policy};
    use crate::simulate::{rollout, InitialState, RunSeed};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn linear_tracking_identity_has_zero_cost() {
        let m = make_linear_tracking(1, scalar(1.0), scalar(1.0), 1.0, 20.0, 0.9).unwrap();
        let p = Policy::Deterministic(DeterministicMap::identity(1));
        for seed in 0..5 {
            let t = rollout(&m, &p, InitialState::Sample, 100, RunSeed::new(seed).stream(0)).unwrap();
            assert_eq!(t.costs.len(), 101);
            assert!(t.costs.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn tiny_noise_variant_tracks() {
        let m = make_linear_tracking(1, scalar(0.5), scalar(0.5), 1e-9, 1.0, 0.9).unwrap();
        let p = Policy::Deterministic(DeterministicMap::identity(1));
        let t = rollout(&m, &p, InitialState::Sample, 50, RunSeed::new(1).stream(0)).unwrap();
        assert!(t.total_cost() < 1e-12);
    }

    #[test]
    fn linear_tracking_rejects_bad_parameters() {
        assert!(make_linear_tracking(1, scalar(1.0), scalar(1.0), 0.0, 1.0, 0.9).is_err());
        assert!(make_linear_tracking(1, scalar(1.0), scalar(1.0), 1.0, -1.0, 0.9).is_err());
        assert!(make_linear_tracking(1, scalar(1.0), scalar(1.0), 1.0, 1.0, 1.0).is_err());
        assert!(make_linear_tracking(2, scalar(1.0), scalar(1.0), 1.0, 1.0, 0.9).is_err());
    }

    #[test]
    fn linear_tracking_k2_uses_operator_norm() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let sys = LinearTrackingSystem::new(2, DMatrix::zeros(2, 2), b, 1.0, 10.0, 0.9).unwrap();
        assert!((sys.kernel_tv_lipschitz() - 4.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    fn tanh_half_action(x: f64, a: &[f64]) -> f64 {
        x.tanh() + 0.5 * a[0]
    }

    #[test]
    fn bounded_drift_accepts_bounded_f() {
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        let m = make_bounded_drift(1.5, 1.0, tanh_half_action, b, CostFunction::positive_indicator().unwrap()).unwrap();
        let (c, kappa) = m.hints().ergodicity.unwrap();
        assert_eq!(c, 2.0);
        assert!(kappa > 0.0 && kappa < 1.0);
    }

    #[test]
    fn bounded_drift_rejects_identity_drift() {
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        for bound in [1.0, 1e3, 1e5] {
            let err = make_bounded_drift(bound, 1.0, |x, _| x, b.clone(), CostFunction::positive_indicator().unwrap())
                .unwrap_err();
            match err {
                Error::DriftUnbounded { x, value, .. } => {
                    assert!(value > bound);
                    assert!(x[0].abs() > bound);
                }
                other => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn additive_noise_reproduces_linear_tracking() {
        let lt = make_linear_tracking(1, scalar(0.7), scalar(0.3), 1.0, 20.0, 0.9).unwrap();
        let an = make_additive_noise(
            |x, a| vec![0.7 * x[0] + 0.3 * a[0]],
            NoiseSpec::gaussian(1, 1.0).unwrap(),
            ActionBox::symmetric(1, 5.0).unwrap(),
            CostFunction::tracking(20.0).unwrap(),
        )
        .unwrap();
        let p = Policy::Deterministic(DeterministicMap::linear_gain(1, -0.2));
        for seed in 0..3 {
            let s = RunSeed::new(seed);
            let t1 = rollout(&lt, &p, InitialState::Sample, 30, s.stream(4)).unwrap();
            let t2 = rollout(&an, &p, InitialState::Sample, 30, s.stream(4)).unwrap();
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn action_independent_kernel_has_zero_k2() {
        let m = AdditiveNoiseSystem {
            state_dim: 1,
            drift: Arc::new(|x: &StateVector, _: &ActionVector| vec![x[0].clamp(-1.0, 1.0)]),
            noise: NoiseSpec::gaussian(1, 1.0).unwrap(),
            action_box: ActionBox::symmetric(1, 1.0).unwrap(),
            cost: CostFunction::tracking(5.0).unwrap(),
            discount: 0.9,
            drift_action_lipschitz: Some(0.0),
        }
        .build()
        .unwrap();
        assert_eq!(m.hints().kernel_tv_lipschitz, Some(0.0));
    }

    #[test]
    fn noise_entropies() {
        let g = NoiseSpec::gaussian(1, 1.0).unwrap();
        assert!((g.entropy_bits().unwrap() - 2.047095585180641).abs() < 1e-12);
        let u = NoiseSpec::uniform(1, 1.0).unwrap();
        assert_eq!(u.entropy_bits(), Some(1.0));
        assert!((g.density(&[0.0]).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
    }
}
