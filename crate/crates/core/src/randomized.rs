//! Randomized stationary policies in the `f(x, z)` form.
//!
//! A kernel `η(·|x)` is represented by a selector `f(x, z)` with
//! `z ~ Uniform[0, 1]` drawn afresh at every stage. Only finite mixtures
//! are constructed here: `z` is split into consecutive intervals of the
//! mixture weights, each interval handing control to one deterministic
//! component. Intervals are left-closed and right-open, the last one closed.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{check_dim, ActionVector, DeterministicMap, StateVector};
use crate::quantizer::Codebook;

type Selector = dyn Fn(&StateVector, f64) -> ActionVector + Send + Sync;

#[derive(Clone)]
pub struct RandomizedPolicySpec {
    description: String,
    state_dim: usize,
    action_dim: usize,
    weights: Vec<f64>,
    selector: Arc<Selector>,
}

impl fmt::Debug for RandomizedPolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomizedPolicySpec")
            .field("description", &self.description)
            .field("weights", &self.weights)
            .finish()
    }
}

impl RandomizedPolicySpec {
    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Mixture weights, i.e. the lengths of the `z`-intervals.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn select(&self, x: &StateVector, z: f64) -> ActionVector {
        (self.selector)(x, z)
    }
}

/// Index of the cumulative-weight interval containing `z`.
fn interval_of(cumulative: &[f64], z: f64) -> usize {
    let last = cumulative.len() - 1;
    cumulative[..last].partition_point(|&c| c <= z)
}

/// `f(x, z) = component_i(x)` for `z` in the `i`-th weight interval.
pub fn from_finite_mixture(weights: &[f64], components: Vec<DeterministicMap>) -> Result<RandomizedPolicySpec> {
    if weights.is_empty() || weights.len() != components.len() {
        return Err(Error::InvalidParameter(format!(
            "mixture needs one weight per component ({} weights, {} components)",
            weights.len(),
            components.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter(format!("mixture weights must be nonnegative: {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("mixture weights sum to {total}, not 1")));
    }
    let state_dim = components[0].state_dim();
    let action_dim = components[0].action_dim();
    for c in &components {
        check_dim(state_dim, c.state_dim(), "mixture component state")?;
        check_dim(action_dim, c.action_dim(), "mixture component action")?;
    }
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let description = format!(
        "mixture[{}]",
        components
            .iter()
            .zip(weights)
            .map(|(c, w)| format!("{w}:{}", c.label()))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(RandomizedPolicySpec {
        description,
        state_dim,
        action_dim,
        weights: weights.to_vec(),
        selector: Arc::new(move |x, z| components[interval_of(&cumulative, z)].apply(x)),
    })
}

/// `q_k(x, z) = argmin_{λ ∈ Λ} ‖f(x, z) − λ‖`.
pub fn quantize_randomized(spec: &RandomizedPolicySpec, codebook: Arc<Codebook>) -> Result<RandomizedPolicySpec> {
    check_dim(spec.action_dim, codebook.dim(), "codebook dimension")?;
    let inner = spec.selector.clone();
    Ok(RandomizedPolicySpec {
        description: format!("q[{}]({})", codebook.len(), spec.description),
        state_dim: spec.state_dim,
        action_dim: spec.action_dim,
        weights: spec.weights.clone(),
        selector: Arc::new(move |x, z| codebook.nearest_unchecked(&inner(x, z)).1.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionBox, Policy};
    use crate::quantizer::{build_uniform_net, quantize_policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn av(v: f64) -> ActionVector {
        ActionVector::new(vec![v]).unwrap()
    }

    fn sv(v: f64) -> StateVector {
        StateVector::new(vec![v]).unwrap()
    }

    fn constants(values: &[f64]) -> Vec<DeterministicMap> {
        values.iter().map(|&v| DeterministicMap::constant(1, av(v))).collect()
    }

    #[test]
    fn single_component_is_deterministic() {
        let spec = from_finite_mixture(&[1.0], vec![DeterministicMap::identity(1)]).unwrap();
        for z in [0.0, 0.3, 0.999, 1.0] {
            assert_eq!(spec.select(&sv(2.5), z), av(2.5));
        }
    }

    #[test]
    fn interval_boundary_goes_right() {
        let spec = from_finite_mixture(&[0.5, 0.5], constants(&[0.0, 1.0])).unwrap();
        assert_eq!(spec.select(&sv(0.0), 0.3), av(0.0));
        assert_eq!(spec.select(&sv(0.0), 0.5), av(1.0));
        assert_eq!(spec.select(&sv(0.0), 1.0), av(1.0));
        assert_eq!(spec.select(&sv(0.0), 0.0), av(0.0));
    }

    #[test]
    fn zero_weight_component_is_never_selected() {
        let spec = from_finite_mixture(&[0.5, 0.0, 0.5], constants(&[0.0, 5.0, 1.0])).unwrap();
        assert_eq!(spec.select(&sv(0.0), 0.5), av(1.0));
        assert_eq!(spec.select(&sv(0.0), 0.49), av(0.0));
    }

    #[test]
    fn bad_weights_are_rejected() {
        assert!(from_finite_mixture(&[0.5, 0.6], constants(&[0.0, 1.0])).is_err());
        assert!(from_finite_mixture(&[1.5, -0.5], constants(&[0.0, 1.0])).is_err());
        assert!(from_finite_mixture(&[1.0], constants(&[0.0, 1.0])).is_err());
        assert!(from_finite_mixture(&[], vec![]).is_err());
        let mixed = vec![DeterministicMap::identity(1), DeterministicMap::identity(2)];
        assert!(from_finite_mixture(&[0.5, 0.5], mixed).is_err());
    }

    #[test]
    fn empirical_frequencies_match_weights() {
        let spec = from_finite_mixture(&[0.25, 0.75], constants(&[0.0, 1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| spec.select(&sv(0.0), rng.random::<f64>())[0] == 1.0)
            .count() as f64;
        // binomial oracle: sd = sqrt(n p (1-p))
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        assert!((ones - 0.75 * n as f64).abs() < 3.0 * sd, "ones = {ones}");
    }

    #[test]
    fn quantized_mixture_snaps_components() {
        let spec = from_finite_mixture(&[0.5, 0.5], constants(&[0.1, 0.9])).unwrap();
        let cb = Arc::new(Codebook::from_levels(vec![av(0.0), av(1.0)]).unwrap());
        let q = quantize_randomized(&spec, cb).unwrap();
        assert_eq!(q.select(&sv(3.0), 0.2), av(0.0));
        assert_eq!(q.select(&sv(3.0), 0.7), av(1.0));
    }

    #[test]
    fn degenerate_mixture_agrees_with_quantize_policy() {
        let b = ActionBox::symmetric(1, 2.0).unwrap();
        let cb = Arc::new(build_uniform_net(&b, 7).unwrap());
        let spec = from_finite_mixture(&[1.0], vec![DeterministicMap::identity(1)]).unwrap();
        let qr = quantize_randomized(&spec, cb.clone()).unwrap();
        let qd = quantize_policy(&Policy::Deterministic(DeterministicMap::identity(1)), cb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1_000 {
            let x = sv(rng.random_range(-3.0..3.0));
            let z = rng.random::<f64>();
            assert_eq!(qr.select(&x, z), qd.act(&x, z));
        }
    }

    #[test]
    fn quantization_gap_shrinks_with_radius() {
        let spec = from_finite_mixture(
            &[0.4, 0.6],
            vec![DeterministicMap::clamped_identity(ActionBox::symmetric(1, 1.0).unwrap()), DeterministicMap::linear_gain(1, 0.5)],
        )
        .unwrap();
        let b = ActionBox::symmetric(1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pairs: Vec<(f64, f64)> = (0..10_000).map(|_| (rng.random_range(-2.0..2.0), rng.random::<f64>())).collect();
        let mut previous = f64::INFINITY;
        for k in [4, 16, 64, 256, 1024] {
            let cb = Arc::new(build_uniform_net(&b, k).unwrap());
            let radius = cb.covering_radius().unwrap();
            let q = quantize_randomized(&spec, cb).unwrap();
            let gap = pairs
                .iter()
                .map(|&(x, z)| (q.select(&sv(x), z)[0] - spec.select(&sv(x), z)[0]).abs())
                .fold(0.0, f64::max);
            assert!(gap <= radius + 1e-12, "k={k}: gap {gap} > radius {radius}");
            assert!(radius < previous);
            previous = radius;
        }
    }
}
