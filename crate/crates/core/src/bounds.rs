//! Closed-form approximation bounds for quantized policies.
//!
//! Upper bounds on `|w(π) − w(π^k)|`:
//!
//! ```text
//! discounted:  K (1/k)^{1/d},  K = α/(1−β) · (K₁ − βK₂M + 2βMK₂/(1−β))
//! average:     2MCκⁿ + K_n (1/k)^{1/d},  K_n = (2n−1)K₂αM + K₁α,  any n ≥ 0
//! ```
//!
//! and the rate-distortion (Shannon) lower bound for the tracking example,
//! `D ≥ L (1/k)^{1/d}` with `L = (d/2)(2^{h(g)} / (d V_d Γ(d)))^{1/d}`.
//!
//! Total variation follows the `2 sup_B |μ(B) − ν(B)|` convention, range `[0, 2]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::mdp::{ActionBox, MdpModel};

/// Constants entering the upper bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConstants {
    pub alpha: f64,
    pub beta: f64,
    pub k1: f64,
    pub k2: f64,
    pub m: f64,
    pub c: Option<f64>,
    pub kappa: Option<f64>,
    pub d: usize,
}

impl SystemConstants {
    /// Collects `α` from the codebook box and the rest from the model.
    pub fn derive(model: &MdpModel, codebook_box: &ActionBox) -> Result<Self> {
        let mut missing = Vec::new();
        let k1 = model.cost().action_lipschitz();
        if k1.is_none() {
            missing.push("K1");
        }
        let k2 = model.hints().kernel_tv_lipschitz;
        if k2.is_none() {
            missing.push("K2");
        }
        if !missing.is_empty() {
            return Err(Error::MissingConstant(missing.join(", ")));
        }
        let (c, kappa) = model.hints().ergodicity.unzip();
        Ok(Self {
            alpha: covering_alpha_for_box(codebook_box),
            beta: model.discount(),
            k1: k1.unwrap_or_default(),
            k2: k2.unwrap_or_default(),
            m: model.cost_bound(),
            c,
            kappa,
            d: codebook_box.dim(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    DiscountedUpper,
    AverageUpper,
    SlbLower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub k: usize,
    pub value: f64,
    /// Set when the leading constant is zero, so the bound carries no information
    /// about the rate.
    pub degenerate: bool,
    pub details: BTreeMap<String, f64>,
}

fn rate_factor(k: usize, d: usize) -> f64 {
    (1.0 / k as f64).powf(1.0 / d as f64)
}

fn check_k_d(k: usize, d: usize) -> Result<()> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("need k >= 1 and d >= 1, got k={k}, d={d}")));
    }
    Ok(())
}

/// Discounted-cost gap bound `K (1/k)^{1/d}`.
pub fn discounted_gap_bound(c: &SystemConstants, k: usize) -> Result<BoundReport> {
    if !(c.beta > 0.0 && c.beta < 1.0) {
        return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {}", c.beta)));
    }
    check_k_d(k, c.d)?;
    let b = c.beta;
    let big_k = c.alpha / (1.0 - b) * (c.k1 - b * c.k2 * c.m + 2.0 * b * c.m * c.k2 / (1.0 - b));
    Ok(BoundReport {
        kind: BoundKind::DiscountedUpper,
        k,
        value: big_k * rate_factor(k, c.d),
        degenerate: big_k <= 0.0,
        details: BTreeMap::from([("K".to_string(), big_k)]),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HorizonChoice {
    Fixed(usize),
    /// Minimize over `n ∈ {0, …, cap}`.
    Optimize { cap: usize },
}

impl HorizonChoice {
    pub const DEFAULT_CAP: usize = 10_000;

    pub fn optimize() -> Self {
        HorizonChoice::Optimize { cap: Self::DEFAULT_CAP }
    }
}

/// `K_n = (2n − 1)K₂αM + K₁α`.
pub fn average_bound_slope(c: &SystemConstants, n: usize) -> f64 {
    (2.0 * n as f64 - 1.0) * c.k2 * c.alpha * c.m + c.k1 * c.alpha
}

/// Average-cost gap bound `2MCκⁿ + K_n (1/k)^{1/d}`.
pub fn average_gap_bound(c: &SystemConstants, k: usize, n: HorizonChoice) -> Result<BoundReport> {
    check_k_d(k, c.d)?;
    let (cc, kappa) = match (c.c, c.kappa) {
        (Some(cc), Some(kappa)) => (cc, kappa),
        (None, None) => return Err(Error::MissingConstant("C, kappa".into())),
        (None, _) => return Err(Error::MissingConstant("C".into())),
        (_, None) => return Err(Error::MissingConstant("kappa".into())),
    };
    if !(kappa > 0.0 && kappa < 1.0) || cc <= 0.0 {
        return Err(Error::InvalidParameter(format!("need C > 0 and kappa in (0, 1), got C={cc}, kappa={kappa}")));
    }
    let r = rate_factor(k, c.d);
    let eval = |n: usize| {
        let mixing = 2.0 * c.m * cc * kappa.powi(n as i32);
        (mixing + average_bound_slope(c, n) * r, mixing)
    };
    let (n_star, value) = match n {
        HorizonChoice::Fixed(n) => (n, eval(n).0),
        HorizonChoice::Optimize { cap } => {
            let (mut best_n, mut best) = (0, eval(0).0);
            for n in 1..=cap {
                let (v, mixing) = eval(n);
                if v < best {
                    best = v;
                    best_n = n;
                }
                if mixing <= f64::EPSILON * best.abs() {
                    break;
                }
            }
            (best_n, best)
        }
    };
    let k_n = average_bound_slope(c, n_star);
    Ok(BoundReport {
        kind: BoundKind::AverageUpper,
        k,
        value,
        degenerate: k_n <= 0.0,
        details: BTreeMap::from([
            ("n_star".to_string(), n_star as f64),
            ("K_n".to_string(), k_n),
            ("mixing_term".to_string(), 2.0 * c.m * cc * kappa.powi(n_star as i32)),
        ]),
    })
}

/// `(C, κ, ε)` for scalar `x' = F(x, a) + N(0, σ²)` with `|F| ≤ L`:
/// `C = 2`, `κ = 1 − εL`, `ε = exp(−(2L)²/(2σ²)) / (σ√(2π))`.
pub fn ergodicity_constants_bounded_gaussian(drift_bound: f64, sigma: f64) -> Result<(f64, f64, f64)> {
    if !(drift_bound > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need L > 0 and sigma > 0, got L={drift_bound}, sigma={sigma}"
        )));
    }
    let two_l = 2.0 * drift_bound;
    let eps = (-(two_l * two_l) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
    let kappa = 1.0 - eps * drift_bound;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} outside (0, 1)")));
    }
    Ok((2.0, kappa, eps))
}

/// `K₂ = 2 L_F / (σ√(2π))` for a Gaussian kernel whose mean is `L_F`-Lipschitz in the action.
pub fn gaussian_kernel_tv_lipschitz(lipschitz_in_action: f64, sigma: f64) -> f64 {
    2.0 * lipschitz_in_action / (sigma * (2.0 * PI).sqrt())
}

/// `‖N(m, σ²I) − N(m′, σ²I)‖_TV = 2(2Φ(|Δ|/2σ) − 1)` with `|Δ| = ‖m − m′‖`.
pub fn gaussian_shift_tv(delta: f64, sigma: f64) -> f64 {
    2.0 * erf(delta.abs() / (2.0 * sigma * std::f64::consts::SQRT_2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyUnit {
    Bits,
    Nats,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entropy {
    pub value: f64,
    pub unit: EntropyUnit,
}

impl Entropy {
    pub fn bits(value: f64) -> Self {
        Self {
            value,
            unit: EntropyUnit::Bits,
        }
    }

    pub fn nats(value: f64) -> Self {
        Self {
            value,
            unit: EntropyUnit::Nats,
        }
    }

    pub fn in_bits(&self) -> f64 {
        match self.unit {
            EntropyUnit::Bits => self.value,
            EntropyUnit::Nats => self.value / std::f64::consts::LN_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlbCriterion {
    PerStage,
    Discounted(f64),
    Average,
}

/// Volume of the unit ball in ℝᵈ.
pub fn unit_ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
}

/// `L = (d/2)(2^h / (d V_d Γ(d)))^{1/d}`, `h` in bits.
pub fn slb_constant(d: usize, entropy: Entropy) -> f64 {
    let df = d as f64;
    df / 2.0 * (2f64.powf(entropy.in_bits()) / (df * unit_ball_volume(d) * gamma(df))).powf(1.0 / df)
}

/// Shannon lower bound on the distortion (or cost gap) of any `k`-level quantized policy.
pub fn slb_lower_bound(d: usize, entropy: Entropy, criterion: SlbCriterion, k: usize) -> Result<BoundReport> {
    check_k_d(k, d)?;
    if !entropy.value.is_finite() {
        return Err(Error::InvalidParameter("differential entropy must be finite".into()));
    }
    let l = slb_constant(d, entropy);
    let per_stage = l * rate_factor(k, d);
    let value = match criterion {
        SlbCriterion::PerStage | SlbCriterion::Average => per_stage,
        SlbCriterion::Discounted(beta) => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {beta}")));
            }
            per_stage / (1.0 - beta)
        }
    };
    Ok(BoundReport {
        kind: BoundKind::SlbLower,
        k,
        value,
        degenerate: false,
        details: BTreeMap::from([
            ("L".to_string(), l),
            ("entropy_bits".to_string(), entropy.in_bits()),
            ("V_d".to_string(), unit_ball_volume(d)),
        ]),
    })
}

/// `α = √d · (max side)`, valid for the cell-centered uniform net.
pub fn covering_alpha_for_box(action_box: &ActionBox) -> f64 {
    (action_box.dim() as f64).sqrt() * action_box.max_side()
}
