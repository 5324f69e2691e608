//! Quantized stationary policies for Markov decision processes on Euclidean
//! state and action spaces.
//!
//! The crate builds finite-action policies `q_k ∘ f` from a stationary policy
//! `f` and a uniform net of `k` levels, simulates both on the same noise,
//! and evaluates analytical upper bounds and Shannon lower bounds on the
//! resulting cost gap.

pub mod bounds;
pub mod error;
pub mod mdp;
pub mod measures;
pub mod quantizer;
pub mod randomized;
pub mod simulate;
pub mod systems;

pub use error::{Error, Result};
pub use mdp::{ActionBox, ActionVector, CostFunction, DeterministicMap, MdpModel, Policy, StateVector};
pub use quantizer::{build_uniform_net, quantize_policy, Codebook};
pub use simulate::{InitialState, RunSeed};
