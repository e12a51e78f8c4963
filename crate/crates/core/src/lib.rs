//! Adversarial training over decentralized networks with the adapt-then-combine
//! diffusion strategy, specialised to ℓ2-robust logistic regression.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`] builds doubly stochastic combination matrices.
//! - [`dataset`] generates the two-Gaussian synthetic data, shards it over
//!   agents and builds single-sample replacements.
//! - [`robust_loss`] holds the logistic kernels: clean loss, closed-form FGM
//!   perturbation, adversarial loss and gradient, smoothness constants.
//! - [`diffusion`] runs the adapt-then-combine recursion with seeded sampling
//!   and a full-batch minimiser.
//! - [`metrics`] measures empirical/population robust risk, the
//!   generalization gap, on-average model stability and the stability bound.
//! - [`experiment`] wires everything into reproducible sweeps with CSV output.

pub mod dataset;
pub mod diffusion;
mod error;
pub mod experiment;
pub mod metrics;
pub mod numeric;
pub mod rng;
pub mod robust_loss;
pub mod topology;

pub use error::{Error, Result};

/// A parameter vector `w ∈ R^d`.
pub type ModelVector = Vec<f64>;
