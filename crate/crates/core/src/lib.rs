//! Collision-matrix estimation from one-hot labeled data.
//!
//! A pairwise model `V(x, x̃)` estimates whether two inputs share a class. Its
//! class-pair averages estimate the Gramian `G = SSᵀ` of the collision matrix
//! `S`, which is recovered as a row-stochastic root. `Ŝ⁻¹q̂(x)` then gives
//! per-input posteriors. Linear algebra is generic over `f32`/`f64`.

pub mod error;
pub mod matrix;
pub mod mixture;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod simplex;
pub mod nn;
pub mod contrastive;
pub mod collision;
pub mod posterior;
pub mod baselines;
pub mod harness;

pub use collision::{estimate_gramian, recover_collision_matrix, Recovery, RecoveryConfig};
pub use contrastive::{train_contrastive, ContrastiveConfig, ContrastiveModel, PriorCorrected, Similarity};
pub use error::{Error, Result};
pub use harness::{run_scenario, Method, Preset, RunReport, ScenarioConfig};
pub use matrix::Matrix;
pub use mixture::{Dataset, GaussianMixture};
pub use posterior::{estimate_posterior, PosteriorEstimate};
pub use scalar::Scalar;
pub use simplex::SimplexVector;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type SimplexVector64 = SimplexVector<f64>;
pub type SimplexVector32 = SimplexVector<f32>;
pub type Recovery64 = Recovery<f64>;
pub type RecoveryConfig64 = RecoveryConfig<f64>;
pub type PosteriorEstimate64 = PosteriorEstimate<f64>;
