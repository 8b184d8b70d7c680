//! Collision-matrix estimation through the row Gramian.
//!
//! Part one estimates `Ĝ_ij` as the mean similarity of cross pairs drawn
//! from classes `i` and `j`; part two recovers `Ŝ` with `ŜŜᵀ ≈ Ĝ`.

mod gramian;
mod recovery;
mod stats;

pub use gramian::{estimate_gramian, GramianEstimate};
pub use recovery::{
    objective, penalty_subgradient, project_row_stochastic, recover_collision_matrix, smooth_gradient,
    smooth_objective, stochasticity_penalty, Init, Recovery, RecoveryConfig,
};
pub use stats::{collision_divergence_from_s, precision_recall_from_s, ClassMetrics};
