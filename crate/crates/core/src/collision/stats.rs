use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Per-class precision and recall of the probabilistic Bayes classifier,
/// reading `S` as its expected confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T: Scalar> {
    /// `None` when no probability mass is ever predicted into the class.
    pub precision: Option<T>,
    pub recall: T,
}

/// `recall_i = S_ii`, `precision_i = π_i S_ii / Σ_k π_k S_ki`.
pub fn precision_recall_from_s<T: Scalar>(s: &Matrix<T>, priors: &[T]) -> Result<Vec<ClassMetrics<T>>> {
    s.require_square()?;
    let k = s.rows();
    if priors.len() != k {
        return Err(Error::dim(format!("{} priors for a {k}x{k} matrix", priors.len())));
    }
    Ok((0..k)
        .map(|i| {
            let predicted: T = (0..k).map(|r| priors[r] * s[(r, i)]).sum();
            let hit = priors[i] * s[(i, i)];
            ClassMetrics { precision: (predicted > T::zero()).then(|| hit / predicted), recall: s[(i, i)] }
        })
        .collect())
}

/// `1 − 2 S₁₂` for a binary, equal-prior collision matrix, clamped to `[0, 1]`.
pub fn collision_divergence_from_s<T: Scalar>(s: &Matrix<T>) -> Result<T> {
    if s.rows() != 2 || s.cols() != 2 {
        return Err(Error::dim(format!("collision divergence needs a 2x2 matrix, got {}x{}", s.rows(), s.cols())));
    }
    Ok((T::one() - T::lit(2.0) * s[(0, 1)]).max(T::zero()).min(T::one()))
}
