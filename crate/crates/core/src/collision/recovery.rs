//! Recovery of a collision matrix from its row Gramian by penalized descent.
//!
//! Minimizes
//!
//! ```text
//! ‖Ŝ Ŝᵀ − Ĝ‖²_F + λ ( ‖Ŝ𝟙 − 𝟙‖₁ − Σ_ij min(Ŝ_ij, 0) )
//! ```
//!
//! starting from the identity (or a supplied diagonally dominant matrix),
//! until the unsquared residual `‖Ŝ Ŝᵀ − Ĝ‖_F` drops below `γ`. Steps that
//! would increase the objective are halved until they do not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Step halvings tried before the descent is declared stalled.
const MAX_HALVINGS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum Init<T: Scalar> {
    Identity,
    Matrix(Matrix<T>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RecoveryConfig<T: Scalar> {
    /// Base step size η.
    pub learning_rate: T,
    /// Penalty weight λ.
    pub penalty: T,
    /// Stop once `‖ŜŜᵀ − Ĝ‖_F ≤ γ`.
    pub tolerance: T,
    pub max_iterations: usize,
    pub init: Init<T>,
    /// Re-symmetrize Ŝ after every step.
    pub enforce_symmetry: bool,
}

impl<T: Scalar> RecoveryConfig<T> {
    /// λ = 10, η = 1e-2, γ = 1e-4·K, 50 000 iterations, identity start, symmetric.
    pub fn for_classes(k: usize) -> Self {
        Self {
            learning_rate: T::lit(1e-2),
            penalty: T::lit(10.0),
            tolerance: T::lit(1e-4 * k as f64),
            max_iterations: 50_000,
            init: Init::Identity,
            enforce_symmetry: true,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !(pos(self.learning_rate) && pos(self.penalty) && pos(self.tolerance)) {
            return Err(Error::arg("learning rate, penalty and tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::arg("max_iterations must be at least 1"));
        }
        if let Init::Matrix(m) = &self.init {
            if m.rows() != k || m.cols() != k {
                return Err(Error::dim(format!("initial matrix is {}x{}, expected {k}x{k}", m.rows(), m.cols())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Recovery<T: Scalar> {
    /// Final estimate: clipped non-negative and row-normalized.
    pub s: Matrix<T>,
    /// Last descent iterate before the final projection.
    pub raw: Matrix<T>,
    /// `‖Ŝ Ŝᵀ − Ĝ‖_F` of the raw iterate; at most γ on success.
    pub residual: T,
    /// Same residual measured on the projected estimate.
    pub projected_residual: T,
    pub iterations: usize,
    pub initial_objective: T,
    pub final_objective: T,
    /// Largest objective change across accepted steps (≤ 0 by construction).
    pub max_objective_increase: T,
    pub diag_dominant: bool,
    pub warnings: Vec<String>,
}

/// `‖S Sᵀ − G‖²_F`.
pub fn smooth_objective<T: Scalar>(s: &Matrix<T>, g: &Matrix<T>) -> T {
    let e = s.gram().sub(g).expect("shapes checked by caller");
    e.entries().iter().map(|&v| v * v).sum()
}

/// `2 (E + Eᵀ) S` with `E = S Sᵀ − G`, the gradient of [`smooth_objective`].
pub fn smooth_gradient<T: Scalar>(s: &Matrix<T>, g: &Matrix<T>) -> Matrix<T> {
    let e = s.gram().sub(g).expect("shapes checked by caller");
    let sym = e.add(&e.transpose()).unwrap();
    sym.matmul(s).unwrap().scale(T::lit(2.0))
}

/// `‖S𝟙 − 𝟙‖₁ − Σ min(S_ij, 0)`.
pub fn stochasticity_penalty<T: Scalar>(s: &Matrix<T>) -> T {
    let rows: T = s.row_sums().into_iter().map(|r| (r - T::one()).abs()).sum();
    let neg: T = s.entries().iter().map(|&v| v.min(T::zero())).sum();
    rows - neg
}

fn row_dead_zone<T: Scalar>() -> T {
    T::epsilon().sqrt()
}

fn row_signs<T: Scalar>(s: &Matrix<T>) -> Vec<T> {
    let dead = row_dead_zone::<T>();
    s.row_sums()
        .into_iter()
        .map(|r| {
            let e = r - T::one();
            if e > dead {
                T::one()
            } else if e < -dead {
                -T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

fn negative_part<T: Scalar>(s: &Matrix<T>) -> Matrix<T> {
    s.map(|v| if v < T::zero() { -T::one() } else { T::zero() })
}

/// Subgradient of [`stochasticity_penalty`]: `sign(row error)` on every entry
/// of a row plus `−1` on strictly negative entries. Row errors below
/// `√ε` count as zero.
pub fn penalty_subgradient<T: Scalar>(s: &Matrix<T>) -> Matrix<T> {
    let signs = row_signs(s);
    let neg = negative_part(s);
    Matrix::from_fn(s.rows(), s.cols(), |i, j| signs[i] + neg[(i, j)])
}

/// Descent direction `∇smooth + λ·b` for a step of size `eta`.
///
/// Any `t ∈ [−1, 1]` is a valid subgradient coefficient for a row whose sum
/// is within reach of 1. We pick the `t` that lands the row sum on 1 after
/// the step, clamped to the interval, so rows far from the constraint get
/// `sign(row error)`. A fixed sign overshoots near the constraint, the row
/// sums chatter around 1, and the line search shrinks the step to nothing.
fn descent_direction<T: Scalar>(s: &Matrix<T>, base: &Matrix<T>, lambda: T, eta: T, symmetric: bool) -> Result<Matrix<T>> {
    let k = s.rows();
    let kf = T::from_usize(k).unwrap();
    let sums = base.row_sums();
    let want: Vec<T> = s
        .row_sums()
        .into_iter()
        .zip(&sums)
        .map(|(r, &a)| ((r - T::one()) / eta - a) / lambda)
        .collect();
    let mut t: Vec<T> = if symmetric {
        // Row sums of sym(t𝟙ᵀ) are (K t_i + Σ_j t_j)/2.
        let total = want.iter().copied().sum::<T>() / kf;
        want.iter().map(|&w| (T::lit(2.0) * w - total) / kf).collect()
    } else {
        want.iter().map(|&w| w / kf).collect()
    };
    t.iter_mut().for_each(|v| *v = v.max(-T::one()).min(T::one()));
    let mut shift = Matrix::from_fn(k, k, |i, _| t[i]);
    if symmetric {
        shift = shift.symmetrized()?;
    }
    base.add(&shift.scale(lambda))
}

/// Smooth gradient plus the penalty's negative-entry part.
fn base_direction<T: Scalar>(s: &Matrix<T>, g: &Matrix<T>, lambda: T, symmetric: bool) -> Result<Matrix<T>> {
    let a = smooth_gradient(s, g).add(&negative_part(s).scale(lambda))?;
    if symmetric { a.symmetrized() } else { Ok(a) }
}

pub fn objective<T: Scalar>(s: &Matrix<T>, g: &Matrix<T>, penalty: T) -> T {
    smooth_objective(s, g) + penalty * stochasticity_penalty(s)
}

/// Clips negatives to zero and rescales each row to sum to one. Rows with no
/// positive entry become uniform.
pub fn project_row_stochastic<T: Scalar>(s: &Matrix<T>) -> Matrix<T> {
    let mut out = s.map(|v| v.max(T::zero()));
    let k = out.cols();
    for i in 0..out.rows() {
        let sum: T = out.row(i).iter().copied().sum();
        let row = out.row_mut(i);
        if sum > T::zero() {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            row.iter_mut().for_each(|v| *v = T::one() / T::from_usize(k).unwrap());
        }
    }
    out
}

/// Penalized gradient descent from `Ĝ` to a row-stochastic `Ŝ`.
///
/// Fails with [`Error::NonConvergence`] (carrying the best projected
/// iterate) when the residual target is not reached, either because the
/// iteration budget ran out or no step size reduced the objective.
pub fn recover_collision_matrix<T: Scalar>(g: &Matrix<T>, config: &RecoveryConfig<T>) -> Result<Recovery<T>> {
    g.require_square()?;
    let k = g.rows();
    config.validate(k)?;
    let mut warnings = Vec::new();
    if g.max_asymmetry() > T::lit(1e-9) {
        warnings.push(format!("Gramian asymmetry {:.3e}; using (G + Gᵀ)/2", g.max_asymmetry().as_f64()));
    }
    let g = g.symmetrized()?;
    if !config.enforce_symmetry {
        warnings.push("symmetry not enforced: uniqueness of the recovered root is not guaranteed".into());
    }

    let mut s = match &config.init {
        Init::Identity => Matrix::identity(k),
        Init::Matrix(m) => m.clone(),
    };
    if config.enforce_symmetry {
        s = s.symmetrized()?;
    }
    let lambda = config.penalty;
    let mut f = objective(&s, &g, lambda);
    let initial_objective = f;
    let mut max_increase = T::neg_infinity();
    let mut residual = (g.sub(&s.gram())?).frobenius_norm();
    let mut iterations = 0;
    let mut stalled = false;

    while residual > config.tolerance && iterations < config.max_iterations {
        let base = base_direction(&s, &g, lambda, config.enforce_symmetry)?;
        let mut eta = config.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let dir = descent_direction(&s, &base, lambda, eta, config.enforce_symmetry)?;
            let mut cand = s.sub(&dir.scale(eta))?;
            if config.enforce_symmetry {
                cand = cand.symmetrized()?;
            }
            let fc = objective(&cand, &g, lambda);
            if fc <= f {
                accepted = Some((cand, fc));
                break;
            }
            eta = eta * T::lit(0.5);
        }
        iterations += 1;
        match accepted {
            Some((cand, fc)) => {
                max_increase = max_increase.max(fc - f);
                s = cand;
                f = fc;
                residual = (s.gram().sub(&g)?).frobenius_norm();
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    let projected = project_row_stochastic(&s);
    let projected_residual = (projected.gram().sub(&g)?).frobenius_norm();
    let diag_dominant = projected.is_strictly_diag_dominant()?;
    if residual > config.tolerance {
        return Err(Error::NonConvergence {
            residual: residual.as_f64(),
            target: config.tolerance.as_f64(),
            iterations,
            stalled,
            best: Box::new(projected.cast()),
        });
    }
    if !diag_dominant {
        warnings.push("recovered matrix is not strictly diagonally dominant; the root may not be unique".into());
    }
    Ok(Recovery {
        s: projected,
        raw: s,
        residual,
        projected_residual,
        iterations,
        initial_objective,
        final_objective: f,
        max_objective_increase: if iterations == 0 { T::zero() } else { max_increase },
        diag_dominant,
        warnings,
    })
}
