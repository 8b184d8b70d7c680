//! Per-input posteriors from similarity scores: `q = S·y`, so `ŷ = Ŝ⁻¹q̂`.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::Similarity;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mixture::Dataset;
use crate::rng;
use crate::scalar::Scalar;
use crate::simplex::{project_to_simplex, SimplexVector};

/// Default comparison points per class.
pub const DEFAULT_COMPARISONS: usize = 200;

/// Largest accepted ∞-norm condition number of `Ŝ`.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Reference points per class against which a query is scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSets {
    sets: Vec<Vec<Vec<f64>>>,
}

impl ComparisonSets {
    pub fn new(sets: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if let Some(i) = sets.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(i));
        }
        Ok(Self { sets })
    }

    /// Up to `m` points per class drawn without replacement from `data`,
    /// which should be a split the similarity model never trained on.
    pub fn from_dataset(data: &Dataset, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::arg("need at least one comparison point per class"));
        }
        let sets = data
            .partition()
            .into_iter()
            .enumerate()
            .map(|(class, rows)| {
                let mut r = rng::stream(seed, class as u64);
                let take = m.min(rows.len());
                let mut picked: Vec<usize> = index::sample(&mut r, rows.len(), take).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| data.x(rows[i]).to_vec()).collect()
            })
            .collect();
        Self::new(sets)
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    pub fn class(&self, i: usize) -> &[Vec<f64>] {
        &self.sets[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }
}

/// `q̂_i(x)`: mean similarity of `x` to the class-`i` comparison points.
pub fn expected_similarity_scores<V: Similarity + ?Sized>(v: &V, x: &[f64], sets: &ComparisonSets) -> Result<Vec<f64>> {
    sets.sets
        .iter()
        .map(|set| {
            let mut total = 0.0;
            for p in set {
                total += v.similarity(x, p)?;
            }
            Ok(total / set.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PosteriorEstimate<T: Scalar> {
    pub y_hat: SimplexVector<T>,
    /// Solution of `Ŝ y = q̂` before projection.
    pub raw_solution: Vec<T>,
    pub q_hat: Vec<T>,
    /// ∞-norm condition estimate of `Ŝ`.
    pub condition: T,
    /// `‖raw − ŷ‖₂`; zero when the raw solution was already on the simplex.
    pub projection_distance: T,
    pub warnings: Vec<String>,
}

/// Solves `S y = q` and projects the solution onto the simplex.
pub fn posterior_from_similarity<T: Scalar>(s: &Matrix<T>, q: &[T]) -> Result<PosteriorEstimate<T>> {
    s.require_square()?;
    if q.len() != s.rows() {
        return Err(Error::dim(format!("score vector of length {} for a {}x{} matrix", q.len(), s.rows(), s.cols())));
    }
    let condition = s.condition_inf()?;
    let limit = T::lit(CONDITION_LIMIT);
    if !(condition <= limit) {
        return Err(Error::IllConditioned { condition: condition.as_f64(), limit: CONDITION_LIMIT });
    }
    let mut warnings = Vec::new();
    if !s.is_strictly_diag_dominant()? {
        warnings.push("matrix is not strictly diagonally dominant".to_string());
    }
    let raw = s.solve(q)?;
    let y_hat = if raw.iter().all(|&v| v >= T::zero()) && sums_to_one(&raw) {
        SimplexVector::new(raw.clone())?
    } else {
        project_to_simplex(&raw)?
    };
    let projection_distance = raw.iter().zip(y_hat.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
    Ok(PosteriorEstimate { y_hat, raw_solution: raw, q_hat: q.to_vec(), condition, projection_distance, warnings })
}

fn sums_to_one<T: Scalar>(v: &[T]) -> bool {
    (v.iter().copied().sum::<T>() - T::one()).abs() <= T::lit(1e-9).max(T::epsilon() * T::lit(16.0))
}

/// Scores `x` against the comparison sets, then inverts `ŝ`.
pub fn estimate_posterior<V: Similarity + ?Sized>(
    v: &V,
    s_hat: &Matrix<f64>,
    x: &[f64],
    sets: &ComparisonSets,
) -> Result<PosteriorEstimate<f64>> {
    if sets.k() != s_hat.rows() {
        return Err(Error::dim(format!("{} comparison sets for a {}-class matrix", sets.k(), s_hat.rows())));
    }
    let q = expected_similarity_scores(v, x, sets)?;
    posterior_from_similarity(s_hat, &q)
}

/// [`estimate_posterior`] over many queries, in parallel.
pub fn estimate_posteriors<V: Similarity + ?Sized>(
    v: &V,
    s_hat: &Matrix<f64>,
    xs: &[Vec<f64>],
    sets: &ComparisonSets,
) -> Result<Vec<PosteriorEstimate<f64>>> {
    xs.par_iter().map(|x| estimate_posterior(v, s_hat, x, sets)).collect()
}
