use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::Similarity;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mixture::Dataset;
use crate::rng;

/// Estimated row Gramian with per-cell sampling statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramianEstimate {
    /// Symmetrized estimate `(Ĝ + Ĝᵀ)/2`.
    pub g: Matrix<f64>,
    /// Per-cell means before symmetrization.
    pub raw: Matrix<f64>,
    /// Number of pairs averaged in each cell, row-major.
    pub pair_counts: Vec<usize>,
    /// Standard errors of the symmetrized entries.
    pub std_err: Matrix<f64>,
}

/// `Ĝ_ij` = mean similarity over pairs from class `i` × class `j`.
///
/// Each cell averages `m_per_cell` pairs drawn uniformly with replacement, or
/// every pair when `m_per_cell` covers the whole product.
pub fn estimate_gramian<V: Similarity + ?Sized>(
    v: &V,
    data: &Dataset,
    m_per_cell: usize,
    seed: u64,
) -> Result<GramianEstimate> {
    if m_per_cell == 0 {
        return Err(Error::arg("m_per_cell must be at least 1"));
    }
    let parts = data.partition();
    if let Some(empty) = parts.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(empty));
    }
    let k = parts.len();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let stats: Vec<(f64, f64, usize)> = cells
        .par_iter()
        .map(|&(i, j)| -> Result<(f64, f64, usize)> {
            let (pi, pj) = (&parts[i], &parts[j]);
            let mut s = 0.0;
            let mut s2 = 0.0;
            let mut add = |a: usize, b: usize| -> Result<()> {
                let val = v.similarity(data.x(a), data.x(b))?;
                s += val;
                s2 += val * val;
                Ok(())
            };
            let count = if m_per_cell >= pi.len() * pj.len() {
                for &a in pi {
                    for &b in pj {
                        add(a, b)?;
                    }
                }
                pi.len() * pj.len()
            } else {
                let mut r = rng::stream(seed, (i * k + j) as u64);
                for _ in 0..m_per_cell {
                    let a = pi[r.random_range(0..pi.len())];
                    let b = pj[r.random_range(0..pj.len())];
                    add(a, b)?;
                }
                m_per_cell
            };
            let n = count as f64;
            let mean = s / n;
            let var = if count > 1 { (s2 / n - mean * mean).max(0.0) * n / (n - 1.0) } else { 0.0 };
            Ok((mean, (var / n).sqrt(), count))
        })
        .collect::<Result<_>>()?;

    let raw = Matrix::from_fn(k, k, |i, j| stats[i * k + j].0);
    let raw_se = Matrix::from_fn(k, k, |i, j| stats[i * k + j].1);
    let g = raw.symmetrized()?;
    let std_err = Matrix::from_fn(k, k, |i, j| {
        if i == j {
            raw_se[(i, i)]
        } else {
            0.5 * (raw_se[(i, j)].powi(2) + raw_se[(j, i)].powi(2)).sqrt()
        }
    });
    Ok(GramianEstimate { g, raw, pair_counts: stats.iter().map(|s| s.2).collect(), std_err })
}
