use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{reference_divergences, GaussianPair1d, QUAD_TOL};

/// Divergences between `N(μ, 1)` and `N(−μ, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub mu: f64,
    pub collision: f64,
    pub tvd: f64,
    /// Squared Hellinger distance.
    pub hellinger: f64,
    pub kl: f64,
}

/// `μ = 0, 0.25, …, 3`.
pub fn default_mu_grid() -> Vec<f64> {
    (0..=12).map(|i| i as f64 * 0.25).collect()
}

pub fn divergence_curve(mu_grid: &[f64]) -> Result<Vec<DivergenceRow>> {
    mu_grid
        .iter()
        .map(|&mu| {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::arg(format!("mu must be finite and non-negative, got {mu}")));
            }
            let reference = reference_divergences(mu)?;
            Ok(DivergenceRow {
                mu,
                collision: GaussianPair1d::symmetric(mu).collision_divergence(QUAD_TOL)?,
                tvd: reference.tvd,
                hellinger: reference.hellinger,
                kl: reference.kl,
            })
        })
        .collect()
}

pub fn write_divergence_csv<W: Write>(rows: &[DivergenceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_shape() {
        let rows = divergence_curve(&default_mu_grid()).unwrap();
        assert_eq!(rows.len(), 13);
        let first = rows[0];
        assert_eq!((first.collision, first.tvd, first.hellinger, first.kl), (0.0, 0.0, 0.0, 0.0));
        assert!(rows.windows(2).all(|w| w[1].collision >= w[0].collision));
        let one = rows[4];
        assert_eq!(one.mu, 1.0);
        assert!((one.kl - 2.0).abs() < 1e-15);
        assert!((one.tvd - 0.682_689_492_137_085_9).abs() < 1e-12, "{}", one.tvd);
        assert!(divergence_curve(&[-1.0]).is_err());
    }

    #[test]
    fn csv_header() {
        let rows = divergence_curve(&[0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_divergence_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mu,collision,tvd,hellinger,kl\n0.0,0.0,0.0,0.0,0.0\n"), "{text}");
    }
}
