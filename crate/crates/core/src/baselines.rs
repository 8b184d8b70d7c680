//! Comparison methods: plug-in `Ŝ` from a classifier's outputs, temperature
//! scaling, and MC-dropout averaging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::Architecture;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mixture::Dataset;
use crate::nn::{Example, FeedForwardNet, Shuffled, Target, TrainConfig, TrainReport};
use crate::rng;
use crate::simplex::{softmax, SimplexVector};

pub const DEFAULT_ECE_BINS: usize = 15;
pub const DEFAULT_MC_PASSES: usize = 30;

/// Two temperatures whose ECE differs by less than this are tied.
const ECE_TIE: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
}

/// K-way classifier trained with plain cross-entropy.
pub fn train_classifier(data: &Dataset, config: &ClassifierConfig) -> Result<FeedForwardNet> {
    Ok(train_classifier_traced(data, config)?.0)
}

/// [`train_classifier`] that also returns the per-epoch loss.
pub fn train_classifier_traced(data: &Dataset, config: &ClassifierConfig) -> Result<(FeedForwardNet, TrainReport)> {
    let arch = &config.architecture;
    let mut net = FeedForwardNet::mlp(data.dim(), arch.hidden, arch.depth, data.k(), rng::derive_seed(config.train.seed, 0xC1A))?
        .with_dropout(arch.dropout)?;
    let examples =
        (0..data.len()).map(|i| Example::new(data.x(i).to_vec(), Target::Class(data.label(i)))).collect();
    let report = net.train(&mut Shuffled(examples), &config.train)?;
    Ok((net, report))
}

/// Fraction of rows whose arg-max output matches the label.
pub fn accuracy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_lengths(probs, labels)?;
    let hits = probs.iter().zip(labels).filter(|(p, &l)| crate::simplex::argmax(p) == l).count();
    Ok(hits as f64 / probs.len().max(1) as f64)
}

fn check_lengths(probs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", probs.len(), labels.len())));
    }
    Ok(())
}

/// Expected calibration error: `Σ_b (n_b/n)·|acc_b − conf_b|` over
/// equal-width confidence bins, with confidence = top output.
pub fn ece(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::arg("ECE needs at least one bin"));
    }
    check_lengths(probs, labels)?;
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    for (p, &l) in probs.iter().zip(labels) {
        let top = crate::simplex::argmax(p);
        let c = p[top];
        // Bins are (lo, hi]; confidence 0 falls in the first.
        let b = ((c * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        conf[b] += c;
        hits[b] += usize::from(top == l);
        count[b] += 1;
    }
    let n = probs.len() as f64;
    let total = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (hits[b] as f64 - conf[b]).abs() / n)
        .sum::<f64>();
    Ok(total.clamp(0.0, 1.0))
}

/// 50 log-spaced temperatures between 0.1 and 10.
pub fn default_temperature_grid() -> Vec<f64> {
    (0..50).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 49.0)).collect()
}

fn tempered(logits: &[f64], t: f64) -> Vec<f64> {
    softmax(&logits.iter().map(|v| v / t).collect::<Vec<_>>()).into_inner()
}

/// Grid temperature minimizing ECE on pre-computed logits. Ties go to
/// `T = 1`, then to the smaller temperature.
pub fn select_temperature(logits: &[Vec<f64>], labels: &[usize], grid: &[f64], bins: usize) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::arg("empty temperature grid"));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::arg(format!("temperature {t} is not positive")));
    }
    let scores: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            let probs: Vec<Vec<f64>> = logits.iter().map(|z| tempered(z, t)).collect();
            Ok((t, ece(&probs, labels, bins)?))
        })
        .collect::<Result<_>>()?;
    let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let tied: Vec<(f64, f64)> = scores.into_iter().filter(|s| s.1 <= best + ECE_TIE).collect();
    Ok(tied
        .iter()
        .find(|s| s.0 == 1.0)
        .copied()
        .unwrap_or_else(|| tied.iter().copied().fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })))
}

/// A classifier whose logits are divided by a fitted temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedClassifier {
    pub net: FeedForwardNet,
    pub temperature: f64,
    /// Validation ECE at the chosen temperature.
    pub validation_ece: f64,
    /// Validation ECE at `T = 1`.
    pub uncalibrated_ece: f64,
}

impl CalibratedClassifier {
    pub fn predict_proba(&self, x: &[f64]) -> Result<SimplexVector<f64>> {
        Ok(softmax(&self.net.forward(x)?.iter().map(|v| v / self.temperature).collect::<Vec<_>>()))
    }
}

pub fn fit_temperature(net: &FeedForwardNet, validation: &Dataset, grid: &[f64], bins: usize) -> Result<CalibratedClassifier> {
    if validation.is_empty() {
        return Err(Error::arg("empty validation set"));
    }
    let logits: Vec<Vec<f64>> = (0..validation.len()).into_par_iter().map(|i| net.forward(validation.x(i))).collect::<Result<_>>()?;
    let (temperature, validation_ece) = select_temperature(&logits, validation.labels(), grid, bins)?;
    let plain: Vec<Vec<f64>> = logits.iter().map(|z| tempered(z, 1.0)).collect();
    let uncalibrated_ece = ece(&plain, validation.labels(), bins)?;
    Ok(CalibratedClassifier { net: net.clone(), temperature, validation_ece, uncalibrated_ece })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McDropoutPosterior {
    pub posterior: SimplexVector<f64>,
    pub warnings: Vec<String>,
}

/// Mean of `h` softmax outputs with dropout left on, one derived seed per pass.
pub fn mc_dropout_posterior(net: &FeedForwardNet, x: &[f64], h: usize, seed: u64) -> Result<McDropoutPosterior> {
    if h == 0 {
        return Err(Error::arg("need at least one dropout pass"));
    }
    let mut warnings = Vec::new();
    if !net.has_dropout() {
        warnings.push("network has no dropout; every pass is the plain forward pass".to_string());
    }
    let passes: Vec<SimplexVector<f64>> = (0..h)
        .into_par_iter()
        .map(|p| Ok(softmax(&net.forward_seeded(x, true, rng::derive_seed(seed, p as u64))?)))
        .collect::<Result<_>>()?;
    let k = net.output_size();
    let mut mean = vec![0.0; k];
    for p in &passes {
        mean.iter_mut().zip(p.iter()).for_each(|(m, v)| *m += v / h as f64);
    }
    Ok(McDropoutPosterior { posterior: SimplexVector::new(mean)?, warnings })
}

/// Row `i` is the mean of `posterior(x)` over the class-`i` points.
pub fn plug_in_collision_matrix<F>(posterior: F, data: &Dataset) -> Result<Matrix<f64>>
where
    F: Fn(&[f64]) -> Result<SimplexVector<f64>> + Sync,
{
    let parts = data.partition();
    if let Some(empty) = parts.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(empty));
    }
    let k = data.k();
    let rows: Vec<Vec<f64>> = parts
        .par_iter()
        .map(|rows| {
            let mut acc = vec![0.0; k];
            for &r in rows {
                let p = posterior(data.x(r))?;
                if p.len() != k {
                    return Err(Error::dim(format!("posterior of length {} for {k} classes", p.len())));
                }
                acc.iter_mut().zip(p.iter()).for_each(|(a, v)| *a += v);
            }
            let n = rows.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::GaussianMixture;
    use rand::Rng as _;

    fn one_hot(k: usize, i: usize) -> Vec<f64> {
        SimplexVector::one_hot(k, i).into_inner()
    }

    #[test]
    fn ece_examples() {
        let probs = vec![one_hot(2, 0); 4];
        assert_eq!(ece(&probs, &[0, 0, 0, 0], 15).unwrap(), 0.0);
        assert_eq!(ece(&probs, &[0, 1, 0, 1], 15).unwrap(), 0.5);
        assert!(ece(&probs, &[0; 4], 0).is_err());
        assert!(ece(&probs, &[0; 3], 10).is_err());
    }

    #[test]
    fn ece_matches_brute_force() {
        let mut r = rng::rng(11);
        let k = 3;
        let probs: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let labels: Vec<usize> = (0..100).map(|_| r.random_range(0..k)).collect();
        let bins = 10;
        let mut brute = 0.0;
        for b in 0..bins {
            let (lo, hi) = (b as f64 / bins as f64, (b + 1) as f64 / bins as f64);
            let members: Vec<usize> = (0..100)
                .filter(|&i| {
                    let c = probs[i].iter().cloned().fold(0.0, f64::max);
                    c > lo && c <= hi
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let acc = members.iter().filter(|&&i| crate::simplex::argmax(&probs[i]) == labels[i]).count() as f64
                / members.len() as f64;
            let conf = members.iter().map(|&i| probs[i].iter().cloned().fold(0.0, f64::max)).sum::<f64>()
                / members.len() as f64;
            brute += members.len() as f64 / 100.0 * (acc - conf).abs();
        }
        let fast = ece(&probs, &labels, bins).unwrap();
        assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");

        let mut order: Vec<usize> = (0..100).collect();
        order.reverse();
        let p2: Vec<Vec<f64>> = order.iter().map(|&i| probs[i].clone()).collect();
        let l2: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        assert!((ece(&p2, &l2, bins).unwrap() - fast).abs() < 1e-12);
    }

    #[test]
    fn constant_prior_classifier_is_calibrated() {
        let probs = vec![vec![0.5, 0.5]; 1000];
        // Balanced labels; argmax of a tie is class 0.
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        assert!(ece(&probs, &labels, 15).unwrap() < 1e-12);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_temperature_grid();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 0.1).abs() < 1e-12 && (g[49] - 10.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    /// Labels drawn from the given posteriors.
    fn calibrated_sample(n: usize, sharpen: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::rng(seed);
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let p0: f64 = r.random_range(0.05..0.95);
            let truth = [p0, 1.0 - p0];
            labels.push(if r.random::<f64>() < truth[0] { 0 } else { 1 });
            logits.push(truth.iter().map(|p| sharpen * p.ln()).collect());
        }
        (logits, labels)
    }

    #[test]
    fn overconfident_logits_need_higher_temperature() {
        let (logits, labels) = calibrated_sample(20_000, 3.0, 5);
        let (t, e) = select_temperature(&logits, &labels, &default_temperature_grid(), 15).unwrap();
        assert!(t > 1.0, "chose T = {t}");
        let plain: Vec<Vec<f64>> = logits.iter().map(|z| tempered(z, 1.0)).collect();
        assert!(e < ece(&plain, &labels, 15).unwrap());
    }

    #[test]
    fn ties_prefer_one_then_smaller() {
        // Every prediction is correct at confidence 1 for any temperature that
        // keeps saturation, so all grid points tie.
        let logits = vec![vec![1e6, 0.0]; 10];
        let labels = vec![0; 10];
        assert_eq!(select_temperature(&logits, &labels, &[0.5, 1.0, 2.0], 15).unwrap().0, 1.0);
        assert_eq!(select_temperature(&logits, &labels, &[2.0, 0.5, 3.0], 15).unwrap().0, 0.5);
        assert!(select_temperature(&logits, &labels, &[], 15).is_err());
        assert!(select_temperature(&logits, &labels, &[0.0], 15).is_err());
    }

    #[test]
    fn calibrated_logits_keep_temperature_near_one() {
        let (logits, labels) = calibrated_sample(20_000, 1.0, 6);
        let grid = [0.5, 0.8, 1.0, 1.25, 2.0];
        let (t, e) = select_temperature(&logits, &labels, &grid, 15).unwrap();
        let at_one = ece(&logits.iter().map(|z| tempered(z, 1.0)).collect::<Vec<_>>(), &labels, 15).unwrap();
        assert!(e <= at_one);
        assert!((0.8..=1.25).contains(&t), "{t}");
    }

    #[test]
    fn mc_dropout_basics() {
        let net = FeedForwardNet::mlp(2, 16, 2, 3, 1).unwrap();
        let plain = mc_dropout_posterior(&net, &[0.3, -0.2], 1, 0).unwrap();
        assert_eq!(plain.posterior, net.predict_proba(&[0.3, -0.2]).unwrap());
        assert_eq!(plain.warnings.len(), 1);

        let drop = net.with_dropout(0.5).unwrap();
        let a = mc_dropout_posterior(&drop, &[0.3, -0.2], 30, 4).unwrap();
        assert_eq!(a, mc_dropout_posterior(&drop, &[0.3, -0.2], 30, 4).unwrap());
        assert!(a.warnings.is_empty());
        assert!((a.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mc_dropout_posterior(&drop, &[0.3, -0.2], 0, 4).is_err());
    }

    #[test]
    fn mc_dropout_variance_shrinks_with_passes() {
        let net = FeedForwardNet::mlp(2, 32, 2, 2, 3).unwrap().with_dropout(0.5).unwrap();
        let spread = |h: usize| {
            let vals: Vec<f64> =
                (0..200).map(|s| mc_dropout_posterior(&net, &[1.0, 0.5], h, 1000 + s).unwrap().posterior[0]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
        };
        let (v1, v16) = (spread(1), spread(16));
        let ratio = v1 / v16;
        assert!((8.0..32.0).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn plug_in_examples() {
        let gm = GaussianMixture::uniform(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let ds = gm.sample(20, 1).unwrap();
        let s = plug_in_collision_matrix(|_| Ok(SimplexVector::one_hot(3, 0)), &ds).unwrap();
        assert_eq!(s, Matrix::from_rows(&[[1.0, 0.0, 0.0]; 3]).unwrap());
        let s = plug_in_collision_matrix(|x| gm.true_posterior(x), &ds).unwrap();
        assert!(s.is_row_stochastic(1e-12).unwrap());
        let bad = Dataset::new(vec![vec![0.0]], vec![0], 2).unwrap();
        assert!(matches!(plug_in_collision_matrix(|x| gm.true_posterior(x), &bad), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn plug_in_with_true_posteriors_matches_true_s() {
        let gm = GaussianMixture::uniform(vec![vec![0.0, 0.0], vec![1.5, 0.0], vec![0.0, 1.5]]).unwrap();
        let ds = gm.sample(20_000, 3).unwrap();
        let plug = plug_in_collision_matrix(|x| gm.true_posterior(x), &ds).unwrap();
        let truth = gm.true_collision_matrix(200_000, 4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let tol = 5.0 * (truth.std_err[(i, j)].powi(2) * 11.0).sqrt();
                assert!((plug[(i, j)] - truth.mean[(i, j)]).abs() < tol, "({i},{j})");
            }
        }
    }

    #[test]
    fn classifier_learns_blobs_and_not_noise() {
        let cfg = ClassifierConfig {
            architecture: Architecture { hidden: 16, depth: 2, dropout: 0.0 },
            train: TrainConfig { epochs: 20, batch_size: 16, learning_rate: 0.05, momentum: 0.9, seed: 2 },
        };
        let blobs = GaussianMixture::uniform(vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap();
        let net = train_classifier(&blobs.sample(100, 1).unwrap(), &cfg).unwrap();
        let test = blobs.sample(200, 2).unwrap();
        let probs: Vec<Vec<f64>> = (0..test.len()).map(|i| net.predict_proba(test.x(i)).unwrap().into_inner()).collect();
        assert!(accuracy(&probs, test.labels()).unwrap() > 0.99);

        let noise = GaussianMixture::uniform(vec![vec![0.0, 0.0]; 3]).unwrap();
        let net = train_classifier(&noise.sample(100, 1).unwrap(), &cfg).unwrap();
        let test = noise.sample(1000, 2).unwrap();
        let probs: Vec<Vec<f64>> = (0..test.len()).map(|i| net.predict_proba(test.x(i)).unwrap().into_inner()).collect();
        let acc = accuracy(&probs, test.labels()).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 0.05, "{acc}");
    }
}
