//! Pairwise contrastive model: a network scoring whether two inputs share a
//! class, trained on class-balanced pair streams.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Dataset, GaussianMixture};
use crate::nn::{Example, FeedForwardNet, Target, TrainConfig, TrainingData};
use crate::rng::{self, Rng};
use crate::simplex::softmax;

/// Output index of the "same class" score.
const SAME: usize = 1;

/// Probability that two inputs carry the same class label.
pub trait Similarity: Sync {
    fn similarity(&self, x: &[f64], x_tilde: &[f64]) -> Result<f64>;
}

/// Ground-truth similarity of a known mixture: the dot product of the two
/// exact posteriors.
pub struct OracleSimilarity<'a>(pub &'a GaussianMixture);

impl Similarity for OracleSimilarity<'_> {
    fn similarity(&self, x: &[f64], x_tilde: &[f64]) -> Result<f64> {
        oracle_similarity(self.0, x, x_tilde)
    }
}

pub fn oracle_similarity(gm: &GaussianMixture, x: &[f64], x_tilde: &[f64]) -> Result<f64> {
    let a = gm.true_posterior(x)?;
    let b = gm.true_posterior(x_tilde)?;
    Ok(posterior_similarity(&a, &b))
}

/// `Σ_j p_j q_j`: the chance that independent labels drawn from `p` and `q` agree.
pub fn posterior_similarity(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0)
}

/// Maps a same-class score learned on class-balanced pairs to the
/// similarity under uniform class priors.
///
/// Balanced training fixes the same-class base rate at ½, while independent
/// labels under `K` equiprobable classes agree with base rate `1/K`. Bayes'
/// rule moves between the two by dividing the odds by `K − 1`, which is the
/// identity for `K = 2`.
pub fn balanced_to_uniform(v: f64, k: usize) -> f64 {
    let v = v.clamp(0.0, 1.0);
    let denom = v + (k as f64 - 1.0) * (1.0 - v);
    if denom <= 0.0 { 0.0 } else { v / denom }
}

/// Wraps a balanced-pair model so it scores [`balanced_to_uniform`] similarity.
pub struct PriorCorrected<'a, V: ?Sized> {
    pub inner: &'a V,
    pub k: usize,
}

impl<V: Similarity + ?Sized> Similarity for PriorCorrected<'_, V> {
    fn similarity(&self, x: &[f64], x_tilde: &[f64]) -> Result<f64> {
        Ok(balanced_to_uniform(self.inner.similarity(x, x_tilde)?, self.k))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// True when both points came from the same class.
    pub z: bool,
}

/// Draws pairs with equal weight on same-class and cross-class pairs.
///
/// Same-class pairs pick a class uniformly, then two distinct members.
/// Cross-class pairs pick an ordered class pair uniformly among the
/// `K(K−1)` choices, then one member of each.
pub struct PairSampler<'a> {
    data: &'a Dataset,
    parts: Vec<Vec<usize>>,
}

impl<'a> PairSampler<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        let parts = data.partition();
        if data.k() < 2 {
            return Err(Error::arg("pair sampling needs at least two classes"));
        }
        for (class, p) in parts.iter().enumerate() {
            if p.len() < 2 {
                return Err(Error::UnusableClass { class, count: p.len(), required: 2 });
            }
        }
        Ok(Self { data, parts })
    }

    /// Returns `(first row, second row, same class)`.
    pub fn draw_indices(&self, r: &mut Rng) -> (usize, usize, bool) {
        let k = self.parts.len();
        if r.random::<bool>() {
            let part = &self.parts[r.random_range(0..k)];
            let a = r.random_range(0..part.len());
            let mut b = r.random_range(0..part.len() - 1);
            if b >= a {
                b += 1;
            }
            (part[a], part[b], true)
        } else {
            let i = r.random_range(0..k);
            let mut j = r.random_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            let (pi, pj) = (&self.parts[i], &self.parts[j]);
            (pi[r.random_range(0..pi.len())], pj[r.random_range(0..pj.len())], false)
        }
    }

    pub fn draw(&self, r: &mut Rng) -> PairSample {
        let (a, b, z) = self.draw_indices(r);
        PairSample { x: self.data.x(a).to_vec(), x_tilde: self.data.x(b).to_vec(), z }
    }
}

/// Endless stream of balanced pair batches.
pub struct PairBatches<'a> {
    sampler: PairSampler<'a>,
    batch_size: usize,
    rng: Rng,
}

impl Iterator for PairBatches<'_> {
    type Item = Vec<PairSample>;

    fn next(&mut self) -> Option<Self::Item> {
        Some((0..self.batch_size).map(|_| self.sampler.draw(&mut self.rng)).collect())
    }
}

pub fn balanced_pair_batches(data: &Dataset, batch_size: usize, seed: u64) -> Result<PairBatches<'_>> {
    if batch_size == 0 {
        return Err(Error::arg("batch_size must be at least 1"));
    }
    Ok(PairBatches { sampler: PairSampler::new(data)?, batch_size, rng: rng::rng(seed) })
}

fn pair_input(x: &[f64], x_tilde: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + x_tilde.len());
    v.extend_from_slice(x);
    v.extend_from_slice(x_tilde);
    v
}

/// One epoch presents as many pairs as the dataset has points.
struct PairStream<'a> {
    sampler: PairSampler<'a>,
    swap_order: bool,
}

impl TrainingData for PairStream<'_> {
    fn epoch(&mut self, _epoch: usize, batch_size: usize, r: &mut Rng) -> Result<Vec<Vec<Example>>> {
        let n = self.sampler.data.len();
        let mut batches = Vec::with_capacity(n.div_ceil(batch_size));
        let mut left = n;
        while left > 0 {
            let size = batch_size.min(left);
            left -= size;
            let mut batch = Vec::with_capacity(size);
            while batch.len() < size {
                let p = self.sampler.draw(r);
                let target = Target::Class(if p.z { SAME } else { 1 - SAME });
                // With swapping on, each pair is shown in both orders back to back.
                if self.swap_order && batch.len() + 1 < size {
                    batch.push(Example::new(pair_input(&p.x_tilde, &p.x), target.clone()));
                }
                batch.push(Example::new(pair_input(&p.x, &p.x_tilde), target));
            }
            batches.push(batch);
        }
        Ok(batches)
    }
}

/// Hidden-layer shape shared by the contrastive model and the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    pub depth: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl Default for Architecture {
    /// Six hidden layers of 128 units.
    fn default() -> Self {
        Self { hidden: 128, depth: 6, dropout: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
    /// Present every training pair in both input orders.
    pub swap_order: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { architecture: Architecture::default(), train: TrainConfig::default(), swap_order: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveMetadata {
    pub trained: bool,
    pub seed: u64,
    pub epochs: usize,
    pub swap_order: bool,
    /// Balanced cross-entropy pair risk on the training data after training.
    pub final_risk: Option<f64>,
    pub loss_trace: Vec<f64>,
}

/// Network with a `2d`-wide input and two output scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveModel {
    pub net: FeedForwardNet,
    pub metadata: ContrastiveMetadata,
}

impl ContrastiveModel {
    pub fn untrained(net: FeedForwardNet) -> Result<Self> {
        if net.output_size() != 2 || net.input_size() % 2 != 0 {
            return Err(Error::dim("contrastive net needs an even input width and two outputs"));
        }
        Ok(Self {
            net,
            metadata: ContrastiveMetadata {
                trained: false,
                seed: 0,
                epochs: 0,
                swap_order: false,
                final_risk: None,
                loss_trace: Vec::new(),
            },
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.net.input_size() / 2
    }

    /// Same-class probability for the ordered pair `(x, x̃)`.
    pub fn ordered_score(&self, x: &[f64], x_tilde: &[f64]) -> Result<f64> {
        if !self.metadata.trained {
            return Err(Error::NotTrained);
        }
        Ok(softmax(&self.net.forward(&pair_input(x, x_tilde))?)[SAME])
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        Ok(serde_json::to_writer(w, self)?)
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let m: Self = serde_json::from_reader(r)?;
        Self::untrained(m.net.clone())?;
        Ok(m)
    }
}

impl Similarity for ContrastiveModel {
    /// Average of both input orders, so the score is exactly symmetric.
    fn similarity(&self, x: &[f64], x_tilde: &[f64]) -> Result<f64> {
        if x.len() != self.feature_dim() || x_tilde.len() != self.feature_dim() {
            return Err(Error::dim(format!(
                "pair of lengths ({}, {}) for a model over d = {}",
                x.len(),
                x_tilde.len(),
                self.feature_dim()
            )));
        }
        let a = self.ordered_score(x, x_tilde)?;
        let b = self.ordered_score(x_tilde, x)?;
        Ok((0.5 * (a + b)).clamp(0.0, 1.0))
    }
}

pub fn train_contrastive(data: &Dataset, config: &ContrastiveConfig) -> Result<ContrastiveModel> {
    let sampler = PairSampler::new(data)?;
    let arch = &config.architecture;
    let d = data.dim();
    let net = FeedForwardNet::mlp(2 * d, arch.hidden, arch.depth, 2, rng::derive_seed(config.train.seed, 0x7E7))?
        .with_dropout(arch.dropout)?;
    let mut model = ContrastiveModel::untrained(net)?;
    let mut stream = PairStream { sampler, swap_order: config.swap_order };
    let report = model.net.train(&mut stream, &config.train)?;
    model.metadata = ContrastiveMetadata {
        trained: true,
        seed: config.train.seed,
        epochs: config.train.epochs,
        swap_order: config.swap_order,
        final_risk: None,
        loss_trace: report.loss_trace,
    };
    Ok(model)
}

/// Loss used by [`empirical_pair_risk`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairLoss {
    CrossEntropy,
    /// 1 when the score falls on the wrong side of ½ (a score of exactly ½
    /// counts as predicting "same").
    ZeroOne,
}

impl PairLoss {
    pub fn eval(self, same: bool, v: f64) -> f64 {
        match self {
            PairLoss::CrossEntropy => {
                let v = v.clamp(1e-12, 1.0 - 1e-12);
                if same { -v.ln() } else { -(1.0 - v).ln() }
            }
            PairLoss::ZeroOne => {
                if (v >= 0.5) == same { 0.0 } else { 1.0 }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRisk {
    /// `½ (same + different)`.
    pub total: f64,
    /// Mean over classes of the mean loss on distinct same-class pairs.
    pub same: f64,
    /// Mean over ordered class pairs `i ≠ j` of the mean cross-pair loss.
    pub different: f64,
}

/// Class-balanced empirical pair risk over every pair in `data`, with each
/// class's own count in the normalizers.
pub fn empirical_pair_risk<V: Similarity + ?Sized>(model: &V, data: &Dataset, loss: PairLoss) -> Result<PairRisk> {
    use rayon::prelude::*;
    let parts = data.partition();
    let k = parts.len();
    for (class, p) in parts.iter().enumerate() {
        if p.len() < 2 {
            return Err(Error::UnusableClass { class, count: p.len(), required: 2 });
        }
    }
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let means: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| -> Result<f64> {
            let mut total = 0.0;
            let mut count = 0usize;
            for &a in &parts[i] {
                for &b in &parts[j] {
                    if a == b {
                        continue;
                    }
                    total += loss.eval(i == j, model.similarity(data.x(a), data.x(b))?);
                    count += 1;
                }
            }
            Ok(total / count as f64)
        })
        .collect::<Result<_>>()?;
    let mut same = 0.0;
    let mut different = 0.0;
    for (&(i, j), m) in cells.iter().zip(&means) {
        if i == j {
            same += m / k as f64;
        } else {
            different += m / (k * (k - 1)) as f64;
        }
    }
    Ok(PairRisk { total: 0.5 * (same + different), same, different })
}

/// Fraction of `n_pairs` balanced pairs whose thresholded score is correct.
pub fn pair_accuracy<V: Similarity + ?Sized>(model: &V, data: &Dataset, n_pairs: usize, seed: u64) -> Result<f64> {
    let sampler = PairSampler::new(data)?;
    let mut r = rng::rng(seed);
    let mut hits = 0usize;
    for _ in 0..n_pairs {
        let p = sampler.draw(&mut r);
        if (model.similarity(&p.x, &p.x_tilde)? >= 0.5) == p.z {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_pairs.max(1) as f64)
}
