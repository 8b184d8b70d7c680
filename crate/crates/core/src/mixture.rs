//! Gaussian-mixture ground truth.
//!
//! Each class `k` has density `N(μ_k, σ² I)` and prior `π_k`. The mixture
//! gives exact posteriors, Monte Carlo estimates of the collision matrix and
//! the Bayes error, and 1-D quadrature oracles for the binary case.

use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quadrature::{adaptive_simpson, normal_pdf, std_normal_cdf};
use crate::rng::{self, MC_CHUNK};
use crate::scalar::Scalar;
use crate::simplex::{log_sum_exp, SimplexVector};

/// Minimum Monte Carlo sample count accepted by the truth estimators.
pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    means: Vec<Vec<f64>>,
    covariance_scale: f64,
    priors: SimplexVector<f64>,
}

/// On-disk form: `{K, d, means, covariance_scale, priors}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixtureSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub means: Vec<Vec<f64>>,
    pub covariance_scale: f64,
    pub priors: Vec<f64>,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        if spec.means.len() != spec.k {
            return Err(Error::dim(format!("K = {} but {} means given", spec.k, spec.means.len())));
        }
        if spec.means.iter().any(|m| m.len() != spec.d) {
            return Err(Error::dim(format!("every mean must have length d = {}", spec.d)));
        }
        let priors = SimplexVector::new(spec.priors)?;
        GaussianMixture::new(spec.means, spec.covariance_scale, priors)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(gm: GaussianMixture) -> Self {
        MixtureSpec {
            k: gm.k(),
            d: gm.dim(),
            means: gm.means,
            covariance_scale: gm.covariance_scale,
            priors: gm.priors.into_inner(),
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Matrix-valued Monte Carlo estimate with per-entry standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McMatrix {
    pub mean: Matrix<f64>,
    pub std_err: Matrix<f64>,
    pub samples_per_row: usize,
}

impl GaussianMixture {
    pub fn new(means: Vec<Vec<f64>>, covariance_scale: f64, priors: SimplexVector<f64>) -> Result<Self> {
        let k = means.len();
        if k < 2 {
            return Err(Error::arg("a mixture needs at least two components"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::dim("means must share one non-zero dimension"));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("means must be finite"));
        }
        if !(covariance_scale > 0.0 && covariance_scale.is_finite()) {
            return Err(Error::arg("covariance scale must be positive"));
        }
        if priors.len() != k {
            return Err(Error::dim(format!("{} priors for {k} components", priors.len())));
        }
        Ok(Self { means, covariance_scale, priors })
    }

    /// Unit-covariance mixture with uniform priors.
    pub fn uniform(means: Vec<Vec<f64>>) -> Result<Self> {
        let k = means.len();
        Self::new(means, 1.0, SimplexVector::uniform(k.max(1)))
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariance_scale(&self) -> f64 {
        self.covariance_scale
    }

    pub fn priors(&self) -> &SimplexVector<f64> {
        &self.priors
    }

    pub fn has_uniform_priors(&self) -> bool {
        self.priors.is_uniform(1e-12)
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    /// `log π_k + log f_k(x)` up to a constant shared by all components.
    fn log_weights(&self, x: &[f64], out: &mut [f64]) {
        let inv = 0.5 / self.covariance_scale;
        for (k, mu) in self.means.iter().enumerate() {
            let d2: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
            out[k] = self.priors[k].ln() - inv * d2;
        }
    }

    /// Exact posterior `π_i f_i(x) / Σ_k π_k f_k(x)`, computed in log space.
    pub fn true_posterior(&self, x: &[f64]) -> Result<SimplexVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!("point of length {} for d = {}", x.len(), self.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("point must be finite"));
        }
        let mut buf = vec![0.0; self.k()];
        Ok(SimplexVector::new(self.posterior_into(x, &mut buf).to_vec())
            .expect("log-space posterior is normalized"))
    }

    fn posterior_into<'a>(&self, x: &[f64], buf: &'a mut [f64]) -> &'a [f64] {
        self.log_weights(x, buf);
        let z = log_sum_exp(buf);
        buf.iter_mut().for_each(|v| *v = (*v - z).exp());
        let s: f64 = buf.iter().sum();
        buf.iter_mut().for_each(|v| *v /= s);
        buf
    }

    fn draw_into(&self, class: usize, rng: &mut rng::Rng, out: &mut [f64]) {
        let sd = self.covariance_scale.sqrt();
        for (o, &m) in out.iter_mut().zip(&self.means[class]) {
            let z: f64 = StandardNormal.sample(rng);
            *o = m + sd * z;
        }
    }

    /// Exactly `n_per_class` draws from each component, class-major order.
    pub fn sample(&self, n_per_class: usize, seed: u64) -> Result<Dataset> {
        if n_per_class == 0 {
            return Err(Error::arg("n_per_class must be at least 1"));
        }
        let d = self.dim();
        let mut features = Vec::with_capacity(n_per_class * self.k());
        let mut labels = Vec::with_capacity(n_per_class * self.k());
        for class in 0..self.k() {
            let mut r = rng::stream(seed, class as u64);
            for _ in 0..n_per_class {
                let mut x = vec![0.0; d];
                self.draw_into(class, &mut r, &mut x);
                features.push(x);
                labels.push(class);
            }
        }
        Dataset::new(features, labels, self.k())
    }

    /// Draws `n` points with labels sampled from the priors.
    pub fn sample_from_priors(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut r = rng::rng(seed);
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = sample_index(&self.priors, r.random());
            let mut x = vec![0.0; self.dim()];
            self.draw_into(c, &mut r, &mut x);
            features.push(x);
            labels.push(c);
        }
        Dataset::new(features, labels, self.k())
    }

    /// Runs `per_point` over `n` draws from class `class`, in parallel chunks,
    /// accumulating per-chunk sums and sums of squares of a `width`-vector.
    fn mc_class_moments(
        &self,
        class: usize,
        n: usize,
        seed: u64,
        width: usize,
        per_point: impl Fn(&[f64], &[f64], &mut [f64]) + Sync,
    ) -> (Vec<f64>, Vec<f64>) {
        let chunks = n.div_ceil(MC_CHUNK);
        let class_seed = rng::derive_seed(seed, class as u64);
        let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut r = rng::stream(class_seed, c as u64);
                let len = MC_CHUNK.min(n - c * MC_CHUNK);
                let mut x = vec![0.0; self.dim()];
                let mut post = vec![0.0; self.k()];
                let mut val = vec![0.0; width];
                let mut s = vec![0.0; width];
                let mut s2 = vec![0.0; width];
                for _ in 0..len {
                    self.draw_into(class, &mut r, &mut x);
                    self.posterior_into(&x, &mut post);
                    per_point(&x, &post, &mut val);
                    for j in 0..width {
                        s[j] += val[j];
                        s2[j] += val[j] * val[j];
                    }
                }
                (s, s2)
            })
            .collect();
        let mut s = vec![0.0; width];
        let mut s2 = vec![0.0; width];
        for (a, b) in partial {
            for j in 0..width {
                s[j] += a[j];
                s2[j] += b[j];
            }
        }
        (s, s2)
    }

    /// `S_ij = E_{x∼D_i}[y_j(x)]`, estimated with `mc_samples` draws per row.
    pub fn true_collision_matrix(&self, mc_samples: usize, seed: u64) -> Result<McMatrix> {
        require_mc(mc_samples)?;
        let k = self.k();
        let n = mc_samples as f64;
        let mut mean = Matrix::zeros(k, k);
        let mut se = Matrix::zeros(k, k);
        for i in 0..k {
            let (s, s2) = self.mc_class_moments(i, mc_samples, seed, k, |_, post, out| {
                out.copy_from_slice(post);
            });
            for j in 0..k {
                let m = s[j] / n;
                let var = (s2[j] / n - m * m).max(0.0) * n / (n - 1.0);
                mean[(i, j)] = m;
                se[(i, j)] = (var / n).sqrt();
            }
        }
        Ok(McMatrix { mean, std_err: se, samples_per_row: mc_samples })
    }

    /// Error rate of the argmax-posterior classifier, stratified by class.
    pub fn bayes_error_rate(&self, mc_samples: usize, seed: u64) -> Result<McEstimate> {
        require_mc(mc_samples)?;
        let n = mc_samples as f64;
        let mut value = 0.0;
        let mut var = 0.0;
        for i in 0..self.k() {
            let (s, _) = self.mc_class_moments(i, mc_samples, seed ^ 0xBE5, 1, |_, post, out| {
                out[0] = if crate::simplex::argmax(post) != i { 1.0 } else { 0.0 };
            });
            let p = s[0] / n;
            value += self.priors[i] * p;
            var += self.priors[i] * self.priors[i] * p * (1.0 - p) / n;
        }
        Ok(McEstimate { value, std_err: var.sqrt() })
    }

    /// Empirical error of the probabilistic Bayes classifier, which samples
    /// its prediction from the posterior. Standard error is binomial.
    pub fn simulate_pbc_error(&self, draws: usize, seed: u64) -> Result<McEstimate> {
        if draws == 0 {
            return Err(Error::arg("draws must be positive"));
        }
        let chunks = draws.div_ceil(MC_CHUNK);
        let errors: usize = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut r = rng::stream(seed ^ 0x9BC, c as u64);
                let len = MC_CHUNK.min(draws - c * MC_CHUNK);
                let mut x = vec![0.0; self.dim()];
                let mut post = vec![0.0; self.k()];
                let mut wrong = 0usize;
                for _ in 0..len {
                    let truth = sample_index(&self.priors, r.random());
                    self.draw_into(truth, &mut r, &mut x);
                    self.posterior_into(&x, &mut post);
                    if sample_index(&post, r.random()) != truth {
                        wrong += 1;
                    }
                }
                wrong
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        let p = errors as f64 / draws as f64;
        Ok(McEstimate { value: p, std_err: (p * (1.0 - p) / draws as f64).sqrt() })
    }
}

fn require_mc(n: usize) -> Result<()> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::arg(format!("mc_samples must be at least {MIN_MC_SAMPLES}, got {n}")));
    }
    Ok(())
}

/// Inverse-CDF draw of an index from a probability vector given `u ∈ [0,1)`.
pub(crate) fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Probabilistic Bayes error `1 − Σ_k π_k S_kk`.
pub fn pber_from_s<T: Scalar>(s: &Matrix<T>, priors: &[T]) -> Result<T> {
    s.require_square()?;
    if priors.len() != s.rows() {
        return Err(Error::dim(format!("{} priors for a {}x{} matrix", priors.len(), s.rows(), s.cols())));
    }
    Ok(T::one() - priors.iter().enumerate().map(|(k, &p)| p * s[(k, k)]).sum::<T>())
}

/// Two univariate normals `N(μ₁, σ²)` and `N(μ₂, σ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair1d {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
}

/// Default absolute tolerance for the 1-D quadrature oracles.
pub const QUAD_TOL: f64 = 1e-10;

impl GaussianPair1d {
    /// The symmetric pair `N(μ, 1)`, `N(−μ, 1)`.
    pub fn symmetric(mu: f64) -> Self {
        Self { mu1: mu, mu2: -mu, sigma: 1.0 }
    }

    fn interval(&self) -> (f64, f64) {
        (self.mu1.min(self.mu2) - 10.0 * self.sigma, self.mu1.max(self.mu2) + 10.0 * self.sigma)
    }

    pub fn pdf1(&self, x: f64) -> f64 {
        normal_pdf(x, self.mu1, self.sigma)
    }

    pub fn pdf2(&self, x: f64) -> f64 {
        normal_pdf(x, self.mu2, self.sigma)
    }

    /// `∫ f₁f₂/(f₁+f₂)`, the off-diagonal collision entry for equal priors.
    pub fn off_diagonal_collision(&self, tol: f64) -> Result<f64> {
        let (a, b) = self.interval();
        adaptive_simpson(|x| 0.5 * harmonic(self.pdf1(x), self.pdf2(x)), a, b, tol)
    }

    /// `1 − ∫ 2f₁f₂/(f₁+f₂)`, clamped to `[0, 1]`.
    pub fn collision_divergence(&self, tol: f64) -> Result<f64> {
        if self.mu1 == self.mu2 {
            return Ok(0.0);
        }
        let (a, b) = self.interval();
        let overlap = adaptive_simpson(|x| harmonic(self.pdf1(x), self.pdf2(x)), a, b, tol)?;
        Ok((1.0 - overlap).clamp(0.0, 1.0))
    }
}

/// `2ab/(a+b)`, zero when both vanish.
fn harmonic(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s <= 0.0 { 0.0 } else { 2.0 * a * b / s }
}

/// Collision divergence between two arbitrary univariate densities on `[lo, hi]`.
pub fn collision_divergence(
    f1: impl Fn(f64) -> f64,
    f2: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let overlap = adaptive_simpson(|x| harmonic(f1(x), f2(x)), lo, hi, tol)?;
    Ok((1.0 - overlap).clamp(0.0, 1.0))
}

/// Classical divergences between `N(μ, 1)` and `N(−μ, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDivergences {
    pub tvd: f64,
    /// Squared Hellinger distance `1 − BC`.
    pub hellinger: f64,
    pub kl: f64,
}

/// Closed forms: TVD `2Φ(μ) − 1`, squared Hellinger `1 − e^{−μ²/2}`, KL `2μ²`.
pub fn reference_divergences(mu: f64) -> Result<ReferenceDivergences> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::arg(format!("mu must be finite and non-negative, got {mu}")));
    }
    Ok(ReferenceDivergences {
        tvd: 2.0 * std_normal_cdf(mu) - 1.0,
        hellinger: 1.0 - (-0.5 * mu * mu).exp(),
        kl: 2.0 * mu * mu,
    })
}

/// The same three divergences from their defining integrals.
pub fn reference_divergences_quadrature(mu: f64, tol: f64) -> Result<ReferenceDivergences> {
    let pair = GaussianPair1d::symmetric(mu);
    let (a, b) = pair.interval();
    let tvd = adaptive_simpson(|x| 0.5 * (pair.pdf1(x) - pair.pdf2(x)).abs(), a, b, tol)?;
    let bc = adaptive_simpson(|x| (pair.pdf1(x) * pair.pdf2(x)).sqrt(), a, b, tol)?;
    // log(f1/f2) = 2μx for this pair; written out to avoid 0/0 in the tails.
    let kl = adaptive_simpson(|x| pair.pdf1(x) * 2.0 * mu * x, a, b, tol)?;
    Ok(ReferenceDivergences { tvd, hellinger: 1.0 - bc, kl })
}

/// Labeled feature vectors. Labels are zero-based class indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
    d: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::dim(format!("{} feature rows vs {} labels", features.len(), labels.len())));
        }
        if features.is_empty() {
            return Err(Error::arg("dataset is empty"));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(Error::dim("feature rows must share one non-zero length"));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
            return Err(Error::arg(format!("label {bad} out of range for K = {k}")));
        }
        Ok(Self { features, labels, k, d })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Row indices of each class.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.k];
        for (i, &c) in self.labels.iter().enumerate() {
            parts[c].push(i);
        }
        parts
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.partition().iter().map(Vec::len).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&i| self.features[i].clone()).collect(),
            rows.iter().map(|&i| self.labels[i]).collect(),
            self.k,
        )
    }

    /// Class-stratified random split into train/validation/test by the given
    /// fractions of each class (the remainder goes to test).
    pub fn split(&self, train: f64, validate: f64, seed: u64) -> Result<(Self, Self, Self)> {
        use rand::seq::SliceRandom;
        if !(train > 0.0 && validate >= 0.0 && train + validate <= 1.0) {
            return Err(Error::arg("split fractions must be positive and sum to at most 1"));
        }
        let mut r = rng::rng(seed);
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for mut part in self.partition() {
            part.shuffle(&mut r);
            let n = part.len();
            let nt = ((n as f64) * train).round() as usize;
            let nv = (((n as f64) * validate).round() as usize).min(n - nt);
            a.extend_from_slice(&part[..nt]);
            b.extend_from_slice(&part[nt..nt + nv]);
            c.extend_from_slice(&part[nt + nv..]);
        }
        for v in [&mut a, &mut b, &mut c] {
            v.sort_unstable();
        }
        let mk = |rows: &[usize]| {
            if rows.is_empty() { Err(Error::arg("split produced an empty part")) } else { self.subset(rows) }
        };
        Ok((mk(&a)?, mk(&b)?, mk(&c)?))
    }

    /// CSV with header `f_1,…,f_d,label`; labels are written one-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("f_{j}")).collect();
        header.push("label".into());
        wr.write_record(&header)?;
        for (x, &c) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            rec.push((c + 1).to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the format written by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(r: R, k: Option<usize>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse { line, message: format!("{s:?}: {e}") })
            };
            let n = rec.len();
            if n < 2 {
                return Err(Error::Parse { line, message: "need at least one feature and a label".into() });
            }
            let x = rec.iter().take(n - 1).map(parse).collect::<Result<Vec<_>>>()?;
            let label: usize = rec[n - 1].trim().parse().map_err(|e| Error::Parse {
                line,
                message: format!("label {:?}: {e}", &rec[n - 1]),
            })?;
            if label == 0 {
                return Err(Error::Parse { line, message: "labels are one-based".into() });
            }
            features.push(x);
            labels.push(label - 1);
        }
        let k = k.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(features, labels, k)
    }
}

/// Mixture presets for the synthetic experiments.
pub mod presets {
    use super::GaussianMixture;

    fn scaled_ones(scales: &[f64], d: usize) -> Vec<Vec<f64>> {
        scales.iter().map(|&s| vec![s; d]).collect()
    }

    /// Scenario A class-mean multipliers (d = 4) for K ∈ {3, 4, 5}.
    pub fn scenario_a_scales(k: usize) -> Option<&'static [f64]> {
        match k {
            3 => Some(&[0.25, -0.25, 1.25]),
            4 => Some(&[-0.25, 0.25, 0.75, 2.5]),
            5 => Some(&[-0.25, 0.25, 0.75, 2.5, -1.0]),
            _ => None,
        }
    }

    pub const SCENARIO_A_DIM: usize = 4;
    pub const SCENARIO_A_POINTS_PER_CLASS: usize = 250;

    pub fn scenario_a(k: usize) -> Option<GaussianMixture> {
        let means = scaled_ones(scenario_a_scales(k)?, SCENARIO_A_DIM);
        Some(GaussianMixture::uniform(means).expect("preset is valid"))
    }

    pub const SCENARIO_B_DIM: usize = 20;
    pub const SCENARIO_B_POINTS_PER_CLASS: usize = 10_000;
    pub const SCENARIO_B_BETAS: [f64; 3] = [0.15, 0.25, 0.35];
    const SCENARIO_B_MULTIPLIERS: [f64; 5] = [-3.0, -1.0, 1.0, 5.0, 10.0];

    /// Scenario B: K = 5, d = 20, means `{−3β, −β, β, 5β, 10β}·𝟙`.
    pub fn scenario_b(beta: f64) -> GaussianMixture {
        let scales: Vec<f64> = SCENARIO_B_MULTIPLIERS.iter().map(|m| m * beta).collect();
        GaussianMixture::uniform(scaled_ones(&scales, SCENARIO_B_DIM)).expect("preset is valid")
    }

    /// Scenario C reuses Scenario B's highest-overlap setting.
    pub fn scenario_c() -> GaussianMixture {
        scenario_b(SCENARIO_B_BETAS[0])
    }
}
