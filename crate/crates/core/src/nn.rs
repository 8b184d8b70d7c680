//! Fully connected ReLU network with hand-written backpropagation.
//!
//! The output layer produces raw scores; callers apply [`softmax`]. Hidden
//! layers may carry inverted dropout (survivors scaled by `1/(1−rate)`),
//! which is only active when a random stream is supplied.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::simplex::{softmax, SimplexVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    layer_sizes: Vec<usize>,
    dropout_rates: Vec<f64>,
    /// Per layer, `out × in` row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Training target for the cross-entropy loss.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    /// Probability vector over the outputs.
    Soft(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Target,
}

impl Example {
    pub fn new(input: Vec<f64>, target: Target) -> Self {
        Self { input, target }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Heavy-ball momentum; 0 gives plain SGD.
    #[serde(default)]
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 500, batch_size: 32, learning_rate: 1e-2, momentum: 0.0, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Parameter gradients, shaped like the network's weights and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &FeedForwardNet) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b).copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Source of training examples, batched per epoch.
pub trait TrainingData {
    fn epoch(&mut self, epoch: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<Example>>>;
}

/// A fixed example set reshuffled every epoch.
pub struct Shuffled(pub Vec<Example>);

impl TrainingData for Shuffled {
    fn epoch(&mut self, _epoch: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<Example>>> {
        if self.0.is_empty() {
            return Err(Error::arg("no training examples"));
        }
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.shuffle(rng);
        Ok(order.chunks(batch_size).map(|c| c.iter().map(|&i| self.0[i].clone()).collect()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Cached forward pass for backpropagation.
struct Tape {
    /// `activations[0]` is the input; the last entry holds the logits.
    activations: Vec<Vec<f64>>,
    /// Per hidden layer: the factor applied after ReLU (0, 1, or 1/(1−p)),
    /// or 0 where the pre-activation was non-positive.
    gates: Vec<Vec<f64>>,
}

impl FeedForwardNet {
    /// Glorot-uniform weights, zero biases, no dropout.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut r = rng::rng(seed);
        for (l, w) in net.weights.iter_mut().enumerate() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.iter_mut().for_each(|v| *v = r.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::arg("need at least input and output layers, all non-empty"));
        }
        let layers = layer_sizes.len() - 1;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            dropout_rates: vec![0.0; layers - 1],
            weights: (0..layers).map(|l| vec![0.0; layer_sizes[l] * layer_sizes[l + 1]]).collect(),
            biases: (0..layers).map(|l| vec![0.0; layer_sizes[l + 1]]).collect(),
        })
    }

    /// `input → hidden × depth → output`.
    pub fn mlp(input: usize, hidden: usize, depth: usize, output: usize, seed: u64) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(output);
        Self::new(&sizes, seed)
    }

    /// Sets the same dropout rate on every hidden layer.
    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg("dropout rate must lie in [0, 1)"));
        }
        self.dropout_rates.iter_mut().for_each(|r| *r = rate);
        Ok(self)
    }

    pub fn with_dropout_rates(mut self, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != self.dropout_rates.len() || rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::arg("one dropout rate in [0, 1) per hidden layer required"));
        }
        self.dropout_rates = rates;
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn dropout_rates(&self) -> &[f64] {
        &self.dropout_rates
    }

    pub fn has_dropout(&self) -> bool {
        self.dropout_rates.iter().any(|&r| r > 0.0)
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b).copied()).collect()
    }

    /// Mutable access to parameter `index` in [`FeedForwardNet::parameters`] order.
    pub fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                return &mut w[index];
            }
            index -= w.len();
            if index < b.len() {
                return &mut b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::dim(format!("input of length {} for a net expecting {}", x.len(), self.input_size())));
        }
        Ok(())
    }

    fn run(&self, x: &[f64], mut dropout: Option<&mut Rng>) -> Tape {
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut gates = Vec::with_capacity(layers - 1);
        activations.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let a = &activations[l];
            let w = &self.weights[l];
            let mut z: Vec<f64> = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(a).map(|(p, q)| p * q).sum::<f64>();
            }
            if l + 1 < layers {
                let rate = self.dropout_rates[l];
                let mut gate = vec![0.0; n_out];
                for o in 0..n_out {
                    if z[o] > 0.0 {
                        gate[o] = match dropout.as_deref_mut() {
                            Some(r) if rate > 0.0 => {
                                if r.random::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) }
                            }
                            _ => 1.0,
                        };
                    } else if let Some(r) = dropout.as_deref_mut() {
                        // keep the random stream aligned regardless of activations
                        if rate > 0.0 {
                            let _: f64 = r.random();
                        }
                    }
                    z[o] *= gate[o];
                }
                gates.push(gate);
            }
            activations.push(z);
        }
        Tape { activations, gates }
    }

    /// Raw output scores with dropout disabled.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x, None).activations.pop().unwrap())
    }

    /// Raw output scores with dropout active, driven by `rng`.
    pub fn forward_stochastic(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x, Some(rng)).activations.pop().unwrap())
    }

    /// Forward pass; when `dropout_active`, masks are drawn from `seed`.
    pub fn forward_seeded(&self, x: &[f64], dropout_active: bool, seed: u64) -> Result<Vec<f64>> {
        if dropout_active {
            self.forward_stochastic(x, &mut rng::rng(seed))
        } else {
            self.forward(x)
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<SimplexVector<f64>> {
        Ok(softmax(&self.forward(x)?))
    }

    fn backprop(&self, tape: &Tape, target: &Target, grads: &mut Gradients) -> Result<f64> {
        let layers = self.weights.len();
        let logits = tape.activations.last().unwrap();
        let probs = softmax(logits);
        let k = probs.len();
        let mut delta: Vec<f64> = probs.to_vec();
        let loss = match target {
            Target::Class(c) => {
                if *c >= k {
                    return Err(Error::arg(format!("class target {c} for {k} outputs")));
                }
                delta[*c] -= 1.0;
                -log_softmax_at(logits, *c)
            }
            Target::Soft(t) => {
                if t.len() != k {
                    return Err(Error::dim(format!("soft target of length {} for {k} outputs", t.len())));
                }
                let mut loss = 0.0;
                for j in 0..k {
                    delta[j] -= t[j];
                    if t[j] > 0.0 {
                        loss -= t[j] * log_softmax_at(logits, j);
                    }
                }
                // Σt may differ from 1 for unnormalized targets; the exact
                // gradient of −Σ t_j log p_j is (Σt) p − t.
                let mass: f64 = t.iter().sum();
                if (mass - 1.0).abs() > 1e-12 {
                    for j in 0..k {
                        delta[j] += (mass - 1.0) * probs[j];
                    }
                }
                loss
            }
        };
        for l in (0..layers).rev() {
            let n_in = self.layer_sizes[l];
            let a = &tape.activations[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    row.iter_mut().zip(a).for_each(|(g, &ai)| *g += d * ai);
                }
                grads.biases[l][o] += d;
            }
            if l > 0 {
                let w = &self.weights[l];
                let gate = &tape.gates[l - 1];
                let mut next = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &w[o * n_in..(o + 1) * n_in];
                        next.iter_mut().zip(row).for_each(|(nx, &wi)| *nx += d * wi);
                    }
                }
                next.iter_mut().zip(gate).for_each(|(nx, &g)| *nx *= g);
                delta = next;
            }
        }
        Ok(loss)
    }

    fn batch_grad(&self, batch: &[Example], mut dropout: Option<&mut Rng>) -> Result<(Gradients, f64)> {
        if batch.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for ex in batch {
            self.check_input(&ex.input)?;
            let tape = self.run(&ex.input, dropout.as_deref_mut());
            loss += self.backprop(&tape, &ex.target, &mut grads)?;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        Ok((grads, loss / n))
    }

    /// Exact gradient of the mean cross-entropy over `batch`, dropout off.
    pub fn grad(&self, batch: &[Example]) -> Result<(Gradients, f64)> {
        let (g, loss) = self.batch_grad(batch, None)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDivergence { epoch: 0, trace: vec![loss] });
        }
        Ok((g, loss))
    }

    /// Mean cross-entropy over `batch`, dropout off.
    pub fn loss(&self, batch: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for ex in batch {
            let logits = self.forward(&ex.input)?;
            total += match &ex.target {
                Target::Class(c) => -log_softmax_at(&logits, *c),
                Target::Soft(t) => {
                    -t.iter().enumerate().filter(|(_, &tj)| tj > 0.0).map(|(j, tj)| tj * log_softmax_at(&logits, j)).sum::<f64>()
                }
            };
        }
        Ok(total / batch.len().max(1) as f64)
    }

    fn apply(&mut self, grads: &Gradients, velocity: &mut Gradients, lr: f64, momentum: f64) {
        for (l, (w, b)) in self.weights.iter_mut().zip(self.biases.iter_mut()).enumerate() {
            for (i, p) in w.iter_mut().enumerate() {
                let v = &mut velocity.weights[l][i];
                *v = momentum * *v - lr * grads.weights[l][i];
                *p += *v;
            }
            for (i, p) in b.iter_mut().enumerate() {
                let v = &mut velocity.biases[l][i];
                *v = momentum * *v - lr * grads.biases[l][i];
                *p += *v;
            }
        }
    }

    /// Mini-batch gradient descent on the cross-entropy loss.
    pub fn train(&mut self, data: &mut dyn TrainingData, config: &TrainConfig) -> Result<TrainReport> {
        config.validate()?;
        let mut r = rng::rng(config.seed);
        let mut velocity = Gradients::zeros_like(self);
        let mut trace = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let batches = data.epoch(epoch, config.batch_size, &mut r)?;
            let mut total = 0.0;
            let mut count = 0usize;
            for batch in &batches {
                let (g, loss) = self.batch_grad(batch, Some(&mut r))?;
                if !loss.is_finite() {
                    trace.push(loss);
                    return Err(Error::TrainingDivergence { epoch, trace });
                }
                self.apply(&g, &mut velocity, config.learning_rate, config.momentum);
                total += loss * batch.len() as f64;
                count += batch.len();
            }
            let mean = total / count.max(1) as f64;
            trace.push(mean);
            if !self.parameters().iter().all(|p| p.is_finite()) {
                return Err(Error::TrainingDivergence { epoch, trace });
            }
        }
        Ok(TrainReport { loss_trace: trace })
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        Ok(serde_json::to_writer(w, self)?)
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let net: Self = serde_json::from_reader(r)?;
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let layers = self.layer_sizes.len();
        if layers < 2
            || self.weights.len() != layers - 1
            || self.biases.len() != layers - 1
            || self.dropout_rates.len() != layers - 2
        {
            return Err(Error::dim("network layer counts are inconsistent"));
        }
        for l in 0..layers - 1 {
            if self.weights[l].len() != self.layer_sizes[l] * self.layer_sizes[l + 1]
                || self.biases[l].len() != self.layer_sizes[l + 1]
            {
                return Err(Error::dim(format!("layer {l} parameter shapes do not match layer sizes")));
            }
        }
        if !self.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::arg("network parameters must be finite"));
        }
        Ok(())
    }
}

fn log_softmax_at(logits: &[f64], j: usize) -> f64 {
    logits[j] - crate::simplex::log_sum_exp(logits)
}

/// Writes a loss trace as `epoch,loss` CSV.
pub fn write_loss_trace<W: Write>(trace: &[f64], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["epoch", "loss"])?;
    for (e, l) in trace.iter().enumerate() {
        wr.write_record([e.to_string(), l.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
