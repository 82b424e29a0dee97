//! Trainable models shared by the gossip, federated, and centralized systems.
//!
//! Two dense families are shipped: plain softmax regression and a
//! one-hidden-layer MLP (ReLU hidden, softmax output). Both train with
//! mini-batch SGD on mean cross-entropy. Everything is f64 and fully
//! deterministic in the passed seed; no operation mutates its inputs.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::DataShard;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("shard is empty")]
    EmptyShard,
    #[error("feature dimension mismatch: spec expects {expected}, shard has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: usize },
    #[error("non-finite values after {0}")]
    NonFinite(&'static str),
    #[error("weight shapes do not match")]
    ShapeMismatch,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One parameter tensor: a shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; len],
        }
    }
}

/// Ordered set of parameter tensors for one model instance; the unit that is
/// exchanged and aggregated between agents.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub tensors: Vec<Tensor>,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"GLWW";

impl WeightVector {
    pub fn zeros_like(&self) -> WeightVector {
        WeightVector {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape.clone()))
                .collect(),
        }
    }

    pub fn same_shapes(&self, other: &WeightVector) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    /// self += factor * other, element-wise.
    pub fn add_scaled(&mut self, other: &WeightVector, factor: f64) {
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            axpy(&mut dst.values, factor, &src.values);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for v in &mut t.values {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.values.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute element-wise difference; infinity on shape mismatch.
    pub fn max_abs_diff(&self, other: &WeightVector) -> f64 {
        if !self.same_shapes(other) {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            for (x, y) in a.values.iter().zip(&b.values) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// Write the little-endian checkpoint format: magic "GLWW", u32 tensor
    /// count, then per tensor u32 rank, u32 dims, f64 values.
    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), LearnerError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<WeightVector, LearnerError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], LearnerError> {
            let end = *cursor + n;
            let slice = bytes
                .get(*cursor..end)
                .ok_or_else(|| LearnerError::BadCheckpoint("truncated file".into()))?;
            *cursor = end;
            Ok(slice)
        };
        let magic = take(&mut cursor, 4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(LearnerError::BadCheckpoint(format!(
                "bad magic {magic:02x?}"
            )));
        }
        let read_u32 = |cursor: &mut usize| -> Result<u32, LearnerError> {
            let b = take(cursor, 4)?;
            Ok(u32::from_le_bytes(b.try_into().unwrap()))
        };
        let count = read_u32(&mut cursor)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rank = read_u32(&mut cursor)? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(read_u32(&mut cursor)? as usize);
            }
            let len: usize = shape.iter().product();
            if len > (1 << 31) {
                return Err(LearnerError::BadCheckpoint(format!(
                    "implausible tensor of {len} values"
                )));
            }
            let raw = take(&mut cursor, len * 8)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { shape, values });
        }
        if cursor != bytes.len() {
            return Err(LearnerError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(WeightVector { tensors })
    }
}

/// Model family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    SoftmaxRegression,
    Mlp1,
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelFamily::SoftmaxRegression => "softmax_regression",
            ModelFamily::Mlp1 => "mlp1",
        })
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax_regression" => Ok(ModelFamily::SoftmaxRegression),
            "mlp1" => Ok(ModelFamily::Mlp1),
            other => Err(format!("unknown learner family `{other}`")),
        }
    }
}

/// Hyperparameters of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub family: ModelFamily,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Hidden width; only meaningful for `Mlp1`.
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init_scale: f64,
}

impl LearnerSpec {
    pub fn softmax_regression(input_dim: usize, num_classes: usize) -> LearnerSpec {
        LearnerSpec {
            family: ModelFamily::SoftmaxRegression,
            input_dim,
            num_classes,
            hidden_dim: 0,
            learning_rate: 0.05,
            batch_size: 32,
            init_scale: 0.05,
        }
    }

    pub fn mlp1(input_dim: usize, num_classes: usize, hidden_dim: usize) -> LearnerSpec {
        LearnerSpec {
            hidden_dim,
            family: ModelFamily::Mlp1,
            ..LearnerSpec::softmax_regression(input_dim, num_classes)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.num_classes < 2 {
            return Err(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.input_dim == 0 {
            return Err("input_dim must be positive".into());
        }
        if self.family == ModelFamily::Mlp1 && self.hidden_dim == 0 {
            return Err("mlp1 needs a positive hidden_dim".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(format!("invalid learning_rate {}", self.learning_rate));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(format!("invalid init_scale {}", self.init_scale));
        }
        Ok(())
    }

    fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        match self.family {
            ModelFamily::SoftmaxRegression => vec![
                vec![self.num_classes, self.input_dim],
                vec![self.num_classes],
            ],
            ModelFamily::Mlp1 => vec![
                vec![self.hidden_dim, self.input_dim],
                vec![self.hidden_dim],
                vec![self.num_classes, self.hidden_dim],
                vec![self.num_classes],
            ],
        }
    }

    /// True for tensors holding multiplicative weights (biases start at 0).
    fn is_weight_matrix(idx: usize) -> bool {
        idx % 2 == 0
    }
}

/// Loss and accuracy of one model on one example set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    /// Mean cross-entropy in nats.
    pub loss: f64,
    /// Fraction of examples whose argmax prediction matches the label.
    pub accuracy: f64,
    pub n: usize,
}

/// Dot product with four independent accumulators. The fixed association
/// keeps results bit-identical run to run while letting the loop vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// dst += factor * src, element-wise.
fn axpy(dst: &mut [f64], factor: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

/// Initialize weights for `spec`: matrices uniform in
/// [-init_scale, +init_scale], biases zero. Deterministic in (spec, seed).
pub fn init_weights(spec: &LearnerSpec, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = spec.init_scale;
    let tensors = spec
        .tensor_shapes()
        .into_iter()
        .enumerate()
        .map(|(idx, shape)| {
            let mut t = Tensor::zeros(shape);
            if LearnerSpec::is_weight_matrix(idx) && scale > 0.0 {
                for v in &mut t.values {
                    *v = rng.gen::<f64>() * 2.0 * scale - scale;
                }
            }
            t
        })
        .collect();
    WeightVector { tensors }
}

/// Scratch buffers reused across examples.
struct Scratch {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &LearnerSpec) -> Scratch {
        Scratch {
            hidden_pre: vec![0.0; spec.hidden_dim],
            hidden: vec![0.0; spec.hidden_dim],
            logits: vec![0.0; spec.num_classes],
            probs: vec![0.0; spec.num_classes],
            d_hidden: vec![0.0; spec.hidden_dim],
        }
    }
}

fn check_dims(spec: &LearnerSpec, shard: &DataShard) -> Result<(), LearnerError> {
    if shard.input_dim() != spec.input_dim {
        return Err(LearnerError::DimensionMismatch {
            expected: spec.input_dim,
            got: shard.input_dim(),
        });
    }
    Ok(())
}

fn check_label(spec: &LearnerSpec, label: u32) -> Result<(), LearnerError> {
    if (label as usize) >= spec.num_classes {
        return Err(LearnerError::LabelOutOfRange {
            label,
            num_classes: spec.num_classes,
        });
    }
    Ok(())
}

/// Fill `scratch.logits` (and hidden buffers for the MLP) for one example.
fn forward(w: &WeightVector, spec: &LearnerSpec, x: &[f64], scratch: &mut Scratch) {
    match spec.family {
        ModelFamily::SoftmaxRegression => {
            let (wm, b) = (&w.tensors[0], &w.tensors[1]);
            let d = spec.input_dim;
            for c in 0..spec.num_classes {
                scratch.logits[c] = b.values[c] + dot(&wm.values[c * d..(c + 1) * d], x);
            }
        }
        ModelFamily::Mlp1 => {
            let (w1, b1, w2, b2) = (&w.tensors[0], &w.tensors[1], &w.tensors[2], &w.tensors[3]);
            let d = spec.input_dim;
            let h = spec.hidden_dim;
            for j in 0..h {
                let pre = b1.values[j] + dot(&w1.values[j * d..(j + 1) * d], x);
                scratch.hidden_pre[j] = pre;
                scratch.hidden[j] = pre.max(0.0);
            }
            for c in 0..spec.num_classes {
                scratch.logits[c] =
                    b2.values[c] + dot(&w2.values[c * h..(c + 1) * h], &scratch.hidden);
            }
        }
    }
}

/// Log-sum-exp of the logits, stabilized by the running maximum.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    max + sum.ln()
}

/// Index of the largest logit; ties break toward the lowest class index.
fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities for one example. Exposed for inspection and tests.
pub fn predict_probs(
    w: &WeightVector,
    spec: &LearnerSpec,
    x: &[f64],
) -> Result<Vec<f64>, LearnerError> {
    if x.len() != spec.input_dim {
        return Err(LearnerError::DimensionMismatch {
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    let mut scratch = Scratch::new(spec);
    forward(w, spec, x, &mut scratch);
    let lse = log_sum_exp(&scratch.logits);
    Ok(scratch.logits.iter().map(|z| (z - lse).exp()).collect())
}

/// Accumulate the cross-entropy gradient of one example into `grad`.
/// `forward` must already have filled the scratch buffers.
fn backward_into(
    w: &WeightVector,
    spec: &LearnerSpec,
    x: &[f64],
    label: usize,
    scratch: &mut Scratch,
    grad: &mut WeightVector,
) {
    let lse = log_sum_exp(&scratch.logits);
    for c in 0..spec.num_classes {
        let p = (scratch.logits[c] - lse).exp();
        scratch.probs[c] = p - if c == label { 1.0 } else { 0.0 };
    }
    match spec.family {
        ModelFamily::SoftmaxRegression => {
            let d = spec.input_dim;
            for c in 0..spec.num_classes {
                let dz = scratch.probs[c];
                axpy(&mut grad.tensors[0].values[c * d..(c + 1) * d], dz, x);
                grad.tensors[1].values[c] += dz;
            }
        }
        ModelFamily::Mlp1 => {
            let d = spec.input_dim;
            let h = spec.hidden_dim;
            scratch.d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..spec.num_classes {
                let dz = scratch.probs[c];
                axpy(
                    &mut grad.tensors[2].values[c * h..(c + 1) * h],
                    dz,
                    &scratch.hidden,
                );
                grad.tensors[3].values[c] += dz;
                axpy(
                    &mut scratch.d_hidden,
                    dz,
                    &w.tensors[2].values[c * h..(c + 1) * h],
                );
            }
            for j in 0..h {
                if scratch.hidden_pre[j] > 0.0 {
                    let dpre = scratch.d_hidden[j];
                    axpy(&mut grad.tensors[0].values[j * d..(j + 1) * d], dpre, x);
                    grad.tensors[1].values[j] += dpre;
                }
            }
        }
    }
}

/// Mean cross-entropy gradient over the whole batch, written into `grad`
/// (which is zeroed first).
fn batch_gradient_into(
    w: &WeightVector,
    batch: &DataShard,
    indices: &[usize],
    spec: &LearnerSpec,
    scratch: &mut Scratch,
    grad: &mut WeightVector,
) -> Result<(), LearnerError> {
    for t in &mut grad.tensors {
        t.values.iter_mut().for_each(|v| *v = 0.0);
    }
    for &i in indices {
        let label = batch.label(i);
        check_label(spec, label)?;
        let x = batch.row(i);
        forward(w, spec, x, scratch);
        backward_into(w, spec, x, label as usize, scratch, grad);
    }
    grad.scale(1.0 / indices.len() as f64);
    Ok(())
}

/// Analytic gradient of mean cross-entropy over `batch` at `w`.
pub fn gradient(
    w: &WeightVector,
    batch: &DataShard,
    spec: &LearnerSpec,
) -> Result<WeightVector, LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyShard);
    }
    check_dims(spec, batch)?;
    let mut scratch = Scratch::new(spec);
    let mut grad = w.zeros_like();
    let indices: Vec<usize> = (0..batch.len()).collect();
    batch_gradient_into(w, batch, &indices, spec, &mut scratch, &mut grad)?;
    Ok(grad)
}

/// Run `epochs` of mini-batch SGD on `shard`, returning the new weights and
/// the mean training loss of the returned weights over the shard. Example
/// order is a fresh seeded shuffle each epoch; the final partial batch is
/// used. The input weights are untouched.
pub fn train_epochs(
    w: &WeightVector,
    shard: &DataShard,
    epochs: u32,
    spec: &LearnerSpec,
    seed: u64,
) -> Result<(WeightVector, f64), LearnerError> {
    if shard.is_empty() {
        return Err(LearnerError::EmptyShard);
    }
    check_dims(spec, shard)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = w.clone();
    let mut grad = w.zeros_like();
    let mut scratch = Scratch::new(spec);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size.max(1)) {
            batch_gradient_into(&weights, shard, batch, spec, &mut scratch, &mut grad)?;
            weights.add_scaled(&grad, -spec.learning_rate);
        }
    }
    if !weights.is_finite() {
        return Err(LearnerError::NonFinite("training"));
    }
    let final_loss = evaluate(&weights, shard, spec)?.loss;
    Ok((weights, final_loss))
}

/// Mean cross-entropy and argmax accuracy of `w` on `testset`.
pub fn evaluate(
    w: &WeightVector,
    testset: &DataShard,
    spec: &LearnerSpec,
) -> Result<EvalResult, LearnerError> {
    if testset.is_empty() {
        return Err(LearnerError::EmptyShard);
    }
    check_dims(spec, testset)?;
    let mut scratch = Scratch::new(spec);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for i in 0..testset.len() {
        let label = testset.label(i);
        check_label(spec, label)?;
        forward(w, spec, testset.row(i), &mut scratch);
        let lse = log_sum_exp(&scratch.logits);
        loss_sum += lse - scratch.logits[label as usize];
        if argmax(&scratch.logits) == label as usize {
            correct += 1;
        }
    }
    let n = testset.len();
    let loss = loss_sum / n as f64;
    if !loss.is_finite() {
        return Err(LearnerError::NonFinite("evaluation"));
    }
    Ok(EvalResult {
        loss,
        accuracy: correct as f64 / n as f64,
        n,
    })
}
