//! Fixed-iteration training of one task head, training curves and the
//! binary checkpoint format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Task;
use crate::embedding::{FeatureVector, FEATURE_DIM};
use crate::eval;
use crate::mlp::{
    batch_gradients, cross_entropy_loss, forward, init_params, Activation, AdamHyper, AdamState, MlpError,
    MlpParams,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no label for image id `{0}`")]
    LabelMissing(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub iterations: usize,
    pub batch_size: usize,
    pub hyper: AdamHyper,
    pub seed: u64,
    pub log_every: usize,
    pub activation: Activation,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            iterations: 4000,
            batch_size: 32,
            hyper: AdamHyper::default(),
            seed: 42,
            log_every: 10,
            activation: Activation::Relu,
        }
    }

    fn validate(&self, n: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch_size {} must be in 1..={n}", self.batch_size));
        }
        self.hyper.validate().or_else(bad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    /// Mean cross-entropy of the batch used at this iteration, before the update.
    pub loss: f64,
    /// Accuracy over the full training pool after the update.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// `iteration,loss,train_accuracy` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,train_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.iteration, r.loss, r.train_accuracy);
        }
        out
    }
}

/// Streams indices from successive shuffled permutations of `0..n`; every
/// index appears once per epoch before any repeats.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, rng }
    }

    pub fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        i
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size).map(|_| self.next_index()).collect()
    }
}

fn should_log(iteration: usize, config: &TrainConfig) -> bool {
    iteration == 1 || iteration % config.log_every == 0 || iteration == config.iterations
}

/// Positive-class score of each input.
pub fn positive_scores(params: &MlpParams<f32>, inputs: &[&[f32]]) -> Result<Vec<f64>, MlpError> {
    inputs
        .par_iter()
        .map(|x| forward(params, x).map(|t| f64::from(t.probs[1])))
        .collect()
}

/// Trains one head for exactly `config.iterations` Adam steps on batch-mean
/// gradients.
pub fn train_task(
    features: &[(String, FeatureVector)],
    labels: &HashMap<String, u8>,
    config: &TrainConfig,
) -> Result<(MlpParams<f32>, TrainingLog), TrainError> {
    if features.is_empty() {
        return Err(TrainError::InvalidConfig("no training features".into()));
    }
    let ys: Vec<usize> = features
        .iter()
        .map(|(id, _)| {
            labels
                .get(id)
                .map(|&l| l as usize)
                .ok_or_else(|| TrainError::LabelMissing(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let xs: Vec<&[f32]> = features.iter().map(|(_, f)| f.as_slice()).collect();
    if let Some((id, f)) = features.iter().find(|(_, f)| f.as_slice().len() != FEATURE_DIM) {
        return Err(TrainError::ShapeMismatch(format!("{id} has {} features", f.as_slice().len())));
    }
    train_on_slices(&xs, &ys, config)
}

/// Core loop on raw rows; inputs need not be 1000-wide, which keeps toy
/// problems cheap.
pub fn train_on_slices(
    xs: &[&[f32]],
    ys: &[usize],
    config: &TrainConfig,
) -> Result<(MlpParams<f32>, TrainingLog), TrainError> {
    if let Some(&y) = ys.iter().find(|&&y| y > 1) {
        return Err(MlpError::LabelOutOfDomain(y).into());
    }
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(TrainError::ShapeMismatch(format!("{} inputs for {} labels", xs.len(), ys.len())));
    }
    config.validate(xs.len())?;
    let n_in = xs[0].len();
    let mut params = if n_in == FEATURE_DIM {
        init_params(config.seed)
    } else {
        MlpParams::glorot(n_in, crate::mlp::HIDDEN_UNITS, crate::mlp::OUTPUT_UNITS, config.seed)
    }
    .with_activation(config.activation);
    let mut state = AdamState::new(&params);
    let mut sampler = EpochSampler::new(xs.len(), config.seed);
    let mut log = TrainingLog::default();
    let label_bytes: Vec<u8> = ys.iter().map(|&y| y as u8).collect();

    for iteration in 1..=config.iterations {
        let batch = sampler.next_batch(config.batch_size);
        let traces = batch
            .par_iter()
            .map(|&i| forward(&params, xs[i]))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| match e {
                MlpError::NonFiniteInput => TrainError::NonFiniteLoss { iteration },
                other => other.into(),
            })?;
        let batch_labels: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
        let loss = traces
            .iter()
            .zip(&batch_labels)
            .map(|(t, &y)| cross_entropy_loss(&t.probs, y).map(f64::from))
            .sum::<Result<f64, _>>()?
            / batch.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration });
        }
        let grads = batch_gradients(&traces, &params, &batch_labels)?;
        state.step(&mut params, &grads, &config.hyper)?;

        if should_log(iteration, config) {
            let scores = positive_scores(&params, xs)?;
            let train_accuracy = eval::accuracy(&scores, &label_bytes).expect("non-empty, equal lengths");
            log.rows.push(LogRow {
                iteration,
                loss,
                train_accuracy,
            });
        }
    }
    Ok((params, log))
}

/// Two Gaussian clusters with means `+0.3 u` and `-0.3 u` for a random unit
/// vector `u`, per-component standard deviation 0.05. Even indices are
/// positive. The margin along `u` is about six standard deviations, so the
/// set is linearly separable.
pub fn separable_clusters(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0f64, 1.0).expect("valid normal");
    let mut u: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    let noise = Normal::new(0.0f64, 0.05).expect("valid normal");
    let ys: Vec<usize> = (0..n).map(|i| usize::from(i % 2 == 0)).collect();
    let xs = ys
        .iter()
        .map(|&y| {
            let sign = if y == 1 { 0.3 } else { -0.3 };
            u.iter().map(|&c| (sign * c + noise.sample(&mut rng)) as f32).collect()
        })
        .collect();
    (xs, ys)
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MLPW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("checkpoint has {found} bytes but its dimensions imply {expected}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("checkpoint dimensions {found:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("checkpoint i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Byte size of a checkpoint with the given dimensions.
pub fn checkpoint_size(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
    20 + 4 * (n_hidden * n_in + n_hidden + n_out * n_hidden + n_out)
}

/// `MLPW`, u32 version, u32 dims (in, hidden, out), then little-endian f32
/// W1 (row-major), b1, W2 (row-major), b2.
pub fn encode_checkpoint(params: &MlpParams<f32>) -> Vec<u8> {
    let (n_in, n_hidden, n_out) = params.dims();
    let mut out = Vec::with_capacity(checkpoint_size(n_in, n_hidden, n_out));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION, n_in as u32, n_hidden as u32, n_out as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MlpParams<f32>, CheckpointError> {
    let truncated = |expected| CheckpointError::TruncatedFile {
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(20));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 20 {
        return Err(truncated(20));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let version = word(0);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let dims = (word(1) as usize, word(2) as usize, word(3) as usize);
    let expected = checkpoint_size(dims.0, dims.1, dims.2);
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(CheckpointError::TrailingBytes {
            expected,
            found: bytes.len(),
        });
    }
    let mut floats = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    let (n_in, n_hidden, n_out) = dims;
    let w1 = take(n_hidden * n_in);
    let b1 = take(n_hidden);
    let w2 = take(n_out * n_hidden);
    let b2 = take(n_out);
    Ok(MlpParams::from_parts(dims, w1, b1, w2, b2).expect("lengths derived from dims"))
}

pub fn save_checkpoint(params: &MlpParams<f32>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams<f32>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it has the given dimensions.
pub fn load_checkpoint_expecting(path: &Path, expected: (usize, usize, usize)) -> Result<MlpParams<f32>, CheckpointError> {
    let params = load_checkpoint(path)?;
    if params.dims() != expected {
        return Err(CheckpointError::DimensionMismatch {
            expected,
            found: params.dims(),
        });
    }
    Ok(params)
}
