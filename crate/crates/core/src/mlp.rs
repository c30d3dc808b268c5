//! Two-layer feed-forward classifier with softmax output, cross-entropy loss,
//! hand-written backpropagation and Adam.
//!
//! Everything is generic over the float type: training runs in `f32`, the
//! gradient check in `f64`.

use std::fmt::Debug;
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::FEATURE_DIM;

pub const HIDDEN_UNITS: usize = 1000;
pub const OUTPUT_UNITS: usize = 2;

/// Lower bound on the probability fed to `ln` in the loss.
pub const LOSS_CLIP: f64 = 1e-12;

pub trait Real: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static> Real for T {}

#[inline]
fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("representable constant")
}

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("label {0} is not 0 or 1")]
    LabelOutOfDomain(usize),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid Adam hyperparameters: {0}")]
    InvalidHyper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and activation `h`.
    #[inline]
    fn derivative<T: Real>(self, z: T, h: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - h * h,
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// Weights and biases. `w1` is `n_hidden x n_in` and `w2` is `n_out x n_hidden`,
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T = f32> {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_hidden,
            n_out,
            w1: vec![T::zero(); n_hidden * n_in],
            b1: vec![T::zero(); n_hidden],
            w2: vec![T::zero(); n_out * n_hidden],
            b2: vec![T::zero(); n_out],
            activation: Activation::Relu,
        }
    }

    /// Assembles parameters from flat buffers, checking every length.
    pub fn from_parts(
        dims: (usize, usize, usize),
        w1: Vec<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: Vec<T>,
    ) -> Result<Self, MlpError> {
        let (n_in, n_hidden, n_out) = dims;
        let expect = [n_hidden * n_in, n_hidden, n_out * n_hidden, n_out];
        let got = [w1.len(), b1.len(), w2.len(), b2.len()];
        if expect != got {
            return Err(MlpError::ShapeMismatch(format!(
                "buffers {got:?} do not match dims {n_in}-{n_hidden}-{n_out}"
            )));
        }
        Ok(Self {
            n_in,
            n_hidden,
            n_out,
            w1,
            b1,
            w2,
            b2,
            activation: Activation::Relu,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |fan_in: usize, fan_out: usize| -> Vec<T> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            (0..fan_in * fan_out).map(|_| lit(dist.sample(&mut rng))).collect()
        };
        let w1 = fill(n_in, n_hidden);
        let w2 = fill(n_hidden, n_out);
        Self {
            w1,
            w2,
            ..Self::zeros(n_in, n_hidden, n_out)
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_in, self.n_hidden, self.n_out)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn tensors(&self) -> [&[T]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<(), MlpError> {
        if x.len() != self.n_in {
            return Err(MlpError::ShapeMismatch(format!(
                "input has {} components, network expects {}",
                x.len(),
                self.n_in
            )));
        }
        // ReLU's max() would silently map NaN to zero.
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFiniteInput);
        }
        Ok(())
    }
}

/// The 1000-1000-2 classifier with Glorot-uniform weights and zero biases.
pub fn init_params(seed: u64) -> MlpParams<f32> {
    MlpParams::glorot(FEATURE_DIM, HIDDEN_UNITS, OUTPUT_UNITS, seed)
}

/// Dot product with eight independent accumulators so the compiler can
/// vectorize it. Summation order is fixed, so results are reproducible.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>, MlpError> {
    if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
        return Err(MlpError::NonFiniteInput);
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `-ln(max(p[label], 1e-12))`.
pub fn cross_entropy_loss<T: Real>(probs: &[T], label: usize) -> Result<T, MlpError> {
    if label > 1 || label >= probs.len() {
        return Err(MlpError::LabelOutOfDomain(label));
    }
    Ok(-(probs[label].max(lit(LOSS_CLIP))).ln())
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T = f32> {
    pub x: Vec<T>,
    pub pre_h: Vec<T>,
    pub h: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

pub fn forward<T: Real>(params: &MlpParams<T>, x: &[T]) -> Result<ForwardTrace<T>, MlpError> {
    params.check_input(x)?;
    let pre_h: Vec<T> = params
        .w1
        .chunks_exact(params.n_in)
        .zip(&params.b1)
        .map(|(row, &b)| dot(row, x) + b)
        .collect();
    let h: Vec<T> = pre_h.iter().map(|&z| params.activation.apply(z)).collect();
    let logits: Vec<T> = params
        .w2
        .chunks_exact(params.n_hidden)
        .zip(&params.b2)
        .map(|(row, &b)| dot(row, &h) + b)
        .collect();
    let probs = softmax(&logits)?;
    Ok(ForwardTrace {
        x: x.to_vec(),
        pre_h,
        h,
        logits,
        probs,
    })
}

/// Forward pass returning only the output probabilities.
pub fn predict<T: Real>(params: &MlpParams<T>, x: &[T]) -> Result<Vec<T>, MlpError> {
    forward(params, x).map(|t| t.probs)
}

/// Parameter gradients; same shapes as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub dw1: Vec<T>,
    pub db1: Vec<T>,
    pub dw2: Vec<T>,
    pub db2: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            dw1: vec![T::zero(); params.w1.len()],
            db1: vec![T::zero(); params.b1.len()],
            dw2: vec![T::zero(); params.w2.len()],
            db2: vec![T::zero(); params.b2.len()],
        }
    }

    pub fn tensors(&self) -> [&[T]; 4] {
        [&self.dw1, &self.db1, &self.dw2, &self.db2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn matches(&self, params: &MlpParams<T>) -> bool {
        self.tensors()
            .iter()
            .zip(params.tensors())
            .all(|(g, p)| g.len() == p.len())
    }
}

fn check_label(label: usize, n_out: usize) -> Result<(), MlpError> {
    if label > 1 || label >= n_out {
        return Err(MlpError::LabelOutOfDomain(label));
    }
    Ok(())
}

fn trace_matches<T: Real>(trace: &ForwardTrace<T>, params: &MlpParams<T>) -> Result<(), MlpError> {
    let (n_in, n_hidden, n_out) = params.dims();
    let ok = trace.x.len() == n_in
        && trace.pre_h.len() == n_hidden
        && trace.h.len() == n_hidden
        && trace.logits.len() == n_out
        && trace.probs.len() == n_out;
    if ok {
        Ok(())
    } else {
        Err(MlpError::ShapeMismatch("trace does not match parameters".into()))
    }
}

/// Error signal at the hidden pre-activations, plus the logit error.
fn hidden_delta<T: Real>(trace: &ForwardTrace<T>, params: &MlpParams<T>, label: usize) -> (Vec<T>, Vec<T>) {
    let dlogits: Vec<T> = trace
        .probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == label { p - T::one() } else { p })
        .collect();
    let n_hidden = params.n_hidden;
    let dpre_h = (0..n_hidden)
        .map(|j| {
            let dh: T = dlogits
                .iter()
                .enumerate()
                .map(|(k, &d)| params.w2[k * n_hidden + j] * d)
                .sum();
            dh * params.activation.derivative(trace.pre_h[j], trace.h[j])
        })
        .collect();
    (dlogits, dpre_h)
}

/// Analytic gradient of the cross-entropy loss of one example.
pub fn backward<T: Real>(trace: &ForwardTrace<T>, params: &MlpParams<T>, label: usize) -> Result<Gradients<T>, MlpError> {
    trace_matches(trace, params)?;
    check_label(label, params.n_out)?;
    let (dlogits, dpre_h) = hidden_delta(trace, params, label);
    let outer = |col: &[T], row: &[T]| -> Vec<T> {
        col.iter().flat_map(|&c| row.iter().map(move |&r| c * r)).collect()
    };
    Ok(Gradients {
        dw1: outer(&dpre_h, &trace.x),
        db1: dpre_h.clone(),
        dw2: outer(&dlogits, &trace.h),
        db2: dlogits,
    })
}

/// Mean gradient over a batch, accumulated row by row in example order.
/// Agrees with averaging [`backward`] over the batch.
pub fn batch_gradients<T: Real>(
    traces: &[ForwardTrace<T>],
    params: &MlpParams<T>,
    labels: &[usize],
) -> Result<Gradients<T>, MlpError> {
    if traces.is_empty() || traces.len() != labels.len() {
        return Err(MlpError::ShapeMismatch(format!(
            "{} traces for {} labels",
            traces.len(),
            labels.len()
        )));
    }
    for (t, &l) in traces.iter().zip(labels) {
        trace_matches(t, params)?;
        check_label(l, params.n_out)?;
    }
    let (n_in, n_hidden, _) = params.dims();
    let scale = T::one() / lit(traces.len() as f64);
    let deltas: Vec<(Vec<T>, Vec<T>)> = traces
        .iter()
        .zip(labels)
        .map(|(t, &l)| hidden_delta(t, params, l))
        .collect();

    let mut grads = Gradients::zeros_like(params);
    grads.dw1.par_chunks_mut(n_in).enumerate().for_each(|(j, row)| {
        for (t, (_, dpre)) in traces.iter().zip(&deltas) {
            let d = dpre[j];
            if d != T::zero() {
                for (g, &x) in row.iter_mut().zip(&t.x) {
                    *g = *g + d * x;
                }
            }
        }
        for g in row.iter_mut() {
            *g = *g * scale;
        }
    });
    grads.dw2.par_chunks_mut(n_hidden).enumerate().for_each(|(k, row)| {
        for (t, (dlogits, _)) in traces.iter().zip(&deltas) {
            let d = dlogits[k];
            for (g, &h) in row.iter_mut().zip(&t.h) {
                *g = *g + d * h;
            }
        }
        for g in row.iter_mut() {
            *g = *g * scale;
        }
    });
    for (dlogits, dpre) in &deltas {
        for (g, &d) in grads.db1.iter_mut().zip(dpre) {
            *g = *g + d;
        }
        for (g, &d) in grads.db2.iter_mut().zip(dlogits) {
            *g = *g + d;
        }
    }
    for g in grads.db1.iter_mut().chain(grads.db2.iter_mut()) {
        *g = *g * scale;
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    /// `learning_rate` may be zero to freeze parameters.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate must be finite and non-negative".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(format!("{name} must be in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err("epsilon must be positive".into());
        }
        Ok(())
    }
}

/// First and second moment buffers plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &MlpParams<T>) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            t: 0,
        }
    }

    /// In-place update; [`adam_step`] is the by-value form.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &Gradients<T>, hyper: &AdamHyper) -> Result<(), MlpError> {
        if !grads.matches(params) || !self.m.matches(params) || !self.v.matches(params) {
            return Err(MlpError::ShapeMismatch("gradients, moments and parameters differ in shape".into()));
        }
        if !grads.is_finite() {
            return Err(MlpError::NonFiniteGradient);
        }
        hyper.validate().map_err(MlpError::InvalidHyper)?;
        self.t += 1;
        let t = self.t as f64;
        let (b1, b2): (T, T) = (lit(hyper.beta1), lit(hyper.beta2));
        let (one_m_b1, one_m_b2) = (T::one() - b1, T::one() - b2);
        let bc1: T = lit(1.0 - hyper.beta1.powf(t));
        let bc2: T = lit(1.0 - hyper.beta2.powf(t));
        let lr: T = lit(hyper.learning_rate);
        let eps: T = lit(hyper.epsilon);

        let m = [&mut self.m.dw1, &mut self.m.db1, &mut self.m.dw2, &mut self.m.db2];
        let v = [&mut self.v.dw1, &mut self.v.db1, &mut self.v.dw2, &mut self.v.db2];
        for (((theta, g), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(m).zip(v) {
            theta
                .par_iter_mut()
                .zip(g.par_iter())
                .zip(m.par_iter_mut())
                .zip(v.par_iter_mut())
                .with_min_len(4096)
                .for_each(|(((theta, &g), m), v)| {
                    *m = b1 * *m + one_m_b1 * g;
                    *v = b2 * *v + one_m_b2 * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// One Adam update:
/// `m' = b1 m + (1-b1) g`, `v' = b2 v + (1-b2) g^2`,
/// `theta' = theta - lr * m'/(1-b1^t') / (sqrt(v'/(1-b2^t')) + eps)`.
pub fn adam_step<T: Real>(
    mut params: MlpParams<T>,
    grads: &Gradients<T>,
    mut state: AdamState<T>,
    hyper: &AdamHyper,
) -> Result<(MlpParams<T>, AdamState<T>), MlpError> {
    state.step(&mut params, grads, hyper)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[1000.0f32, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        assert!(p[0] > 0.999_999);
        assert_eq!(softmax(&[f32::NAN, 0.0]), Err(MlpError::NonFiniteInput));
    }

    #[test]
    fn loss_examples() {
        let l = cross_entropy_loss(&[0.5f64, 0.5], 0).unwrap();
        assert!((l - 0.693147).abs() < 1e-6);
        let l = cross_entropy_loss(&[1.0 - 1e-15f64, 1e-15], 0).unwrap();
        assert!((0.0..=1e-12).contains(&l));
        let l = cross_entropy_loss(&[1e-15f64, 1.0], 0).unwrap();
        assert!((l - 27.631021115928547).abs() < 1e-9);
        assert_eq!(cross_entropy_loss(&[0.5f64, 0.5], 2), Err(MlpError::LabelOutOfDomain(2)));
    }

    #[test]
    fn init_shapes_and_bound() {
        let p = init_params(3);
        assert_eq!(p.dims(), (1000, 1000, 2));
        assert_eq!((p.w1.len(), p.w2.len(), p.b1.len(), p.b2.len()), (1_000_000, 2000, 1000, 2));
        assert!(p.b1.iter().chain(&p.b2).all(|&b| b == 0.0));
        let bound = (6.0f64 / 2000.0).sqrt() as f32;
        assert!(p.w1.iter().all(|w| w.abs() <= bound));
        assert!(p.w1.iter().any(|w| w.abs() > 0.9 * bound));
        assert_eq!(p, init_params(3));
        assert_ne!(p.w1, init_params(4).w1);
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = MlpParams::<f32>::zeros(5, 4, 2);
        let t = forward(&p, &[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(t.probs, vec![0.5, 0.5]);
        let g = backward(&t, &p, 0).unwrap();
        assert_eq!(g.db2, vec![-0.5, 0.5]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = MlpParams::<f32>::zeros(3, 2, 2);
        assert!(matches!(forward(&p, &[1.0, 2.0]), Err(MlpError::ShapeMismatch(_))));
    }

    #[test]
    fn toy_network_matches_hand_arithmetic() {
        // 2-2-2: W1 = [[1, -1], [0.5, 2]], b1 = [0.1, -3], W2 = [[2, 1], [-1, 0.5]], b2 = [0, 0.25]
        let p = MlpParams::from_parts(
            (2, 2, 2),
            vec![1.0f64, -1.0, 0.5, 2.0],
            vec![0.1, -3.0],
            vec![2.0, 1.0, -1.0, 0.5],
            vec![0.0, 0.25],
        )
        .unwrap();
        // x = [3, 1]: pre_h = [3 - 1 + 0.1, 1.5 + 2 - 3] = [2.1, 0.5]; relu keeps both.
        // logits = [2*2.1 + 0.5, -2.1 + 0.25 + 0.25] = [4.7, -1.6]
        let t = forward(&p, &[3.0, 1.0]).unwrap();
        assert!((t.pre_h[0] - 2.1).abs() < 1e-12 && (t.pre_h[1] - 0.5).abs() < 1e-12);
        assert!((t.logits[0] - 4.7).abs() < 1e-12 && (t.logits[1] + 1.6).abs() < 1e-12);
        // x = [0, 1]: pre_h = [-0.9, -1] -> h = 0, logits = b2.
        let t = forward(&p, &[0.0, 1.0]).unwrap();
        assert_eq!(t.h, vec![0.0, 0.0]);
        assert_eq!(t.logits, vec![0.0, 0.25]);
    }

    #[test]
    fn batch_of_one_matches_backward() {
        let p = MlpParams::<f64>::glorot(6, 5, 2, 1).with_activation(Activation::Tanh);
        let t = forward(&p, &[0.3, -0.2, 0.9, 0.0, 1.5, -1.0]).unwrap();
        let single = backward(&t, &p, 1).unwrap();
        let batched = batch_gradients(std::slice::from_ref(&t), &p, &[1]).unwrap();
        for (a, b) in single.tensors().iter().zip(batched.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let p = MlpParams::<f32>::glorot(3, 4, 2, 9);
        let g = Gradients::zeros_like(&p);
        let (p2, s) = adam_step(p.clone(), &g, AdamState::new(&p), &AdamHyper::default()).unwrap();
        assert_eq!(p2, p);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn adam_rejects_nan() {
        let p = MlpParams::<f32>::zeros(2, 2, 2);
        let mut g = Gradients::zeros_like(&p);
        g.dw1[3] = f32::NAN;
        let err = adam_step(p.clone(), &g, AdamState::new(&p), &AdamHyper::default()).unwrap_err();
        assert_eq!(err, MlpError::NonFiniteGradient);
    }
}
