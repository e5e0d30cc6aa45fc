//! The student: a pairwise ranker `φ(ψ(q, d+, d-))`.
//!
//! `ψ` composes word embeddings with a softmax over learned per-term
//! importance weights, separately for the query and both documents, and
//! concatenates the three vectors (`m = 3e`). `φ` is a feed-forward network
//! with tanh hidden layers and a single sigmoid output giving the probability
//! that `d+` ranks above `d-`.

mod checkpoint;
mod network;
mod scorer;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TermId;
use crate::error::{FwlError, Result};
use crate::scalar::Scalar;
use crate::seed;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint};
pub use network::{
    backward, component, forward, forward_terms, loss, loss_from_logit, predict, represent, ComponentTrace,
    ForwardTrace, SampleTerms,
};
pub use scorer::QueryScorer;
pub use train::{
    fidelity_lr, lr_schedule, train_in_order, train_pass, train_pass_observed, LossConfig, LrSchedule, StepRecord, TrainOutcome,
};

/// Widths of the student network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentArch {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for StudentArch {
    fn default() -> Self {
        Self { embed_dim: 16, hidden: vec![32] }
    }
}

impl StudentArch {
    /// Width of the representation `ψ(x)`.
    pub fn rep_dim(&self) -> usize {
        3 * self.embed_dim
    }
}

/// Dense layer, `weights` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams<T> {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// `vocab_size x embed_dim`, row-major.
    pub embeddings: Vec<T>,
    /// Global term importance, one weight per vocabulary entry.
    pub importance: Vec<T>,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> StudentParams<T> {
    /// Seeded initialization: embeddings and weights uniform in `±1/sqrt(fan_in)`
    /// (`fan_in = embed_dim` for embeddings), biases and importance zero.
    pub fn init(vocab_size: usize, arch: &StudentArch, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let e = arch.embed_dim;
        let r = 1.0 / (e as f64).sqrt();
        let embeddings = (0..vocab_size * e).map(|_| T::of(rng.random_range(-r..r))).collect();
        let mut layers = Vec::new();
        let mut inputs = arch.rep_dim();
        for &outputs in arch.hidden.iter().chain(std::iter::once(&1)) {
            let r = 1.0 / (inputs as f64).sqrt();
            let mut layer = Layer::zeros(inputs, outputs);
            for w in &mut layer.weights {
                *w = T::of(rng.random_range(-r..r));
            }
            layers.push(layer);
            inputs = outputs;
        }
        Self { vocab_size, embed_dim: e, embeddings, importance: vec![T::zero(); vocab_size], layers }
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(vocab_size: usize, arch: &StudentArch) -> Self {
        let mut p = Self::init(vocab_size, arch, 0);
        p.embeddings.iter_mut().for_each(|w| *w = T::zero());
        for l in &mut p.layers {
            l.weights.iter_mut().for_each(|w| *w = T::zero());
        }
        p
    }

    pub fn arch(&self) -> StudentArch {
        StudentArch {
            embed_dim: self.embed_dim,
            hidden: self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect(),
        }
    }

    pub fn rep_dim(&self) -> usize {
        3 * self.embed_dim
    }

    #[inline]
    pub fn embedding(&self, t: TermId) -> &[T] {
        let e = self.embed_dim;
        &self.embeddings[t as usize * e..(t as usize + 1) * e]
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FwlError::ShapeMismatch(m));
        if self.embeddings.len() != self.vocab_size * self.embed_dim {
            return bad("embedding table size".into());
        }
        if self.importance.len() != self.vocab_size {
            return bad("importance vector size".into());
        }
        let Some(first) = self.layers.first() else {
            return bad("no layers".into());
        };
        if first.inputs != self.rep_dim() {
            return bad(format!("first layer takes {} inputs, representation has {}", first.inputs, self.rep_dim()));
        }
        if self.layers.last().map(|l| l.outputs) != Some(1) {
            return bad("last layer must have one output".into());
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return bad(format!("layer {i} outputs {} but layer {} takes {}", w[0].outputs, i + 1, w[1].inputs));
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return bad("layer buffer size".into());
            }
        }
        if !self.all_finite() {
            return Err(FwlError::InvalidArgument("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.embeddings.iter().chain(&self.importance).all(|x| x.is_finite())
            && self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Squared L2 norm of the regularized parameters (layer weights and embeddings).
    pub fn regularized_sq_norm(&self) -> T {
        let sq = |v: &[T]| v.iter().fold(T::zero(), |a, &x| a + x * x);
        sq(&self.embeddings) + self.layers.iter().fold(T::zero(), |a, l| a + sq(&l.weights))
    }

    fn same_shape(&self, g: &Gradients<T>) -> bool {
        g.embed_dim == self.embed_dim
            && g.layers.len() == self.layers.len()
            && g.layers.iter().zip(&self.layers).all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
            && g.embed_terms.iter().all(|&t| (t as usize) < self.vocab_size)
            && g.importance_terms.iter().all(|&t| (t as usize) < self.vocab_size)
    }
}

/// Gradient of the loss with the same shape as [`StudentParams`].
///
/// Embedding and importance gradients are stored sparsely for the terms a
/// sample touches. The L2 term on embeddings is dense and kept implicit:
/// the full embedding gradient is `rows + embed_decay * embeddings`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub embed_dim: usize,
    /// Sorted, unique.
    pub embed_terms: Vec<TermId>,
    /// `embed_terms.len() x embed_dim`.
    pub embed_rows: Vec<T>,
    pub importance_terms: Vec<TermId>,
    pub importance: Vec<T>,
    pub layers: Vec<Layer<T>>,
    pub embed_decay: T,
}

impl<T: Scalar> Gradients<T> {
    /// A gradient equal to the parameters themselves, every coordinate dense.
    pub fn dense_from(params: &StudentParams<T>) -> Self {
        Self {
            embed_dim: params.embed_dim,
            embed_terms: (0..params.vocab_size as TermId).collect(),
            embed_rows: params.embeddings.clone(),
            importance_terms: (0..params.vocab_size as TermId).collect(),
            importance: params.importance.clone(),
            layers: params.layers.clone(),
            embed_decay: T::zero(),
        }
    }

    /// Full dense embedding gradient for the given parameters.
    pub fn dense_embeddings(&self, params: &StudentParams<T>) -> Vec<T> {
        let mut out: Vec<T> = params.embeddings.iter().map(|&w| self.embed_decay * w).collect();
        let e = self.embed_dim;
        for (k, &t) in self.embed_terms.iter().enumerate() {
            for j in 0..e {
                out[t as usize * e + j] += self.embed_rows[k * e + j];
            }
        }
        out
    }

    pub fn dense_importance(&self, vocab_size: usize) -> Vec<T> {
        let mut out = vec![T::zero(); vocab_size];
        for (&t, &g) in self.importance_terms.iter().zip(&self.importance) {
            out[t as usize] += g;
        }
        out
    }

    /// Multiplies every gradient coordinate by `s`.
    pub fn scale(&mut self, s: T) {
        self.embed_rows.iter_mut().chain(&mut self.importance).for_each(|g| *g *= s);
        for l in &mut self.layers {
            l.weights.iter_mut().chain(&mut l.bias).for_each(|g| *g *= s);
        }
        self.embed_decay *= s;
    }
}

/// `params -= eta * grads`, coordinate-wise. A zero step leaves every bit unchanged.
pub fn sgd_step<T: Scalar>(params: &mut StudentParams<T>, grads: &Gradients<T>, eta: T) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(FwlError::ShapeMismatch("gradient does not match parameters".into()));
    }
    if !(eta >= T::zero()) {
        return Err(FwlError::InvalidArgument(format!("negative step size {eta}")));
    }
    if eta == T::zero() {
        return Ok(());
    }
    if grads.embed_decay != T::zero() {
        let d = eta * grads.embed_decay;
        params.embeddings.iter_mut().for_each(|w| *w -= d * *w);
    }
    let e = params.embed_dim;
    for (k, &t) in grads.embed_terms.iter().enumerate() {
        let row = &mut params.embeddings[t as usize * e..(t as usize + 1) * e];
        for (w, &g) in row.iter_mut().zip(&grads.embed_rows[k * e..(k + 1) * e]) {
            *w -= eta * g;
        }
    }
    for (&t, &g) in grads.importance_terms.iter().zip(&grads.importance) {
        params.importance[t as usize] -= eta * g;
    }
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        for (w, &d) in l.weights.iter_mut().zip(&g.weights) {
            *w -= eta * d;
        }
        for (b, &d) in l.bias.iter_mut().zip(&g.bias) {
            *b -= eta * d;
        }
    }
    Ok(())
}
