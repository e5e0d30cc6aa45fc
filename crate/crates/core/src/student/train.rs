use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward_terms, loss_from_logit, SampleTerms};
use super::{sgd_step, StudentParams};
use crate::corpus::{Collection, PairwiseSample};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the `(λ/2)·‖w‖²` regularizer.
    pub l2_lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { l2_lambda: 1e-5 }
    }
}

/// Base learning rate `eta0 / (1 + decay·t)` and the fidelity sharpness `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub eta0: f64,
    pub decay: f64,
    pub beta: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { eta0: 0.05, decay: 1e-4, beta: 50.0 }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(invalid(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if !(self.decay >= 0.0) {
            return Err(invalid(format!("decay must be non-negative, got {}", self.decay)));
        }
        if !(self.beta >= 0.0) {
            return Err(invalid(format!("beta must be non-negative, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Annealed base learning rate at step `t`.
pub fn lr_schedule<T: Scalar>(sched: &LrSchedule, t: u64) -> T {
    T::of(sched.eta0) / (T::one() + T::of(sched.decay) * T::of(t as f64))
}

/// Per-sample step-size multiplier `exp(-beta·sigma)`.
pub fn fidelity_lr<T: Scalar>(sigma: T, beta: T) -> Result<T> {
    if !(sigma >= T::zero()) || !(beta >= T::zero()) {
        return Err(invalid(format!("fidelity needs sigma >= 0 and beta >= 0, got {sigma}, {beta}")));
    }
    Ok((-beta * sigma).exp())
}

/// What happened at one SGD step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    /// Index into the sample slice passed to the pass.
    pub sample: usize,
    pub eta1: f64,
    pub eta2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOutcome {
    /// Step counter after the pass.
    pub t_end: u64,
    /// Mean cross-entropy of the visited samples, each measured before its update.
    pub mean_loss: f64,
}

/// One epoch of per-sample SGD in a seeded random order.
///
/// Step `t` uses `eta = η₁(t)·η₂(Σ)` where `Σ` is the sample's teacher
/// uncertainty (zero unless the sample is soft).
pub fn train_pass<T: Scalar>(
    params: &mut StudentParams<T>,
    collection: &Collection,
    samples: &[PairwiseSample],
    sched: &LrSchedule,
    cfg: &LossConfig,
    t0: u64,
    seed: u64,
) -> Result<TrainOutcome> {
    train_pass_observed(params, collection, samples, sched, cfg, t0, seed, |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn train_pass_observed<T: Scalar>(
    params: &mut StudentParams<T>,
    collection: &Collection,
    samples: &[PairwiseSample],
    sched: &LrSchedule,
    cfg: &LossConfig,
    t0: u64,
    seed: u64,
    observe: impl FnMut(StepRecord),
) -> Result<TrainOutcome> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    train_in_order(params, collection, samples, &order, sched, cfg, t0, observe)
}

/// Per-sample SGD visiting `samples[order[0]], samples[order[1]], ...`.
/// Indices may repeat.
#[allow(clippy::too_many_arguments)]
pub fn train_in_order<T: Scalar>(
    params: &mut StudentParams<T>,
    collection: &Collection,
    samples: &[PairwiseSample],
    order: &[usize],
    sched: &LrSchedule,
    cfg: &LossConfig,
    t0: u64,
    mut observe: impl FnMut(StepRecord),
) -> Result<TrainOutcome> {
    if samples.is_empty() || order.is_empty() {
        return Err(invalid("training pass over an empty sample list"));
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= samples.len()) {
        return Err(invalid(format!("sample index {bad} out of range")));
    }
    sched.validate()?;
    let resolved = samples
        .iter()
        .map(|s| SampleTerms::resolve(collection, s))
        .collect::<Result<Vec<_>>>()?;

    let beta = T::of(sched.beta);
    let mut t = t0;
    let mut total = 0.0;
    for &i in order {
        let sample = &samples[i];
        let label = T::of(sample.label);
        let eta1: T = lr_schedule(sched, t);
        let eta2 = fidelity_lr(T::of(sample.sigma()), beta)?;
        let eta = eta1 * eta2;
        let trace = forward_terms(params, resolved[i]);
        let l = loss_from_logit(trace.logit, label).f64();
        total += l;
        if eta > T::zero() {
            let grads = backward(params, &trace, label, cfg)?;
            sgd_step(params, &grads, eta)?;
        }
        observe(StepRecord { t, sample: i, eta1: eta1.f64(), eta2: eta2.f64(), loss: l });
        t += 1;
    }
    Ok(TrainOutcome { t_end: t, mean_loss: total / order.len() as f64 })
}
