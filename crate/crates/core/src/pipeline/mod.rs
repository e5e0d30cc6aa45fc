//! Three-step fidelity-weighted training and the comparison strategies.

mod toy;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::annotate::AnnotatorKind;
use crate::corpus::{augment_swapped, Collection, PairwiseSample};
use crate::error::{invalid, FwlError, Result};
use crate::eval::{candidate_pool, rank_with_annotator, rank_with_student, MetricReport, RankedList};
use crate::scalar::Scalar;
use crate::seed;
use crate::student::{
    represent, train_in_order, train_pass_observed, LossConfig, LrSchedule, StepRecord, StudentArch,
    StudentParams,
};
use crate::teacher::{build_soft_dataset, default_cluster_count, fit_clustered, median_heuristic, ClusteredGp, KernelParams};

pub use toy::{toy1d_demo, toy_rows_to_csv, ToyConfig, ToyRow, ToySampleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Rank with the weak annotator itself.
    #[serde(rename = "wa")]
    Wa,
    #[serde(rename = "nn-w")]
    NnW,
    #[serde(rename = "nn-s")]
    NnS,
    #[serde(rename = "nn-sw")]
    NnSplusW,
    #[serde(rename = "nn-wts")]
    NnWtoS,
    #[serde(rename = "fwl")]
    Fwl,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Wa,
        StrategyKind::NnW,
        StrategyKind::NnS,
        StrategyKind::NnSplusW,
        StrategyKind::NnWtoS,
        StrategyKind::Fwl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Wa => "wa",
            StrategyKind::NnW => "nn-w",
            StrategyKind::NnS => "nn-s",
            StrategyKind::NnSplusW => "nn-sw",
            StrategyKind::NnWtoS => "nn-wts",
            StrategyKind::Fwl => "fwl",
        }
    }

    /// Strategies whose first stage is plain pre-training on the weak data.
    fn starts_with_pretraining(self) -> bool {
        matches!(self, StrategyKind::NnW | StrategyKind::NnWtoS | StrategyKind::Fwl)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = FwlError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            invalid(format!("unknown strategy `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// Teacher hyperparameters. A zero `length_scale` selects the median
/// heuristic; zero `clusters` selects `max(1, n / 50)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
    pub clusters: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self { signal_var: 1.0, length_scale: 0.0, noise_var: 1e-4, clusters: 0 }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0) || !(self.length_scale >= 0.0) || !(self.noise_var >= 0.0) {
            return Err(invalid(format!("teacher needs signal_var > 0, length_scale >= 0, noise_var >= 0: {self:?}")));
        }
        Ok(())
    }

    /// Kernel for the given training inputs.
    pub fn kernel<T: Scalar>(&self, inputs: &[Vec<T>]) -> KernelParams {
        let length_scale = if self.length_scale > 0.0 { self.length_scale } else { median_heuristic(inputs) };
        KernelParams { signal_var: self.signal_var, length_scale, noise_var: self.noise_var }
    }

    pub fn cluster_count(&self, n: usize) -> usize {
        if self.clusters > 0 {
            self.clusters
        } else {
            default_cluster_count(n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub arch: StudentArch,
    pub epochs_step1: usize,
    pub epochs_step3: usize,
    pub schedule: LrSchedule,
    pub loss: LossConfig,
    pub teacher: TeacherConfig,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            arch: StudentArch::default(),
            epochs_step1: 5,
            epochs_step3: 3,
            schedule: LrSchedule::default(),
            loss: LossConfig::default(),
            teacher: TeacherConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_step1 == 0 || self.epochs_step3 == 0 {
            return Err(invalid("epoch counts must be at least 1"));
        }
        if self.arch.embed_dim == 0 || self.arch.hidden.contains(&0) {
            return Err(invalid("network widths must be positive"));
        }
        if !(self.loss.l2_lambda >= 0.0) {
            return Err(invalid("l2_lambda must be non-negative"));
        }
        self.schedule.validate()?;
        self.teacher.validate()
    }

    fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive(self.seed, stage)
    }
}

/// Datasets one run trains on. Strong pairs carry hard labels; both sets are
/// swap-augmented internally before use.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub collection: &'a Collection,
    pub weak: &'a [PairwiseSample],
    pub strong: &'a [PairwiseSample],
}

/// Parameters plus the mean pre-update loss of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedStudent<T> {
    pub params: StudentParams<T>,
    pub epoch_loss: Vec<f64>,
}

fn require_nonempty(samples: &[PairwiseSample], what: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(invalid(format!("{what} data is empty")));
    }
    Ok(())
}

/// `epochs` seeded SGD passes; the step counter starts at zero.
fn fit_epochs<T: Scalar>(
    params: &mut StudentParams<T>,
    collection: &Collection,
    samples: &[PairwiseSample],
    epochs: usize,
    cfg: &TrainingConfig,
    stage: &str,
    mut observe: impl FnMut(StepRecord),
) -> Result<Vec<f64>> {
    let mut t = 0;
    let mut losses = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let seed = cfg.stage_seed(&format!("{stage}/{e}"));
        let out = train_pass_observed(params, collection, samples, &cfg.schedule, &cfg.loss, t, seed, &mut observe)?;
        t = out.t_end;
        losses.push(out.mean_loss);
    }
    Ok(losses)
}

fn fresh_student<T: Scalar>(data: &TrainingData<'_>, cfg: &TrainingConfig) -> StudentParams<T> {
    StudentParams::init(data.collection.corpus.vocab_size(), &cfg.arch, cfg.stage_seed("init"))
}

/// Step 1: train a fresh student on the weak data only.
pub fn step1_pretrain<T: Scalar>(data: &TrainingData<'_>, cfg: &TrainingConfig) -> Result<TrainedStudent<T>> {
    cfg.validate()?;
    require_nonempty(data.weak, "weak")?;
    let mut params = fresh_student(data, cfg);
    let weak = augment_swapped(data.weak);
    let epoch_loss = fit_epochs(&mut params, data.collection, &weak, cfg.epochs_step1, cfg, "step1", |_| {})?;
    Ok(TrainedStudent { params, epoch_loss })
}

/// Step 2: fit the clustered GP on `(ψ(x), y)` of the swap-augmented strong
/// pairs. The student is only read.
pub fn step2_fit_teacher<T: Scalar>(
    params: &StudentParams<T>,
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
) -> Result<ClusteredGp<T>> {
    cfg.teacher.validate()?;
    require_nonempty(data.strong, "strong")?;
    let strong = augment_swapped(data.strong);
    let x = strong
        .iter()
        .map(|s| represent(params, data.collection, s))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<T> = strong.iter().map(|s| T::of(s.label)).collect();
    let k = cfg.teacher.cluster_count(x.len());
    fit_clustered(&x, &y, k, &cfg.teacher.kernel(&x), cfg.stage_seed("teacher"))
}

/// Teacher-relabeled `D_w ∪ D_s` (swap-augmented, de-duplicated).
pub fn soft_dataset<T: Scalar>(
    params: &StudentParams<T>,
    teacher: &ClusteredGp<T>,
    data: &TrainingData<'_>,
) -> Result<Vec<PairwiseSample>> {
    let mut all = augment_swapped(data.weak);
    all.extend(augment_swapped(data.strong));
    build_soft_dataset(teacher, |s| represent(params, data.collection, s), &all)
}

/// Step 3: fine-tune on the teacher's soft labels with `η₂ = exp(-βΣ)`.
pub fn step3_finetune<T: Scalar>(
    params: StudentParams<T>,
    teacher: &ClusteredGp<T>,
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
) -> Result<TrainedStudent<T>> {
    let soft = soft_dataset(&params, teacher, data)?;
    step3_finetune_on(params, data.collection, &soft, cfg, |_| {})
}

/// Step 3 on an explicit sample list; `observe` sees every SGD step.
pub fn step3_finetune_on<T: Scalar>(
    mut params: StudentParams<T>,
    collection: &Collection,
    samples: &[PairwiseSample],
    cfg: &TrainingConfig,
    observe: impl FnMut(StepRecord),
) -> Result<TrainedStudent<T>> {
    cfg.validate()?;
    require_nonempty(samples, "fine-tuning")?;
    let epoch_loss = fit_epochs(&mut params, collection, samples, cfg.epochs_step3, cfg, "step3", observe)?;
    Ok(TrainedStudent { params, epoch_loss })
}

/// Alternates one weak sample (without replacement) with one strong sample
/// (with replacement) until the weak data is exhausted, for `epochs_step1` epochs.
pub fn train_strong_plus_weak<T: Scalar>(data: &TrainingData<'_>, cfg: &TrainingConfig) -> Result<TrainedStudent<T>> {
    cfg.validate()?;
    require_nonempty(data.weak, "weak")?;
    require_nonempty(data.strong, "strong")?;
    let mut samples = augment_swapped(data.weak);
    let n_weak = samples.len();
    samples.extend(augment_swapped(data.strong));
    let n_strong = samples.len() - n_weak;
    let mut params = fresh_student(data, cfg);
    let mut t = 0;
    let mut epoch_loss = Vec::new();
    for e in 0..cfg.epochs_step1 {
        let order = interleave_order(n_weak, n_strong, cfg.stage_seed(&format!("splusw/{e}")));
        let out = train_in_order(&mut params, data.collection, &samples, &order, &cfg.schedule, &cfg.loss, t, |_| {})?;
        t = out.t_end;
        epoch_loss.push(out.mean_loss);
    }
    Ok(TrainedStudent { params, epoch_loss })
}

/// Visiting order for one mixed epoch over `n_weak` weak samples (indices
/// `0..n_weak`) and `n_strong` strong ones (indices after them): each weak
/// index exactly once in shuffled order, each followed by a uniformly drawn
/// strong index.
pub fn interleave_order(n_weak: usize, n_strong: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut weak_order: Vec<usize> = (0..n_weak).collect();
    weak_order.shuffle(&mut rng);
    weak_order
        .into_iter()
        .flat_map(|w| [w, n_weak + rng.random_range(0..n_strong)])
        .collect()
}

/// Trains the student for `strategy`; `None` for the annotator baseline.
/// `pretrained` may supply a step-1 result to reuse.
pub fn train_strategy<T: Scalar>(
    strategy: StrategyKind,
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
    pretrained: Option<&StudentParams<T>>,
) -> Result<Option<StudentParams<T>>> {
    let pretrain = || -> Result<StudentParams<T>> {
        match pretrained {
            Some(p) => Ok(p.clone()),
            None => Ok(step1_pretrain(data, cfg)?.params),
        }
    };
    let params = match strategy {
        StrategyKind::Wa => return Ok(None),
        StrategyKind::NnW => pretrain()?,
        StrategyKind::NnS => {
            cfg.validate()?;
            require_nonempty(data.strong, "strong")?;
            let mut p = fresh_student(data, cfg);
            fit_epochs(&mut p, data.collection, &augment_swapped(data.strong), cfg.epochs_step1, cfg, "strong", |_| {})?;
            p
        }
        StrategyKind::NnSplusW => train_strong_plus_weak(data, cfg)?.params,
        StrategyKind::NnWtoS => {
            require_nonempty(data.strong, "strong")?;
            step3_finetune_on(pretrain()?, data.collection, &augment_swapped(data.strong), cfg, |_| {})?.params
        }
        StrategyKind::Fwl => {
            let p = pretrain()?;
            let teacher = step2_fit_teacher(&p, data, cfg)?;
            step3_finetune(p, &teacher, data, cfg)?.params
        }
    };
    Ok(Some(params))
}

/// Where and how a trained strategy is evaluated.
#[derive(Debug, Clone)]
pub struct EvalPlan<'a> {
    pub collection: &'a Collection,
    pub annotator: AnnotatorKind,
    pub test_queries: &'a [String],
    /// Candidate set per test query, aligned with `test_queries`.
    pub candidates: &'a [Vec<String>],
}

impl<'a> EvalPlan<'a> {
    /// Rankings of every test query under `params`, or the annotator when `None`.
    pub fn rankings<T: Scalar>(&self, params: Option<&StudentParams<T>>) -> Result<Vec<RankedList>> {
        self.test_queries
            .iter()
            .zip(self.candidates)
            .map(|(q, c)| match params {
                Some(p) => rank_with_student(p, self.collection, q, c),
                None => rank_with_annotator(&self.annotator, self.collection, q, c),
            })
            .collect()
    }

    pub fn report<T: Scalar>(&self, params: Option<&StudentParams<T>>) -> Result<MetricReport> {
        Ok(MetricReport::from_rankings(&self.rankings(params)?, &self.collection.qrels))
    }
}

/// Candidate pools for a list of queries.
pub fn candidate_pools(collection: &Collection, queries: &[String], depth: usize) -> Result<Vec<Vec<String>>> {
    queries.iter().map(|q| candidate_pool(collection, q, depth)).collect()
}

/// One evaluated (strategy, seed, fold) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub fold: usize,
    pub report: MetricReport,
    pub wall_clock_secs: f64,
    /// Resolved configuration the run used.
    pub config: serde_json::Value,
    #[serde(skip)]
    pub params: Option<StudentParams<f64>>,
}

impl RunResult {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Trains and evaluates one strategy.
pub fn run_baseline(
    strategy: StrategyKind,
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
    plan: &EvalPlan<'_>,
    fold: usize,
    config_echo: &serde_json::Value,
) -> Result<RunResult> {
    let start = Instant::now();
    let params = train_strategy::<f64>(strategy, data, cfg, None)?;
    let report = plan.report(params.as_ref())?;
    Ok(RunResult {
        strategy,
        seed: cfg.seed,
        fold,
        report,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config: config_echo.clone(),
        params,
    })
}

pub fn run_fwl(
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
    plan: &EvalPlan<'_>,
    fold: usize,
    config_echo: &serde_json::Value,
) -> Result<RunResult> {
    run_baseline(StrategyKind::Fwl, data, cfg, plan, fold, config_echo)
}

/// Runs several strategies on the same data, sharing step-1 pre-training
/// between the strategies that start with it. Results follow `strategies`.
pub fn run_strategies(
    strategies: &[StrategyKind],
    data: &TrainingData<'_>,
    cfg: &TrainingConfig,
    plan: &EvalPlan<'_>,
    fold: usize,
    config_echo: &serde_json::Value,
) -> Result<Vec<RunResult>> {
    let mut shared = None;
    let mut pretrain_secs = 0.0;
    if strategies.iter().any(|s| s.starts_with_pretraining()) {
        let t = Instant::now();
        shared = Some(step1_pretrain::<f64>(data, cfg)?.params);
        pretrain_secs = t.elapsed().as_secs_f64();
    }
    let mut out = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let start = Instant::now();
        let (pretrained, offset) = if strategy.starts_with_pretraining() {
            (shared.as_ref(), pretrain_secs)
        } else {
            (None, 0.0)
        };
        let params = train_strategy(strategy, data, cfg, pretrained)?;
        let report = plan.report(params.as_ref())?;
        out.push(RunResult {
            strategy,
            seed: cfg.seed,
            fold,
            report,
            wall_clock_secs: start.elapsed().as_secs_f64() + offset,
            config: config_echo.clone(),
            params,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
