//! Subcommand dispatch behind the `fwl` binary.
//!
//! Every artifact lands under the output directory with a fixed name and
//! carries the resolved configuration, as `#` comment lines in text files or
//! a `config` field in JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::annotate::{annotate_dataset, format_weak};
use crate::config::{parse_config, Config};
use crate::corpus::{make_pairs, write_trec, Collection, PairwiseSample};
use crate::error::FwlError;
use crate::eval::{
    annotator_for_seed, compare_strategies, config_comment, cross_validate, judged_queries, metrics_csv,
    sensitivity_csv, sensitivity_experiment, summarize, CvOutcome,
};
use crate::pipeline::{candidate_pools, toy1d_demo, toy_rows_to_csv, train_strategy, EvalPlan, StrategyKind, TrainingData};
use crate::seed;
use crate::student::{load_checkpoint, write_checkpoint, StudentParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RUNS_FILE: &str = "runs.jsonl";
pub const SIGNIFICANCE_FILE: &str = "significance.json";
pub const TOY_FILE: &str = "toy1d.csv";
pub const WEAK_FILE: &str = "weak.tsv";
pub const CHECKPOINT_FILE: &str = "student.ckpt";
pub const TRAIN_FILE: &str = "train.json";
pub const SWEEP_FILE: &str = "sweep_beta.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Write the collection as `docs.tsv`, `queries.tsv` and `qrels.txt`.
    Synth,
    /// Label the weak pairs of every query into `weak.tsv`.
    Annotate,
    /// Train one strategy on all judged queries into `student.ckpt`.
    Train { strategy: String },
    /// Score a checkpoint, or the annotator when none is given, on all judged queries.
    Eval { checkpoint: Option<PathBuf> },
    /// Cross-validate strategies; all of them when the list is empty.
    Cv { strategies: Vec<String> },
    SweepBeta,
    Sensitivity,
    Toy1d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub config: Option<PathBuf>,
    /// `key=value` assignments applied after the file.
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
    /// Replaces `run.seed` when set.
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(FwlError),
}

impl From<FwlError> for CliError {
    fn from(e: FwlError) -> Self {
        CliError::Runtime(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs `spec`, reporting written files on stdout and failures on stderr.
/// Returns the process exit code.
pub fn dispatch(spec: &RunSpec) -> i32 {
    match run(spec) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Resolves the configuration of `spec`.
pub fn resolve_config(spec: &RunSpec) -> CliResult<Config> {
    if let Some(p) = &spec.config {
        if !p.is_file() {
            return Err(CliError::Usage(format!("config file {} does not exist", p.display())));
        }
    }
    let mut overrides = spec.overrides.clone();
    if let Some(s) = spec.seed {
        overrides.push(format!("run.seed={s}"));
    }
    parse_config(spec.config.as_deref(), &overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_strategy(name: &str) -> CliResult<StrategyKind> {
    name.parse().map_err(|e: FwlError| CliError::Usage(e.to_string()))
}

/// Runs `spec` and returns the paths it wrote.
pub fn run(spec: &RunSpec) -> CliResult<Vec<PathBuf>> {
    let cfg = resolve_config(spec)?;
    // Argument checks come before any work or file output.
    let strategies = match &spec.command {
        Command::Train { strategy } => vec![parse_strategy(strategy)?],
        Command::Cv { strategies } if strategies.is_empty() => StrategyKind::ALL.to_vec(),
        Command::Cv { strategies } => strategies.iter().map(|s| parse_strategy(s)).collect::<CliResult<_>>()?,
        _ => Vec::new(),
    };
    let out = spec.out_dir.as_path();
    fs::create_dir_all(out).map_err(FwlError::from)?;
    let files = match &spec.command {
        Command::Toy1d => toy(&cfg, out)?,
        Command::Synth => synth(&cfg, out)?,
        Command::Annotate => annotate(&cfg, out)?,
        Command::Train { .. } => train(&cfg, strategies[0], out)?,
        Command::Eval { checkpoint } => eval(&cfg, checkpoint.as_deref(), out)?,
        Command::Cv { .. } => cv(&cfg, &strategies, out)?,
        Command::SweepBeta => sweep_beta(&cfg, out)?,
        Command::Sensitivity => sensitivity(&cfg, out)?,
    };
    Ok(files)
}

fn write(path: PathBuf, text: &str) -> CliResult<PathBuf> {
    fs::write(&path, text).map_err(FwlError::from)?;
    Ok(path)
}

fn seeds(cfg: &Config) -> Vec<u64> {
    (0..cfg.eval.seeds as u64).map(|i| cfg.run.seed + i).collect()
}

fn toy(cfg: &Config, out: &Path) -> CliResult<Vec<PathBuf>> {
    let rows = toy1d_demo(&cfg.toy)?;
    let text = config_comment(cfg) + &toy_rows_to_csv(&rows);
    Ok(vec![write(out.join(TOY_FILE), &text)?])
}

fn synth(cfg: &Config, out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    write_trec(&collection, out)?;
    let comment = config_comment(cfg);
    let mut files = Vec::new();
    for name in ["docs.tsv", "queries.tsv", "qrels.txt"] {
        let path = out.join(name);
        let body = fs::read_to_string(&path).map_err(FwlError::from)?;
        files.push(write(path, &(comment.clone() + &body))?);
    }
    Ok(files)
}

fn weak_data(cfg: &Config, collection: &Collection) -> CliResult<Vec<PairwiseSample>> {
    let annotator = annotator_for_seed(cfg.annotator()?, cfg.run.seed);
    Ok(annotate_dataset(&annotator, collection, &cfg.annotation(), seed::derive(cfg.run.seed, "annotate"))?)
}

fn annotate(cfg: &Config, out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    let weak = weak_data(cfg, &collection)?;
    let text = config_comment(cfg) + &format_weak(&weak);
    Ok(vec![write(out.join(WEAK_FILE), &text)?])
}

fn train(cfg: &Config, strategy: StrategyKind, out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    let weak = weak_data(cfg, &collection)?;
    let strong = make_pairs(
        &collection.judgments_for(&judged_queries(&collection)),
        cfg.eval.strong_pairs_per_query,
        seed::derive(cfg.run.seed, "strong"),
    );
    let data = TrainingData { collection: &collection, weak: &weak, strong: &strong };
    let params = train_strategy::<f64>(strategy, &data, &cfg.training(seed::derive(cfg.run.seed, "train")), None)?;
    let mut files = Vec::new();
    if let Some(p) = &params {
        let text = write_checkpoint(p);
        let (magic, rest) = text.split_once('\n').unwrap_or((&text, ""));
        files.push(write(out.join(CHECKPOINT_FILE), &format!("{magic}\n{}{rest}", config_comment(cfg)))?);
    }
    let summary = json!({
        "strategy": strategy,
        "seed": cfg.run.seed,
        "weak_pairs": weak.len(),
        "strong_pairs": strong.len(),
        "checkpoint": params.is_some().then_some(CHECKPOINT_FILE),
        "config": cfg.to_json(),
    });
    files.push(write(out.join(TRAIN_FILE), &format!("{summary:#}\n"))?);
    Ok(files)
}

fn eval(cfg: &Config, checkpoint: Option<&Path>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    let params: Option<StudentParams<f64>> = checkpoint.map(load_checkpoint).transpose()?;
    if let Some(p) = &params {
        if p.vocab_size != collection.corpus.vocab_size() {
            return Err(CliError::Usage(format!(
                "checkpoint vocabulary has {} terms, collection has {}",
                p.vocab_size,
                collection.corpus.vocab_size()
            )));
        }
    }
    let queries = judged_queries(&collection);
    let pools = candidate_pools(&collection, &queries, cfg.eval.pool_depth)?;
    let annotator = annotator_for_seed(cfg.annotator()?, cfg.run.seed);
    let plan = EvalPlan { collection: &collection, annotator, test_queries: &queries, candidates: &pools };
    let report = plan.report(params.as_ref())?;
    let label = if params.is_some() { "student" } else { "wa" };
    let mut text = config_comment(cfg);
    text.push_str(crate::eval::METRIC_CSV_HEADER);
    text.push('\n');
    for ((q, ap), nd) in report.query_ids.iter().zip(&report.ap).zip(&report.ndcg20) {
        let _ = writeln!(text, "{label},{},0,{q},{ap},{nd}", cfg.run.seed);
    }
    println!("{label}: MAP {:.4} nDCG@20 {:.4} over {} queries", report.map, report.mean_ndcg20, report.ap.len());
    Ok(vec![write(out.join(METRICS_FILE), &text)?])
}

fn cv_outcomes(cfg: &Config, strategies: &[StrategyKind], collection: &Collection) -> CliResult<Vec<CvOutcome>> {
    let annotator = cfg.annotator()?;
    seeds(cfg)
        .into_iter()
        .map(|s| cross_validate(strategies, collection, annotator, cfg, s).map_err(CliError::from))
        .collect()
}

fn cv(cfg: &Config, strategies: &[StrategyKind], out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    let outcomes = cv_outcomes(cfg, strategies, &collection)?;
    let runs: Vec<_> = outcomes.iter().flat_map(|o| &o.runs).collect();
    let mut files = vec![write(out.join(METRICS_FILE), &metrics_csv(cfg, runs.iter().copied()))?];
    let mut lines = String::new();
    for r in &runs {
        lines.push_str(&r.to_json_line()?);
        lines.push('\n');
    }
    files.push(write(out.join(RUNS_FILE), &lines)?);
    for &s in strategies {
        let sum = summarize(&outcomes, s);
        println!("{s}: median MAP {:.4} nDCG@20 {:.4}", sum.median_map, sum.median_ndcg20);
    }
    if strategies.len() > 1 {
        let reference = if strategies.contains(&StrategyKind::Fwl) { StrategyKind::Fwl } else { strategies[0] };
        let others: Vec<StrategyKind> = strategies.iter().copied().filter(|&s| s != reference).collect();
        let mut comparisons = Vec::new();
        for &b in &others {
            let t = compare_strategies(&outcomes, reference, b, others.len())?;
            comparisons.push(json!({ "baseline": b, "result": t }));
        }
        let report = json!({
            "reference": reference,
            "metric": "ap",
            "seeds": seeds(cfg),
            "comparisons": comparisons,
            "config": cfg.to_json(),
        });
        files.push(write(out.join(SIGNIFICANCE_FILE), &format!("{report:#}\n"))?);
    }
    Ok(files)
}

fn sweep_beta(cfg: &Config, out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    let mut text = config_comment(cfg);
    text.push_str("beta,seed,map,ndcg20\n");
    for &beta in &cfg.sweep.betas {
        let mut c = cfg.clone();
        c.train.beta = beta;
        for o in cv_outcomes(&c, &[StrategyKind::Fwl], &collection)? {
            let r = &o.aggregate[&StrategyKind::Fwl];
            let _ = writeln!(text, "{beta},{},{},{}", o.seed, r.map, r.mean_ndcg20);
        }
    }
    Ok(vec![write(out.join(SWEEP_FILE), &text)?])
}

fn sensitivity(cfg: &Config, out: &Path) -> CliResult<Vec<PathBuf>> {
    let collection = cfg.collection()?;
    let rows = sensitivity_experiment(&cfg.annotators()?, &collection, cfg, &seeds(cfg))?;
    for r in &rows {
        println!("{}: WA {:.4} FWL {:.4} ({:+.1}%)", r.annotator, r.wa_map, r.fwl_map, r.improvement_pct);
    }
    Ok(vec![write(out.join(SENSITIVITY_FILE), &sensitivity_csv(cfg, &rows))?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(command: Command, out: &Path) -> RunSpec {
        RunSpec { command, config: None, overrides: Vec::new(), out_dir: out.to_path_buf(), seed: None }
    }

    #[test]
    fn bogus_strategy_is_a_usage_error_listing_the_strategies() {
        let dir = tempfile::tempdir().unwrap();
        let err = run(&spec(Command::Train { strategy: "bogus".into() }, dir.path())).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        let msg = err.to_string();
        for s in StrategyKind::ALL {
            assert!(msg.contains(s.name()), "{msg}");
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn config_errors_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(Command::Toy1d, dir.path());
        s.overrides = vec!["beta=-1".into()];
        assert_eq!(run(&s).unwrap_err().exit_code(), EXIT_USAGE);
        s.overrides.clear();
        s.config = Some(dir.path().join("missing.cfg"));
        assert_eq!(run(&s).unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn seed_flag_beats_overrides() {
        let mut s = spec(Command::Toy1d, Path::new("."));
        s.overrides = vec!["run.seed=3".into()];
        s.seed = Some(9);
        assert_eq!(resolve_config(&s).unwrap().run.seed, 9);
    }

    #[test]
    fn toy_output_carries_the_config() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(dispatch(&spec(Command::Toy1d, dir.path())), EXIT_OK);
        let text = fs::read_to_string(dir.path().join(TOY_FILE)).unwrap();
        assert!(text.contains("# run.seed = 42"));
        assert!(text.contains("# toy.fidelity_beta = "));
        assert!(text.contains("kind,x,true_y"));
    }

    fn small() -> Vec<String> {
        [
            "corpus.num_docs=60",
            "corpus.vocab_size=300",
            "corpus.num_queries=6",
            "corpus.unlabeled_queries=4",
            "annotate.pool_size=12",
            "eval.pool_depth=20",
            "train.embed_dim=4",
            "train.hidden=6",
            "train.epochs_step1=2",
            "train.epochs_step3=1",
        ]
        .map(String::from)
        .to_vec()
    }

    #[test]
    fn synth_train_eval_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let mut s = spec(Command::Synth, &data);
        s.overrides = small();
        run(&s).unwrap();

        let mut overrides = small();
        overrides.push(format!("data.dir={}", data.display()));
        let model = dir.path().join("model");
        let mut s = spec(Command::Train { strategy: "nn-w".into() }, &model);
        s.overrides = overrides.clone();
        run(&s).unwrap();
        let ckpt = model.join(CHECKPOINT_FILE);
        assert!(fs::read_to_string(&ckpt).unwrap().contains("# data.dir = "));
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(model.join(TRAIN_FILE)).unwrap()).unwrap();
        assert_eq!(summary["strategy"], "nn-w");

        let mut s = spec(Command::Eval { checkpoint: Some(ckpt) }, &model);
        s.overrides = overrides.clone();
        run(&s).unwrap();
        let metrics = fs::read_to_string(model.join(METRICS_FILE)).unwrap();
        assert!(metrics.lines().any(|l| l.starts_with("student,42,0,")), "{metrics}");

        let mut s = spec(Command::Annotate, &model);
        s.overrides = overrides;
        run(&s).unwrap();
        let weak = crate::annotate::read_weak(model.join(WEAK_FILE)).unwrap();
        assert!(!weak.is_empty());
    }

    #[test]
    fn cv_with_several_strategies_reports_significance() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(Command::Cv { strategies: vec!["wa".into(), "nn-w".into(), "fwl".into()] }, dir.path());
        s.overrides = small();
        run(&s).unwrap();
        let sig: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SIGNIFICANCE_FILE)).unwrap()).unwrap();
        assert_eq!(sig["reference"], "fwl");
        assert_eq!(sig["comparisons"].as_array().unwrap().len(), 2);
        let runs = fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap();
        assert_eq!(runs.lines().count(), 3 * 3);
    }
}
