use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::MetricReport;
use super::stats::{paired_ttest, TTestResult};
use crate::annotate::{annotate_dataset, AnnotatorKind};
use crate::config::Config;
use crate::corpus::{make_pairs, Collection, PairwiseSample};
use crate::error::{invalid, Result};
use crate::pipeline::{candidate_pools, run_strategies, EvalPlan, RunResult, StrategyKind, TrainingData};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Query-level cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Shuffles the queries with `seed` and deals them round-robin into `k`
    /// test folds. The remaining queries of each fold are split into training
    /// and validation, the latter holding `round(val_fraction · n)` of them.
    pub fn new(query_ids: &[String], k: usize, val_fraction: f64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(invalid("cross-validation needs at least two folds"));
        }
        let mut ids: Vec<String> = query_ids.to_vec();
        ids.sort();
        ids.dedup();
        if ids.len() < k.max(3) {
            return Err(invalid(format!("{} queries cannot fill {k} folds", ids.len())));
        }
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(invalid("val_fraction must lie in [0, 1)"));
        }
        let mut rng = seed::rng(seed);
        ids.shuffle(&mut rng);
        let folds = (0..k)
            .map(|f| {
                let mut test: Vec<String> = ids.iter().skip(f).step_by(k).cloned().collect();
                let mut rest: Vec<String> = ids.iter().enumerate().filter(|(i, _)| i % k != f).map(|(_, q)| q.clone()).collect();
                rest.shuffle(&mut rng);
                let n_val = (rest.len() as f64 * val_fraction).round() as usize;
                let mut validation = rest.split_off(rest.len() - n_val);
                test.sort();
                rest.sort();
                validation.sort();
                Fold { train: rest, validation, test }
            })
            .collect();
        Ok(Self { seed, folds })
    }
}

/// Queries with at least one relevant judged document, in id order.
pub fn judged_queries(collection: &Collection) -> Vec<String> {
    collection
        .queries
        .iter()
        .filter(|q| collection.qrels.relevant_count(&q.id) > 0)
        .map(|q| q.id.clone())
        .collect()
}

/// The synthetic annotator's label noise is re-drawn per seed; other kinds are unchanged.
pub fn annotator_for_seed(kind: AnnotatorKind, seed: u64) -> AnnotatorKind {
    match kind {
        AnnotatorKind::Synthetic { quality, .. } => {
            AnnotatorKind::Synthetic { quality, seed: seed::derive(seed, "annotator") }
        }
        other => other,
    }
}

/// Per-fold runs and the per-strategy concatenation of test-query metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOutcome {
    pub seed: u64,
    pub annotator: AnnotatorKind,
    pub runs: Vec<RunResult>,
    pub aggregate: BTreeMap<StrategyKind, MetricReport>,
}

/// Runs every strategy under k-fold cross-validation by query.
///
/// Weak data comes from the annotator over all queries outside the test fold
/// (unjudged queries included); strong pairs come from the training split of
/// the judged queries. Test metrics are gathered on the held-out fold.
pub fn cross_validate(
    strategies: &[StrategyKind],
    collection: &Collection,
    annotator: AnnotatorKind,
    cfg: &Config,
    seed: u64,
) -> Result<CvOutcome> {
    if strategies.is_empty() {
        return Err(invalid("no strategies to cross-validate"));
    }
    let annotator = annotator_for_seed(annotator, seed);
    let weak_all = annotate_dataset(&annotator, collection, &cfg.annotation(), seed::derive(seed, "annotate"))?;
    let judged = judged_queries(collection);
    if judged.len() < 3 {
        return Err(invalid(format!("cross-validation needs at least 3 judged queries, found {}", judged.len())));
    }
    let plan = FoldPlan::new(&judged, cfg.eval.folds, cfg.eval.val_fraction, seed::derive(seed, "folds"))?;
    let echo = cfg.to_json();
    let mut runs = Vec::new();
    for (f, fold) in plan.folds.iter().enumerate() {
        let test: HashSet<&str> = fold.test.iter().map(String::as_str).collect();
        let weak: Vec<PairwiseSample> =
            weak_all.iter().filter(|s| !test.contains(s.query_id.as_str())).cloned().collect();
        let strong = make_pairs(
            &collection.judgments_for(&fold.train),
            cfg.eval.strong_pairs_per_query,
            seed::derive(seed, &format!("strong/{f}")),
        );
        let data = TrainingData { collection, weak: &weak, strong: &strong };
        let pools = candidate_pools(collection, &fold.test, cfg.eval.pool_depth)?;
        let eval = EvalPlan { collection, annotator, test_queries: &fold.test, candidates: &pools };
        let tcfg = cfg.training(seed::derive(seed, &format!("train/{f}")));
        for mut r in run_strategies(strategies, &data, &tcfg, &eval, f, &echo)? {
            r.seed = seed;
            runs.push(r);
        }
    }
    let mut aggregate: BTreeMap<StrategyKind, MetricReport> = BTreeMap::new();
    for r in &runs {
        aggregate.entry(r.strategy).or_default().extend(&r.report);
    }
    Ok(CvOutcome { seed, annotator, runs, aggregate })
}

pub const METRIC_CSV_HEADER: &str = "strategy,seed,fold,query_id,ap,ndcg20";

/// Resolved configuration as `# key = value` comment lines.
pub fn config_comment(cfg: &Config) -> String {
    cfg.to_flat().into_iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
}

/// Metric rows of several runs, prefixed by the configuration comment.
pub fn metrics_csv<'a>(cfg: &Config, runs: impl IntoIterator<Item = &'a RunResult>) -> String {
    let mut s = config_comment(cfg);
    s.push_str(METRIC_CSV_HEADER);
    s.push('\n');
    for r in runs {
        for ((q, ap), nd) in r.report.query_ids.iter().zip(&r.report.ap).zip(&r.report.ndcg20) {
            let _ = writeln!(s, "{},{},{},{q},{ap},{nd}", r.strategy, r.seed, r.fold);
        }
    }
    s
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median of a list of values (NaN when empty).
pub fn median_of(values: &[f64]) -> f64 {
    median(&mut values.to_vec())
}

/// Per-query AP of `strategy` averaged over seeds, keyed by query id.
fn mean_ap_by_query(outcomes: &[CvOutcome], strategy: StrategyKind) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for o in outcomes {
        if let Some(rep) = o.aggregate.get(&strategy) {
            for (q, ap) in rep.query_ids.iter().zip(&rep.ap) {
                let e = acc.entry(q.clone()).or_default();
                e.0 += ap;
                e.1 += 1;
            }
        }
    }
    acc.into_iter().map(|(q, (s, n))| (q, s / n as f64)).collect()
}

/// Paired t-test of `a` against `b` over per-query AP averaged across seeds.
pub fn compare_strategies(
    outcomes: &[CvOutcome],
    a: StrategyKind,
    b: StrategyKind,
    num_comparisons: usize,
) -> Result<TTestResult> {
    let ma = mean_ap_by_query(outcomes, a);
    let mb = mean_ap_by_query(outcomes, b);
    let (xa, xb): (Vec<f64>, Vec<f64>) = ma.iter().filter_map(|(q, &v)| mb.get(q).map(|&w| (v, w))).unzip();
    paired_ttest(&xa, &xb, num_comparisons)
}

/// Multi-seed summary of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub map_per_seed: Vec<f64>,
    pub median_map: f64,
    pub median_ndcg20: f64,
}

pub fn summarize(outcomes: &[CvOutcome], strategy: StrategyKind) -> StrategySummary {
    let reps: Vec<&MetricReport> = outcomes.iter().filter_map(|o| o.aggregate.get(&strategy)).collect();
    let map_per_seed: Vec<f64> = reps.iter().map(|r| r.map).collect();
    let nd: Vec<f64> = reps.iter().map(|r| r.mean_ndcg20).collect();
    StrategySummary { strategy, median_map: median_of(&map_per_seed), median_ndcg20: median_of(&nd), map_per_seed }
}

/// One annotator's row of the sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub annotator: String,
    /// Median over seeds.
    pub wa_map: f64,
    pub fwl_map: f64,
    /// Median over seeds of `(FWL - WA) / WA`, as a percentage.
    pub improvement_pct: f64,
}

/// Runs WA and FWL under cross-validation for each annotator and every seed.
/// Rows are ordered by WA MAP ascending.
pub fn sensitivity_experiment(
    annotators: &[AnnotatorKind],
    collection: &Collection,
    cfg: &Config,
    seeds: &[u64],
) -> Result<Vec<SensitivityRow>> {
    if annotators.len() < 2 {
        return Err(invalid("sensitivity needs at least two annotators"));
    }
    if seeds.is_empty() {
        return Err(invalid("sensitivity needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(annotators.len());
    for &kind in annotators {
        let mut wa = Vec::new();
        let mut fwl = Vec::new();
        let mut gain = Vec::new();
        for &s in seeds {
            let o = cross_validate(&[StrategyKind::Wa, StrategyKind::Fwl], collection, kind, cfg, s)?;
            let w = o.aggregate[&StrategyKind::Wa].map;
            let f = o.aggregate[&StrategyKind::Fwl].map;
            wa.push(w);
            fwl.push(f);
            gain.push(if w > 0.0 { 100.0 * (f - w) / w } else { f64::NAN });
        }
        rows.push(SensitivityRow {
            annotator: kind.to_string(),
            wa_map: median(&mut wa),
            fwl_map: median(&mut fwl),
            improvement_pct: median(&mut gain),
        });
    }
    rows.sort_by(|a, b| a.wa_map.total_cmp(&b.wa_map).then_with(|| a.annotator.cmp(&b.annotator)));
    Ok(rows)
}

pub fn sensitivity_csv(cfg: &Config, rows: &[SensitivityRow]) -> String {
    let mut s = config_comment(cfg);
    s.push_str("annotator,wa_map,fwl_map,improvement_pct\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.annotator, r.wa_map, r.fwl_map, r.improvement_pct);
    }
    s
}
