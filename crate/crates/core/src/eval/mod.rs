//! Ranking readout, retrieval metrics, significance testing and cross-validation.

mod cv;
mod metrics;
mod rank;
mod stats;

pub use cv::{
    annotator_for_seed, compare_strategies, config_comment, cross_validate, judged_queries, median_of, metrics_csv,
    sensitivity_csv, sensitivity_experiment, summarize, CvOutcome, Fold, FoldPlan, SensitivityRow, StrategySummary,
    METRIC_CSV_HEADER,
};
pub use metrics::{average_precision, ndcg_at, MetricReport, RankedList, MAP_CUTOFF, NDCG_DEPTH};
pub use rank::{candidate_pool, rank_tournament, rank_with_annotator, rank_with_student, EVAL_POOL_DEPTH};
pub use stats::{incomplete_beta, ln_gamma, paired_ttest, t_cdf, t_two_tailed_p, TTestResult};
