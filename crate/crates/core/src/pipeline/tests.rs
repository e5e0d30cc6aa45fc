use super::*;
use crate::annotate::{annotate_dataset, AnnotationConfig};
use crate::corpus::{generate_synthetic, make_pairs, LabelKind, SyntheticSpec};

struct Fixture {
    collection: Collection,
    weak: Vec<PairwiseSample>,
    strong: Vec<PairwiseSample>,
}

impl Fixture {
    fn new() -> Self {
        let spec = SyntheticSpec {
            vocab_size: 300,
            num_docs: 60,
            num_queries: 6,
            unlabeled_queries: 4,
            ..SyntheticSpec::default()
        };
        let collection = generate_synthetic(&spec).unwrap();
        let cfg = AnnotationConfig { pool_size: 12, max_pairs_per_query: 10, ..AnnotationConfig::default() };
        let weak = annotate_dataset(&AnnotatorKind::BM25_DEFAULT, &collection, &cfg, 1).unwrap();
        let ids: Vec<String> = collection.qrels.query_ids().take(4).map(str::to_string).collect();
        let strong = make_pairs(&collection.judgments_for(&ids), 3, 2);
        assert!(!weak.is_empty() && !strong.is_empty());
        Self { collection, weak, strong }
    }

    fn data(&self) -> TrainingData<'_> {
        TrainingData { collection: &self.collection, weak: &self.weak, strong: &self.strong }
    }
}

fn small_cfg() -> TrainingConfig {
    TrainingConfig {
        arch: StudentArch { embed_dim: 4, hidden: vec![6] },
        epochs_step1: 3,
        epochs_step3: 2,
        seed: 11,
        ..TrainingConfig::default()
    }
}

fn with_sigma(samples: &[PairwiseSample], f: impl Fn(f64) -> f64) -> Vec<PairwiseSample> {
    samples
        .iter()
        .map(|s| PairwiseSample::soft(&s.query_id, &s.pos_doc_id, &s.neg_doc_id, s.label, f(s.sigma())).unwrap())
        .collect()
}

#[test]
fn pretraining_is_deterministic_and_reduces_loss() {
    let fx = Fixture::new();
    let cfg = TrainingConfig { epochs_step1: 6, ..small_cfg() };
    let a = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap();
    let b = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.epoch_loss[0] < std::f64::consts::LN_2 + 0.05, "{:?}", a.epoch_loss);
    assert!(a.epoch_loss.last().unwrap() < &a.epoch_loss[0], "{:?}", a.epoch_loss);
    let other = step1_pretrain::<f64>(&fx.data(), &TrainingConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.params, other.params);
}

#[test]
fn teacher_interpolates_strong_labels() {
    let fx = Fixture::new();
    let cfg = small_cfg();
    let params = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap().params;
    let before = params.clone();
    let teacher = step2_fit_teacher(&params, &fx.data(), &cfg).unwrap();
    assert_eq!(params, before);
    let s = &fx.strong[0];
    let (m, v) = crate::teacher::Teacher::posterior(&teacher, &represent(&params, &fx.collection, s).unwrap()).unwrap();
    assert!(v < 1e-3, "{v}");
    assert!((m - 1.0).abs() < 0.05, "{m}");
}

#[test]
fn single_strong_pair_gives_one_cluster() {
    let fx = Fixture::new();
    let strong = vec![fx.strong[0].clone()];
    let data = TrainingData { strong: &strong, ..fx.data() };
    let cfg = small_cfg();
    let params = step1_pretrain::<f64>(&data, &cfg).unwrap().params;
    let teacher = step2_fit_teacher(&params, &data, &cfg).unwrap();
    assert_eq!(teacher.k(), 1);
    let soft = soft_dataset(&params, &teacher, &data).unwrap();
    assert!(soft.iter().all(|s| s.kind == LabelKind::Soft));
}

#[test]
fn zero_beta_ignores_uncertainty() {
    let fx = Fixture::new();
    let mut cfg = small_cfg();
    cfg.schedule.beta = 0.0;
    let params = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap().params;
    let teacher = step2_fit_teacher(&params, &fx.data(), &cfg).unwrap();
    let soft = soft_dataset(&params, &teacher, &fx.data()).unwrap();
    let run = |samples: &[PairwiseSample]| {
        step3_finetune_on(params.clone(), &fx.collection, samples, &cfg, |_| {}).unwrap().params
    };
    let base = run(&soft);
    assert_eq!(base, run(&with_sigma(&soft, |s| 7.0 * s)));
    assert_eq!(base, run(&with_sigma(&soft, |_| 0.0)));
    assert_eq!(base, step3_finetune(params.clone(), &teacher, &fx.data(), &cfg).unwrap().params);
}

#[test]
fn huge_beta_freezes_uncertain_samples() {
    let fx = Fixture::new();
    let mut cfg = small_cfg();
    cfg.schedule.beta = 1e9;
    let params = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap().params;
    let teacher = step2_fit_teacher(&params, &fx.data(), &cfg).unwrap();
    let soft = with_sigma(&soft_dataset(&params, &teacher, &fx.data()).unwrap(), |s| s.max(1e-3));
    let tuned = step3_finetune_on(params.clone(), &fx.collection, &soft, &cfg, |_| {}).unwrap();
    assert_eq!(tuned.params, params);
}

#[test]
fn recorded_fidelity_matches_uncertainty() {
    let fx = Fixture::new();
    let mut cfg = small_cfg();
    cfg.schedule.beta = 2.5;
    let params = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap().params;
    let teacher = step2_fit_teacher(&params, &fx.data(), &cfg).unwrap();
    let soft = soft_dataset(&params, &teacher, &fx.data()).unwrap();
    let mut steps = Vec::new();
    step3_finetune_on(params, &fx.collection, &soft, &cfg, |r| steps.push(r)).unwrap();
    assert_eq!(steps.len(), soft.len() * cfg.epochs_step3);
    for r in &steps {
        let expected = (-2.5 * soft[r.sample].sigma()).exp();
        assert!((r.eta2 - expected).abs() <= 1e-15 * expected.max(1.0), "{r:?}");
    }
    assert_eq!(steps[0].t, 0);
}

#[test]
fn weak_then_strong_is_fine_tuning_with_a_certain_teacher() {
    let fx = Fixture::new();
    let cfg = small_cfg();
    let pre = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap().params;
    let wts = train_strategy(StrategyKind::NnWtoS, &fx.data(), &cfg, Some(&pre)).unwrap().unwrap();
    let certain = with_sigma(&augment_swapped(&fx.strong), |_| 0.0);
    let manual = step3_finetune_on(pre, &fx.collection, &certain, &cfg, |_| {}).unwrap().params;
    assert_eq!(wts, manual);
}

#[test]
fn interleaving_visits_each_weak_sample_once() {
    let order = interleave_order(7, 3, 5);
    assert_eq!(order.len(), 14);
    let mut weak: Vec<usize> = order.iter().step_by(2).copied().collect();
    weak.sort_unstable();
    assert_eq!(weak, (0..7).collect::<Vec<_>>());
    assert!(order.iter().skip(1).step_by(2).all(|&i| (7..10).contains(&i)));
    assert_eq!(order, interleave_order(7, 3, 5));
}

#[test]
fn fwl_is_the_three_steps_chained() {
    let fx = Fixture::new();
    let cfg = small_cfg();
    let p = step1_pretrain::<f64>(&fx.data(), &cfg).unwrap().params;
    let teacher = step2_fit_teacher(&p, &fx.data(), &cfg).unwrap();
    let manual = step3_finetune(p, &teacher, &fx.data(), &cfg).unwrap().params;
    let direct = train_strategy::<f64>(StrategyKind::Fwl, &fx.data(), &cfg, None).unwrap().unwrap();
    assert_eq!(manual, direct);
}

#[test]
fn shared_pretraining_matches_separate_runs() {
    let fx = Fixture::new();
    let cfg = small_cfg();
    let queries: Vec<String> = fx.collection.qrels.query_ids().skip(4).map(str::to_string).collect();
    let pools = candidate_pools(&fx.collection, &queries, 20).unwrap();
    let plan = EvalPlan {
        collection: &fx.collection,
        annotator: AnnotatorKind::BM25_DEFAULT,
        test_queries: &queries,
        candidates: &pools,
    };
    let echo = serde_json::json!({});
    let all = run_strategies(&StrategyKind::ALL, &fx.data(), &cfg, &plan, 0, &echo).unwrap();
    assert_eq!(all.len(), StrategyKind::ALL.len());
    for r in &all {
        let alone = run_baseline(r.strategy, &fx.data(), &cfg, &plan, 0, &echo).unwrap();
        assert_eq!(r.params, alone.params, "{}", r.strategy);
        assert_eq!(r.report, alone.report, "{}", r.strategy);
    }
    assert!(all[0].params.is_none());
    let line = all[5].to_json_line().unwrap();
    assert!(line.contains("\"strategy\":\"fwl\""), "{line}");
}

#[test]
fn strategy_names_round_trip() {
    for s in StrategyKind::ALL {
        assert_eq!(s.name().parse::<StrategyKind>().unwrap(), s);
    }
    let err = "nn-x".parse::<StrategyKind>().unwrap_err().to_string();
    assert!(err.contains("nn-wts"), "{err}");
}
