use fwl_core::annotate::{annotate_dataset, read_weak, weak_pairwise_label, write_weak, AnnotationConfig, AnnotatorKind};
use fwl_core::corpus::{generate_synthetic, load_trec, make_pairs, write_trec, Collection, Judgment, Qrels, SyntheticSpec};
use fwl_core::eval::{average_precision, ndcg_at, paired_ttest, rank_with_student, RankedList, MAP_CUTOFF, NDCG_DEPTH};
use fwl_core::pipeline::{candidate_pools, run_fwl, EvalPlan, TrainingConfig, TrainingData};
use fwl_core::student::{load_checkpoint, save_checkpoint, StudentArch};
use fwl_core::Student;
use proptest::prelude::*;

fn small_collection() -> Collection {
    let spec = SyntheticSpec {
        vocab_size: 300,
        num_docs: 80,
        num_queries: 9,
        unlabeled_queries: 20,
        seed: 3,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec).unwrap()
}

fn small_training(seed: u64) -> TrainingConfig {
    TrainingConfig {
        arch: StudentArch { embed_dim: 4, hidden: vec![6] },
        epochs_step1: 2,
        epochs_step3: 1,
        seed,
        ..TrainingConfig::default()
    }
}

fn annotation() -> AnnotationConfig {
    AnnotationConfig { pool_size: 15, ..AnnotationConfig::default() }
}

#[test]
fn trec_files_round_trip() {
    let c = small_collection();
    let dir = tempfile::tempdir().unwrap();
    write_trec(&c, dir.path()).unwrap();
    let back = load_trec(dir.path().join("docs.tsv"), dir.path().join("queries.tsv"), dir.path().join("qrels.txt")).unwrap();
    assert_eq!(back.corpus.doc_count(), c.corpus.doc_count());
    assert_eq!(back.corpus.avg_doc_len(), c.corpus.avg_doc_len());
    assert_eq!(back.queries.len(), c.queries.len());
    assert_eq!(back.judgments, c.judgments);
}

#[test]
fn weak_file_round_trips_and_labels_are_probabilities() {
    let c = small_collection();
    let weak = annotate_dataset(&AnnotatorKind::BM25_DEFAULT, &c, &annotation(), 11).unwrap();
    assert!(!weak.is_empty());
    assert!(weak.iter().all(|s| s.label > 0.0 && s.label < 1.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weak.tsv");
    write_weak(&weak, &path).unwrap();
    assert_eq!(read_weak(&path).unwrap(), weak);
}

#[test]
fn fwl_trains_evaluates_and_checkpoints_deterministically() {
    let c = small_collection();
    let mut judged: Vec<String> = c.qrels.query_ids().map(String::from).collect();
    judged.sort();
    let test = judged.split_off(judged.len() - 3);
    let weak: Vec<_> = annotate_dataset(&AnnotatorKind::BM25_DEFAULT, &c, &annotation(), 5)
        .unwrap()
        .into_iter()
        .filter(|s| !test.contains(&s.query_id))
        .collect();
    let strong = make_pairs(&c.judgments_for(&judged), 5, 6);
    let data = TrainingData { collection: &c, weak: &weak, strong: &strong };
    let pools = candidate_pools(&c, &test, 20).unwrap();
    let plan = EvalPlan { collection: &c, annotator: AnnotatorKind::BM25_DEFAULT, test_queries: &test, candidates: &pools };
    let echo = serde_json::json!({ "note": "echo" });

    let a = run_fwl(&data, &small_training(9), &plan, 0, &echo).unwrap();
    let b = run_fwl(&data, &small_training(9), &plan, 0, &echo).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.config, echo);
    assert_eq!(a.report.query_ids.len(), a.report.ap.len());
    assert!(a.report.ap.iter().chain(&a.report.ndcg20).all(|v| (0.0..=1.0).contains(v)));

    let params: Student = a.params.expect("fwl produces a student");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("student.ckpt");
    save_checkpoint(&params, &path).unwrap();
    let loaded: Student = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, params);
    for (q, pool) in test.iter().zip(&pools) {
        assert_eq!(rank_with_student(&loaded, &c, q, pool).unwrap(), rank_with_student(&params, &c, q, pool).unwrap());
    }
}

fn qrels_for(grades: &[u32]) -> Qrels {
    let judgments: Vec<_> = grades
        .iter()
        .enumerate()
        .map(|(i, &g)| Judgment { query_id: "q".into(), doc_id: format!("d{i}"), grade: g })
        .collect();
    Qrels::from_judgments(&judgments).unwrap()
}

proptest! {
    #[test]
    fn weak_labels_are_antisymmetric(a in -50.0f64..50.0, b in -50.0f64..50.0, tau in 0.01f64..5.0) {
        let ab = weak_pairwise_label(a, b, tau).unwrap();
        let ba = weak_pairwise_label(b, a, tau).unwrap();
        prop_assert!((ab + ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ttest_is_symmetric(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30), k in 1usize..6) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = paired_ttest(&a, &b, k).unwrap();
        let ba = paired_ttest(&b, &a, k).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!(ab.t_stat == -ba.t_stat || (ab.t_stat.is_nan() && ba.t_stat.is_nan()));
        prop_assert!((0.0..=1.0).contains(&ab.corrected_p));
    }

    #[test]
    fn ranking_metrics_stay_in_the_unit_interval(
        grades in prop::collection::vec(0u32..3, 1..25),
        scores in prop::collection::vec(-1.0f64..1.0, 25),
    ) {
        let qrels = qrels_for(&grades);
        let ranked = RankedList::from_scores("q", (0..grades.len()).map(|i| (format!("d{i}"), scores[i])));
        let ap = average_precision(&ranked, &qrels, MAP_CUTOFF);
        let nd = ndcg_at(&ranked, &qrels, NDCG_DEPTH);
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&nd));
    }
}
