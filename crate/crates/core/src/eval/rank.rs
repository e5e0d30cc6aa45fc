use std::collections::BTreeSet;

use super::metrics::RankedList;
use crate::annotate::{pair_key, score_terms, synthetic_pair_label, top_k, true_order, AnnotatorKind};
use crate::corpus::{Collection, TermId};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::student::{QueryScorer, StudentParams};

/// Depth of the BM25 pool added to the judged documents.
pub const EVAL_POOL_DEPTH: usize = 200;

/// Top `depth` BM25 documents together with every judged document, by id.
pub fn candidate_pool(collection: &Collection, query_id: &str, depth: usize) -> Result<Vec<String>> {
    let mut ids: BTreeSet<String> = top_k(&AnnotatorKind::BM25_DEFAULT, collection, query_id, depth)?
        .into_iter()
        .map(|(d, _)| d)
        .collect();
    ids.extend(collection.qrels.judged(query_id).map(|(d, _)| d.to_string()));
    Ok(ids.into_iter().collect())
}

/// Ranks by mean pairwise win probability. A lone candidate scores 0.5.
pub fn rank_tournament(query_id: &str, candidates: &[String], mut prob: impl FnMut(usize, usize) -> f64) -> RankedList {
    let n = candidates.len();
    let scored = (0..n).map(|a| {
        let s = if n == 1 {
            0.5
        } else {
            (0..n).filter(|&b| b != a).map(|b| prob(a, b)).sum::<f64>() / (n - 1) as f64
        };
        (candidates[a].clone(), s)
    });
    RankedList::from_scores(query_id, scored.collect::<Vec<_>>())
}

/// Sorted, deduplicated copy of `candidates`, so scores do not depend on input order.
fn canonical(candidates: &[String]) -> Result<Vec<String>> {
    if candidates.is_empty() {
        return Err(invalid("ranking needs at least one candidate"));
    }
    Ok(candidates.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect())
}

/// Tournament ranking of `candidates` by the student's pairwise predictions.
pub fn rank_with_student<T: Scalar>(
    params: &StudentParams<T>,
    collection: &Collection,
    query_id: &str,
    candidates: &[String],
) -> Result<RankedList> {
    let candidates = &canonical(candidates)?[..];
    let q = collection
        .query_terms(query_id)
        .ok_or_else(|| invalid(format!("unknown query `{query_id}`")))?;
    let docs = candidates
        .iter()
        .map(|d| collection.doc_terms(d).ok_or_else(|| invalid(format!("unknown document `{d}`"))))
        .collect::<Result<Vec<&[TermId]>>>()?;
    let scores = QueryScorer::new(params, q, &docs).tournament_scores();
    Ok(RankedList::from_scores(
        query_id,
        candidates.iter().cloned().zip(scores.into_iter().map(Scalar::f64)).collect::<Vec<_>>(),
    ))
}

/// Ranking produced by the annotator alone: document scores directly, or for
/// the synthetic annotator a tournament over its pair labels (0.5 where the
/// true order is undefined).
pub fn rank_with_annotator(
    kind: &AnnotatorKind,
    collection: &Collection,
    query_id: &str,
    candidates: &[String],
) -> Result<RankedList> {
    let candidates = &canonical(candidates)?[..];
    let q = collection
        .query_terms(query_id)
        .ok_or_else(|| invalid(format!("unknown query `{query_id}`")))?;
    match *kind {
        AnnotatorKind::Synthetic { quality, seed } => Ok(rank_tournament(query_id, candidates, |a, b| {
            let (da, db) = (&candidates[a], &candidates[b]);
            match true_order(collection, query_id, da, db) {
                Some(truth) => synthetic_pair_label(quality, truth, seed, &pair_key(query_id, da, db)),
                None => 0.5,
            }
        })),
        _ => {
            let scored = candidates
                .iter()
                .map(|d| {
                    let doc = collection
                        .corpus
                        .doc(d)
                        .ok_or_else(|| invalid(format!("unknown document `{d}`")))?;
                    Ok((d.clone(), score_terms::<f64>(kind, &collection.corpus, q, doc)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RankedList::from_scores(query_id, scored))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};
    use crate::student::StudentArch;
    use rand::seq::SliceRandom;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:02}")).collect()
    }

    #[test]
    fn lone_candidate_scores_half() {
        let r = rank_tournament("q", &ids(1), |_, _| unreachable!());
        assert_eq!(r.entries, vec![("d00".to_string(), 0.5)]);
    }

    #[test]
    fn transitive_predictor_recovers_total_order() {
        let mut rng = crate::seed::rng(4);
        for _ in 0..20 {
            let cands = ids(12);
            let mut strength: Vec<f64> = (0..12).map(|i| i as f64).collect();
            strength.shuffle(&mut rng);
            let r = rank_tournament("q", &cands, |a, b| 1.0 / (1.0 + (strength[b] - strength[a]).exp()));
            let mut oracle = cands.clone();
            oracle.sort_by(|x, y| {
                let (i, j) = (cands.iter().position(|c| c == x).unwrap(), cands.iter().position(|c| c == y).unwrap());
                strength[j].total_cmp(&strength[i])
            });
            assert_eq!(r.doc_ids().collect::<Vec<_>>(), oracle.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }

    #[test]
    fn student_ranking_ignores_candidate_order() {
        let spec = SyntheticSpec { vocab_size: 200, num_docs: 40, num_queries: 2, unlabeled_queries: 0, ..SyntheticSpec::default() };
        let c = generate_synthetic(&spec).unwrap();
        let p = StudentParams::<f64>::init(c.corpus.vocab_size(), &StudentArch { embed_dim: 4, hidden: vec![5] }, 3);
        let qid = c.queries[0].id.clone();
        let mut cands = candidate_pool(&c, &qid, 15).unwrap();
        let a = rank_with_student(&p, &c, &qid, &cands).unwrap();
        cands.reverse();
        let b = rank_with_student(&p, &c, &qid, &cands).unwrap();
        assert_eq!(a, b);
        assert!(a.entries.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(rank_with_student(&p, &c, &qid, &[]).is_err());
    }

    #[test]
    fn pool_contains_judged_docs() {
        let spec = SyntheticSpec { vocab_size: 200, num_docs: 40, num_queries: 2, unlabeled_queries: 0, ..SyntheticSpec::default() };
        let c = generate_synthetic(&spec).unwrap();
        let qid = &c.queries[1].id;
        let pool = candidate_pool(&c, qid, 5).unwrap();
        for (d, _) in c.qrels.judged(qid) {
            assert!(pool.iter().any(|p| p == d));
        }
        assert!(pool.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn perfect_synthetic_annotator_ranks_by_truth() {
        let spec = SyntheticSpec { vocab_size: 200, num_docs: 40, num_queries: 2, unlabeled_queries: 0, ..SyntheticSpec::default() };
        let c = generate_synthetic(&spec).unwrap();
        let qid = &c.queries[0].id;
        let pool = candidate_pool(&c, qid, 40).unwrap();
        let r = rank_with_annotator(&AnnotatorKind::Synthetic { quality: 1.0, seed: 1 }, &c, qid, &pool).unwrap();
        let aff: Vec<f64> = r.doc_ids().map(|d| c.affinity(qid, d).unwrap()).collect();
        assert!(aff.windows(2).all(|w| w[0] >= w[1]));
    }
}
