use serde::{Deserialize, Serialize};

use crate::corpus::Qrels;

/// Documents of one query ordered by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts `(doc, score)` pairs into ranking order. Duplicate ids keep their
    /// first occurrence.
    pub fn from_scores(query_id: impl Into<String>, scored: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut entries: Vec<(String, f64)> = scored.into_iter().filter(|(d, _)| seen.insert(d.clone())).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self { query_id: query_id.into(), entries }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(d, _)| d.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Average precision over the top `cutoff` documents, normalised by the total
/// number of relevant (grade ≥ 1) judged documents. Zero when none exist.
pub fn average_precision(ranked: &RankedList, qrels: &Qrels, cutoff: usize) -> f64 {
    let total = qrels.relevant_count(&ranked.query_id);
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, doc) in ranked.doc_ids().take(cutoff.max(1)).enumerate() {
        if qrels.grade(&ranked.query_id, doc) >= 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / total as f64
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Graded-gain nDCG at depth `k`; the ideal ordering comes from all judged grades.
pub fn ndcg_at(ranked: &RankedList, qrels: &Qrels, k: usize) -> f64 {
    let k = k.max(1);
    let mut ideal: Vec<u32> = qrels.judged(&ranked.query_id).map(|(_, g)| g).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(ranked.doc_ids().take(k).map(|d| qrels.grade(&ranked.query_id, d))) / idcg
}

pub const MAP_CUTOFF: usize = 1000;
pub const NDCG_DEPTH: usize = 20;

/// Per-query AP and nDCG@20 plus their means. Queries without relevant
/// documents are left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub query_ids: Vec<String>,
    pub ap: Vec<f64>,
    pub ndcg20: Vec<f64>,
    pub map: f64,
    pub mean_ndcg20: f64,
}

impl MetricReport {
    pub fn from_rankings<'a>(rankings: impl IntoIterator<Item = &'a RankedList>, qrels: &Qrels) -> Self {
        let mut r = Self::default();
        for ranked in rankings {
            if qrels.relevant_count(&ranked.query_id) == 0 {
                continue;
            }
            r.query_ids.push(ranked.query_id.clone());
            r.ap.push(average_precision(ranked, qrels, MAP_CUTOFF));
            r.ndcg20.push(ndcg_at(ranked, qrels, NDCG_DEPTH));
        }
        r.refresh_means();
        r
    }

    /// Recomputes `map` and `mean_ndcg20` from the vectors.
    pub fn refresh_means(&mut self) {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        self.map = mean(&self.ap);
        self.mean_ndcg20 = mean(&self.ndcg20);
    }

    pub fn extend(&mut self, other: &MetricReport) {
        self.query_ids.extend(other.query_ids.iter().cloned());
        self.ap.extend(&other.ap);
        self.ndcg20.extend(&other.ndcg20);
        self.refresh_means();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Judgment;
    use proptest::prelude::*;

    fn qrels(rows: &[(&str, u32)]) -> Qrels {
        let j: Vec<Judgment> = rows
            .iter()
            .map(|&(d, g)| Judgment { query_id: "q".into(), doc_id: d.into(), grade: g })
            .collect();
        Qrels::from_judgments(&j).unwrap()
    }

    fn list(ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores("q", ids.iter().enumerate().map(|(i, d)| (d.to_string(), (n - i) as f64)))
    }

    #[test]
    fn ranking_order_and_ties() {
        let r = RankedList::from_scores(
            "q",
            vec![("b".to_string(), 0.5), ("a".to_string(), 0.5), ("c".to_string(), 0.9), ("a".to_string(), 0.1)],
        );
        let ids: Vec<&str> = r.doc_ids().collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn ap_examples() {
        let q = qrels(&[("a", 1), ("c", 2), ("b", 0)]);
        assert!((average_precision(&list(&["a", "b", "c"]), &q, 1000) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&list(&["c", "a", "b"]), &q, 1000), 1.0);
        assert_eq!(average_precision(&list(&["b", "x", "a"]), &q, 2), 0.0);
        assert_eq!(average_precision(&list(&["a"]), &qrels(&[("a", 0)]), 1000), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let q = qrels(&[("a", 1), ("b", 0)]);
        let v = ndcg_at(&list(&["b", "a"]), &q, 20);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        let q = qrels(&[("a", 2), ("b", 1), ("c", 0)]);
        assert_eq!(ndcg_at(&list(&["a", "b", "c"]), &q, 20), 1.0);
        assert_eq!(ndcg_at(&list(&["a", "b"]), &qrels(&[("a", 0), ("b", 0)]), 20), 0.0);
    }

    #[test]
    fn report_skips_queries_without_relevant_docs() {
        let j = vec![
            Judgment { query_id: "q".into(), doc_id: "a".into(), grade: 1 },
            Judgment { query_id: "z".into(), doc_id: "a".into(), grade: 0 },
        ];
        let q = Qrels::from_judgments(&j).unwrap();
        let lists = [list(&["a"]), RankedList::from_scores("z", vec![("a".to_string(), 1.0)])];
        let r = MetricReport::from_rankings(&lists, &q);
        assert_eq!(r.query_ids, ["q"]);
        assert_eq!(r.map, 1.0);
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_rename_invariant(
            grades in prop::collection::vec(0u32..3, 1..30),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let ids: Vec<String> = (0..grades.len()).map(|i| format!("d{i}")).collect();
            let mut order = ids.clone();
            order.shuffle(&mut crate::seed::rng(perm_seed));
            let rows: Vec<(&str, u32)> = ids.iter().map(String::as_str).zip(grades.iter().copied()).collect();
            let q = qrels(&rows);
            let refs: Vec<&str> = order.iter().map(String::as_str).collect();
            let ap = average_precision(&list(&refs), &q, 1000);
            let nd = ndcg_at(&list(&refs), &q, 20);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&nd));

            let renamed_rows: Vec<(String, u32)> = rows.iter().map(|(d, g)| (format!("x{d}"), *g)).collect();
            let rr: Vec<(&str, u32)> = renamed_rows.iter().map(|(d, g)| (d.as_str(), *g)).collect();
            let renamed: Vec<String> = order.iter().map(|d| format!("x{d}")).collect();
            let rrefs: Vec<&str> = renamed.iter().map(String::as_str).collect();
            // Renaming can change tie-breaks only when scores tie; `list` assigns distinct scores.
            prop_assert_eq!(average_precision(&list(&rrefs), &qrels(&rr), 1000), ap);
            prop_assert_eq!(ndcg_at(&list(&rrefs), &qrels(&rr), 20), nd);

            if grades.iter().any(|&g| g > 0) {
                let mut ideal = ids.clone();
                ideal.sort_by_key(|d| std::cmp::Reverse(q.grade("q", d)));
                let irefs: Vec<&str> = ideal.iter().map(String::as_str).collect();
                prop_assert!((ndcg_at(&list(&irefs), &q, 20) - 1.0).abs() < 1e-12);
            }
        }
    }
}
