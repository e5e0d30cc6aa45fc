use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::Judgment;
use crate::error::{invalid, FwlError, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Weak,
    Strong,
    Soft,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Weak => "weak",
            LabelKind::Strong => "strong",
            LabelKind::Soft => "soft",
        })
    }
}

impl FromStr for LabelKind {
    type Err = FwlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(LabelKind::Weak),
            "strong" => Ok(LabelKind::Strong),
            "soft" => Ok(LabelKind::Soft),
            other => Err(invalid(format!("unknown label kind `{other}`"))),
        }
    }
}

/// A `<query, d+, d->` triple; `label` is the probability that `pos_doc_id`
/// should be ranked above `neg_doc_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSample {
    pub query_id: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
    pub label: f64,
    pub kind: LabelKind,
    /// Teacher uncertainty; present exactly for soft samples.
    pub uncertainty: Option<f64>,
}

impl PairwiseSample {
    pub fn new(
        query_id: impl Into<String>,
        pos_doc_id: impl Into<String>,
        neg_doc_id: impl Into<String>,
        label: f64,
        kind: LabelKind,
        uncertainty: Option<f64>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&label) {
            return Err(invalid(format!("label {label} outside [0, 1]")));
        }
        match (kind, uncertainty) {
            (LabelKind::Soft, Some(s)) if s >= 0.0 && s.is_finite() => {}
            (LabelKind::Soft, _) => return Err(invalid("soft sample needs a finite non-negative uncertainty")),
            (_, Some(_)) => return Err(invalid("only soft samples carry an uncertainty")),
            (_, None) => {}
        }
        Ok(Self {
            query_id: query_id.into(),
            pos_doc_id: pos_doc_id.into(),
            neg_doc_id: neg_doc_id.into(),
            label,
            kind,
            uncertainty,
        })
    }

    pub fn strong(q: impl Into<String>, pos: impl Into<String>, neg: impl Into<String>) -> Self {
        Self::new(q, pos, neg, 1.0, LabelKind::Strong, None).expect("valid strong label")
    }

    pub fn weak(q: impl Into<String>, pos: impl Into<String>, neg: impl Into<String>, label: f64) -> Result<Self> {
        Self::new(q, pos, neg, label, LabelKind::Weak, None)
    }

    pub fn soft(
        q: impl Into<String>,
        pos: impl Into<String>,
        neg: impl Into<String>,
        label: f64,
        sigma: f64,
    ) -> Result<Self> {
        Self::new(q, pos, neg, label, LabelKind::Soft, Some(sigma))
    }

    /// `(query, pos, neg)` identity used for de-duplication.
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.query_id, &self.pos_doc_id, &self.neg_doc_id)
    }

    /// The same pair in the opposite order with the complemented label.
    pub fn swapped(&self) -> Self {
        Self {
            query_id: self.query_id.clone(),
            pos_doc_id: self.neg_doc_id.clone(),
            neg_doc_id: self.pos_doc_id.clone(),
            label: 1.0 - self.label,
            kind: self.kind,
            uncertainty: self.uncertainty,
        }
    }

    /// Uncertainty used for step-size modulation; zero for non-soft samples.
    pub fn sigma(&self) -> f64 {
        match self.kind {
            LabelKind::Soft => self.uncertainty.unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

/// Each sample followed by its swapped counterpart.
pub fn augment_swapped(samples: &[PairwiseSample]) -> Vec<PairwiseSample> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        out.push(s.clone());
        out.push(s.swapped());
    }
    out
}

/// Strong pairs from graded judgments.
///
/// Every `(pos, neg)` with `grade(pos) > grade(neg)` for the same query is a
/// candidate; candidates are enumerated by descending grade then doc id. When a
/// query has more than `max_pairs_per_query` candidates a seeded subset is kept
/// in enumeration order. `max_pairs_per_query == 0` keeps everything.
pub fn make_pairs(judgments: &[Judgment], max_pairs_per_query: usize, seed: u64) -> Vec<PairwiseSample> {
    let mut by_query: BTreeMap<&str, Vec<(&str, u32)>> = BTreeMap::new();
    for j in judgments {
        by_query.entry(&j.query_id).or_default().push((&j.doc_id, j.grade));
    }
    let mut out = Vec::new();
    for (qid, mut docs) in by_query {
        docs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut cands = Vec::new();
        for (i, &(pos, gp)) in docs.iter().enumerate() {
            for &(neg, gn) in &docs[i + 1..] {
                if gp > gn {
                    cands.push((pos, neg));
                }
            }
        }
        if max_pairs_per_query > 0 && cands.len() > max_pairs_per_query {
            let mut rng = seed::rng(seed::mix(seed, qid));
            let mut keep = index::sample(&mut rng, cands.len(), max_pairs_per_query).into_vec();
            keep.sort_unstable();
            cands = keep.into_iter().map(|i| cands[i]).collect();
        }
        out.extend(cands.into_iter().map(|(p, n)| PairwiseSample::strong(qid, p, n)));
    }
    out
}
