//! Weak annotators: unsupervised document scorers (BM25, TF-IDF, binary term
//! occurrence) and a quality-controlled synthetic pair labeler.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Collection, Corpus, Document, LabelKind, PairwiseSample, Query, TermId};
use crate::error::{invalid, FwlError, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::seed;

/// Label margin of the synthetic annotator: it emits `1 - ε` or `ε`.
pub const SYNTHETIC_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnnotatorKind {
    Bm25 { k1: f64, b: f64 },
    Tfidf,
    Bto,
    /// Labels pairs with the true direction with probability `quality`.
    Synthetic { quality: f64, seed: u64 },
}

impl AnnotatorKind {
    pub const BM25_DEFAULT: AnnotatorKind = AnnotatorKind::Bm25 { k1: 1.2, b: 0.75 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            AnnotatorKind::Bm25 { k1, b } => {
                if !(k1 > 0.0) {
                    return Err(invalid(format!("BM25 k1 must be positive, got {k1}")));
                }
                if !(0.0..=1.0).contains(&b) {
                    return Err(invalid(format!("BM25 b must lie in [0, 1], got {b}")));
                }
            }
            AnnotatorKind::Synthetic { quality, .. } if !(0.0..=1.0).contains(&quality) => {
                return Err(invalid(format!("synthetic quality must lie in [0, 1], got {quality}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Scorer used to pool candidates; the synthetic annotator pools with BM25.
    pub fn pooling_scorer(&self) -> AnnotatorKind {
        match self {
            AnnotatorKind::Synthetic { .. } => AnnotatorKind::BM25_DEFAULT,
            other => *other,
        }
    }
}

impl fmt::Display for AnnotatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotatorKind::Bm25 { k1, b } => write!(f, "bm25(k1={k1},b={b})"),
            AnnotatorKind::Tfidf => f.write_str("tfidf"),
            AnnotatorKind::Bto => f.write_str("bto"),
            AnnotatorKind::Synthetic { quality, .. } => write!(f, "synthetic(q={quality})"),
        }
    }
}

impl FromStr for AnnotatorKind {
    type Err = FwlError;

    /// `bm25`, `tfidf`, `bto` or `synthetic:<quality>`.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "bm25" => AnnotatorKind::BM25_DEFAULT,
            "tfidf" => AnnotatorKind::Tfidf,
            "bto" => AnnotatorKind::Bto,
            _ => match s.strip_prefix("synthetic:") {
                Some(q) => AnnotatorKind::Synthetic {
                    quality: q.parse().map_err(|_| invalid(format!("bad synthetic quality `{q}`")))?,
                    seed: 0,
                },
                None => return Err(invalid(format!("unknown annotator `{s}`"))),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`; never negative.
pub fn idf<T: Scalar>(corpus: &Corpus, term: TermId) -> T {
    let n = T::count(corpus.doc_count());
    let df = T::of(f64::from(corpus.df(term)));
    let half = T::of(0.5);
    (T::one() + (n - df + half) / (df + half)).ln()
}

pub(crate) fn score_terms<T: Scalar>(
    kind: &AnnotatorKind,
    corpus: &Corpus,
    query_terms: &[TermId],
    doc: &Document,
) -> Result<T> {
    let mut total = T::zero();
    match *kind {
        AnnotatorKind::Bm25 { k1, b } => {
            let (k1, b) = (T::of(k1), T::of(b));
            let avgdl = T::of(corpus.avg_doc_len());
            let len_norm = if avgdl > T::zero() {
                T::one() - b + b * T::count(doc.len()) / avgdl
            } else {
                T::one()
            };
            for &t in query_terms {
                let tf = doc.tf(t);
                if tf == 0 {
                    continue;
                }
                let tf = T::of(f64::from(tf));
                total += idf::<T>(corpus, t) * tf * (k1 + T::one()) / (tf + k1 * len_norm);
            }
        }
        AnnotatorKind::Tfidf => {
            for &t in query_terms {
                let tf = doc.tf(t);
                if tf > 0 {
                    total += T::of(f64::from(tf)) * idf::<T>(corpus, t);
                }
            }
        }
        AnnotatorKind::Bto => {
            for &t in query_terms {
                if doc.tf(t) > 0 {
                    total += T::one();
                }
            }
        }
        AnnotatorKind::Synthetic { .. } => {
            return Err(FwlError::Unsupported(
                "the synthetic annotator labels pairs and has no document score".into(),
            ))
        }
    }
    Ok(total)
}

/// Score of `doc` for `query` under a document-scoring annotator.
/// Out-of-vocabulary query terms contribute nothing.
pub fn score<T: Scalar>(kind: &AnnotatorKind, corpus: &Corpus, query: &Query, doc: &Document) -> Result<T> {
    score_terms(kind, corpus, &corpus.resolve(&query.tokens), doc)
}

/// `logistic(tau * (score_pos - score_neg))`.
pub fn weak_pairwise_label<T: Scalar>(score_pos: T, score_neg: T, tau: T) -> Result<T> {
    if !(tau > T::zero()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    if !score_pos.is_finite() || !score_neg.is_finite() {
        return Err(invalid("non-finite annotator score"));
    }
    Ok(sigmoid(tau * (score_pos - score_neg)))
}

/// Emits `1 - ε` if the pair is labeled in its true direction and `ε` otherwise.
/// The true direction is kept with probability `quality`, decided by a seeded
/// hash of `pair_key`.
pub fn synthetic_pair_label(quality: f64, true_direction: bool, seed: u64, pair_key: &str) -> f64 {
    let keep = seed::unit(seed::mix(seed, pair_key)) < quality;
    if keep == true_direction {
        1.0 - SYNTHETIC_EPSILON
    } else {
        SYNTHETIC_EPSILON
    }
}

/// Whether `a` truly outranks `b` for the query: grade first, then latent
/// affinity when the collection has one. `None` when indistinguishable.
pub fn true_order(collection: &Collection, query_id: &str, a: &str, b: &str) -> Option<bool> {
    let (ga, gb) = (collection.qrels.grade(query_id, a), collection.qrels.grade(query_id, b));
    match ga.cmp(&gb) {
        Ordering::Greater => Some(true),
        Ordering::Less => Some(false),
        Ordering::Equal => {
            let fa = collection.affinity(query_id, a)?;
            let fb = collection.affinity(query_id, b)?;
            match fa.partial_cmp(&fb)? {
                Ordering::Greater => Some(true),
                Ordering::Less => Some(false),
                Ordering::Equal => None,
            }
        }
    }
}

pub fn pair_key(query_id: &str, a: &str, b: &str) -> String {
    format!("{query_id}\u{1f}{a}\u{1f}{b}")
}

/// Scores of every corpus document for a query, in corpus order.
pub fn score_all(kind: &AnnotatorKind, collection: &Collection, query_id: &str) -> Result<Vec<f64>> {
    let terms = collection
        .query_terms(query_id)
        .ok_or_else(|| invalid(format!("unknown query `{query_id}`")))?;
    collection
        .corpus
        .docs()
        .iter()
        .map(|d| score_terms::<f64>(kind, &collection.corpus, terms, d))
        .collect()
}

/// Ids of the `k` best-scoring documents, ties broken by ascending id.
pub fn top_k(kind: &AnnotatorKind, collection: &Collection, query_id: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let scores = score_all(&kind.pooling_scorer(), collection, query_id)?;
    let docs = collection.corpus.docs();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| docs[a].id.cmp(&docs[b].id)));
    order.truncate(k);
    Ok(order.into_iter().map(|i| (docs[i].id.clone(), scores[i])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationConfig {
    pub pool_size: usize,
    pub max_pairs_per_query: usize,
    pub tau: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self { pool_size: 200, max_pairs_per_query: 10, tau: 1.0 }
    }
}

/// Builds the weak dataset.
///
/// Per query the top `pool_size` documents by annotator score form the pool.
/// Candidate pairs are pool members with distinct scores, ordered by pool rank;
/// `max_pairs_per_query` of them (0 = all) are kept by seeded subsampling. Scores
/// are z-normalized within the pool before labeling.
pub fn annotate_dataset(
    kind: &AnnotatorKind,
    collection: &Collection,
    cfg: &AnnotationConfig,
    seed: u64,
) -> Result<Vec<PairwiseSample>> {
    kind.validate()?;
    if collection.corpus.doc_count() == 0 {
        return Err(invalid("cannot annotate an empty corpus"));
    }
    let mut out = Vec::new();
    for q in &collection.queries {
        let pool = top_k(kind, collection, &q.id, cfg.pool_size)?;
        if pool.len() < 2 {
            continue;
        }
        let n = pool.len() as f64;
        let mean = pool.iter().map(|p| p.1).sum::<f64>() / n;
        let var = pool.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            continue;
        }
        let sd = var.sqrt();
        let mut cands = Vec::new();
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                if pool[i].1 > pool[j].1 {
                    cands.push((i, j));
                }
            }
        }
        if let AnnotatorKind::Synthetic { .. } = kind {
            cands.retain(|&(i, j)| true_order(collection, &q.id, &pool[i].0, &pool[j].0).is_some());
        }
        if cfg.max_pairs_per_query > 0 && cands.len() > cfg.max_pairs_per_query {
            let mut rng = seed::rng(seed::mix(seed, &q.id));
            let mut keep = index::sample(&mut rng, cands.len(), cfg.max_pairs_per_query).into_vec();
            keep.sort_unstable();
            cands = keep.into_iter().map(|k| cands[k]).collect();
        }
        for (i, j) in cands {
            let (pos, neg) = (&pool[i].0, &pool[j].0);
            let label = match *kind {
                AnnotatorKind::Synthetic { quality, seed: s } => {
                    let truth = true_order(collection, &q.id, pos, neg).expect("filtered above");
                    synthetic_pair_label(quality, truth, s, &pair_key(&q.id, pos, neg))
                }
                _ => weak_pairwise_label((pool[i].1 - mean) / sd, (pool[j].1 - mean) / sd, cfg.tau)?,
            };
            out.push(PairwiseSample::weak(q.id.clone(), pos.clone(), neg.clone(), label)?);
        }
    }
    Ok(out)
}

/// One sample per line: `<qid>\t<pos_id>\t<neg_id>\t<label>\t<kind>`.
pub fn format_weak(samples: &[PairwiseSample]) -> String {
    let mut s = String::new();
    for x in samples {
        s.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", x.query_id, x.pos_doc_id, x.neg_doc_id, x.label, x.kind));
    }
    s
}

pub fn parse_weak(text: &str) -> Result<Vec<PairwiseSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| FwlError::Parse { file: "weak".into(), line: i + 1, msg };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, got {}", f.len())));
        }
        let label: f64 = f[3].parse().map_err(|_| err(format!("bad label `{}`", f[3])))?;
        let kind: LabelKind = f[4].parse().map_err(|e: FwlError| err(e.to_string()))?;
        out.push(PairwiseSample::new(f[0], f[1], f[2], label, kind, None).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_weak(samples: &[PairwiseSample], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_weak(samples))?;
    Ok(())
}

pub fn read_weak(path: impl AsRef<Path>) -> Result<Vec<PairwiseSample>> {
    parse_weak(&fs::read_to_string(path)?)
}
