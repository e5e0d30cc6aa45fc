//! Documents, queries, relevance judgments and the collection statistics the
//! weak annotators need.

mod pairs;
mod synthetic;
mod trec;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FwlError, Result};

pub use pairs::{augment_swapped, make_pairs, LabelKind, PairwiseSample};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use trec::{load_trec, read_trec, write_trec};

pub type TermId = u32;

/// Lowercase, split on runs of non-alphanumeric characters, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A document before vocabulary assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub tokens: Vec<String>,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self { id: id.into(), tokens }
    }

    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Self::new(id, tokenize(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub terms: Vec<TermId>,
    /// Sorted `(term, count)` pairs.
    term_counts: Vec<(TermId, u32)>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn tf(&self, term: TermId) -> u32 {
        self.term_counts
            .binary_search_by_key(&term, |&(t, _)| t)
            .map(|i| self.term_counts[i].1)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(invalid(format!("query `{id}` has no tokens")));
        }
        Ok(Self { id, tokens })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u32,
}

/// Document collection with vocabulary and document-frequency statistics.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    doc_index: HashMap<String, usize>,
    vocab: HashMap<String, TermId>,
    terms: Vec<String>,
    df: Vec<u32>,
    avg_doc_len: f64,
}

/// Builds the corpus. Vocabulary ids are assigned in first-seen order.
pub fn build_corpus(docs: Vec<RawDocument>) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut total_len = 0usize;
    for raw in docs {
        if corpus.doc_index.contains_key(&raw.id) {
            return Err(FwlError::DuplicateId(raw.id));
        }
        let mut terms = Vec::with_capacity(raw.tokens.len());
        for tok in raw.tokens {
            let next = corpus.terms.len() as TermId;
            let id = *corpus.vocab.entry(tok).or_insert_with_key(|k| {
                corpus.terms.push(k.clone());
                corpus.df.push(0);
                next
            });
            terms.push(id);
        }
        let mut sorted = terms.clone();
        sorted.sort_unstable();
        let mut term_counts: Vec<(TermId, u32)> = Vec::new();
        for t in sorted {
            match term_counts.last_mut() {
                Some((last, c)) if *last == t => *c += 1,
                _ => term_counts.push((t, 1)),
            }
        }
        for &(t, _) in &term_counts {
            corpus.df[t as usize] += 1;
        }
        total_len += terms.len();
        corpus.doc_index.insert(raw.id.clone(), corpus.docs.len());
        corpus.docs.push(Document { id: raw.id, terms, term_counts });
    }
    if !corpus.docs.is_empty() {
        corpus.avg_doc_len = total_len as f64 / corpus.docs.len() as f64;
    }
    Ok(corpus)
}

impl Corpus {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn vocab_size(&self) -> usize {
        self.terms.len()
    }

    pub fn term_id(&self, term: &str) -> Option<TermId> {
        self.vocab.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn df(&self, id: TermId) -> u32 {
        self.df[id as usize]
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, id: &str) -> Option<&Document> {
        self.doc_index.get(id).map(|&i| &self.docs[i])
    }

    pub fn doc_position(&self, id: &str) -> Option<usize> {
        self.doc_index.get(id).copied()
    }

    /// Resolves tokens against the vocabulary, skipping out-of-vocabulary terms.
    pub fn resolve(&self, tokens: &[String]) -> Vec<TermId> {
        tokens.iter().filter_map(|t| self.term_id(t)).collect()
    }
}

/// Graded judgments indexed by query then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn from_judgments(judgments: &[Judgment]) -> Result<Self> {
        let mut by_query: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for j in judgments {
            let prev = by_query
                .entry(j.query_id.clone())
                .or_default()
                .insert(j.doc_id.clone(), j.grade);
            if prev.is_some() {
                return Err(FwlError::DuplicateId(format!("{}/{}", j.query_id, j.doc_id)));
            }
        }
        Ok(Self { by_query })
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.by_query
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    /// Judged documents for a query, ordered by doc id.
    pub fn judged(&self, query_id: &str) -> impl Iterator<Item = (&str, u32)> {
        self.by_query
            .get(query_id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(d, &g)| (d.as_str(), g)))
    }

    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.judged(query_id).filter(|&(_, g)| g >= 1).count()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }
}

/// Corpus, queries and judgments loaded or generated together.
#[derive(Debug, Clone)]
pub struct Collection {
    pub corpus: Corpus,
    pub queries: Vec<Query>,
    pub judgments: Vec<Judgment>,
    pub qrels: Qrels,
    query_index: HashMap<String, usize>,
    query_terms: Vec<Vec<TermId>>,
    /// Latent query-document affinity, present for generated collections.
    affinity: Option<Vec<Vec<f64>>>,
}

impl Collection {
    pub fn new(corpus: Corpus, queries: Vec<Query>, judgments: Vec<Judgment>) -> Result<Self> {
        let mut query_index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if query_index.insert(q.id.clone(), i).is_some() {
                return Err(FwlError::DuplicateId(q.id.clone()));
            }
        }
        let mut dangling = Vec::new();
        for j in &judgments {
            if !query_index.contains_key(&j.query_id) {
                dangling.push(format!("query {}", j.query_id));
            }
            if corpus.doc(&j.doc_id).is_none() {
                dangling.push(format!("doc {}", j.doc_id));
            }
        }
        if !dangling.is_empty() {
            dangling.dedup();
            return Err(FwlError::DanglingReference(dangling.join(", ")));
        }
        let qrels = Qrels::from_judgments(&judgments)?;
        let query_terms = queries.iter().map(|q| corpus.resolve(&q.tokens)).collect();
        Ok(Self { corpus, queries, judgments, qrels, query_index, query_terms, affinity: None })
    }

    pub(crate) fn with_affinity(mut self, affinity: Vec<Vec<f64>>) -> Self {
        self.affinity = Some(affinity);
        self
    }

    pub fn query(&self, id: &str) -> Option<&Query> {
        self.query_index.get(id).map(|&i| &self.queries[i])
    }

    /// In-vocabulary terms of a query.
    pub fn query_terms(&self, id: &str) -> Option<&[TermId]> {
        self.query_index.get(id).map(|&i| self.query_terms[i].as_slice())
    }

    pub fn doc_terms(&self, id: &str) -> Option<&[TermId]> {
        self.corpus.doc(id).map(|d| d.terms.as_slice())
    }

    /// Latent affinity between a query and a document, if the collection was generated.
    pub fn affinity(&self, query_id: &str, doc_id: &str) -> Option<f64> {
        let aff = self.affinity.as_ref()?;
        let q = *self.query_index.get(query_id)?;
        let d = self.corpus.doc_position(doc_id)?;
        Some(aff[q][d])
    }

    pub fn has_affinity(&self) -> bool {
        self.affinity.is_some()
    }

    /// Judgments restricted to the given queries.
    pub fn judgments_for<'a>(&'a self, query_ids: &'a [String]) -> Vec<Judgment> {
        self.judgments
            .iter()
            .filter(|j| query_ids.contains(&j.query_id))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("The CAT, the hat"), toks(&["the", "cat", "the", "hat"]));
        assert_eq!(tokenize("BM25-v2 scores!"), toks(&["bm25", "v2", "scores"]));
    }

    #[test]
    fn corpus_statistics_by_hand() {
        let c = build_corpus(vec![RawDocument::new("d", toks(&["a", "b", "a"]))]).unwrap();
        assert_eq!(c.doc_count(), 1);
        assert_eq!(c.avg_doc_len(), 3.0);
        assert_eq!(c.df(c.term_id("a").unwrap()), 1);
        assert_eq!(c.df(c.term_id("b").unwrap()), 1);
        assert_eq!(c.doc("d").unwrap().tf(c.term_id("a").unwrap()), 2);

        let c = build_corpus(vec![
            RawDocument::new("x", toks(&["a"])),
            RawDocument::new("y", toks(&["a", "b"])),
        ])
        .unwrap();
        assert_eq!(c.doc_count(), 2);
        assert_eq!(c.avg_doc_len(), 1.5);
        assert_eq!(c.df(c.term_id("a").unwrap()), 2);
        assert_eq!(c.df(c.term_id("b").unwrap()), 1);
        assert_eq!(c.term_id("a"), Some(0));
        assert_eq!(c.term_id("b"), Some(1));

        let c = build_corpus(vec![]).unwrap();
        assert_eq!(c.doc_count(), 0);
        assert_eq!(c.avg_doc_len(), 0.0);
        assert_eq!(c.vocab_size(), 0);
    }

    #[test]
    fn duplicate_doc_id_is_rejected() {
        let err = build_corpus(vec![
            RawDocument::new("d1", toks(&["a"])),
            RawDocument::new("d1", toks(&["b"])),
        ])
        .unwrap_err();
        assert!(matches!(err, FwlError::DuplicateId(ref id) if id == "d1"));
    }

    #[test]
    fn empty_query_is_rejected() {
        assert!(Query::new("q", vec![]).is_err());
    }

    #[test]
    fn dangling_judgment_names_the_id() {
        let corpus = build_corpus(vec![RawDocument::new("d1", toks(&["a"]))]).unwrap();
        let q = Query::new("q1", toks(&["a"])).unwrap();
        let j = Judgment { query_id: "q1".into(), doc_id: "dX".into(), grade: 1 };
        let err = Collection::new(corpus, vec![q], vec![j]).unwrap_err();
        assert!(err.to_string().contains("dX"));
    }

    proptest! {
        #[test]
        fn statistics_match_naive_recount(
            docs in prop::collection::vec(prop::collection::vec(0u8..6, 0..12), 0..8)
        ) {
            let raw: Vec<RawDocument> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| RawDocument::new(format!("d{i}"), d.iter().map(|t| format!("t{t}")).collect()))
                .collect();
            let c = build_corpus(raw.clone()).unwrap();
            prop_assert_eq!(c.doc_count(), raw.len());
            let total: usize = raw.iter().map(|d| d.tokens.len()).sum();
            if !raw.is_empty() {
                prop_assert!((c.avg_doc_len() - total as f64 / raw.len() as f64).abs() < 1e-12);
            }
            for id in 0..c.vocab_size() as TermId {
                let term = c.term(id).to_string();
                let naive = raw.iter().filter(|d| d.tokens.contains(&term)).count();
                prop_assert_eq!(c.df(id) as usize, naive);
                prop_assert!(c.df(id) as usize <= c.doc_count());
                for (d, doc) in raw.iter().zip(c.docs()) {
                    let tf = d.tokens.iter().filter(|t| **t == term).count();
                    prop_assert_eq!(doc.tf(id) as usize, tf);
                }
            }
        }
    }
}
