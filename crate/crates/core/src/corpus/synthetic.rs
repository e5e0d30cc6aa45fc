//! Latent-topic collection generator.
//!
//! Documents and queries draw a topic mixture from a symmetric Dirichlet;
//! tokens are drawn from per-topic Zipfian word distributions (documents also
//! mix in a shared background distribution). Relevance grade is the number of
//! `thresholds` the query/document topic dot product reaches.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::{build_corpus, Collection, Judgment, Query, RawDocument};
use crate::error::{invalid, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub num_topics: usize,
    pub num_docs: usize,
    pub num_queries: usize,
    /// Extra queries generated without judgments (ids `U000`, ...).
    pub unlabeled_queries: usize,
    pub doc_len: (usize, usize),
    pub query_len: (usize, usize),
    /// Strictly increasing affinity cut points; grade = number reached.
    pub thresholds: Vec<f64>,
    pub seed: u64,
    /// Dirichlet concentration of document topic mixtures.
    pub doc_concentration: f64,
    /// Dirichlet concentration of query topic mixtures.
    pub query_concentration: f64,
    /// Probability that a document token comes from the background distribution.
    pub background_mix: f64,
    /// Judged non-relevant documents per relevant one (pooling depth).
    pub judged_negative_ratio: f64,
    /// Judge the non-relevant documents sharing the most query tokens
    /// instead of a uniform sample.
    pub pooled_negatives: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            num_topics: 8,
            num_docs: 500,
            num_queries: 60,
            unlabeled_queries: 1000,
            doc_len: (8, 20),
            query_len: (2, 5),
            thresholds: vec![0.3, 0.6],
            seed: 42,
            doc_concentration: 0.3,
            query_concentration: 0.3,
            background_mix: 0.3,
            judged_negative_ratio: 1.0,
            pooled_negatives: true,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_topics < 1 || self.vocab_size < self.num_topics {
            return Err(invalid("need vocab_size >= num_topics >= 1"));
        }
        if self.num_docs == 0 {
            return Err(invalid("num_docs must be positive"));
        }
        if self.doc_len.0 == 0 || self.doc_len.0 > self.doc_len.1 {
            return Err(invalid("doc_len must be a non-empty positive range"));
        }
        if self.query_len.0 == 0 || self.query_len.0 > self.query_len.1 {
            return Err(invalid("query_len must be a non-empty positive range"));
        }
        if self.thresholds.is_empty() || self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("thresholds must be non-empty and strictly increasing"));
        }
        if !(self.doc_concentration > 0.0 && self.query_concentration > 0.0) {
            return Err(invalid("concentrations must be positive"));
        }
        if !(0.0..1.0).contains(&self.background_mix) {
            return Err(invalid("background_mix must lie in [0, 1)"));
        }
        if !(self.judged_negative_ratio >= 0.0) {
            return Err(invalid("judged_negative_ratio must be non-negative"));
        }
        Ok(())
    }

    pub fn grade(&self, affinity: f64) -> u32 {
        self.thresholds.iter().filter(|&&t| affinity >= t).count() as u32
    }
}

fn dirichlet(rng: &mut seed::Rng, k: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

fn zipf_weights(n: usize) -> Vec<f64> {
    (0..n).map(|r| 1.0 / (r as f64 + 1.0)).collect()
}

struct Topics {
    /// Word indices per topic, in Zipf rank order.
    words: Vec<Vec<usize>>,
    samplers: Vec<WeightedIndex<f64>>,
    background: Vec<usize>,
    background_sampler: WeightedIndex<f64>,
}

impl Topics {
    fn new(rng: &mut seed::Rng, spec: &SyntheticSpec) -> Self {
        let mut perm: Vec<usize> = (0..spec.vocab_size).collect();
        perm.shuffle(rng);
        let mut words = vec![Vec::new(); spec.num_topics];
        for (i, &w) in perm.iter().enumerate() {
            words[i % spec.num_topics].push(w);
        }
        let samplers = words
            .iter()
            .map(|ws| WeightedIndex::new(zipf_weights(ws.len())).expect("non-empty topic"))
            .collect();
        let mut background: Vec<usize> = (0..spec.vocab_size).collect();
        background.shuffle(rng);
        let background_sampler = WeightedIndex::new(zipf_weights(spec.vocab_size)).expect("non-empty vocab");
        Self { words, samplers, background, background_sampler }
    }

    fn topic_word(&self, rng: &mut seed::Rng, topic: usize) -> usize {
        self.words[topic][self.samplers[topic].sample(rng)]
    }

    fn background_word(&self, rng: &mut seed::Rng) -> usize {
        self.background[self.background_sampler.sample(rng)]
    }
}

fn sample_topic(rng: &mut seed::Rng, mix: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    mix.len() - 1
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generates a collection; identical specs produce identical collections.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Collection> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let topics = Topics::new(&mut rng, spec);
    let word = |w: usize| format!("w{w}");

    let mut doc_mix = Vec::with_capacity(spec.num_docs);
    let mut raw = Vec::with_capacity(spec.num_docs);
    for i in 0..spec.num_docs {
        let mix = dirichlet(&mut rng, spec.num_topics, spec.doc_concentration);
        let len = rng.random_range(spec.doc_len.0..=spec.doc_len.1);
        let tokens = (0..len)
            .map(|_| {
                if rng.random::<f64>() < spec.background_mix {
                    word(topics.background_word(&mut rng))
                } else {
                    let z = sample_topic(&mut rng, &mix);
                    word(topics.topic_word(&mut rng, z))
                }
            })
            .collect();
        raw.push(RawDocument::new(format!("D{i:04}"), tokens));
        doc_mix.push(mix);
    }
    let corpus = build_corpus(raw)?;

    let mut queries = Vec::with_capacity(spec.num_queries);
    let mut judgments = Vec::new();
    let mut affinity = Vec::with_capacity(spec.num_queries);
    for i in 0..spec.num_queries + spec.unlabeled_queries {
        let labeled = i < spec.num_queries;
        let qid = if labeled { format!("Q{i:03}") } else { format!("U{:03}", i - spec.num_queries) };
        // Resample until the query has at least one relevant document.
        let (mix, aff) = loop {
            let mix = dirichlet(&mut rng, spec.num_topics, spec.query_concentration);
            let aff: Vec<f64> = doc_mix.iter().map(|d| dot(&mix, d)).collect();
            if aff.iter().any(|&a| spec.grade(a) >= 1) {
                break (mix, aff);
            }
        };
        let len = rng.random_range(spec.query_len.0..=spec.query_len.1);
        let tokens: Vec<String> = (0..len)
            .map(|_| {
                let z = sample_topic(&mut rng, &mix);
                word(topics.topic_word(&mut rng, z))
            })
            .collect();
        let query_terms = corpus.resolve(&tokens);
        queries.push(Query::new(qid.clone(), tokens)?);
        affinity.push(aff.clone());
        if !labeled {
            continue;
        }

        let mut relevant = Vec::new();
        let mut non_relevant = Vec::new();
        for (d, &a) in aff.iter().enumerate() {
            match spec.grade(a) {
                0 => non_relevant.push(d),
                g => relevant.push((d, g)),
            }
        }
        let n_neg = ((relevant.len() as f64 * spec.judged_negative_ratio).round() as usize)
            .max(1)
            .min(non_relevant.len());
        let mut negs: Vec<usize> = if spec.pooled_negatives {
            let overlap = |d: usize| {
                let doc = corpus.doc(&format!("D{d:04}")).expect("generated document");
                query_terms.iter().map(|&t| doc.tf(t)).sum::<u32>()
            };
            non_relevant.shuffle(&mut rng);
            non_relevant.sort_by_key(|&d| std::cmp::Reverse(overlap(d)));
            non_relevant.truncate(n_neg);
            non_relevant
        } else {
            non_relevant.choose_multiple(&mut rng, n_neg).copied().collect()
        };
        negs.sort_unstable();
        let mut judged: Vec<(usize, u32)> = relevant;
        judged.extend(negs.into_iter().map(|d| (d, 0)));
        judged.sort_unstable();
        for (d, g) in judged {
            judgments.push(Judgment { query_id: qid.clone(), doc_id: format!("D{d:04}"), grade: g });
        }
    }
    Ok(Collection::new(corpus, queries, judgments)?.with_affinity(affinity))
}
