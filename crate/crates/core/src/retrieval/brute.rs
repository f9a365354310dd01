//! Index-free BM25: every document is scored directly from its tokens. Used as
//! the reference the inverted index is checked against.

use std::collections::{HashMap, HashSet};

use super::{Bm25Params, RetrievalResult};
use crate::repository::Repository;
use crate::text::tokenize;

/// Pre-tokenized corpus with its own document-frequency table.
#[derive(Debug, Clone)]
pub struct BruteForceScorer {
    docs: Vec<(u64, Vec<String>)>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
    params: Bm25Params,
}

impl BruteForceScorer {
    pub fn new(repo: &Repository, params: Bm25Params) -> Self {
        let docs: Vec<(u64, Vec<String>)> = repo.records().iter().map(|r| (r.id, tokenize(&r.question))).collect();
        let mut doc_freq = HashMap::new();
        for (_, toks) in &docs {
            for t in toks.iter().collect::<HashSet<_>>() {
                *doc_freq.entry(t.clone()).or_insert(0usize) += 1;
            }
        }
        let total: usize = docs.iter().map(|(_, t)| t.len()).sum();
        let avg_len = total as f64 / docs.len().max(1) as f64;
        Self { docs, doc_freq, avg_len, params }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Score of the document at `position` (repository order).
    pub fn score_at(&self, query_tokens: &[String], position: usize) -> f64 {
        let Bm25Params { alpha, beta } = self.params;
        let n = self.docs.len() as f64;
        let toks = &self.docs[position].1;
        let len = toks.len() as f64;
        let mut score = 0.0;
        for q in query_tokens {
            let tf = toks.iter().filter(|t| *t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = self.doc_freq[q] as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (alpha + 1.0) / (tf + alpha * (1.0 - beta + beta * len / self.avg_len));
        }
        score
    }

    /// `(record id, score)` for every document, in repository order.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<(u64, f64)> {
        (0..self.docs.len()).map(|i| (self.docs[i].0, self.score_at(query_tokens, i))).collect()
    }

    pub fn top_n(&self, query_tokens: &[String], n: usize) -> Vec<RetrievalResult> {
        if n == 0 || query_tokens.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(u64, f64)> = self.score_all(query_tokens).into_iter().filter(|&(_, s)| s > 0.0).collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(n)
            .enumerate()
            .map(|(i, (doc_id, score))| RetrievalResult { doc_id, score, rank: i + 1 })
            .collect()
    }
}

/// One-shot convenience over [`BruteForceScorer`].
pub fn brute_force_top_n(
    repo: &Repository,
    params: Bm25Params,
    query_tokens: &[String],
    n: usize,
) -> Vec<RetrievalResult> {
    BruteForceScorer::new(repo, params).top_n(query_tokens, n)
}
