//! Okapi BM25 over an inverted index.
//!
//! For a query of tokens `q_1..q_N` and a stored question `k`:
//!
//! ```text
//! score(q, k) = sum_i idf(q_i) * tf(q_i|k) * (alpha + 1)
//!                      / (tf(q_i|k) + alpha * (1 - beta + beta * |k| / avg|k|))
//! idf(t)      = ln(1 + (n_docs - df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! The sum runs over query positions, so a repeated query token counts once
//! per occurrence. Documents scoring 0 are never returned; results are
//! ordered by descending score, then ascending record id.

mod brute;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repository::Repository;
use crate::text::tokenize;

pub use brute::{brute_force_top_n, BruteForceScorer};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("repository has no records")]
    EmptyRepository,
    #[error("unknown document id {0}")]
    UnknownDocId(u64),
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("result count must be at least 1")]
    InvalidCount,
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub alpha: f64,
    /// Length normalization, in `[0, 1]`.
    pub beta: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { alpha: 1.2, beta: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, RetrievalError> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(RetrievalError::InvalidParams(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(RetrievalError::InvalidParams(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        Ok(())
    }
}

pub fn idf_value(n_docs: usize, doc_freq: u32) -> f64 {
    let n = n_docs as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Record position in the repository.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub doc_id: u64,
    pub score: f64,
    pub rank: usize,
}

/// Total order used for every result list.
pub(crate) fn result_order(a_score: f64, a_id: u64, b_score: f64, b_id: u64) -> Ordering {
    b_score.total_cmp(&a_score).then(a_id.cmp(&b_id))
}

pub fn rank_results(mut scored: Vec<(u64, f64)>, n: usize) -> Vec<RetrievalResult> {
    scored.retain(|&(_, s)| s > 0.0);
    let cmp = |a: &(u64, f64), b: &(u64, f64)| result_order(a.1, a.0, b.1, b.0);
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, cmp);
        scored.truncate(n);
    }
    scored.sort_unstable_by(cmp);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| RetrievalResult { doc_id, score, rank: i + 1 })
        .collect()
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    ids: Vec<u64>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    params: Bm25Params,
}

impl InvertedIndex {
    pub fn build(repo: &Repository, params: Bm25Params) -> Result<Self, RetrievalError> {
        params.validate()?;
        if repo.is_empty() {
            return Err(RetrievalError::EmptyRepository);
        }
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut counts: HashMap<String, u32> = HashMap::new();
        for (pos, record) in repo.records().iter().enumerate() {
            counts.clear();
            for t in tokenize(&record.question) {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (t, tf) in counts.drain() {
                postings.entry(t).or_default().push(Posting { doc: pos as u32, tf });
            }
        }
        let stats = repo.stats();
        Ok(Self {
            postings,
            ids: repo.records().iter().map(|r| r.id).collect(),
            doc_lengths: stats.doc_lengths.clone(),
            avg_doc_length: stats.avg_doc_length,
            params,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn n_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn postings(&self, token: &str) -> Option<&[Posting]> {
        self.postings.get(token).map(Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.postings.get(token).map_or(0, |p| p.len() as u32);
        idf_value(self.n_docs(), df)
    }

    fn term(&self, idf: f64, tf: u32, doc: usize) -> f64 {
        let Bm25Params { alpha, beta } = self.params;
        let tf = tf as f64;
        let len = self.doc_lengths[doc] as f64;
        idf * tf * (alpha + 1.0) / (tf + alpha * (1.0 - beta + beta * len / self.avg_doc_length))
    }

    /// Score of one document by record id.
    pub fn bm25_score(&self, query_tokens: &[String], doc_id: u64) -> Result<f64, RetrievalError> {
        let doc = self.ids.binary_search(&doc_id).map_err(|_| RetrievalError::UnknownDocId(doc_id))?;
        let mut score = 0.0;
        for q in query_tokens {
            let Some(list) = self.postings.get(q.as_str()) else { continue };
            if let Ok(i) = list.binary_search_by_key(&(doc as u32), |p| p.doc) {
                score += self.term(idf_value(self.n_docs(), list.len() as u32), list[i].tf, doc);
            }
        }
        Ok(score)
    }

    /// The `n` best-scoring documents with a nonzero score.
    pub fn top_n(&self, query_tokens: &[String], n: usize) -> Result<Vec<RetrievalResult>, RetrievalError> {
        if n == 0 {
            return Err(RetrievalError::InvalidCount);
        }
        if query_tokens.is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched: Vec<u32> = Vec::new();
        for q in query_tokens {
            let Some(list) = self.postings.get(q.as_str()) else { continue };
            let idf = idf_value(self.n_docs(), list.len() as u32);
            for p in list {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term(idf, p.tf, p.doc as usize);
            }
        }
        let scored = touched.into_iter().map(|d| (self.ids[d as usize], acc[d as usize])).collect();
        Ok(rank_results(scored, n))
    }

    pub fn search(&self, query: &str, n: usize) -> Result<Vec<RetrievalResult>, RetrievalError> {
        self.top_n(&tokenize(query), n)
    }
}
