//! Training-free label prediction: retrieve the `k` most similar stored
//! questions and aggregate their labels. Categorical labels become a ranked
//! frequency distribution, continuous labels the median of the neighbors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repository::{LabelKind, Repository};
use crate::retrieval::{Bm25Params, InvertedIndex, RetrievalError, RetrievalResult};
use crate::text::tokenize;

pub const DEFAULT_K: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("no stored question shares a token with the query")]
    NoMatch,
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("label {label:?} is not {expected:?}")]
    WrongKind { label: String, expected: LabelKind },
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: String,
    pub count: usize,
    pub probability: f64,
    /// Summed similarity of the neighbors carrying this category.
    pub score_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPrediction {
    pub label_name: String,
    pub ranked: Vec<CategoryShare>,
    pub support: usize,
}

impl CategoricalPrediction {
    pub fn top(&self) -> Option<&str> {
        self.ranked.first().map(|c| c.category.as_str())
    }

    /// First `n` categories of the ranked distribution.
    pub fn top_n_categories(&self, n: usize) -> Vec<String> {
        self.ranked.iter().take(n).map(|c| c.category.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPrediction {
    pub label_name: String,
    pub median: f64,
    /// Neighbor values in retrieval rank order.
    pub samples: Vec<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl ContinuousPrediction {
    /// Fixed-width histogram of the samples, buckets aligned to multiples of
    /// `width`. Empty buckets between occupied ones are kept.
    pub fn histogram(&self, width: f64) -> Vec<Bucket> {
        assert!(width > 0.0, "bucket width must be positive");
        if self.samples.is_empty() {
            return Vec::new();
        }
        let slot = |v: f64| (v / width).floor() as i64;
        let lo = self.samples.iter().map(|&v| slot(v)).min().unwrap();
        let hi = self.samples.iter().map(|&v| slot(v)).max().unwrap();
        let mut counts = vec![0usize; (hi - lo + 1) as usize];
        for &v in &self.samples {
            counts[(slot(v) - lo) as usize] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| {
                let s = (lo + i as i64) as f64;
                Bucket { lower: s * width, upper: (s + 1.0) * width, count }
            })
            .collect()
    }
}

/// Exact sample median; mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

/// Count categories over `(category, similarity)` pairs and rank them by
/// count, then summed similarity, then name.
pub fn rank_categories<'a>(label_name: &str, votes: impl IntoIterator<Item = (&'a str, f64)>) -> CategoricalPrediction {
    let mut tally: HashMap<&str, (usize, f64)> = HashMap::new();
    let mut support = 0usize;
    for (cat, score) in votes {
        let e = tally.entry(cat).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += score;
        support += 1;
    }
    let mut ranked: Vec<CategoryShare> = tally
        .into_iter()
        .map(|(cat, (count, score_sum))| CategoryShare {
            category: cat.to_owned(),
            count,
            probability: count as f64 / support as f64,
            score_sum,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(b.score_sum.total_cmp(&a.score_sum))
            .then_with(|| a.category.cmp(&b.category))
    });
    CategoricalPrediction { label_name: label_name.to_owned(), ranked, support }
}

/// A repository together with its BM25 index.
#[derive(Debug, Clone)]
pub struct UniversalModel {
    repo: Repository,
    index: InvertedIndex,
}

impl UniversalModel {
    pub fn new(repo: Repository, params: Bm25Params) -> Result<Self, RetrievalError> {
        let index = InvertedIndex::build(&repo, params)?;
        Ok(Self { repo, index })
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    fn check_label(&self, label: &str, expected: LabelKind) -> Result<(), PredictError> {
        match self.repo.schema().kind(label) {
            None => Err(PredictError::UnknownLabel(label.to_owned())),
            Some(k) if k != expected => Err(PredictError::WrongKind { label: label.to_owned(), expected }),
            Some(_) => Ok(()),
        }
    }

    pub fn neighbors(&self, query: &str, k: usize) -> Result<Vec<RetrievalResult>, PredictError> {
        if k == 0 {
            return Err(PredictError::InvalidK);
        }
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Err(PredictError::EmptyQuery);
        }
        let hits = self.index.top_n(&tokens, k)?;
        if hits.is_empty() {
            return Err(PredictError::NoMatch);
        }
        Ok(hits)
    }

    pub fn predict_categorical(&self, query: &str, label: &str, k: usize) -> Result<CategoricalPrediction, PredictError> {
        self.check_label(label, LabelKind::Categorical)?;
        let hits = self.neighbors(query, k)?;
        let votes = hits.iter().map(|h| {
            let r = self.repo.get(h.doc_id).expect("index ids come from the repository");
            (r.categorical[label].as_str(), h.score)
        });
        Ok(rank_categories(label, votes))
    }

    pub fn predict_continuous(&self, query: &str, label: &str, k: usize) -> Result<ContinuousPrediction, PredictError> {
        self.check_label(label, LabelKind::Continuous)?;
        let hits = self.neighbors(query, k)?;
        let samples: Vec<f64> = hits
            .iter()
            .map(|h| self.repo.get(h.doc_id).expect("index ids come from the repository").continuous[label])
            .collect();
        let median = median(&samples).expect("at least one neighbor");
        Ok(ContinuousPrediction { label_name: label.to_owned(), median, support: samples.len(), samples })
    }

    /// Distribution over the whole repository, used as an opt-in fallback
    /// when a query has no match.
    pub fn prior_categorical(&self, label: &str) -> Result<CategoricalPrediction, PredictError> {
        self.check_label(label, LabelKind::Categorical)?;
        Ok(rank_categories(label, self.repo.records().iter().map(|r| (r.categorical[label].as_str(), 0.0))))
    }

    pub fn prior_continuous(&self, label: &str) -> Result<ContinuousPrediction, PredictError> {
        self.check_label(label, LabelKind::Continuous)?;
        let samples: Vec<f64> = self.repo.records().iter().map(|r| r.continuous[label]).collect();
        let median = median(&samples).expect("repository is non-empty");
        Ok(ContinuousPrediction { label_name: label.to_owned(), median, support: samples.len(), samples })
    }
}
