//! Naive k-nearest-neighbor reference for the predictor: brute-force BM25
//! similarity to every stored question, majority vote / median over the `k`
//! most similar. Shares no aggregation code with `predictor`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::predictor::{PredictError, UniversalModel};
use crate::repository::LabelKind;
use crate::retrieval::BruteForceScorer;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub enum KnnOutcome {
    NoMatch,
    /// `(category, count, summed similarity)` in vote order.
    Votes(Vec<(String, usize, f64)>),
    Median { median: f64, samples: Vec<f64> },
}

pub struct NaiveKnn<'a> {
    model: &'a UniversalModel,
    scorer: BruteForceScorer,
}

impl<'a> NaiveKnn<'a> {
    pub fn new(model: &'a UniversalModel) -> Self {
        let scorer = BruteForceScorer::new(model.repository(), model.index().params());
        Self { model, scorer }
    }

    /// `(position, similarity)` of the `k` nearest stored questions.
    fn nearest(&self, query: &str, k: usize) -> Vec<(usize, f64)> {
        let tokens = tokenize(query);
        let records = self.model.repository().records();
        let mut all: Vec<(usize, f64)> =
            (0..records.len()).map(|i| (i, self.scorer.score_at(&tokens, i))).filter(|x| x.1 > 0.0).collect();
        // stable sorts: ties on score stay in id order
        all.sort_by_key(|&(i, _)| records[i].id);
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        all.truncate(k);
        all
    }

    pub fn classify(&self, query: &str, label: &str, k: usize) -> KnnOutcome {
        let near = self.nearest(query, k);
        if near.is_empty() {
            return KnnOutcome::NoMatch;
        }
        let records = self.model.repository().records();
        let mut votes: BTreeMap<String, (usize, f64)> = BTreeMap::new();
        for &(i, s) in &near {
            let e = votes.entry(records[i].categorical[label].clone()).or_default();
            e.0 += 1;
            e.1 += s;
        }
        let mut v: Vec<(String, usize, f64)> = votes.into_iter().map(|(c, (n, s))| (c, n, s)).collect();
        // BTreeMap yields names ascending; stable sorts keep that as the last key
        v.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
        v.sort_by_key(|x| std::cmp::Reverse(x.1));
        KnnOutcome::Votes(v)
    }

    pub fn regress(&self, query: &str, label: &str, k: usize) -> KnnOutcome {
        let near = self.nearest(query, k);
        if near.is_empty() {
            return KnnOutcome::NoMatch;
        }
        let records = self.model.repository().records();
        let samples: Vec<f64> = near.iter().map(|&(i, _)| records[i].continuous[label]).collect();
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        KnnOutcome::Median { median, samples }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Divergence {
    pub query: String,
    pub label: String,
    pub predictor: String,
    pub oracle: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct KnnReport {
    pub k: usize,
    pub checked: usize,
    pub divergences: Vec<Divergence>,
}

impl KnnReport {
    pub fn passed(&self) -> bool {
        self.divergences.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Compare the predictor against [`NaiveKnn`] for every query and every
/// schema label.
pub fn knn_oracle_check(model: &UniversalModel, queries: &[String], k: usize) -> KnnReport {
    let oracle = NaiveKnn::new(model);
    let mut report = KnnReport { k, checked: 0, divergences: Vec::new() };
    for q in queries {
        for (label, kind) in &model.repository().schema().labels {
            report.checked += 1;
            let (pred, expect) = match kind {
                LabelKind::Categorical => {
                    let pred = model.predict_categorical(q, label, k).map(|p| {
                        KnnOutcome::Votes(p.ranked.into_iter().map(|c| (c.category, c.count, c.score_sum)).collect())
                    });
                    (pred, oracle.classify(q, label, k))
                }
                LabelKind::Continuous => {
                    let pred = model
                        .predict_continuous(q, label, k)
                        .map(|p| KnnOutcome::Median { median: p.median, samples: p.samples });
                    (pred, oracle.regress(q, label, k))
                }
            };
            let agree = match (&pred, &expect) {
                (Err(PredictError::NoMatch | PredictError::EmptyQuery), KnnOutcome::NoMatch) => true,
                (Ok(KnnOutcome::Votes(a)), KnnOutcome::Votes(b)) => {
                    a.len() == b.len()
                        && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && x.1 == y.1 && close(x.2, y.2))
                }
                (Ok(KnnOutcome::Median { median: m1, samples: s1 }), KnnOutcome::Median { median: m2, samples: s2 }) => {
                    m1 == m2 && s1 == s2
                }
                _ => false,
            };
            if !agree {
                report.divergences.push(Divergence {
                    query: q.clone(),
                    label: label.clone(),
                    predictor: format!("{pred:?}"),
                    oracle: format!("{expect:?}"),
                });
            }
        }
    }
    report
}
