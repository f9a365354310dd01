//! Evaluation harness: ranked-category and absolute-error metrics, the
//! synthetic corpus, the KNN reference and the experiments built on them.

pub mod knn;
pub mod metrics;
pub mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{PredictError, UniversalModel};
use crate::repository::{Repository, RepositoryError};
use crate::retrieval::{Bm25Params, RetrievalError};
use crate::seacat::{self, SeacatConfig, SeacatError, TrainParams};

pub use knn::{knn_oracle_check, KnnReport, NaiveKnn};
pub use metrics::{top_n_accuracy, within_abs_error};
pub use synth::{generate, HeldOutQuery, SynthConfig, SynthCorpus};

pub const TOP_N: [usize; 4] = [1, 5, 10, 15];
pub const ERROR_THRESHOLDS: [f64; 3] = [3.0, 5.0, 7.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error(transparent)]
    Repository(#[from] RepositoryError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Seacat(#[from] SeacatError),
}

/// One row of the repository-size table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub repository_size: usize,
    pub k: usize,
    pub n_queries: usize,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub top15: f64,
    pub within3: f64,
    pub within5: f64,
    pub within7: f64,
    /// Queries with no retrieved neighbor.
    pub no_match: usize,
    pub mean_support: f64,
}

impl EvalReport {
    pub fn is_monotone(&self) -> bool {
        self.top1 <= self.top5
            && self.top5 <= self.top10
            && self.top10 <= self.top15
            && self.within3 <= self.within5
            && self.within5 <= self.within7
    }
}

/// Ranked categories, median and support for one query.
type QueryOutcome = (Vec<String>, Option<f64>, usize);

/// Evaluate both labels of `model` on `queries`.
pub fn evaluate(model: &UniversalModel, queries: &[HeldOutQuery], k: usize) -> Result<EvalReport, EvalError> {
    let outcomes: Vec<Result<QueryOutcome, PredictError>> = queries
        .par_iter()
        .map(|q| {
            let cat = match model.predict_categorical(&q.question, synth::CATEGORY_LABEL, k) {
                Ok(p) => p,
                Err(PredictError::NoMatch | PredictError::EmptyQuery) => return Ok((Vec::new(), None, 0)),
                Err(e) => return Err(e),
            };
            let cont = model.predict_continuous(&q.question, synth::CONTINUOUS_LABEL, k)?;
            Ok((cat.top_n_categories(*TOP_N.last().unwrap()), Some(cont.median), cat.support))
        })
        .collect();
    let mut ranked = Vec::with_capacity(queries.len());
    let mut medians = Vec::with_capacity(queries.len());
    let mut support = 0usize;
    for o in outcomes {
        let (r, m, s) = o.map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        ranked.push(r);
        medians.push(m);
        support += s;
    }
    let truths: Vec<String> = queries.iter().map(|q| q.product_service.clone()).collect();
    let times: Vec<f64> = queries.iter().map(|q| q.handle_time).collect();
    let top = |n| top_n_accuracy(&ranked, &truths, n);
    let within = |t| within_abs_error(&medians, &times, t);
    Ok(EvalReport {
        repository_size: model.repository().len(),
        k,
        n_queries: queries.len(),
        top1: top(1)?,
        top5: top(5)?,
        top10: top(10)?,
        top15: top(15)?,
        within3: within(3.0)?,
        within5: within(5.0)?,
        within7: within(7.0)?,
        no_match: medians.iter().filter(|m| m.is_none()).count(),
        mean_support: support as f64 / queries.len().max(1) as f64,
    })
}

/// Evaluate universal models built on nested id-prefixes of one repository.
pub fn scaling_experiment(
    corpus: &SynthCorpus,
    sizes: &[usize],
    k: usize,
    params: Bm25Params,
) -> Result<Vec<EvalReport>, EvalError> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidConfig("sizes must be non-empty and strictly ascending".into()));
    }
    if sizes[0] == 0 || *sizes.last().unwrap() > corpus.records.len() {
        return Err(EvalError::InvalidConfig(format!(
            "sizes must lie in 1..={} (corpus size)",
            corpus.records.len()
        )));
    }
    let full = Repository::build(corpus.records.clone(), synth::default_schema())?;
    sizes
        .iter()
        .map(|&n| {
            let model = UniversalModel::new(full.prefix(n)?, params)?;
            evaluate(&model, &corpus.queries, k)
        })
        .collect()
}

/// Table layout: one row per repository size, classification columns then
/// regression columns.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,top1,top5,top10,top15,within3,within5,within7\n");
    for r in reports {
        let size = if r.repository_size % 1000 == 0 {
            format!("{}K", r.repository_size / 1000)
        } else {
            r.repository_size.to_string()
        };
        out.push_str(&format!(
            "UM({size}),{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
            r.top1, r.top5, r.top10, r.top15, r.within3, r.within5, r.within7
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TaggingReport {
    pub n_train: usize,
    pub n_heldout: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// Percentage of held-out transcripts whose planted question was tagged.
    pub rule1_recovery: f64,
    pub rule2_recovery: f64,
}

/// Train the toy tagger on the first `1 - heldout_fraction` of the synthetic
/// transcripts and measure how often each rule recovers the planted question
/// on the rest.
pub fn tagging_experiment(
    corpus: &SynthCorpus,
    config: SeacatConfig,
    params: &TrainParams,
    heldout_fraction: f64,
    window: usize,
) -> Result<(seacat::AttentionModel, TaggingReport), EvalError> {
    if !(0.0..1.0).contains(&heldout_fraction) {
        return Err(EvalError::InvalidConfig("heldout_fraction must be in [0, 1)".into()));
    }
    let (examples, classes) = seacat::examples_from_transcripts(&corpus.transcripts, synth::CATEGORY_LABEL)?;
    let split = ((examples.len() as f64) * (1.0 - heldout_fraction)).round() as usize;
    let (train, heldout) = examples.split_at(split);
    let outcome = seacat::train(train, classes, config, params)?;
    let model = outcome.model;

    let mut hits = [0usize; 2];
    for ex in heldout {
        let t = &ex.transcript;
        let truth = synth::planted_question_index(t);
        let sigma = model.forward(t)?.sigma;
        if Some(seacat::tag_rule1(t, &sigma)?) == truth {
            hits[0] += 1;
        }
        if Some(seacat::tag_rule2(t, &sigma, window)?) == truth {
            hits[1] += 1;
        }
    }
    let pct = |h: usize| 100.0 * h as f64 / heldout.len().max(1) as f64;
    let report = TaggingReport {
        n_train: train.len(),
        n_heldout: heldout.len(),
        initial_loss: outcome.losses[0],
        final_loss: *outcome.losses.last().unwrap(),
        train_accuracy: 100.0 * seacat::accuracy(&model, train)?,
        rule1_recovery: pct(hits[0]),
        rule2_recovery: pct(hits[1]),
    };
    Ok((model, report))
}
