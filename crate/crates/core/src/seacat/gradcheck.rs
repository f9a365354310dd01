//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{AttentionModel, Example, SeacatConfig, SeacatError, Sentence, Transcript};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Denominator floor for the relative error, so components whose true value
/// is ~0 are judged on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_param: Option<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compare every parameter's analytic gradient with
/// `(L(theta + eps) - L(theta - eps)) / 2 eps`.
pub fn check_gradients(model: &AttentionModel, batch: &[Example], eps: f64) -> Result<GradCheckReport, SeacatError> {
    let (_, grads) = model.loss_and_gradients(batch)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0, worst_param: None };
    for p in model.params() {
        let orig = model.param(p);
        *probe.param_mut(p) = orig + eps;
        let up = probe.loss(batch)?;
        *probe.param_mut(p) = orig - eps;
        let down = probe.loss(batch)?;
        *probe.param_mut(p) = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(grads.get(p), numeric);
        report.checked += 1;
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_param = Some(format!("{p:?}"));
        }
    }
    Ok(report)
}

/// A random tiny instance: d_model 4, 3 classes, 2 transcripts over a
/// 6-word vocabulary (plus one out-of-vocabulary word).
pub fn random_instance(seed: u64) -> (AttentionModel, Vec<Example>) {
    const WORDS: [&str; 6] = ["order", "late", "refund", "card", "hello", "thanks"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SeacatConfig { n_as: 6, n_st: 5, d_model: 4, n_classes: 3, position_embeddings: true };
    let classes = vec!["a".to_owned(), "b".to_owned(), "c".to_owned()];
    let model = AttentionModel::init(config, WORDS.map(String::from), classes, 1.0, &mut rng)
        .expect("static tiny config is valid");
    let sentence = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..=4);
        (0..n)
            .map(|_| if rng.random_bool(0.1) { "zzz" } else { WORDS[rng.random_range(0..WORDS.len())] })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let examples = (0..2)
        .map(|id| {
            let n = rng.random_range(2..=5);
            let agent_at = rng.random_range(0..n);
            let sentences = (0..n)
                .map(|i| {
                    let text = sentence(&mut rng);
                    if i == agent_at { Sentence::agent(text) } else { Sentence::customer(text) }
                })
                .collect();
            Example { transcript: Transcript::new(id, sentences), label: rng.random_range(0..3) }
        })
        .collect();
    (model, examples)
}
