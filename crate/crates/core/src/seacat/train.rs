use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttentionModel, Example, MetaValue, SeacatConfig, SeacatError, Transcript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Parameters start uniform in `[-init_scale, init_scale)`.
    pub init_scale: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { lr: 5.0, epochs: 300, seed: 7, init_scale: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AttentionModel,
    /// Full-batch loss before each epoch's update, plus the final loss.
    pub losses: Vec<f64>,
}

/// Turn transcripts into examples labelled by the text metadata field
/// `label_key`. Classes are the sorted distinct values.
pub fn examples_from_transcripts(
    transcripts: &[Transcript],
    label_key: &str,
) -> Result<(Vec<Example>, Vec<String>), SeacatError> {
    let mut names = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        match t.metadata.get(label_key) {
            Some(MetaValue::Text(s)) => names.push(s.clone()),
            _ => return Err(SeacatError::MissingLabel { transcript_id: t.id, label: label_key.to_owned() }),
        }
    }
    let classes: Vec<String> = names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let examples = transcripts
        .iter()
        .zip(names)
        .map(|(t, n)| Example {
            transcript: t.clone(),
            label: classes.binary_search(&n).expect("class set built from names"),
        })
        .collect();
    Ok((examples, classes))
}

/// Full-batch gradient descent from a seeded initialization.
pub fn train(
    examples: &[Example],
    classes: Vec<String>,
    config: SeacatConfig,
    params: &TrainParams,
) -> Result<TrainOutcome, SeacatError> {
    let distinct: BTreeSet<usize> = examples.iter().map(|e| e.label).collect();
    if distinct.len() < 2 {
        return Err(SeacatError::DegenerateDataset);
    }
    let config = SeacatConfig { n_classes: classes.len(), ..config };
    let vocab = AttentionModel::vocabulary_of(examples.iter().map(|e| &e.transcript));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut model = AttentionModel::init(config, vocab, classes, params.init_scale, &mut rng)?;

    let mut losses = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let (loss, grads) = model.loss_and_gradients(examples)?;
        losses.push(loss);
        model.apply_gradients(&grads, params.lr);
    }
    losses.push(model.loss(examples)?);
    Ok(TrainOutcome { model, losses })
}

/// Fraction of examples whose argmax class matches the label.
pub fn accuracy(model: &AttentionModel, examples: &[Example]) -> Result<f64, SeacatError> {
    let mut hits = 0usize;
    for ex in examples {
        let probs = model.forward(&ex.transcript)?.class_probs;
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        if best == Some(ex.label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len().max(1) as f64)
}
