use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attention, dot, softmax};
use super::position::{shifted_index, PositionTable};
use super::{SeacatError, Transcript};
use crate::text::tokenize;

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Shape of a SeaCat model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeacatConfig {
    /// Maximum number of sentences per transcript.
    pub n_as: usize,
    /// Maximum number of tokens per sentence.
    pub n_st: usize,
    /// Sentence embedding width, shared by the position embedding.
    pub d_model: usize,
    pub n_classes: usize,
    /// Add sentence position embeddings to the encoder output.
    #[serde(default = "default_true")]
    pub position_embeddings: bool,
}

fn default_true() -> bool {
    true
}

impl SeacatConfig {
    /// 64 sentences of 128 tokens with 768-wide embeddings.
    pub fn full(n_classes: usize) -> Self {
        Self { n_as: 64, n_st: 128, d_model: 768, n_classes, position_embeddings: true }
    }

    /// Same transcript geometry as [`SeacatConfig::full`] with a 16-wide toy encoder.
    pub fn toy(n_classes: usize) -> Self {
        Self { d_model: 16, ..Self::full(n_classes) }
    }

    pub fn validate(&self) -> Result<(), SeacatError> {
        let bad = |m: &str| Err(SeacatError::InvalidConfig(m.to_owned()));
        if self.n_as == 0 || self.n_st == 0 || self.d_model == 0 || self.n_classes == 0 {
            return bad("n_as, n_st, d_model and n_classes must all be positive");
        }
        if !self.d_model.is_multiple_of(2) {
            return bad("d_model must be even for the sinusoidal position embedding");
        }
        Ok(())
    }
}

/// Toy sentence encoder (mean of token embeddings), attention key vector and
/// a softmax classifier over the attention output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionModel {
    pub config: SeacatConfig,
    /// Class names, index-aligned with classifier rows.
    pub classes: Vec<String>,
    /// Vocabulary, index-aligned with `embeddings`; entry 0 is [`UNKNOWN_TOKEN`].
    pub vocab: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub key: Vec<f64>,
    pub classifier: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    #[serde(skip)]
    vocab_index: HashMap<String, usize>,
    #[serde(skip)]
    positions: Option<PositionTable>,
}

/// Location of a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Embedding(usize, usize),
    Key(usize),
    Classifier(usize, usize),
    Bias(usize),
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub class_probs: Vec<f64>,
    /// Attention weight per encoded sentence (at most `n_as`).
    pub sigma: Vec<f64>,
    pub chi: Vec<f64>,
    rows: Vec<Vec<f64>>,
    token_ids: Vec<Vec<usize>>,
}

/// Gradients of the mean loss. Embedding rows not touched by the batch are
/// absent, which means exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub key: Vec<f64>,
    pub classifier: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Embedding(t, j) => self.embeddings.get(&t).map_or(0.0, |row| row[j]),
            Param::Key(j) => self.key[j],
            Param::Classifier(c, j) => self.classifier[c][j],
            Param::Bias(c) => self.bias[c],
        }
    }
}

/// One supervised training example.
#[derive(Debug, Clone)]
pub struct Example {
    pub transcript: Transcript,
    pub label: usize,
}

impl AttentionModel {
    /// Random initialization over the given vocabulary (the unknown token is
    /// prepended) and class names.
    pub fn init<R: Rng>(
        config: SeacatConfig,
        vocab: impl IntoIterator<Item = String>,
        classes: Vec<String>,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self, SeacatError> {
        config.validate()?;
        if classes.len() != config.n_classes {
            return Err(SeacatError::InvalidConfig(format!(
                "{} class names for n_classes = {}",
                classes.len(),
                config.n_classes
            )));
        }
        let mut words = vec![UNKNOWN_TOKEN.to_owned()];
        words.extend(vocab.into_iter().filter(|w| w != UNKNOWN_TOKEN));
        let d = config.d_model;
        let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-init_scale..init_scale)).collect() };
        let embeddings = (0..words.len()).map(|_| uniform(d)).collect();
        let key = uniform(d);
        let classifier = (0..config.n_classes).map(|_| uniform(d)).collect();
        let bias = vec![0.0; config.n_classes];
        let mut model = Self {
            config,
            classes,
            vocab: words,
            embeddings,
            key,
            classifier,
            bias,
            vocab_index: HashMap::new(),
            positions: None,
        };
        model.rebuild_caches()?;
        Ok(model)
    }

    /// Sorted vocabulary of every token occurring in `transcripts`.
    pub fn vocabulary_of<'a>(transcripts: impl IntoIterator<Item = &'a Transcript>) -> Vec<String> {
        let set: BTreeSet<String> =
            transcripts.into_iter().flat_map(|t| t.sentences.iter()).flat_map(|s| tokenize(&s.text)).collect();
        set.into_iter().collect()
    }

    fn rebuild_caches(&mut self) -> Result<(), SeacatError> {
        self.validate_shapes()?;
        self.vocab_index = self.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if self.vocab_index.len() != self.vocab.len() {
            return Err(SeacatError::ModelMismatch("duplicate vocabulary entries".into()));
        }
        self.positions = Some(PositionTable::new(self.config.n_as, self.config.d_model));
        Ok(())
    }

    fn validate_shapes(&self) -> Result<(), SeacatError> {
        self.config.validate().map_err(|e| SeacatError::ModelMismatch(e.to_string()))?;
        let d = self.config.d_model;
        let mismatch = |m: String| Err(SeacatError::ModelMismatch(m));
        if self.vocab.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return mismatch(format!("vocabulary must start with {UNKNOWN_TOKEN}"));
        }
        if self.embeddings.len() != self.vocab.len() || self.embeddings.iter().any(|r| r.len() != d) {
            return mismatch("embedding table does not match vocabulary and d_model".into());
        }
        if self.key.len() != d {
            return mismatch(format!("key has {} components, expected {d}", self.key.len()));
        }
        let c = self.config.n_classes;
        if self.classes.len() != c || self.bias.len() != c || self.classifier.len() != c {
            return mismatch(format!("classifier does not have {c} classes"));
        }
        if self.classifier.iter().any(|r| r.len() != d) {
            return mismatch("classifier rows do not match d_model".into());
        }
        let all_finite = self
            .embeddings
            .iter()
            .chain(self.classifier.iter())
            .chain([&self.key, &self.bias])
            .all(|r| r.iter().all(|v| v.is_finite()));
        if !all_finite {
            return mismatch("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.vocab_index.get(token).copied().unwrap_or(0)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn param(&self, p: Param) -> f64 {
        match p {
            Param::Embedding(t, j) => self.embeddings[t][j],
            Param::Key(j) => self.key[j],
            Param::Classifier(c, j) => self.classifier[c][j],
            Param::Bias(c) => self.bias[c],
        }
    }

    pub fn param_mut(&mut self, p: Param) -> &mut f64 {
        match p {
            Param::Embedding(t, j) => &mut self.embeddings[t][j],
            Param::Key(j) => &mut self.key[j],
            Param::Classifier(c, j) => &mut self.classifier[c][j],
            Param::Bias(c) => &mut self.bias[c],
        }
    }

    /// Every scalar parameter, in a fixed order.
    pub fn params(&self) -> Vec<Param> {
        let d = self.config.d_model;
        let mut out = Vec::new();
        for t in 0..self.vocab.len() {
            out.extend((0..d).map(|j| Param::Embedding(t, j)));
        }
        out.extend((0..d).map(Param::Key));
        for c in 0..self.config.n_classes {
            out.extend((0..d).map(|j| Param::Classifier(c, j)));
        }
        out.extend((0..self.config.n_classes).map(Param::Bias));
        out
    }

    /// Encode each sentence (capped at `n_as` sentences and `n_st` tokens) as
    /// the mean of its token embeddings plus its position embedding.
    fn encode(&self, transcript: &Transcript) -> Result<(Vec<Vec<f64>>, Vec<Vec<usize>>), SeacatError> {
        if transcript.sentences.is_empty() {
            return Err(SeacatError::EmptyTranscript(transcript.id));
        }
        let cfg = &self.config;
        let anchor = transcript.first_agent_position()?;
        let positions = self.positions.as_ref().expect("caches built on construction");
        let n = transcript.sentences.len().min(cfg.n_as);
        let mut rows = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for (i, sentence) in transcript.sentences.iter().take(n).enumerate() {
            let toks: Vec<usize> = tokenize(&sentence.text).iter().take(cfg.n_st).map(|t| self.token_id(t)).collect();
            let mut row = vec![0.0; cfg.d_model];
            if !toks.is_empty() {
                for &t in &toks {
                    for (r, e) in row.iter_mut().zip(&self.embeddings[t]) {
                        *r += e;
                    }
                }
                let inv = 1.0 / toks.len() as f64;
                for r in &mut row {
                    *r *= inv;
                }
            }
            if cfg.position_embeddings {
                let e = positions.get(shifted_index(i, anchor, cfg.n_as));
                for (r, p) in row.iter_mut().zip(e) {
                    *r += p;
                }
            }
            rows.push(row);
            ids.push(toks);
        }
        Ok((rows, ids))
    }

    pub fn forward(&self, transcript: &Transcript) -> Result<ForwardPass, SeacatError> {
        let (rows, token_ids) = self.encode(transcript)?;
        let mask = vec![true; rows.len()];
        let att = attention(&rows, &self.key, &mask)?;
        let logits: Vec<f64> = self.classifier.iter().zip(&self.bias).map(|(w, b)| dot(w, &att.chi) + b).collect();
        Ok(ForwardPass { class_probs: softmax(&logits), sigma: att.sigma, chi: att.chi, rows, token_ids })
    }

    /// Mean cross-entropy over `batch` and its analytic gradients.
    pub fn loss_and_gradients(&self, batch: &[Example]) -> Result<(f64, Gradients), SeacatError> {
        if batch.is_empty() {
            return Err(SeacatError::EmptyBatch);
        }
        let d = self.config.d_model;
        let c = self.config.n_classes;
        let mut g = Gradients {
            embeddings: BTreeMap::new(),
            key: vec![0.0; d],
            classifier: vec![vec![0.0; d]; c],
            bias: vec![0.0; c],
        };
        let inv_batch = 1.0 / batch.len() as f64;
        let scale = (d as f64).sqrt();
        let mut loss = 0.0;

        for ex in batch {
            if ex.label >= c {
                return Err(SeacatError::LabelOutOfRange { label: ex.label, n_classes: c });
            }
            let fp = self.forward(&ex.transcript)?;
            loss -= fp.class_probs[ex.label].max(f64::MIN_POSITIVE).ln();

            // logits
            let mut dz = fp.class_probs.clone();
            dz[ex.label] -= 1.0;
            let mut dchi = vec![0.0; d];
            for k in 0..c {
                let w = dz[k] * inv_batch;
                g.bias[k] += w;
                for j in 0..d {
                    g.classifier[k][j] += w * fp.chi[j];
                    dchi[j] += dz[k] * self.classifier[k][j];
                }
            }

            // chi = sum sigma_i q_i
            let dsigma: Vec<f64> = fp.rows.iter().map(|q| dot(q, &dchi)).collect();
            let weighted: f64 = fp.sigma.iter().zip(&dsigma).map(|(s, ds)| s * ds).sum();
            for (i, q) in fp.rows.iter().enumerate() {
                let dlogit = fp.sigma[i] * (dsigma[i] - weighted);
                let mut dq: Vec<f64> = dchi.iter().map(|v| fp.sigma[i] * v).collect();
                for j in 0..d {
                    g.key[j] += inv_batch * dlogit * q[j] / scale;
                    dq[j] += dlogit * self.key[j] / scale;
                }
                let toks = &fp.token_ids[i];
                if toks.is_empty() {
                    continue;
                }
                let share = inv_batch / toks.len() as f64;
                for &t in toks {
                    let row = g.embeddings.entry(t).or_insert_with(|| vec![0.0; d]);
                    for j in 0..d {
                        row[j] += share * dq[j];
                    }
                }
            }
        }
        Ok((loss * inv_batch, g))
    }

    pub fn loss(&self, batch: &[Example]) -> Result<f64, SeacatError> {
        if batch.is_empty() {
            return Err(SeacatError::EmptyBatch);
        }
        let mut loss = 0.0;
        for ex in batch {
            if ex.label >= self.config.n_classes {
                return Err(SeacatError::LabelOutOfRange { label: ex.label, n_classes: self.config.n_classes });
            }
            let fp = self.forward(&ex.transcript)?;
            loss -= fp.class_probs[ex.label].max(f64::MIN_POSITIVE).ln();
        }
        Ok(loss / batch.len() as f64)
    }

    /// In-place step `theta -= lr * grad`.
    pub fn apply_gradients(&mut self, g: &Gradients, lr: f64) {
        for (&t, row) in &g.embeddings {
            for (p, v) in self.embeddings[t].iter_mut().zip(row) {
                *p -= lr * v;
            }
        }
        for (p, v) in self.key.iter_mut().zip(&g.key) {
            *p -= lr * v;
        }
        for (w, gw) in self.classifier.iter_mut().zip(&g.classifier) {
            for (p, v) in w.iter_mut().zip(gw) {
                *p -= lr * v;
            }
        }
        for (p, v) in self.bias.iter_mut().zip(&g.bias) {
            *p -= lr * v;
        }
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), SeacatError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, SeacatError> {
        let mut model: Self =
            serde_json::from_reader(reader).map_err(|e| SeacatError::ModelMismatch(e.to_string()))?;
        model.rebuild_caches()?;
        Ok(model)
    }
}
