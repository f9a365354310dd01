//! Seeded synthetic customer-service corpus.
//!
//! Each cluster is a product/service with its own topical vocabulary (a
//! window into a shared pool, so neighboring clusters overlap) and its own
//! handle-time distribution. Questions mix topical tokens with cluster-agnostic
//! noise words. Transcripts wrap a question in greetings, diagnosis and
//! closing sentences, placing it at a known offset from the agent's first
//! sentence.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::repository::{LabelSchema, QuestionRecord};
use crate::seacat::{MetaValue, Sentence, Transcript};

pub const CATEGORY_LABEL: &str = "product_service";
pub const CONTINUOUS_LABEL: &str = "handle_time";
/// Transcript metadata key holding the planted question's sentence index.
pub const QUESTION_INDEX_KEY: &str = "question_index";

pub fn default_schema() -> LabelSchema {
    LabelSchema::new().categorical(CATEGORY_LABEL).continuous(CONTINUOUS_LABEL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub vocab_per_cluster: usize,
    /// Fraction of a cluster's vocabulary shared with the next cluster.
    pub cluster_overlap: f64,
    /// Size of the cluster-agnostic noise vocabulary.
    pub shared_vocab: usize,
    /// Probability that a question token is topical rather than noise.
    pub topic_rate: f64,
    pub docs_per_cluster: usize,
    pub queries_per_cluster: usize,
    pub transcripts_per_cluster: usize,
    pub question_len: (usize, usize),
    /// Range the per-cluster handle-time location is drawn from.
    pub handle_time_location: (f64, f64),
    pub handle_time_spread: f64,
    /// Probability that a transcript repeats topical words in a late
    /// customer sentence far from the agent's first reply.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_clusters: 20,
            vocab_per_cluster: 40,
            cluster_overlap: 0.5,
            shared_vocab: 300,
            topic_rate: 0.35,
            docs_per_cluster: 600,
            queries_per_cluster: 50,
            transcripts_per_cluster: 40,
            question_len: (4, 12),
            handle_time_location: (4.0, 30.0),
            handle_time_spread: 4.0,
            distractor_rate: 0.5,
            seed: 20230417,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_owned()));
        if self.n_clusters == 0 || self.vocab_per_cluster == 0 || self.docs_per_cluster == 0 {
            return bad("n_clusters, vocab_per_cluster and docs_per_cluster must be positive");
        }
        if self.question_len.0 == 0 || self.question_len.0 > self.question_len.1 {
            return bad("question_len must be a non-empty range starting at 1 or more");
        }
        if !(0.0..1.0).contains(&self.cluster_overlap) {
            return bad("cluster_overlap must be in [0, 1)");
        }
        if !(self.topic_rate > 0.0 && self.topic_rate <= 1.0) {
            return bad("topic_rate must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return bad("distractor_rate must be in [0, 1]");
        }
        let (lo, hi) = self.handle_time_location;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) || !(self.handle_time_spread >= 0.0) {
            return bad("handle-time location must be a finite non-negative range with spread >= 0");
        }
        Ok(())
    }

    pub fn total_docs(&self) -> usize {
        self.n_clusters * self.docs_per_cluster
    }
}

/// A held-out question with its ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutQuery {
    pub question: String,
    pub product_service: String,
    pub handle_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<QuestionRecord>,
    pub transcripts: Vec<Transcript>,
    pub queries: Vec<HeldOutQuery>,
}

impl SynthCorpus {
    pub fn write_records<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_queries<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut w, q)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn category_name(cluster: usize) -> String {
    format!("service_{cluster:03}")
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Three-syllable pseudo-word; distinct for distinct indices below 70^3.
fn pseudo_word(mut i: usize) -> String {
    let mut s = String::with_capacity(6);
    for _ in 0..3 {
        let syl = i % (CONSONANTS.len() * VOWELS.len());
        i /= CONSONANTS.len() * VOWELS.len();
        s.push(CONSONANTS[syl / VOWELS.len()] as char);
        s.push(VOWELS[syl % VOWELS.len()] as char);
    }
    if i > 0 {
        s.push_str(&i.to_string());
    }
    s
}

const CUSTOMER_GREETINGS: &[&str] = &["hello", "hi there", "good morning", "hey i need some help", "hello is anyone there"];
const AGENT_GREETINGS: &[&str] = &[
    "hello thank you for contacting us how can i help you today",
    "hi my name is alex and i will be helping you today",
    "welcome thanks for reaching out what can i do for you",
];
const CUSTOMER_FILLER: &[&str] = &[
    "ok", "sure", "yes that is right", "i have been waiting a while", "thank you", "one moment please", "alright",
];
const AGENT_DIAGNOSIS: &[&str] = &[
    "let me check that for you",
    "i am looking into your account now",
    "thanks for waiting i see the details here",
    "could you confirm the email on the account",
];
const AGENT_CLOSING: &[&str] = &["is there anything else i can help with", "have a great day", "thanks for your patience"];
const CUSTOMER_CLOSING: &[&str] = &["no that is all thanks", "thanks bye", "great thank you"];

struct Vocab {
    shared: Vec<String>,
    shared_weights: Option<WeightedIndex<f64>>,
    clusters: Vec<(Vec<String>, WeightedIndex<f64>)>,
    handle_time: Vec<Normal<f64>>,
}

fn zipf_weights(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0))).expect("n > 0")
}

impl Vocab {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let shared: Vec<String> = (0..cfg.shared_vocab).map(pseudo_word).collect();
        let stride = ((cfg.vocab_per_cluster as f64) * (1.0 - cfg.cluster_overlap)).round().max(1.0) as usize;
        let clusters = (0..cfg.n_clusters)
            .map(|c| {
                let words: Vec<String> =
                    (0..cfg.vocab_per_cluster).map(|j| pseudo_word(cfg.shared_vocab + c * stride + j)).collect();
                (words, zipf_weights(cfg.vocab_per_cluster))
            })
            .collect();
        let (lo, hi) = cfg.handle_time_location;
        let handle_time = (0..cfg.n_clusters)
            .map(|_| {
                let loc = if hi > lo { rng.random_range(lo..hi) } else { lo };
                Normal::new(loc, cfg.handle_time_spread).expect("spread validated")
            })
            .collect();
        let shared_weights = (cfg.shared_vocab > 0).then(|| zipf_weights(cfg.shared_vocab));
        Self { shared, shared_weights, clusters, handle_time }
    }

    fn topic_word(&self, cluster: usize, rng: &mut ChaCha8Rng) -> &str {
        let (words, w) = &self.clusters[cluster];
        &words[w.sample(rng)]
    }

    fn noise_word(&self, rng: &mut ChaCha8Rng) -> Option<&str> {
        self.shared_weights.as_ref().map(|w| self.shared[w.sample(rng)].as_str())
    }

    /// Question text; always holds at least one topical token.
    fn question(&self, cfg: &SynthConfig, cluster: usize, rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(cfg.question_len.0..=cfg.question_len.1);
        let forced = rng.random_range(0..len);
        let words: Vec<&str> = (0..len)
            .map(|i| {
                if i == forced || rng.random_bool(cfg.topic_rate) {
                    self.topic_word(cluster, rng)
                } else {
                    self.noise_word(rng).unwrap_or_else(|| self.topic_word(cluster, rng))
                }
            })
            .collect();
        words.join(" ")
    }

    fn handle_time(&self, cluster: usize, rng: &mut ChaCha8Rng) -> f64 {
        self.handle_time[cluster].sample(rng).round().max(0.0)
    }
}

fn pick<'a>(options: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    options.choose(rng).expect("non-empty template list")
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn transcript(cfg: &SynthConfig, vocab: &Vocab, id: u64, cluster: usize, rng: &mut ChaCha8Rng) -> Transcript {
    let question = vocab.question(cfg, cluster, rng);
    let offset: i64 = *[-2i64, -1, 1, 2].choose(rng).unwrap();
    let mut s = Vec::new();
    if rng.random_bool(0.5) || offset > 0 {
        s.push(Sentence::customer(pick(CUSTOMER_GREETINGS, rng)));
    }
    let question_index;
    if offset < 0 {
        question_index = s.len();
        s.push(Sentence::customer(question));
        if offset == -2 {
            s.push(Sentence::customer(pick(CUSTOMER_FILLER, rng)));
        }
        s.push(Sentence::agent(pick(AGENT_GREETINGS, rng)));
    } else {
        s.push(Sentence::agent(pick(AGENT_GREETINGS, rng)));
        if offset == 2 {
            s.push(Sentence::customer(pick(CUSTOMER_FILLER, rng)));
        }
        question_index = s.len();
        s.push(Sentence::customer(question));
    }
    s.push(Sentence::agent(pick(AGENT_DIAGNOSIS, rng)));
    let mut filler = pick(CUSTOMER_FILLER, rng).to_owned();
    if let Some(w) = vocab.noise_word(rng) {
        filler.push(' ');
        filler.push_str(w);
    }
    s.push(Sentence::customer(filler));
    s.push(Sentence::agent(pick(AGENT_DIAGNOSIS, rng)));
    if rng.random_bool(cfg.distractor_rate) {
        let n = rng.random_range(2..=4);
        let mut words = vec!["also".to_owned(), "about".to_owned(), "the".to_owned()];
        words.extend((0..n).map(|_| vocab.topic_word(cluster, rng).to_owned()));
        s.push(Sentence::customer(words.join(" ")));
    }
    s.push(Sentence::agent(pick(AGENT_CLOSING, rng)));
    s.push(Sentence::customer(pick(CUSTOMER_CLOSING, rng)));

    Transcript::new(id, s)
        .with_meta(CATEGORY_LABEL, MetaValue::Text(category_name(cluster)))
        .with_meta(CONTINUOUS_LABEL, MetaValue::Number(vocab.handle_time(cluster, rng)))
        .with_meta(QUESTION_INDEX_KEY, MetaValue::Number(question_index as f64))
}

/// Deterministic corpus: records, held-out queries and transcripts come from
/// independent random streams of the same seed. Record `i` belongs to
/// cluster `i % n_clusters`, so every id prefix is cluster-balanced.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, EvalError> {
    cfg.validate()?;
    let vocab = Vocab::new(cfg, &mut stream(cfg.seed, 0));

    let mut rng = stream(cfg.seed, 1);
    let records = (0..cfg.total_docs())
        .map(|i| {
            let c = i % cfg.n_clusters;
            QuestionRecord::new(i as u64, vocab.question(cfg, c, &mut rng))
                .with_category(CATEGORY_LABEL, category_name(c))
                .with_value(CONTINUOUS_LABEL, vocab.handle_time(c, &mut rng))
        })
        .collect();

    let mut rng = stream(cfg.seed, 2);
    let queries = (0..cfg.n_clusters * cfg.queries_per_cluster)
        .map(|i| {
            let c = i % cfg.n_clusters;
            HeldOutQuery {
                question: vocab.question(cfg, c, &mut rng),
                product_service: category_name(c),
                handle_time: vocab.handle_time(c, &mut rng),
            }
        })
        .collect();

    let mut rng = stream(cfg.seed, 3);
    let transcripts = (0..cfg.n_clusters * cfg.transcripts_per_cluster)
        .map(|i| transcript(cfg, &vocab, i as u64, i % cfg.n_clusters, &mut rng))
        .collect();

    Ok(SynthCorpus { records, transcripts, queries })
}

/// Planted question position recorded in the transcript metadata.
pub fn planted_question_index(t: &Transcript) -> Option<usize> {
    match t.metadata.get(QUESTION_INDEX_KEY) {
        Some(MetaValue::Number(v)) if *v >= 0.0 => Some(*v as usize),
        _ => None,
    }
}
