//! Sentence-attention tagging of customer/agent transcripts.
//!
//! Each sentence is encoded by a swappable sentence encoder (here the mean of
//! learned token embeddings), offset by a sinusoidal embedding of its distance
//! to the agent's first sentence, and scored against a learned key vector.
//! The attention-weighted sum of sentences feeds a softmax classifier over the
//! contact's product/service, and the per-sentence weights are what the
//! tagging rules read to pick the customer's main question.

mod attention;
pub mod gradcheck;
mod model;
mod position;
mod tagging;
mod train;
mod transcript;

use thiserror::Error;

pub use attention::{attention, Attention};
pub use model::{AttentionModel, Example, ForwardPass, Gradients, Param, SeacatConfig, UNKNOWN_TOKEN};
pub use position::{position_embedding, position_index, PositionTable};
pub use tagging::{tag_rule1, tag_rule2, TagRule, TaggedTranscript, Tagger};
pub use train::{accuracy, examples_from_transcripts, train, TrainOutcome, TrainParams};
pub use transcript::{read_transcripts, write_transcripts, MetaValue, Sentence, Speaker, Transcript};

#[derive(Debug, Error)]
pub enum SeacatError {
    #[error("transcript {0} has no agent sentence")]
    NoAgentSentence(u64),
    #[error("transcript {0} has no customer sentence")]
    NoCustomerSentence(u64),
    #[error("transcript {0} has no sentences")]
    EmptyTranscript(u64),
    #[error("every attention row is masked")]
    AllMasked,
    #[error("non-finite attention logits; training has diverged")]
    NonFinite,
    #[error("empty training batch")]
    EmptyBatch,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("training data holds fewer than two classes")]
    DegenerateDataset,
    #[error("transcript {transcript_id} has no text label {label:?}")]
    MissingLabel { transcript_id: u64, label: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("line {line}: {message}")]
    MalformedTranscript { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
