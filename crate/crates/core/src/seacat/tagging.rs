//! Selecting the customer's main question from attention weights.

use serde::{Deserialize, Serialize};

use super::{AttentionModel, SeacatError, Speaker, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TagRule {
    /// Highest-weight customer sentence anywhere.
    Global,
    /// Highest-weight customer sentence near the agent's first sentence.
    NearAgent,
}

impl From<TagRule> for u8 {
    fn from(r: TagRule) -> u8 {
        match r {
            TagRule::Global => 1,
            TagRule::NearAgent => 2,
        }
    }
}

impl TryFrom<u8> for TagRule {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(TagRule::Global),
            2 => Ok(TagRule::NearAgent),
            other => Err(format!("unknown tagging rule {other}")),
        }
    }
}

/// Tag report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedTranscript {
    pub transcript_id: u64,
    pub selected_index: usize,
    pub rule: TagRule,
    pub sigma: Vec<f64>,
}

fn restricted_argmax(
    transcript: &Transcript,
    sigma: &[f64],
    mut keep: impl FnMut(usize) -> bool,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (s, &w)) in transcript.sentences.iter().zip(sigma).enumerate() {
        if s.speaker != Speaker::Customer || !keep(i) {
            continue;
        }
        // strict > keeps the earliest position on ties
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((i, w));
        }
    }
    best.map(|(i, _)| i)
}

/// Customer sentence with the largest weight; ties go to the earliest.
pub fn tag_rule1(transcript: &Transcript, sigma: &[f64]) -> Result<usize, SeacatError> {
    restricted_argmax(transcript, sigma, |_| true).ok_or(SeacatError::NoCustomerSentence(transcript.id))
}

/// Customer sentence with the largest weight among those at most `window`
/// positions from the agent's first sentence. Falls back to
/// [`tag_rule1`] when the window holds no customer sentence.
pub fn tag_rule2(transcript: &Transcript, sigma: &[f64], window: usize) -> Result<usize, SeacatError> {
    let anchor = transcript.first_agent_position()?;
    restricted_argmax(transcript, sigma, |i| i.abs_diff(anchor) <= window)
        .map_or_else(|| tag_rule1(transcript, sigma), Ok)
}

/// A frozen model plus a tagging rule.
#[derive(Debug, Clone)]
pub struct Tagger {
    pub model: AttentionModel,
    pub rule: TagRule,
    pub window: usize,
}

impl Tagger {
    pub fn new(model: AttentionModel, rule: TagRule, window: usize) -> Self {
        Self { model, rule, window }
    }

    pub fn tag(&self, transcript: &Transcript) -> Result<TaggedTranscript, SeacatError> {
        if !transcript.has_customer_sentence() {
            return Err(SeacatError::NoCustomerSentence(transcript.id));
        }
        transcript.first_agent_position()?;
        let sigma = self.model.forward(transcript)?.sigma;
        let selected_index = match self.rule {
            TagRule::Global => tag_rule1(transcript, &sigma)?,
            TagRule::NearAgent => tag_rule2(transcript, &sigma, self.window)?,
        };
        Ok(TaggedTranscript { transcript_id: transcript.id, selected_index, rule: self.rule, sigma })
    }
}
