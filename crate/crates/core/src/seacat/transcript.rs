use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::SeacatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Customer,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub speaker: Speaker,
    pub text: String,
}

impl Sentence {
    pub fn customer(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Customer, text: text.into() }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Self { speaker: Speaker::Agent, text: text.into() }
    }
}

/// A metadata value attached to a transcript: a category name or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Text(String),
}

/// An ordered, speaker-attributed customer/agent conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: u64,
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub metadata: BTreeMap<String, MetaValue>,
}

impl Transcript {
    pub fn new(id: u64, sentences: Vec<Sentence>) -> Self {
        Self { id, sentences, metadata: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: MetaValue) -> Self {
        self.metadata.insert(key.into(), value);
        self
    }

    /// Position of the first agent sentence.
    pub fn first_agent_position(&self) -> Result<usize, SeacatError> {
        self.sentences
            .iter()
            .position(|s| s.speaker == Speaker::Agent)
            .ok_or(SeacatError::NoAgentSentence(self.id))
    }

    pub fn has_customer_sentence(&self) -> bool {
        self.sentences.iter().any(|s| s.speaker == Speaker::Customer)
    }
}

/// Read a JSON Lines transcript file. Blank lines are skipped; a line that
/// fails to parse is reported with its 1-based line number.
pub fn read_transcripts<R: BufRead>(reader: R) -> Result<Vec<Transcript>, SeacatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transcript = serde_json::from_str(&line)
            .map_err(|e| SeacatError::MalformedTranscript { line: i + 1, message: e.to_string() })?;
        if t.sentences.is_empty() {
            return Err(SeacatError::MalformedTranscript {
                line: i + 1,
                message: "transcript has no sentences".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_transcripts<W: Write>(mut writer: W, transcripts: &[Transcript]) -> Result<(), SeacatError> {
    for t in transcripts {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
