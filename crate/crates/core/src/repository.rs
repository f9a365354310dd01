//! The question repository: tagged customer questions with their labels, and
//! the corpus statistics the BM25 scorer needs.
//!
//! On disk a repository is JSON Lines, one [`QuestionRecord`] per line.
//! Statistics are never persisted; they are recomputed on every load.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seacat::{MetaValue, SeacatError, Transcript};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("repository has no records")]
    EmptyRepository,
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("record {id}: label {label:?} violates the schema")]
    SchemaViolation { id: u64, label: String },
    #[error("record {0}: question has no tokens")]
    EmptyQuestion(u64),
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Categorical,
    Continuous,
}

/// Declared label names and their kinds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub labels: BTreeMap<String, LabelKind>,
}

impl LabelSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn categorical(mut self, name: impl Into<String>) -> Self {
        self.labels.insert(name.into(), LabelKind::Categorical);
        self
    }

    pub fn continuous(mut self, name: impl Into<String>) -> Self {
        self.labels.insert(name.into(), LabelKind::Continuous);
        self
    }

    pub fn kind(&self, name: &str) -> Option<LabelKind> {
        self.labels.get(name).copied()
    }

    /// The schema a record implicitly declares through its label maps.
    pub fn of_record(record: &QuestionRecord) -> Self {
        let mut s = Self::new();
        for k in record.categorical.keys() {
            s.labels.insert(k.clone(), LabelKind::Categorical);
        }
        for k in record.continuous.keys() {
            s.labels.insert(k.clone(), LabelKind::Continuous);
        }
        s
    }

    fn check(&self, r: &QuestionRecord) -> Result<(), RepositoryError> {
        let violation = |label: &str| RepositoryError::SchemaViolation { id: r.id, label: label.to_owned() };
        for (name, kind) in &self.labels {
            let present = match kind {
                LabelKind::Categorical => r.categorical.contains_key(name),
                LabelKind::Continuous => r.continuous.contains_key(name),
            };
            if !present {
                return Err(violation(name));
            }
        }
        for name in r.categorical.keys() {
            if self.kind(name) != Some(LabelKind::Categorical) {
                return Err(violation(name));
            }
        }
        for (name, v) in &r.continuous {
            if self.kind(name) != Some(LabelKind::Continuous) || !v.is_finite() || *v < 0.0 {
                return Err(violation(name));
            }
        }
        Ok(())
    }
}

/// One repository entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: u64,
    pub question: String,
    #[serde(default)]
    pub categorical: BTreeMap<String, String>,
    #[serde(default)]
    pub continuous: BTreeMap<String, f64>,
}

impl QuestionRecord {
    pub fn new(id: u64, question: impl Into<String>) -> Self {
        Self { id, question: question.into(), categorical: BTreeMap::new(), continuous: BTreeMap::new() }
    }

    pub fn with_category(mut self, label: impl Into<String>, value: impl Into<String>) -> Self {
        self.categorical.insert(label.into(), value.into());
        self
    }

    pub fn with_value(mut self, label: impl Into<String>, value: f64) -> Self {
        self.continuous.insert(label.into(), value);
        self
    }
}

/// Corpus-level statistics, aligned with the repository's record order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_docs: usize,
    /// Token count of each record, by record position.
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    /// Number of records containing each token.
    pub doc_freq: HashMap<String, u32>,
}

impl CorpusStats {
    pub fn compute(records: &[QuestionRecord]) -> Self {
        let mut doc_lengths = Vec::with_capacity(records.len());
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        let mut total = 0u64;
        for r in records {
            let tokens = tokenize(&r.question);
            total += tokens.len() as u64;
            doc_lengths.push(tokens.len() as u32);
            let distinct: HashSet<String> = tokens.into_iter().collect();
            for t in distinct {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        let n_docs = records.len();
        let avg_doc_length = if n_docs == 0 { 0.0 } else { total as f64 / n_docs as f64 };
        Self { n_docs, doc_lengths, avg_doc_length, doc_freq }
    }

    pub fn doc_freq(&self, token: &str) -> u32 {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repository {
    records: Vec<QuestionRecord>,
    stats: CorpusStats,
    schema: LabelSchema,
}

impl Repository {
    /// Validate `records` against `schema`, sort by id and compute statistics.
    pub fn build(mut records: Vec<QuestionRecord>, schema: LabelSchema) -> Result<Self, RepositoryError> {
        if records.is_empty() {
            return Err(RepositoryError::EmptyRepository);
        }
        records.sort_by_key(|r| r.id);
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(RepositoryError::DuplicateId(w[0].id));
        }
        for r in &records {
            if tokenize(&r.question).is_empty() {
                return Err(RepositoryError::EmptyQuestion(r.id));
            }
            schema.check(r)?;
        }
        let stats = CorpusStats::compute(&records);
        Ok(Self { records, stats, schema })
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Position of the record with `id`.
    pub fn position(&self, id: u64) -> Option<usize> {
        self.records.binary_search_by_key(&id, |r| r.id).ok()
    }

    pub fn get(&self, id: u64) -> Option<&QuestionRecord> {
        self.position(id).map(|p| &self.records[p])
    }

    /// Repository of the first `n` records (by id order).
    pub fn prefix(&self, n: usize) -> Result<Self, RepositoryError> {
        Self::build(self.records[..n.min(self.records.len())].to_vec(), self.schema.clone())
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), RepositoryError> {
        for r in &self.records {
            serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parse JSON Lines. Without an explicit schema, the first record's labels
    /// define it and every other record must carry the same label set.
    pub fn read_jsonl<R: BufRead>(reader: R, schema: Option<&LabelSchema>) -> Result<Self, RepositoryError> {
        let mut records = Vec::new();
        let mut inferred: Option<LabelSchema> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: QuestionRecord = serde_json::from_str(&line)
                .map_err(|e| RepositoryError::MalformedRecord { line: i + 1, message: e.to_string() })?;
            let declared = LabelSchema::of_record(&record);
            match &inferred {
                None => inferred = Some(declared),
                Some(s) if *s != declared => {
                    return Err(RepositoryError::SchemaMismatch(format!(
                        "line {}: record {} labels differ from the first record",
                        i + 1,
                        record.id
                    )))
                }
                Some(_) => {}
            }
            records.push(record);
        }
        let inferred = inferred.ok_or(RepositoryError::EmptyRepository)?;
        let schema = match schema {
            Some(s) if *s != inferred => {
                return Err(RepositoryError::SchemaMismatch(format!(
                    "file labels {:?} do not match expected {:?}",
                    inferred.labels, s.labels
                )))
            }
            Some(s) => s.clone(),
            None => inferred,
        };
        Self::build(records, schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RepositoryError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RepositoryError> {
        Self::read_jsonl(BufReader::new(File::open(path)?), None)
    }

    pub fn load_with_schema(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Self, RepositoryError> {
        Self::read_jsonl(BufReader::new(File::open(path)?), Some(schema))
    }
}

/// Maps each schema label to the transcript metadata key holding its value.
#[derive(Debug, Clone)]
pub struct LabelExtractors {
    pub schema: LabelSchema,
    pub metadata_keys: BTreeMap<String, String>,
}

impl LabelExtractors {
    /// Every label is read from the metadata key of the same name.
    pub fn identity(schema: LabelSchema) -> Self {
        let metadata_keys = schema.labels.keys().map(|k| (k.clone(), k.clone())).collect();
        Self { schema, metadata_keys }
    }

    fn extract(&self, t: &Transcript, question: &str, id: u64) -> Result<QuestionRecord, String> {
        let mut record = QuestionRecord::new(id, question);
        for (label, kind) in &self.schema.labels {
            let key = self.metadata_keys.get(label).unwrap_or(label);
            match (kind, t.metadata.get(key)) {
                (LabelKind::Categorical, Some(MetaValue::Text(s))) => {
                    record.categorical.insert(label.clone(), s.clone());
                }
                (LabelKind::Categorical, Some(MetaValue::Number(v))) => {
                    record.categorical.insert(label.clone(), v.to_string());
                }
                (LabelKind::Continuous, Some(MetaValue::Number(v))) if v.is_finite() && *v >= 0.0 => {
                    record.continuous.insert(label.clone(), *v);
                }
                (LabelKind::Continuous, Some(_)) => return Err(format!("label {label:?} is not a non-negative number")),
                (_, None) => return Err(format!("missing metadata {key:?} for label {label:?}")),
            }
        }
        Ok(record)
    }
}

/// A transcript that did not produce a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub transcript_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<QuestionRecord>,
    pub skipped: Vec<SkipEntry>,
}

/// Tag each transcript's main question and copy its labels. Records get dense
/// ids in input order; transcripts that cannot be tagged are reported.
pub fn ingest_transcripts<F>(transcripts: &[Transcript], mut tagger: F, extractors: &LabelExtractors) -> IngestOutcome
where
    F: FnMut(&Transcript) -> Result<usize, SeacatError>,
{
    let mut out = IngestOutcome::default();
    for t in transcripts {
        let skip = |reason: String| SkipEntry { transcript_id: t.id, reason };
        if t.first_agent_position().is_err() {
            out.skipped.push(skip(SeacatError::NoAgentSentence(t.id).to_string()));
            continue;
        }
        if !t.has_customer_sentence() {
            out.skipped.push(skip(SeacatError::NoCustomerSentence(t.id).to_string()));
            continue;
        }
        let index = match tagger(t) {
            Ok(i) => i,
            Err(e) => {
                out.skipped.push(skip(e.to_string()));
                continue;
            }
        };
        let question = &t.sentences[index].text;
        if tokenize(question).is_empty() {
            out.skipped.push(skip(format!("tagged sentence {index} has no tokens")));
            continue;
        }
        match extractors.extract(t, question, out.records.len() as u64) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.skipped.push(skip(reason)),
        }
    }
    out
}

pub fn write_skip_report<W: Write>(mut writer: W, skipped: &[SkipEntry]) -> std::io::Result<()> {
    for s in skipped {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
