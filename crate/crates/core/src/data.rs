//! JSON-lines pair datasets.
//!
//! One record per line:
//!
//! ```text
//! {"premise":{"tokens":[..],"heads":[..],"rels":[..]},"hypothesis":{..},"label":"entailment"}
//! ```
//!
//! Heads are CoNLL style (1-indexed, 0 = root). Label `"-"` marks a pair
//! without annotator consensus; such records are skipped for training and
//! evaluation.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{validate_heads, DepTree, TreeError};
use crate::vocab::{Vocab, ROOT_RELATION_ID};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {which}: {source}")]
    Tree {
        line: usize,
        which: &'static str,
        #[source]
        source: TreeError,
    },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: missing label")]
    MissingLabel { line: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("embeddings line {line}: {msg}")]
    Embedding { line: usize, msg: String },
    #[error("embedding header declares dimension {got}, expected {expected}")]
    EmbeddingHeader { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment = 0,
    Contradiction = 1,
    Neutral = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Contradiction, Label::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entailment" => Ok(Label::Entailment),
            "contradiction" => Ok(Label::Contradiction),
            "neutral" => Ok(Label::Neutral),
            other => Err(other.to_owned()),
        }
    }
}

/// Tree as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTree {
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
    pub rels: Vec<String>,
}

impl RawTree {
    pub fn check(&self) -> Result<(), TreeError> {
        if self.tokens.len() != self.heads.len() || self.rels.len() != self.heads.len() {
            return Err(TreeError::LengthMismatch {
                tokens: self.tokens.len(),
                heads: self.heads.len(),
                rels: self.rels.len(),
            });
        }
        validate_heads(&self.heads).map(|_| ())
    }

    /// Vocabulary lookup; unseen words and relations map to the UNK slots and
    /// the root node always carries the ROOT relation.
    pub fn to_tree(&self, vocab: &Vocab) -> Result<DepTree, TreeError> {
        let tokens = self.tokens.iter().map(|t| vocab.word_id(t)).collect();
        let relations = self
            .rels
            .iter()
            .zip(&self.heads)
            .map(|(r, &h)| if h == 0 { ROOT_RELATION_ID } else { vocab.relation_id(r) })
            .collect();
        DepTree::new(tokens, &self.heads, relations)
    }
}

/// Pair record as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub premise: RawTree,
    pub hypothesis: RawTree,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Outcome of reading one label field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelField {
    Gold(Label),
    /// `"-"`: no annotator consensus.
    NoConsensus,
    Absent,
}

impl RawPair {
    pub fn parse(line: &str, line_no: usize) -> Result<Self, DataError> {
        let rec: RawPair = serde_json::from_str(line).map_err(|source| DataError::Json { line: line_no, source })?;
        rec.premise.check().map_err(|source| DataError::Tree {
            line: line_no,
            which: "premise",
            source,
        })?;
        rec.hypothesis.check().map_err(|source| DataError::Tree {
            line: line_no,
            which: "hypothesis",
            source,
        })?;
        rec.label_field(line_no)?;
        Ok(rec)
    }

    pub fn label_field(&self, line_no: usize) -> Result<LabelField, DataError> {
        match self.label.as_deref() {
            None => Ok(LabelField::Absent),
            Some("-") => Ok(LabelField::NoConsensus),
            Some(s) => s
                .parse()
                .map(LabelField::Gold)
                .map_err(|label| DataError::UnknownLabel { line: line_no, label }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("RawPair serializes")
    }
}

/// A validated premise/hypothesis pair over vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub premise: DepTree,
    pub hypothesis: DepTree,
    pub label: Label,
}

impl PairExample {
    pub fn from_raw(raw: &RawPair, vocab: &Vocab, line_no: usize) -> Result<Option<Self>, DataError> {
        let label = match raw.label_field(line_no)? {
            LabelField::Gold(l) => l,
            LabelField::NoConsensus => return Ok(None),
            LabelField::Absent => return Err(DataError::MissingLabel { line: line_no }),
        };
        let (premise, hypothesis) = raw_trees(raw, vocab, line_no)?;
        Ok(Some(Self {
            premise,
            hypothesis,
            label,
        }))
    }
}

/// Converts both trees of a record.
pub fn raw_trees(raw: &RawPair, vocab: &Vocab, line_no: usize) -> Result<(DepTree, DepTree), DataError> {
    let premise = raw.premise.to_tree(vocab).map_err(|source| DataError::Tree {
        line: line_no,
        which: "premise",
        source,
    })?;
    let hypothesis = raw.hypothesis.to_tree(vocab).map_err(|source| DataError::Tree {
        line: line_no,
        which: "hypothesis",
        source,
    })?;
    Ok((premise, hypothesis))
}

/// Parses one dataset line against a vocabulary. `Ok(None)` means the record
/// is a no-consensus pair and should be skipped.
pub fn parse_example(line: &str, line_no: usize, vocab: &Vocab) -> Result<Option<PairExample>, DataError> {
    let raw = RawPair::parse(line, line_no)?;
    PairExample::from_raw(&raw, vocab, line_no)
}

/// A raw record with its 1-indexed line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub line: usize,
    pub pair: RawPair,
}

/// Reads every non-blank line as a [`RawPair`].
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<Record>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Record {
            line: i + 1,
            pair: RawPair::parse(&line, i + 1)?,
        });
    }
    Ok(out)
}

pub fn read_records_path(path: impl AsRef<Path>) -> Result<Vec<Record>, DataError> {
    read_records(BufReader::new(File::open(path)?))
}

/// Converts labelled records to examples, skipping no-consensus pairs.
pub fn to_examples(records: &[Record], vocab: &Vocab) -> Result<Vec<PairExample>, DataError> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        if let Some(ex) = PairExample::from_raw(&rec.pair, vocab, rec.line)? {
            out.push(ex);
        }
    }
    Ok(out)
}

/// Labelled records only (drops `"-"`, errors on missing labels).
pub fn labelled_pairs(records: &[Record]) -> Result<Vec<RawPair>, DataError> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        match rec.pair.label_field(rec.line)? {
            LabelField::Gold(_) => out.push(rec.pair.clone()),
            LabelField::NoConsensus => {}
            LabelField::Absent => return Err(DataError::MissingLabel { line: rec.line }),
        }
    }
    Ok(out)
}
