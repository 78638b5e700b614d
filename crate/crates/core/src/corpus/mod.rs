//! Fixation corpora, score files, subword alignment and score pooling.

mod align;
mod scores;

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use align::{align_tokens, words_from_tokens, AlignError, Aligner, Alignment};
pub use scores::{read_score_file, write_score_file, ScoreSet, ScoreVector};

/// Minimum word count for a sentence to take part in any analysis.
pub const MIN_SENTENCE_WORDS: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate sentence id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: sentence `{id}`: {message}")]
    Invalid {
        line: usize,
        id: String,
        message: String,
    },
    #[error("corpus contains no sentences")]
    Empty,
    #[error("fixation matrix is empty")]
    EmptyMatrix,
    #[error("ragged fixation matrix: participant {row} has {found} words, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("fixation at participant {row}, word {col} is negative or not finite")]
    BadFixation { row: usize, col: usize },
    #[error("expected {expected} token scores, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Reading condition of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Sentiment reading.
    SR,
    /// Task-specific relation-extraction reading.
    REL,
    /// Natural reading.
    NR,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sr" | "sentiment" => Ok(Task::SR),
            "rel" | "tsr" | "relation" => Ok(Task::REL),
            "nr" | "natural" => Ok(Task::NR),
            other => Err(format!("unknown task `{other}` (expected SR, REL or NR)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::SR => "SR",
            Task::REL => "REL",
            Task::NR => "NR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One JSON object per line.
    #[default]
    JsonLines,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sentence {
    pub id: String,
    pub words: Vec<String>,
    pub fixation_ms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_participant_ms: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    pub text: String,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Whether the sentence is long enough to survive boundary trimming.
    pub fn is_analysable(&self) -> bool {
        self.words.len() >= MIN_SENTENCE_WORDS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub task: Task,
    pub sentences: Vec<Sentence>,
    pub source_name: String,
}

#[derive(Deserialize)]
struct RawSentence {
    id: Option<String>,
    words: Option<Vec<String>>,
    fixation_ms: Option<Vec<f64>>,
    per_participant_ms: Option<Vec<Vec<f64>>>,
    pos: Option<Vec<String>>,
    label: Option<usize>,
    text: Option<String>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Parses a JSON-lines corpus. Blank lines are ignored.
    pub fn from_reader<R: Read>(
        reader: R,
        task: Task,
        source_name: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut sentences = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawSentence =
                serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let sentence = validate_record(raw, line_no)?;
            if !seen.insert(sentence.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    line: line_no,
                    id: sentence.id,
                });
            }
            sentences.push(sentence);
        }
        if sentences.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Corpus {
            task,
            sentences,
            source_name: source_name.into(),
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.sentences {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Mean total fixation per word, one vector per sentence, as source `gaze`.
    pub fn gaze_scores(&self) -> ScoreSet {
        let mut set = ScoreSet::new("gaze");
        for s in &self.sentences {
            set.insert(ScoreVector::new(&s.id, "gaze", s.fixation_ms.clone()));
        }
        set
    }
}

fn validate_record(raw: RawSentence, line: usize) -> Result<Sentence, CorpusError> {
    let id = raw.id.ok_or(CorpusError::MissingField { line, field: "id" })?;
    let words = raw
        .words
        .ok_or(CorpusError::MissingField { line, field: "words" })?;
    let invalid = |message: String| CorpusError::Invalid {
        line,
        id: id.clone(),
        message,
    };
    let fixation_ms = match (raw.fixation_ms, &raw.per_participant_ms) {
        (Some(f), _) => f,
        (None, Some(m)) => mean_fixation(m).map_err(|e| invalid(e.to_string()))?,
        (None, None) => {
            return Err(CorpusError::MissingField {
                line,
                field: "fixation_ms",
            })
        }
    };
    if fixation_ms.len() != words.len() {
        return Err(invalid(format!(
            "{} fixation values for {} words",
            fixation_ms.len(),
            words.len()
        )));
    }
    if let Some(i) = fixation_ms.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("fixation value at word {i} is negative or not finite")));
    }
    if let Some(m) = &raw.per_participant_ms {
        if let Some(row) = m.first() {
            if row.len() != words.len() {
                return Err(invalid(format!(
                    "per-participant rows have {} entries for {} words",
                    row.len(),
                    words.len()
                )));
            }
        }
    }
    if let Some(pos) = &raw.pos {
        if pos.len() != words.len() {
            return Err(invalid(format!("{} POS tags for {} words", pos.len(), words.len())));
        }
    }
    let text = raw.text.unwrap_or_else(|| words.join(" "));
    Ok(Sentence {
        id,
        words,
        fixation_ms,
        per_participant_ms: raw.per_participant_ms,
        pos: raw.pos,
        label: raw.label,
        text,
    })
}

pub fn parse_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    task: Task,
) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match format {
        CorpusFormat::JsonLines => Corpus::from_reader(file, task, name),
    }
}

/// Per-word mean over participants. Zeros (skipped words) count toward the mean.
pub fn mean_fixation<T: Scalar>(per_participant: &[Vec<T>]) -> Result<Vec<T>, CorpusError> {
    let first = per_participant.first().ok_or(CorpusError::EmptyMatrix)?;
    let width = first.len();
    if width == 0 {
        return Err(CorpusError::EmptyMatrix);
    }
    let mut sums = vec![T::zero(); width];
    for (row, values) in per_participant.iter().enumerate() {
        if values.len() != width {
            return Err(CorpusError::Ragged {
                row,
                found: values.len(),
                expected: width,
            });
        }
        for (col, (acc, &v)) in sums.iter_mut().zip(values).enumerate() {
            if !v.is_finite() || v < T::zero() {
                return Err(CorpusError::BadFixation { row, col });
            }
            *acc = *acc + v;
        }
    }
    let n = T::from_usize_lossy(per_participant.len());
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Max-pools token scores into word bins.
pub fn pool_scores<T: Scalar>(token_scores: &[T], alignment: &Alignment) -> Result<Vec<T>, CorpusError> {
    if token_scores.len() != alignment.num_tokens() {
        return Err(CorpusError::LengthMismatch {
            expected: alignment.num_tokens(),
            found: token_scores.len(),
        });
    }
    Ok(alignment
        .bins()
        .iter()
        .map(|bin| {
            bin.iter()
                .map(|&i| token_scores[i])
                .fold(T::neg_infinity(), |a, b| a.max(b))
        })
        .collect())
}

/// Drops the first and last word. `None` means the sentence is too short
/// and must be skipped by the caller.
pub fn trim_boundaries<T: Clone>(word_scores: &[T]) -> Option<Vec<T>> {
    if word_scores.len() < MIN_SENTENCE_WORDS {
        return None;
    }
    Some(word_scores[1..word_scores.len() - 1].to_vec())
}
