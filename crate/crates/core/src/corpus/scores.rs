use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{trim_boundaries, CorpusError};

fn is_false(b: &bool) -> bool {
    !*b
}

/// One importance value per reference word of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub sentence_id: String,
    pub source: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub trimmed: bool,
}

impl ScoreVector {
    pub fn new(sentence_id: impl Into<String>, source: impl Into<String>, values: Vec<f64>) -> Self {
        ScoreVector {
            sentence_id: sentence_id.into(),
            source: source.into(),
            values,
            trimmed: false,
        }
    }

    /// Word count of the underlying sentence.
    pub fn word_count(&self) -> usize {
        if self.trimmed {
            self.values.len() + 2
        } else {
            self.values.len()
        }
    }

    /// Boundary-trimmed values, or `None` when the sentence is too short.
    pub fn trimmed_values(&self) -> Option<Vec<f64>> {
        if self.trimmed {
            (!self.values.is_empty()).then(|| self.values.clone())
        } else {
            trim_boundaries(&self.values)
        }
    }
}

/// All vectors of one source, keyed by sentence id in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub source: String,
    pub vectors: IndexMap<String, ScoreVector>,
}

impl ScoreSet {
    pub fn new(source: impl Into<String>) -> Self {
        ScoreSet {
            source: source.into(),
            vectors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, v: ScoreVector) {
        self.vectors.insert(v.sentence_id.clone(), v);
    }

    pub fn get(&self, sentence_id: &str) -> Option<&ScoreVector> {
        self.vectors.get(sentence_id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScoreVector> {
        self.vectors.values()
    }

    /// Copy with a different source label.
    pub fn renamed(&self, source: impl Into<String>) -> Self {
        let source = source.into();
        let mut out = ScoreSet::new(source.clone());
        for v in self.iter() {
            let mut v = v.clone();
            v.source = source.clone();
            out.insert(v);
        }
        out
    }
}

/// Reads a JSON-lines score file and groups vectors by source, in order of
/// first appearance.
pub fn read_score_file(path: impl AsRef<Path>) -> Result<Vec<ScoreSet>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut sets: IndexMap<String, ScoreSet> = IndexMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: ScoreVector = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(CorpusError::Invalid {
                line: idx + 1,
                id: v.sentence_id,
                message: "score values must be finite".into(),
            });
        }
        let set = sets
            .entry(v.source.clone())
            .or_insert_with(|| ScoreSet::new(v.source.clone()));
        if set.vectors.contains_key(&v.sentence_id) {
            return Err(CorpusError::DuplicateId {
                line: idx + 1,
                id: v.sentence_id,
            });
        }
        set.insert(v);
    }
    Ok(sets.into_values().collect())
}

pub fn write_score_file<'a>(
    path: impl AsRef<Path>,
    vectors: impl IntoIterator<Item = &'a ScoreVector>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in vectors {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
