//! Index of exported tensor files, written by the exporter next to the
//! ATNF files it produced.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_tensor, AttentionTensor, AttnError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    #[serde(default)]
    pub special: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEntry {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model: String,
    pub tokenizer: String,
    pub layers: usize,
    pub heads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_head: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub sentences: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkippedEntry>,
}

impl ExportManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<(Self, PathBuf), AttnError> {
        let path = path.as_ref();
        let m: ExportManifest = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| AttnError::Format(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), AttnError> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| AttnError::Format(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn resolve(&self, base: &Path, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Reads one entry's tensor and checks it against the manifest header.
    pub fn load<T: Scalar>(&self, base: &Path, entry: &ManifestEntry) -> Result<AttentionTensor<T>, AttnError> {
        let t: AttentionTensor<T> = read_tensor(self.resolve(base, entry))?;
        if t.layers() != self.layers || t.heads() != self.heads {
            return Err(AttnError::Shape(format!(
                "`{}` has {}x{} layers x heads, manifest says {}x{}",
                entry.id,
                t.layers(),
                t.heads(),
                self.layers,
                self.heads
            )));
        }
        if let Some(&p) = entry.special.iter().find(|&&p| p >= t.seq_len() || !t.is_special(p)) {
            return Err(AttnError::Shape(format!(
                "`{}`: manifest marks position {p} special but the tensor does not",
                entry.id
            )));
        }
        Ok(t)
    }
}
