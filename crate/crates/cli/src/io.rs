//! File helpers shared by the subcommands.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use gazeflow_core::corpus::{parse_corpus, read_score_file, CorpusFormat};
use gazeflow_core::{Corpus, ScoreSet, ScoreVector, Task};
use serde::Serialize;

/// Buffered writer for `path`, or stdout for `-`.
pub fn create_out(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(std::io::stdout().lock())));
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

pub fn load_corpus(path: &Path, task: Task) -> Result<Corpus> {
    parse_corpus(path, CorpusFormat::JsonLines, task)
        .with_context(|| format!("reading corpus {}", path.display()))
}

/// Every source from every file, in file order. A source may appear in one
/// file only.
pub fn load_score_sets(paths: &[impl AsRef<Path>]) -> Result<Vec<ScoreSet>> {
    let mut sets: Vec<ScoreSet> = Vec::new();
    for path in paths {
        let path = path.as_ref();
        for set in read_score_file(path).with_context(|| format!("reading scores {}", path.display()))? {
            if sets.iter().any(|s| s.source == set.source) {
                bail!("source `{}` appears in more than one score file", set.source);
            }
            sets.push(set);
        }
    }
    if sets.is_empty() {
        bail!("no score vectors found");
    }
    Ok(sets)
}

/// The only source of a score file, or the one named `wanted`.
pub fn single_source(path: &Path, wanted: Option<&str>) -> Result<ScoreSet> {
    let sets = load_score_sets(&[path])?;
    match wanted {
        Some(name) => sets
            .into_iter()
            .find(|s| s.source == name)
            .with_context(|| format!("{} has no source `{name}`", path.display())),
        None if sets.len() == 1 => Ok(sets.into_iter().next().expect("one set")),
        None => {
            let names: Vec<&str> = sets.iter().map(|s| s.source.as_str()).collect();
            bail!("{} holds several sources ({}); pick one", path.display(), names.join(", "))
        }
    }
}

fn looks_like_score_file(path: &Path) -> Result<bool> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("{}: first record is not JSON", path.display()))?;
        return Ok(v.get("sentence_id").is_some());
    }
    Ok(false)
}

/// Human scores from either a corpus (its mean fixations) or a score file.
pub fn load_human(path: &Path, task: Task) -> Result<ScoreSet> {
    if looks_like_score_file(path)? {
        single_source(path, None)
    } else {
        Ok(load_corpus(path, task)?.gaze_scores())
    }
}

pub fn write_vectors<'a>(path: &Path, vectors: impl IntoIterator<Item = &'a ScoreVector>) -> Result<()> {
    let mut out = create_out(path)?;
    for v in vectors {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create_out(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
