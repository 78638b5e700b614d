//! Word predictability from an interpolated Kneser-Ney n-gram model, and
//! the corpus-frequency baseline.

mod freq;
mod kn;

use std::io::{BufRead, BufReader, Read};

use thiserror::Error;

pub use freq::FreqTable;
pub use kn::{Discount, KnConfig, KnModel, Perplexity, UNK, BOS};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("token stream is empty")]
    EmptyStream,
    #[error("no token in the stream has non-zero probability")]
    NothingScored,
    #[error("frequency table is empty")]
    EmptyTable,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
}

/// Whitespace-tokenised text, one sentence per line; blank lines skipped.
pub fn read_sentences<R: Read>(reader: R) -> Result<Vec<Vec<String>>, LmError> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !words.is_empty() {
            out.push(words);
        }
    }
    Ok(out)
}

/// Conditional probability of every word given up to `order - 1` preceding
/// words of the same sentence. The first word is scored without history.
pub fn predictability<S: AsRef<str>>(model: &KnModel, sentence: &[S]) -> Vec<f64> {
    let span = model.order() - 1;
    (0..sentence.len())
        .map(|i| {
            let start = i.saturating_sub(span);
            model.prob(&sentence[start..i], sentence[i].as_ref())
        })
        .collect()
}

/// `exp` of the mean negative log probability of a token stream; see
/// [`KnModel::perplexity`].
pub fn perplexity<S: AsRef<str>>(model: &KnModel, text: &[S]) -> Result<Perplexity, LmError> {
    model.perplexity(text)
}
