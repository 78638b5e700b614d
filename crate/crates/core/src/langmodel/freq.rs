use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

use super::LmError;

/// Lower-cased token counts for the negative log-frequency baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqTable {
    counts: HashMap<String, u64>,
    total: u64,
    min_count: u64,
}

impl FreqTable {
    /// Merges counts of tokens that differ only in case.
    pub fn from_counts<I, S>(counts: I) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (token, count) in counts {
            if count == 0 {
                return Err(LmError::Config(format!(
                    "token `{}` has count 0",
                    token.as_ref()
                )));
            }
            *merged.entry(token.as_ref().to_lowercase()).or_default() += count;
        }
        if merged.is_empty() {
            return Err(LmError::EmptyTable);
        }
        let total = merged.values().sum();
        let min_count = *merged.values().min().expect("non-empty");
        Ok(FreqTable {
            counts: merged,
            total,
            min_count,
        })
    }

    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        FreqTable::from_counts(tokens.into_iter().map(|t| (t, 1)))
    }

    /// Parses `token<TAB>count` lines.
    pub fn from_tsv<R: Read>(reader: R) -> Result<Self, LmError> {
        let mut rows = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: &str| LmError::Parse {
                line: idx + 1,
                message: message.to_string(),
            };
            let (token, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected token<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| parse_err("count is not a non-negative integer"))?;
            rows.push((token.to_string(), count));
        }
        FreqTable::from_counts(rows)
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(&token.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `-ln(count / total)` of the lower-cased token. Unseen tokens get the
    /// largest observed score.
    pub fn neg_log_freq(&self, token: &str) -> f64 {
        let count = match self.count(token) {
            0 => self.min_count,
            c => c,
        };
        -(count as f64 / self.total as f64).ln()
    }

    /// Same as [`Self::neg_log_freq`] in an arbitrary logarithm base.
    pub fn neg_log_freq_base(&self, token: &str, base: f64) -> f64 {
        self.neg_log_freq(token) / base.ln()
    }
}
