use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("character streams disagree at offset {offset}: reference {expected:?}, model {found:?}")]
    Mismatch {
        offset: usize,
        expected: Option<char>,
        found: Option<char>,
    },
    #[error("reference word {word} received no model tokens")]
    EmptyBin { word: usize },
    #[error("special mask has {found} entries for {expected} tokens")]
    MaskLength { expected: usize, found: usize },
    #[error("invalid bins: {0}")]
    InvalidBins(String),
}

/// Partition of model tokens into reference-word bins.
///
/// Token indices refer to the full model sequence, so declared special
/// tokens simply never appear in a bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    bins: Vec<Vec<usize>>,
    num_tokens: usize,
}

impl Alignment {
    /// Builds an alignment after checking that bins are non-empty, ordered
    /// and disjoint.
    pub fn new(bins: Vec<Vec<usize>>, num_tokens: usize) -> Result<Self, AlignError> {
        let mut next = 0usize;
        for (w, bin) in bins.iter().enumerate() {
            if bin.is_empty() {
                return Err(AlignError::EmptyBin { word: w });
            }
            for &t in bin {
                if t < next || t >= num_tokens {
                    return Err(AlignError::InvalidBins(format!(
                        "token {t} in bin {w} is out of order or out of range"
                    )));
                }
                next = t + 1;
            }
        }
        Ok(Alignment { bins, num_tokens })
    }

    pub fn identity(n: usize) -> Self {
        Alignment {
            bins: (0..n).map(|i| vec![i]).collect(),
            num_tokens: n,
        }
    }

    pub fn bins(&self) -> &[Vec<usize>] {
        &self.bins
    }

    pub fn num_words(&self) -> usize {
        self.bins.len()
    }

    /// Length of the model token sequence, special tokens included.
    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn num_aligned(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }
}

/// Greedy character-offset aligner.
#[derive(Debug, Clone)]
pub struct Aligner {
    /// Continuation marker stripped from the front of model tokens.
    pub marker: String,
}

impl Default for Aligner {
    fn default() -> Self {
        Aligner {
            marker: "##".to_string(),
        }
    }
}

fn normalize(s: &str) -> Vec<char> {
    s.nfkc()
        .flat_map(char::to_lowercase)
        .filter(|c| !c.is_whitespace())
        .collect()
}

impl Aligner {
    pub fn new(marker: impl Into<String>) -> Self {
        Aligner {
            marker: marker.into(),
        }
    }

    fn strip<'a>(&self, token: &'a str) -> &'a str {
        if self.marker.is_empty() {
            token
        } else {
            token.strip_prefix(self.marker.as_str()).unwrap_or(token)
        }
    }

    pub fn align<W: AsRef<str>, M: AsRef<str>>(
        &self,
        words: &[W],
        tokens: &[M],
        special: Option<&[bool]>,
    ) -> Result<Alignment, AlignError> {
        if let Some(mask) = special {
            if mask.len() != tokens.len() {
                return Err(AlignError::MaskLength {
                    expected: tokens.len(),
                    found: mask.len(),
                });
            }
        }
        let mut reference = Vec::new();
        let mut owner = Vec::new();
        for (w, word) in words.iter().enumerate() {
            let chars = normalize(word.as_ref());
            owner.extend(std::iter::repeat_n(w, chars.len()));
            reference.extend(chars);
        }

        let mut bins = vec![Vec::new(); words.len()];
        let mut offset = 0usize;
        for (t, token) in tokens.iter().enumerate() {
            if special.is_some_and(|m| m[t]) {
                continue;
            }
            let chars = normalize(self.strip(token.as_ref()));
            for (j, &c) in chars.iter().enumerate() {
                let at = offset + j;
                if reference.get(at) != Some(&c) {
                    return Err(AlignError::Mismatch {
                        offset: at,
                        expected: reference.get(at).copied(),
                        found: Some(c),
                    });
                }
            }
            // empty tokens (bare markers) attach to the word at the current offset
            let word = match owner.get(offset) {
                Some(&w) => w,
                None => match owner.last() {
                    Some(&w) => w,
                    None => {
                        return Err(AlignError::Mismatch {
                            offset,
                            expected: None,
                            found: chars.first().copied(),
                        })
                    }
                },
            };
            bins[word].push(t);
            offset += chars.len();
        }
        if offset != reference.len() {
            return Err(AlignError::Mismatch {
                offset,
                expected: reference.get(offset).copied(),
                found: None,
            });
        }
        Alignment::new(bins, tokens.len())
    }
}

/// Aligns with the given continuation marker and no special tokens.
pub fn align_tokens<W: AsRef<str>, M: AsRef<str>>(
    words: &[W],
    tokens: &[M],
    marker: &str,
) -> Result<Alignment, AlignError> {
    Aligner::new(marker).align(words, tokens, None)
}

/// Rebuilds words from a subword sequence by gluing marker-prefixed tokens
/// onto their predecessor. Used when no reference tokenization is supplied.
pub fn words_from_tokens<M: AsRef<str>>(
    tokens: &[M],
    marker: &str,
    special: Option<&[bool]>,
) -> (Vec<String>, Alignment) {
    let mut words: Vec<String> = Vec::new();
    let mut bins: Vec<Vec<usize>> = Vec::new();
    for (t, token) in tokens.iter().enumerate() {
        if special.is_some_and(|m| m.get(t).copied().unwrap_or(false)) {
            continue;
        }
        let token = token.as_ref();
        match token.strip_prefix(marker).filter(|_| !marker.is_empty()) {
            Some(rest) if !bins.is_empty() => {
                words.last_mut().expect("bins and words grow together").push_str(rest);
                bins.last_mut().expect("non-empty").push(t);
            }
            _ => {
                words.push(token.to_string());
                bins.push(vec![t]);
            }
        }
    }
    (
        words,
        Alignment {
            bins,
            num_tokens: tokens.len(),
        },
    )
}
