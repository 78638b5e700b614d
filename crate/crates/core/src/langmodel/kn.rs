use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::LmError;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;

const MODEL_MAGIC: &[u8; 4] = b"GZKN";
const MODEL_VERSION: u8 = 1;
const FALLBACK_DISCOUNT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum Discount {
    /// `n1 / (n1 + 2 n2)` per order from count-of-counts.
    Estimated,
    /// Same discount for every interpolated order.
    Fixed(f64),
    /// One discount per order `2..=order`.
    PerOrder(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnConfig {
    pub order: usize,
    pub discount: Discount,
    /// Training words seen fewer times than this map to `<unk>`.
    pub unk_threshold: u64,
    /// Prefix every sentence with `order - 1` start symbols; otherwise all
    /// sentences are concatenated into a single stream.
    pub pad_sentences: bool,
    pub lowercase: bool,
}

impl Default for KnConfig {
    fn default() -> Self {
        KnConfig {
            order: 5,
            discount: Discount::Estimated,
            unk_threshold: 1,
            pad_sentences: true,
            lowercase: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Level {
    /// Raw counts at the top order, continuation counts below it.
    counts: HashMap<Vec<u32>, u64>,
    /// history -> (sum of counts, number of distinct continuations)
    contexts: HashMap<Vec<u32>, (u64, u64)>,
}

impl Level {
    fn from_counts(counts: HashMap<Vec<u32>, u64>) -> Self {
        let mut contexts: HashMap<Vec<u32>, (u64, u64)> = HashMap::new();
        for (gram, &c) in &counts {
            let e = contexts.entry(gram[..gram.len() - 1].to_vec()).or_default();
            e.0 += c;
            e.1 += 1;
        }
        Level { counts, contexts }
    }
}

/// Interpolated Kneser-Ney model with one absolute discount per order.
///
/// The lowest level is the undiscounted continuation-count unigram (raw
/// unigram when `order == 1`). Words that never occur as a continuation,
/// including `<unk>` when no training token was mapped to it, receive zero
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct KnModel {
    order: usize,
    lowercase: bool,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `discounts[o - 1]` for order `o`; entry 0 is unused.
    discounts: Vec<f64>,
    levels: Vec<Level>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perplexity {
    pub ppl: f64,
    /// Tokens that entered the average.
    pub scored: usize,
    /// Tokens with zero probability, excluded from the average.
    pub oov: usize,
}

fn estimate_discount(level: &Level) -> f64 {
    let n1 = level.counts.values().filter(|&&c| c == 1).count() as f64;
    let n2 = level.counts.values().filter(|&&c| c == 2).count() as f64;
    let d = n1 / (n1 + 2.0 * n2);
    if d > 0.0 && d < 1.0 {
        d
    } else {
        log::warn!("count-of-counts give discount {d}; using {FALLBACK_DISCOUNT}");
        FALLBACK_DISCOUNT
    }
}

impl KnModel {
    pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], config: &KnConfig) -> Result<Self, LmError> {
        let order = config.order;
        if order == 0 {
            return Err(LmError::Config("order must be at least 1".into()));
        }
        let norm = |w: &str| {
            if config.lowercase {
                w.to_lowercase()
            } else {
                w.to_string()
            }
        };
        let mut freq: HashMap<String, u64> = HashMap::new();
        for w in sentences.iter().flatten() {
            *freq.entry(norm(w.as_ref())).or_default() += 1;
        }
        if freq.is_empty() {
            return Err(LmError::EmptyCorpus);
        }

        let mut vocab = vec![UNK.to_string(), BOS.to_string()];
        let mut words: Vec<&String> = freq
            .iter()
            .filter(|(w, &c)| c >= config.unk_threshold && w.as_str() != UNK && w.as_str() != BOS)
            .map(|(w, _)| w)
            .collect();
        words.sort();
        vocab.extend(words.into_iter().cloned());
        let index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let id = |w: &str| index.get(&norm(w)).copied().unwrap_or(UNK_ID);

        let pad = if config.pad_sentences { order - 1 } else { 0 };
        let streams: Vec<Vec<u32>> = if config.pad_sentences {
            sentences
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| {
                    std::iter::repeat_n(BOS_ID, pad)
                        .chain(s.iter().map(|w| id(w.as_ref())))
                        .collect()
                })
                .collect()
        } else {
            vec![sentences.iter().flatten().map(|w| id(w.as_ref())).collect()]
        };

        // n-gram types (and raw counts at the top order) for every length
        let mut types: Vec<HashSet<Vec<u32>>> = vec![HashSet::new(); order + 1];
        let mut top_counts: HashMap<Vec<u32>, u64> = HashMap::new();
        for stream in &streams {
            for (len, seen) in types.iter_mut().enumerate().skip(1) {
                for window in stream.windows(len) {
                    if *window.last().expect("non-empty window") == BOS_ID {
                        continue;
                    }
                    if len == order {
                        *top_counts.entry(window.to_vec()).or_default() += 1;
                    } else {
                        seen.insert(window.to_vec());
                    }
                }
            }
        }
        let mut levels = vec![Level::default(); order];
        levels[order - 1] = Level::from_counts(top_counts.clone());
        let mut upper: HashSet<Vec<u32>> = top_counts.into_keys().collect();
        for len in (1..order).rev() {
            let mut cont: HashMap<Vec<u32>, u64> = HashMap::new();
            for gram in &upper {
                *cont.entry(gram[1..].to_vec()).or_default() += 1;
            }
            levels[len - 1] = Level::from_counts(cont);
            upper = std::mem::take(&mut types[len]);
        }

        let mut discounts = vec![0.0; order];
        for o in 2..=order {
            discounts[o - 1] = match &config.discount {
                Discount::Estimated => estimate_discount(&levels[o - 1]),
                Discount::Fixed(d) => *d,
                Discount::PerOrder(ds) => *ds.get(o - 2).ok_or_else(|| {
                    LmError::Config(format!("{} discounts for order {order}", ds.len()))
                })?,
            };
            let d = discounts[o - 1];
            if !(d > 0.0 && d < 1.0) {
                return Err(LmError::Config(format!("discount {d} for order {o} not in (0, 1)")));
            }
        }

        Ok(KnModel {
            order,
            lowercase: config.lowercase,
            vocab,
            index,
            discounts,
            levels,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts[1..]
    }

    /// Every word the model can predict (everything except `<s>`).
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != BOS_ID)
            .map(|(_, w)| w.as_str())
    }

    /// Histories observed at some interpolated order, as strings.
    pub fn observed_histories(&self) -> Vec<Vec<&str>> {
        let mut out: Vec<Vec<&str>> = self.levels[1..]
            .iter()
            .flat_map(|l| l.contexts.keys())
            .map(|h| h.iter().map(|&i| self.vocab[i as usize].as_str()).collect())
            .collect();
        out.sort();
        out
    }

    fn id(&self, w: &str) -> u32 {
        let found = if self.lowercase {
            self.index.get(&w.to_lowercase())
        } else {
            self.index.get(w)
        };
        found.copied().unwrap_or(UNK_ID)
    }

    fn prob_ids(&self, history: &[u32], word: u32) -> f64 {
        let uni = &self.levels[0];
        let mut p = match uni.contexts.get(&[][..]) {
            Some(&(total, _)) => uni.counts.get(&[word][..]).copied().unwrap_or(0) as f64 / total as f64,
            None => 0.0,
        };
        let max_hist = history.len().min(self.order - 1);
        let mut gram = Vec::with_capacity(self.order);
        for o in 2..=max_hist + 1 {
            let ctx = &history[history.len() - (o - 1)..];
            let level = &self.levels[o - 1];
            let Some(&(total, distinct)) = level.contexts.get(ctx) else {
                continue;
            };
            gram.clear();
            gram.extend_from_slice(ctx);
            gram.push(word);
            let c = level.counts.get(&gram).copied().unwrap_or(0) as f64;
            let d = self.discounts[o - 1];
            let total = total as f64;
            p = (c - d).max(0.0) / total + d * distinct as f64 / total * p;
        }
        p
    }

    /// `p(word | history)`; only the last `order - 1` history words matter.
    pub fn prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let start = history.len().saturating_sub(self.order - 1);
        let h: Vec<u32> = history[start..].iter().map(|w| self.id(w.as_ref())).collect();
        self.prob_ids(&h, self.id(word))
    }

    /// Perplexity of a token stream. The first token is scored without
    /// history; zero-probability tokens are counted as OOV and skipped.
    pub fn perplexity<S: AsRef<str>>(&self, text: &[S]) -> Result<Perplexity, LmError> {
        if text.is_empty() {
            return Err(LmError::EmptyStream);
        }
        let ids: Vec<u32> = text.iter().map(|w| self.id(w.as_ref())).collect();
        let mut nll = 0.0;
        let (mut scored, mut oov) = (0usize, 0usize);
        for i in 0..ids.len() {
            let start = i.saturating_sub(self.order - 1);
            let p = self.prob_ids(&ids[start..i], ids[i]);
            if p > 0.0 {
                nll -= p.ln();
                scored += 1;
            } else {
                oov += 1;
            }
        }
        if scored == 0 {
            return Err(LmError::NothingScored);
        }
        Ok(Perplexity {
            ppl: (nll / scored as f64).exp(),
            scored,
            oov,
        })
    }

    /// Versioned little-endian dump; entries are sorted so equal models
    /// produce equal bytes.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u8(MODEL_VERSION)?;
        w.write_u8(u8::from(self.lowercase))?;
        w.write_u32::<LittleEndian>(self.order as u32)?;
        for &d in &self.discounts {
            w.write_f64::<LittleEndian>(d)?;
        }
        w.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        for word in &self.vocab {
            let len = u16::try_from(word.len())
                .map_err(|_| LmError::Format(format!("word of {} bytes", word.len())))?;
            w.write_u16::<LittleEndian>(len)?;
            w.write_all(word.as_bytes())?;
        }
        for level in &self.levels {
            let mut entries: Vec<(&Vec<u32>, &u64)> = level.counts.iter().collect();
            entries.sort();
            w.write_u64::<LittleEndian>(entries.len() as u64)?;
            for (gram, &count) in entries {
                for &id in gram {
                    w.write_u32::<LittleEndian>(id)?;
                }
                w.write_u64::<LittleEndian>(count)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, LmError> {
        let eof = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                LmError::Format("truncated model".into())
            } else {
                LmError::Io(e)
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != MODEL_MAGIC {
            return Err(LmError::Format("bad magic".into()));
        }
        let version = r.read_u8().map_err(eof)?;
        if version != MODEL_VERSION {
            return Err(LmError::Format(format!("unsupported version {version}")));
        }
        let lowercase = r.read_u8().map_err(eof)? != 0;
        let order = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        if order == 0 {
            return Err(LmError::Format("order 0".into()));
        }
        let mut discounts = Vec::with_capacity(order);
        for _ in 0..order {
            discounts.push(r.read_f64::<LittleEndian>().map_err(eof)?);
        }
        let vocab_len = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        let mut vocab = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = r.read_u16::<LittleEndian>().map_err(eof)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(eof)?;
            vocab.push(String::from_utf8(bytes).map_err(|_| LmError::Format("vocabulary is not UTF-8".into()))?);
        }
        let mut levels = Vec::with_capacity(order);
        for o in 1..=order {
            let entries = r.read_u64::<LittleEndian>().map_err(eof)?;
            let mut counts = HashMap::new();
            for _ in 0..entries {
                let mut gram = Vec::with_capacity(o);
                for _ in 0..o {
                    let id = r.read_u32::<LittleEndian>().map_err(eof)?;
                    if id as usize >= vocab.len() {
                        return Err(LmError::Format(format!("word id {id} out of range")));
                    }
                    gram.push(id);
                }
                counts.insert(gram, r.read_u64::<LittleEndian>().map_err(eof)?);
            }
            levels.push(Level::from_counts(counts));
        }
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(KnModel {
            order,
            lowercase,
            vocab,
            index,
            discounts,
            levels,
        })
    }
}
