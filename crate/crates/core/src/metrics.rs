//! Rank and product-moment correlation, permutation significance, entropy
//! and z-scores.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ScoreSet;
use crate::Scalar;

/// Minimum number of paired points for a coefficient.
pub const MIN_POINTS: usize = 3;

/// Slack when comparing permuted and observed |rho|.
const PERMUTATION_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {MIN_POINTS} points, got {0}")]
    TooFew(usize),
    #[error("constant input (zero variance)")]
    Constant,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("all scores are zero")]
    AllZero,
    #[error("empty input")]
    Empty,
    #[error("score sets `{0}` and `{1}` share no sentences")]
    EmptySubset(String, String),
    #[error("no usable sentences for `{0}` vs `{1}` ({2} skipped)")]
    NoUsableSentences(String, String, usize),
    #[error("sentence `{id}`: {a} values vs {b} values")]
    SentenceLengthMismatch { id: String, a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Spearman,
    Pearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationLevel {
    /// One coefficient over all concatenated tokens.
    Token,
    /// Unweighted mean of per-sentence coefficients.
    Sentence,
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationKind::Spearman => "spearman",
            CorrelationKind::Pearson => "pearson",
        })
    }
}

impl FromStr for CorrelationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spearman" => Ok(CorrelationKind::Spearman),
            "pearson" => Ok(CorrelationKind::Pearson),
            _ => Err(format!("unknown correlation kind `{s}`")),
        }
    }
}

impl fmt::Display for CorrelationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationLevel::Token => "token",
            CorrelationLevel::Sentence => "sentence",
        })
    }
}

impl FromStr for CorrelationLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "token" | "tok" => Ok(CorrelationLevel::Token),
            "sentence" | "sen" => Ok(CorrelationLevel::Sentence),
            _ => Err(format!("unknown correlation level `{s}`")),
        }
    }
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < MIN_POINTS {
        return Err(MetricsError::TooFew(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(x.len())
}

fn pearson_unchecked<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricsError> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(MetricsError::Constant);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their average
        let avg = T::from_usize_lossy(start + 1 + end) / T::lit(2.0);
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricsError> {
    check_pair(x, y)?;
    pearson_unchecked(x, y)
}

pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricsError> {
    check_pair(x, y)?;
    pearson_unchecked(&average_ranks(x), &average_ranks(y))
}

pub fn correlation<T: Scalar>(x: &[T], y: &[T], kind: CorrelationKind) -> Result<T, MetricsError> {
    match kind {
        CorrelationKind::Spearman => spearman(x, y),
        CorrelationKind::Pearson => pearson(x, y),
    }
}

fn prepared<T: Scalar>(x: &[T], kind: CorrelationKind) -> Vec<T> {
    match kind {
        CorrelationKind::Spearman => average_ranks(x),
        CorrelationKind::Pearson => x.to_vec(),
    }
}

/// Two-sided permutation p-value: `(1 + #{|r_perm| >= |r_obs|}) / (permutations + 1)`,
/// permuting `y` with a ChaCha8 stream seeded by `seed`.
pub fn permutation_pvalue<T: Scalar>(
    x: &[T],
    y: &[T],
    kind: CorrelationKind,
    permutations: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    check_pair(x, y)?;
    let px = prepared(x, kind);
    let mut py = prepared(y, kind);
    let observed = pearson_unchecked(&px, &py)?.to_f64_lossy().abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        py.shuffle(&mut rng);
        let r = pearson_unchecked(&px, &py)?.to_f64_lossy().abs();
        if r >= observed - PERMUTATION_TIE_EPS {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (permutations + 1) as f64)
}

/// Shannon entropy in bits of the normalised absolute scores.
pub fn entropy_bits<T: Scalar>(scores: &[T]) -> Result<T, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let total = scores.iter().fold(T::zero(), |a, v| a + v.abs());
    if total <= T::zero() {
        return Err(MetricsError::AllZero);
    }
    let h = scores.iter().fold(T::zero(), |acc, v| {
        let q = v.abs() / total;
        if q > T::zero() {
            acc - q * q.log2()
        } else {
            acc
        }
    });
    Ok(h.max(T::zero()))
}

/// Z-scores with the population standard deviation.
pub fn standardize<T: Scalar>(scores: &[T]) -> Result<Vec<T>, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let m = mean(scores);
    let var = scores
        .iter()
        .fold(T::zero(), |a, &v| a + (v - m) * (v - m))
        / T::from_usize_lossy(scores.len());
    if var <= T::zero() {
        return Err(MetricsError::Constant);
    }
    let sd = var.sqrt();
    Ok(scores.iter().map(|&v| (v - m) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub pair: (String, String),
    pub level: CorrelationLevel,
    pub kind: CorrelationKind,
    pub rho: f64,
    pub p: f64,
    /// Tokens (token level) or sentences (sentence level) entering the coefficient.
    pub n: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelateOptions {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CorrelateOptions {
    fn default() -> Self {
        CorrelateOptions {
            permutations: 999,
            seed: 0,
        }
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Sentence id with its two trimmed vectors.
pub type SentencePair = (String, Vec<f64>, Vec<f64>);

/// Paired, trimmed sentence vectors usable for correlation, plus the number
/// of common sentences that had to be skipped.
pub fn paired_sentences(a: &ScoreSet, b: &ScoreSet) -> Result<(Vec<SentencePair>, usize), MetricsError> {
    let mut pairs = Vec::new();
    let mut common = 0usize;
    let mut skipped = 0usize;
    for va in a.iter() {
        let Some(vb) = b.get(&va.sentence_id) else {
            continue;
        };
        common += 1;
        if va.word_count() != vb.word_count() {
            return Err(MetricsError::SentenceLengthMismatch {
                id: va.sentence_id.clone(),
                a: va.word_count(),
                b: vb.word_count(),
            });
        }
        match (va.trimmed_values(), vb.trimmed_values()) {
            (Some(x), Some(y)) if x.len() >= MIN_POINTS && !is_constant(&x) && !is_constant(&y) => {
                pairs.push((va.sentence_id.clone(), x, y));
            }
            _ => {
                log::debug!("skipping sentence `{}` for {} vs {}", va.sentence_id, a.source, b.source);
                skipped += 1;
            }
        }
    }
    if common == 0 {
        return Err(MetricsError::EmptySubset(a.source.clone(), b.source.clone()));
    }
    if pairs.is_empty() {
        return Err(MetricsError::NoUsableSentences(
            a.source.clone(),
            b.source.clone(),
            skipped,
        ));
    }
    Ok((pairs, skipped))
}

/// Corpus-level correlation between two score sets over their common,
/// boundary-trimmed sentences.
///
/// Sentences with fewer than three trimmed words or a constant vector on
/// either side are skipped at both levels and counted in `skipped`. The
/// p-value permutes `b` (within sentences at sentence level).
pub fn correlate_corpus(
    a: &ScoreSet,
    b: &ScoreSet,
    level: CorrelationLevel,
    kind: CorrelationKind,
    opts: CorrelateOptions,
) -> Result<CorrelationReport, MetricsError> {
    let (pairs, skipped) = paired_sentences(a, b)?;
    let (rho, p, n) = match level {
        CorrelationLevel::Token => {
            let x: Vec<f64> = pairs.iter().flat_map(|(_, x, _)| x.iter().copied()).collect();
            let y: Vec<f64> = pairs.iter().flat_map(|(_, _, y)| y.iter().copied()).collect();
            let rho = correlation(&x, &y, kind)?;
            let p = permutation_pvalue(&x, &y, kind, opts.permutations, opts.seed)?;
            (rho, p, x.len())
        }
        CorrelationLevel::Sentence => {
            let xs: Vec<Vec<f64>> = pairs.iter().map(|(_, x, _)| prepared(x, kind)).collect();
            let mut ys: Vec<Vec<f64>> = pairs.iter().map(|(_, _, y)| prepared(y, kind)).collect();
            let mean_coef = |ys: &[Vec<f64>]| -> Result<f64, MetricsError> {
                let mut total = 0.0;
                for (x, y) in xs.iter().zip(ys) {
                    total += pearson_unchecked(x, y)?;
                }
                Ok(total / xs.len() as f64)
            };
            let observed = mean_coef(&ys)?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut hits = 0usize;
            for _ in 0..opts.permutations {
                for y in ys.iter_mut() {
                    y.shuffle(&mut rng);
                }
                if mean_coef(&ys)?.abs() >= observed.abs() - PERMUTATION_TIE_EPS {
                    hits += 1;
                }
            }
            let p = (1 + hits) as f64 / (opts.permutations + 1) as f64;
            (observed, p, pairs.len())
        }
    };
    Ok(CorrelationReport {
        pair: (a.source.clone(), b.source.clone()),
        level,
        kind,
        rho,
        p,
        n,
        skipped,
    })
}
