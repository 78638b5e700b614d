//! Grouped correlations, per-tag standardized means, duplicate-sentence
//! comparison across reading conditions and length-stratified entropy.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Corpus, ScoreSet, ScoreVector};
use crate::metrics::{
    correlate_corpus, correlation, entropy_bits, paired_sentences, standardize, CorrelateOptions,
    CorrelationKind, CorrelationLevel, CorrelationReport, MetricsError,
};

pub const DEFAULT_TOP_TAGS: usize = 6;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_LENGTH_WIDTH: usize = 5;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("sentence `{id}`: missing {what}")]
    MissingAnnotation { id: String, what: &'static str },
    #[error("sentence `{id}`: {what} has {found} entries, expected {expected}")]
    AnnotationLength {
        id: String,
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("no duplicate sentences between the two corpora")]
    NoDuplicates,
    #[error("no sentence length occurs in both corpora")]
    NoCommonLengths,
    #[error("no tokens to analyse")]
    Empty,
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Pos,
    PredictabilityBin,
    SentenceLength,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Pos => "pos",
            Grouping::PredictabilityBin => "predictability_bin",
            Grouping::SentenceLength => "sentence_length",
        })
    }
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pos" => Ok(Grouping::Pos),
            "predictability" | "predictability_bin" => Ok(Grouping::PredictabilityBin),
            "length" | "sentence_length" => Ok(Grouping::SentenceLength),
            other => Err(format!("unknown grouping `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOptions {
    pub kind: CorrelationKind,
    /// Groups with fewer points are excluded.
    pub min_n: usize,
    /// POS: keep the most frequent tags only (`None` keeps all).
    pub top_k: Option<usize>,
    pub bins: usize,
    pub length_width: usize,
}

impl Default for GroupOptions {
    fn default() -> Self {
        GroupOptions {
            kind: CorrelationKind::Spearman,
            min_n: 3,
            top_k: Some(DEFAULT_TOP_TAGS),
            bins: DEFAULT_BINS,
            length_width: DEFAULT_LENGTH_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub key: String,
    pub rho: f64,
    pub n: usize,
    /// Smallest and largest grouping value (predictability bins only).
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedGroup {
    pub key: String,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedReport {
    pub grouping: Grouping,
    pub pair: (String, String),
    pub kind: CorrelationKind,
    pub rows: Vec<GroupRow>,
    pub excluded: Vec<ExcludedGroup>,
    /// Tokens (token groupings) or sentences (length grouping) considered.
    pub total: usize,
}

struct Token {
    x: f64,
    y: f64,
    tag: Option<String>,
    pred: Option<f64>,
}

/// Trimmed annotations of one sentence aligned with its trimmed vectors.
fn trimmed_annotation<T: Clone>(
    id: &str,
    full: Option<&[T]>,
    what: &'static str,
    expected_words: usize,
) -> Result<Vec<T>, AnalysisError> {
    let full = full.ok_or_else(|| AnalysisError::MissingAnnotation {
        id: id.to_string(),
        what,
    })?;
    if full.len() != expected_words {
        return Err(AnalysisError::AnnotationLength {
            id: id.to_string(),
            what,
            found: full.len(),
            expected: expected_words,
        });
    }
    Ok(full[1..full.len() - 1].to_vec())
}

fn sentence_words(corpus: &Corpus, id: &str, trimmed_len: usize) -> Result<usize, AnalysisError> {
    let s = corpus.get(id).ok_or_else(|| AnalysisError::MissingAnnotation {
        id: id.to_string(),
        what: "corpus entry",
    })?;
    if s.len() != trimmed_len + 2 {
        return Err(AnalysisError::AnnotationLength {
            id: id.to_string(),
            what: "score vector",
            found: trimmed_len + 2,
            expected: s.len(),
        });
    }
    Ok(s.len())
}

fn score_group(
    key: String,
    x: &[f64],
    y: &[f64],
    opts: &GroupOptions,
    limits: Option<(f64, f64)>,
    rows: &mut Vec<GroupRow>,
    excluded: &mut Vec<ExcludedGroup>,
) {
    let n = x.len();
    if n < opts.min_n.max(crate::metrics::MIN_POINTS) {
        excluded.push(ExcludedGroup {
            key,
            n,
            reason: format!("n = {n} below minimum {}", opts.min_n),
        });
        return;
    }
    match correlation(x, y, opts.kind) {
        Ok(rho) => rows.push(GroupRow {
            key,
            rho,
            n,
            lower: limits.map(|l| l.0),
            upper: limits.map(|l| l.1),
        }),
        Err(e) => excluded.push(ExcludedGroup {
            key,
            n,
            reason: e.to_string(),
        }),
    }
}

/// Correlation of `human` and `model` within groups of tokens (POS tag or
/// equal-count predictability bin) or sentences (length bucket).
///
/// `predictability` must cover every retained sentence for the
/// predictability grouping and is ignored otherwise.
pub fn grouped_correlation(
    human: &ScoreSet,
    model: &ScoreSet,
    corpus: &Corpus,
    predictability: Option<&ScoreSet>,
    grouping: Grouping,
    opts: &GroupOptions,
) -> Result<GroupedReport, AnalysisError> {
    let (pairs, _) = paired_sentences(human, model)?;
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let total;

    match grouping {
        Grouping::Pos | Grouping::PredictabilityBin => {
            let mut tokens = Vec::new();
            for (id, x, y) in &pairs {
                let words = sentence_words(corpus, id, x.len())?;
                let s = corpus.get(id).expect("checked above");
                let tags = match grouping {
                    Grouping::Pos => Some(trimmed_annotation(id, s.pos.as_deref(), "POS tags", words)?),
                    _ => None,
                };
                let preds = match grouping {
                    Grouping::PredictabilityBin => {
                        let v = predictability.and_then(|p| p.get(id)).map(|v| v.values.as_slice());
                        Some(trimmed_annotation(id, v, "predictability", words)?)
                    }
                    _ => None,
                };
                for i in 0..x.len() {
                    tokens.push(Token {
                        x: x[i],
                        y: y[i],
                        tag: tags.as_ref().map(|t| t[i].clone()),
                        pred: preds.as_ref().map(|p| p[i]),
                    });
                }
            }
            total = tokens.len();
            if grouping == Grouping::Pos {
                pos_groups(&tokens, opts, &mut rows, &mut excluded);
            } else {
                bin_groups(&mut tokens, opts, &mut rows, &mut excluded)?;
            }
        }
        Grouping::SentenceLength => {
            if opts.length_width == 0 {
                return Err(AnalysisError::Parameter("length bucket width must be positive".into()));
            }
            let mut buckets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (_, x, y) in &pairs {
                let words = x.len() + 2;
                let start = words / opts.length_width * opts.length_width;
                buckets.entry(start).or_default().push(correlation(x, y, opts.kind)?);
            }
            total = pairs.len();
            for (start, coefs) in buckets {
                let key = format!("{}-{}", start, start + opts.length_width - 1);
                let n = coefs.len();
                if n < opts.min_n {
                    excluded.push(ExcludedGroup {
                        key,
                        n,
                        reason: format!("n = {n} below minimum {}", opts.min_n),
                    });
                } else {
                    rows.push(GroupRow {
                        key,
                        rho: coefs.iter().sum::<f64>() / n as f64,
                        n,
                        lower: None,
                        upper: None,
                    });
                }
            }
        }
    }

    Ok(GroupedReport {
        grouping,
        pair: (human.source.clone(), model.source.clone()),
        kind: opts.kind,
        rows,
        excluded,
        total,
    })
}

/// Tags ordered by descending frequency, then name.
fn tags_by_frequency<'a>(tags: impl Iterator<Item = &'a str>) -> Vec<(&'a str, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tags {
        *counts.entry(t).or_default() += 1;
    }
    let mut ordered: Vec<(&str, usize)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ordered
}

fn pos_groups(tokens: &[Token], opts: &GroupOptions, rows: &mut Vec<GroupRow>, excluded: &mut Vec<ExcludedGroup>) {
    let ordered = tags_by_frequency(tokens.iter().map(|t| t.tag.as_deref().expect("tagged")));
    let keep = opts.top_k.unwrap_or(usize::MAX);
    for (rank, (tag, count)) in ordered.into_iter().enumerate() {
        if rank >= keep {
            excluded.push(ExcludedGroup {
                key: tag.to_string(),
                n: count,
                reason: format!("not among the {keep} most frequent tags"),
            });
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = tokens
            .iter()
            .filter(|t| t.tag.as_deref() == Some(tag))
            .map(|t| (t.x, t.y))
            .unzip();
        score_group(tag.to_string(), &x, &y, opts, None, rows, excluded);
    }
}

/// Start offsets of `k` equal-count bins over `n` items; sizes differ by at
/// most one.
pub fn equal_count_bins(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    (0..k).map(|i| i * n / k..(i + 1) * n / k).collect()
}

fn bin_groups(
    tokens: &mut [Token],
    opts: &GroupOptions,
    rows: &mut Vec<GroupRow>,
    excluded: &mut Vec<ExcludedGroup>,
) -> Result<(), AnalysisError> {
    if opts.bins == 0 {
        return Err(AnalysisError::Parameter("bin count must be positive".into()));
    }
    if tokens.iter().any(|t| !t.pred.is_some_and(f64::is_finite)) {
        return Err(AnalysisError::Parameter("predictability values must be finite".into()));
    }
    tokens.sort_by(|a, b| a.pred.unwrap().total_cmp(&b.pred.unwrap()));
    let width = opts.bins.to_string().len();
    for (i, range) in equal_count_bins(tokens.len(), opts.bins).into_iter().enumerate() {
        let bin = &tokens[range];
        let key = format!("bin{:0width$}", i + 1);
        let limits = (!bin.is_empty()).then(|| (bin[0].pred.unwrap(), bin[bin.len() - 1].pred.unwrap()));
        let (x, y): (Vec<f64>, Vec<f64>) = bin.iter().map(|t| (t.x, t.y)).unzip();
        score_group(key, &x, &y, opts, limits, rows, excluded);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagMean {
    pub tag: String,
    pub mean_z: f64,
    pub n: usize,
}

/// Standardizes `values` as one population and averages the z-scores per
/// tag. Rows are ordered by descending tag frequency, then tag.
pub fn group_means(values: &[f64], tags: &[String]) -> Result<Vec<TagMean>, AnalysisError> {
    if values.len() != tags.len() {
        return Err(MetricsError::LengthMismatch(values.len(), tags.len()).into());
    }
    let z = standardize(values)?;
    let mut sums: HashMap<&str, f64> = HashMap::new();
    for (v, t) in z.iter().zip(tags) {
        *sums.entry(t.as_str()).or_default() += v;
    }
    Ok(tags_by_frequency(tags.iter().map(String::as_str))
        .into_iter()
        .map(|(tag, n)| TagMean {
            tag: tag.to_string(),
            mean_z: sums[tag] / n as f64,
            n,
        })
        .collect())
}

/// Mean corpus-wide z-score of `scores` per POS tag over all trimmed tokens
/// of analysable sentences.
pub fn mean_standardized_by_group(scores: &ScoreSet, corpus: &Corpus) -> Result<Vec<TagMean>, AnalysisError> {
    let mut values = Vec::new();
    let mut tags = Vec::new();
    for v in scores.iter() {
        let Some(trimmed) = v.trimmed_values() else {
            continue;
        };
        let words = sentence_words(corpus, &v.sentence_id, trimmed.len())?;
        let s = corpus.get(&v.sentence_id).expect("checked above");
        tags.extend(trimmed_annotation(&v.sentence_id, s.pos.as_deref(), "POS tags", words)?);
        values.extend(trimmed);
    }
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    group_means(&values, &tags)
}

/// Text key used to match the same sentence across corpora.
pub fn normalized_text(text: &str) -> String {
    let folded: String = text.nfkc().collect::<String>().to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `(id in a, id in b)` for sentences whose normalized text occurs in both
/// corpora, in the order of `a`. Repeated texts match their first occurrence.
pub fn find_duplicates(a: &Corpus, b: &Corpus) -> Vec<(String, String)> {
    let mut index: HashMap<String, &str> = HashMap::new();
    for s in &b.sentences {
        index.entry(normalized_text(&s.text)).or_insert(&s.id);
    }
    let mut seen = std::collections::HashSet::new();
    a.sentences
        .iter()
        .filter_map(|s| {
            let key = normalized_text(&s.text);
            let other = index.get(&key)?;
            seen.insert(key).then(|| (s.id.clone(), other.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuplicateReport {
    pub pairs: Vec<(String, String)>,
    pub reports: Vec<CorrelationReport>,
}

/// Looks up a vector under either id of a duplicate pair and re-keys it to
/// the first id.
fn rekey(set: &ScoreSet, pairs: &[(String, String)], from_second: bool, source: &str) -> ScoreSet {
    let mut out = ScoreSet::new(source);
    for (ka, kb) in pairs {
        let found = if from_second {
            set.get(kb)
        } else {
            set.get(ka).or_else(|| set.get(kb))
        };
        if let Some(v) = found {
            let mut v: ScoreVector = v.clone();
            v.sentence_id = ka.clone();
            v.source = source.to_string();
            out.insert(v);
        }
    }
    out
}

/// Token-level correlations on the sentences shared by a natural-reading
/// and a task-specific corpus: every model source against both gaze sets,
/// then gaze against gaze.
///
/// Model vectors may be keyed by either corpus's sentence ids.
pub fn duplicate_subset_report(
    nr: &Corpus,
    tsr: &Corpus,
    models: &[ScoreSet],
    kind: CorrelationKind,
    opts: CorrelateOptions,
) -> Result<DuplicateReport, AnalysisError> {
    let mut pairs = find_duplicates(nr, tsr);
    pairs.retain(|(a, b)| {
        let same = nr.get(a).map(|s| s.len()) == tsr.get(b).map(|s| s.len());
        if !same {
            log::warn!("duplicate `{a}`/`{b}` differs in word count; skipped");
        }
        same
    });
    if pairs.is_empty() {
        return Err(AnalysisError::NoDuplicates);
    }
    let nr_gaze = rekey(&nr.gaze_scores(), &pairs, false, "gaze.nr");
    let tsr_gaze = rekey(&tsr.gaze_scores(), &pairs, true, "gaze.tsr");
    let mut reports = Vec::new();
    for m in models {
        let m = rekey(m, &pairs, false, &m.source);
        for gaze in [&nr_gaze, &tsr_gaze] {
            reports.push(correlate_corpus(&m, gaze, CorrelationLevel::Token, kind, opts)?);
        }
    }
    reports.push(correlate_corpus(&nr_gaze, &tsr_gaze, CorrelationLevel::Token, kind, opts)?);
    Ok(DuplicateReport { pairs, reports })
}

/// For every length present in both inputs, `min(count_a, count_b)` ids
/// drawn from each side. Lengths are visited in ascending order with one
/// seeded generator; sampled ids keep input order within a length.
pub fn stratified_sample(
    a: &[(String, usize)],
    b: &[(String, usize)],
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), AnalysisError> {
    let by_len = |items: &[(String, usize)]| {
        let mut m: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (id, len) in items {
            m.entry(*len).or_default().push(id.clone());
        }
        m
    };
    let (la, lb) = (by_len(a), by_len(b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |ids: &[String], k: usize| {
        let mut idx = sample(&mut rng, ids.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| ids[i].clone()).collect::<Vec<_>>()
    };
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    for (len, ids_a) in &la {
        let Some(ids_b) = lb.get(len) else {
            continue;
        };
        let k = ids_a.len().min(ids_b.len());
        sa.extend(pick(ids_a, k));
        sb.extend(pick(ids_b, k));
    }
    if sa.is_empty() {
        return Err(AnalysisError::NoCommonLengths);
    }
    Ok((sa, sb))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceEntropy {
    pub side: String,
    pub source: String,
    pub mean_bits: f64,
    pub n: usize,
}

/// Sentences of a corpus that have a vector in every given set.
fn scored_lengths(corpus: &Corpus, sets: &[ScoreSet]) -> Vec<(String, usize)> {
    corpus
        .sentences
        .iter()
        .filter(|s| sets.iter().all(|set| set.get(&s.id).is_some()))
        .map(|s| (s.id.clone(), s.len()))
        .collect()
}

fn mean_entropy(set: &ScoreSet, ids: &[String]) -> Result<f64, AnalysisError> {
    let mut total = 0.0;
    for id in ids {
        total += entropy_bits(&set.get(id).expect("sampled from scored sentences").values)?;
    }
    Ok(total / ids.len() as f64)
}

/// Mean entropy of each source over a length-stratified sample of two
/// corpora, so that both sides contain every common length equally often.
pub fn stratified_entropy(
    corpus_a: &Corpus,
    sets_a: &[ScoreSet],
    corpus_b: &Corpus,
    sets_b: &[ScoreSet],
    seed: u64,
) -> Result<Vec<SourceEntropy>, AnalysisError> {
    if corpus_a.is_empty() || corpus_b.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let (ids_a, ids_b) = stratified_sample(
        &scored_lengths(corpus_a, sets_a),
        &scored_lengths(corpus_b, sets_b),
        seed,
    )?;
    let mut out = Vec::new();
    for (side, sets, ids) in [
        (&corpus_a.source_name, sets_a, &ids_a),
        (&corpus_b.source_name, sets_b, &ids_b),
    ] {
        for set in sets {
            out.push(SourceEntropy {
                side: side.clone(),
                source: set.source.clone(),
                mean_bits: mean_entropy(set, ids)?,
                n: ids.len(),
            });
        }
    }
    Ok(out)
}
