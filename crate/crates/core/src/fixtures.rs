//! Deterministic synthetic data for tests, demos and the acceptance suite:
//! two fixation corpora sharing some sentences, BERT-style attention
//! tensors, an imported score file, a frequency table, language-model
//! training text and weights for the mock scorer.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attnflow::{write_tensor, AttentionTensor, AttnError, ExportManifest, ManifestEntry};
use crate::corpus::{mean_fixation, write_score_file, Corpus, ScoreSet, ScoreVector, Sentence, Task};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// word, POS tag, sentiment weight
const LEXICON: &[(&str, &str, f64)] = &[
    ("the", "DET", 0.0),
    ("a", "DET", 0.0),
    ("this", "DET", 0.0),
    ("every", "DET", 0.0),
    ("good", "ADJ", 1.5),
    ("great", "ADJ", 2.0),
    ("remarkable", "ADJ", 1.2),
    ("dull", "ADJ", -1.5),
    ("terrible", "ADJ", -2.0),
    ("predictable", "ADJ", -1.0),
    ("long", "ADJ", 0.0),
    ("strange", "ADJ", 0.0),
    ("film", "NOUN", 0.0),
    ("story", "NOUN", 0.0),
    ("actor", "NOUN", 0.0),
    ("director", "NOUN", 0.0),
    ("performance", "NOUN", 0.0),
    ("ending", "NOUN", 0.0),
    ("script", "NOUN", 0.0),
    ("soundtrack", "NOUN", 0.0),
    ("character", "NOUN", 0.0),
    ("is", "VERB", 0.0),
    ("was", "VERB", 0.0),
    ("makes", "VERB", 0.0),
    ("feels", "VERB", 0.0),
    ("delivers", "VERB", 0.5),
    ("lacks", "VERB", -1.0),
    ("loves", "VERB", 1.0),
    ("very", "ADV", 0.0),
    ("quite", "ADV", 0.0),
    ("never", "ADV", -0.5),
    ("surprisingly", "ADV", 0.3),
    ("of", "ADP", 0.0),
    ("with", "ADP", 0.0),
    ("in", "ADP", 0.0),
    ("about", "ADP", 0.0),
    ("it", "PRON", 0.0),
    ("she", "PRON", 0.0),
    ("they", "PRON", 0.0),
    ("don't", "AUX", -0.3),
    ("can't", "AUX", -0.3),
    ("will", "AUX", 0.0),
];

const TEMPLATES: &[&[&str]] = &[
    &["DET", "ADJ", "NOUN", "VERB", "ADV", "ADJ"],
    &["PRON", "VERB", "DET", "ADJ", "NOUN", "ADP", "DET", "NOUN"],
    &["DET", "NOUN", "ADP", "DET", "NOUN", "VERB", "ADV", "ADJ"],
    &["PRON", "AUX", "VERB", "DET", "ADJ", "NOUN"],
    &["DET", "ADJ", "NOUN", "VERB", "DET", "NOUN"],
];
const EXTENSION: &[&str] = &["ADP", "DET", "ADJ", "NOUN"];

/// Frequency-table words that never occur in the corpora.
const EXTRA_FREQ_WORDS: &[(&str, u64)] = &[("and", 9000), ("to", 8000), ("cinema", 40), ("plot", 120)];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    /// Sentences in the task-reading (sentiment) corpus.
    pub sentences: usize,
    /// Sentiment sentences repeated in the natural-reading corpus.
    pub duplicates: usize,
    /// Natural-reading sentences not shared with the other corpus.
    pub nr_extra: usize,
    pub participants: usize,
    pub layers: usize,
    pub heads: usize,
    pub lm_sentences: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            sentences: 24,
            duplicates: 8,
            nr_extra: 12,
            participants: 3,
            layers: 4,
            heads: 4,
            lm_sentences: 400,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixtures {
    pub sr: Corpus,
    pub nr: Corpus,
    /// One tensor per sentiment sentence, keyed by sentence id.
    pub tensors: Vec<(String, AttentionTensor<f32>)>,
    pub manifest: ExportManifest,
    /// Imported per-word scores for the sentiment corpus (source `ez-reader`).
    pub imported: ScoreSet,
    pub freq: Vec<(String, u64)>,
    pub lm_text: Vec<Vec<String>>,
    pub weights: Vec<(String, f64)>,
}

/// The synthetic tokenizer: apostrophes become their own token and words
/// longer than seven characters split after five with a `##` continuation.
pub fn wordpiece(word: &str) -> Vec<String> {
    if let Some((pre, post)) = word.split_once('\'') {
        return [pre, "'", post]
            .into_iter()
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect();
    }
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > 7 {
        vec![chars[..5].iter().collect(), format!("##{}", chars[5..].iter().collect::<String>())]
    } else {
        vec![word.to_string()]
    }
}

fn entry(word: &str) -> (&'static str, &'static str, f64) {
    let lower = word.to_lowercase();
    *LEXICON
        .iter()
        .find(|(w, _, _)| *w == lower)
        .expect("fixture words come from the lexicon")
}

fn is_function_tag(tag: &str) -> bool {
    matches!(tag, "DET" | "ADP" | "PRON")
}

fn generate_words(rng: &mut ChaCha8Rng) -> Vec<(&'static str, &'static str)> {
    let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
    let extensions = rng.gen_range(0..=2);
    let tags = template.iter().chain(EXTENSION.iter().cycle().take(EXTENSION.len() * extensions));
    tags.map(|tag| {
        let options: Vec<&(&str, &str, f64)> = LEXICON.iter().filter(|(_, t, _)| t == tag).collect();
        let (w, t, _) = options[rng.gen_range(0..options.len())];
        (*w, *t)
    })
    .collect()
}

/// Expected total fixation of one word before reader noise.
fn base_fixation(word: &str, task_bonus: f64) -> f64 {
    let (_, tag, weight) = entry(word);
    let content = if is_function_tag(tag) { 0.0 } else { 40.0 };
    90.0 + 22.0 * word.chars().count() as f64 + content + 60.0 * weight.abs() * (1.0 + task_bonus)
}

fn participant_matrix(rng: &mut ChaCha8Rng, words: &[String], participants: usize, task_bonus: f64) -> Vec<Vec<f64>> {
    (0..participants)
        .map(|_| {
            words
                .iter()
                .map(|w| {
                    let (_, tag, _) = entry(w);
                    if is_function_tag(tag) && rng.gen_bool(0.25) {
                        0.0
                    } else {
                        (base_fixation(w, task_bonus) * rng.gen_range(0.8..1.2)).round()
                    }
                })
                .collect()
        })
        .collect()
}

fn make_sentence(
    rng: &mut ChaCha8Rng,
    id: String,
    words: Vec<String>,
    cfg: &FixtureConfig,
    task_bonus: f64,
    labelled: bool,
) -> Sentence {
    let matrix = participant_matrix(rng, &words, cfg.participants, task_bonus);
    let fixation_ms = mean_fixation(&matrix).expect("non-empty rectangular matrix");
    let pos = words.iter().map(|w| entry(w).1.to_string()).collect();
    let score: f64 = words.iter().map(|w| entry(w).2).sum();
    Sentence {
        id,
        text: words.join(" "),
        fixation_ms,
        per_participant_ms: Some(matrix),
        pos: Some(pos),
        label: labelled.then_some(usize::from(score > 0.0)),
        words,
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Row-stochastic attention for one sequence. Heads differ in how strongly
/// they follow token salience and how local they are; the first layer also
/// favours the diagonal.
fn attention(rng: &mut ChaCha8Rng, salience: &[f64], layers: usize, heads: usize) -> Vec<f32> {
    const STRENGTH: [f64; 4] = [-0.5, 0.8, 1.5, 2.5];
    const LOCALITY: [f64; 4] = [0.6, 0.1, 0.3, 0.0];
    let n = salience.len();
    let mut out = Vec::with_capacity(layers * heads * n * n);
    let mut logits = vec![0.0f64; n];
    for layer in 0..layers {
        for head in 0..heads {
            let s = STRENGTH[head % 4];
            let loc = LOCALITY[(head + layer) % 4];
            for q in 0..n {
                for (k, l) in logits.iter_mut().enumerate() {
                    let dist = q.abs_diff(k) as f64;
                    let diag = if layer == 0 && q == k { 1.5 } else { 0.0 };
                    *l = s * salience[k] - loc * dist + diag + 0.3 * rng.gen_range(-1.0..1.0);
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                out.extend(exps.iter().map(|e| (e / z) as f32));
            }
        }
    }
    out
}

fn tensor_for(rng: &mut ChaCha8Rng, words: &[String], cfg: &FixtureConfig) -> Result<AttentionTensor<f32>, AttnError> {
    let mut tokens = vec![CLS.to_string()];
    let mut salience = vec![1.5];
    for w in words {
        let (_, tag, weight) = entry(w);
        let content = if is_function_tag(tag) { 0.0 } else { 0.5 };
        for piece in wordpiece(w) {
            let cont = if piece.starts_with("##") { -0.3 } else { 0.0 };
            salience.push(0.02 * w.chars().count() as f64 + 0.8 * weight.abs() + content + cont);
            tokens.push(piece);
        }
    }
    tokens.push(SEP.to_string());
    salience.push(1.5);
    let n = tokens.len();
    let mut mask = vec![false; n];
    mask[0] = true;
    mask[n - 1] = true;
    let values = attention(rng, &salience, cfg.layers, cfg.heads);
    AttentionTensor::new(cfg.layers, cfg.heads, n, values, tokens, Some(mask))
}

pub fn generate(cfg: &FixtureConfig) -> Fixtures {
    assert!(cfg.duplicates <= cfg.sentences, "more duplicates than sentences");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let sr_sentences: Vec<Sentence> = (0..cfg.sentences)
        .map(|i| {
            let words = generate_words(&mut rng).into_iter().map(|(w, _)| w.to_string()).collect();
            make_sentence(&mut rng, format!("sr_{i:03}"), words, cfg, 0.5, true)
        })
        .collect();

    let mut nr_sentences = Vec::new();
    for (i, s) in sr_sentences.iter().take(cfg.duplicates).enumerate() {
        let mut words = s.words.clone();
        words[0] = capitalize(&words[0]);
        let mut nr = make_sentence(&mut rng, format!("nr_{i:03}"), words, cfg, 0.0, false);
        nr.text = format!("{}  {}", nr.words[0], nr.words[1..].join(" "));
        nr_sentences.push(nr);
    }
    for i in cfg.duplicates..cfg.duplicates + cfg.nr_extra {
        let words = generate_words(&mut rng).into_iter().map(|(w, _)| w.to_string()).collect();
        nr_sentences.push(make_sentence(&mut rng, format!("nr_{i:03}"), words, cfg, 0.0, false));
    }

    let mut tensors = Vec::new();
    let mut entries = Vec::new();
    for s in &sr_sentences {
        let t = tensor_for(&mut rng, &s.words, cfg).expect("generated attention is row-stochastic");
        entries.push(ManifestEntry {
            id: s.id.clone(),
            path: format!("tensors/{}.atnf", s.id),
            special: vec![0, t.seq_len() - 1],
        });
        tensors.push((s.id.clone(), t));
    }
    let manifest = ExportManifest {
        model: "synthetic-encoder".into(),
        tokenizer: "synthetic-wordpiece".into(),
        layers: cfg.layers,
        heads: cfg.heads,
        task_head: None,
        note: None,
        sentences: entries,
        skipped: Vec::new(),
    };

    let mut imported = ScoreSet::new("ez-reader");
    for s in &sr_sentences {
        let values = s
            .fixation_ms
            .iter()
            .map(|f| (f * rng.gen_range(0.7..1.3) + 5.0).round())
            .collect();
        imported.insert(ScoreVector::new(&s.id, "ez-reader", values));
    }

    let mut freq: Vec<(String, u64)> = LEXICON
        .iter()
        .enumerate()
        .map(|(i, (w, tag, _))| {
            let base = match *tag {
                "DET" | "ADP" | "PRON" | "AUX" => 4000,
                "VERB" => 800,
                "ADV" => 400,
                "NOUN" => 300,
                _ => 150,
            };
            (w.to_string(), base / (1 + i as u64 % 5))
        })
        .chain(EXTRA_FREQ_WORDS.iter().map(|(w, c)| (w.to_string(), *c)))
        .collect();
    freq.sort();

    let mut lm_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut lm_text: Vec<Vec<String>> = (0..cfg.lm_sentences)
        .map(|_| generate_words(&mut lm_rng).into_iter().map(|(w, _)| w.to_string()).collect())
        .collect();
    lm_text.shuffle(&mut lm_rng);

    let weights = LEXICON
        .iter()
        .filter(|(_, _, w)| *w != 0.0)
        .map(|(w, _, v)| (w.to_string(), *v))
        .collect();

    Fixtures {
        sr: Corpus {
            task: Task::SR,
            sentences: sr_sentences,
            source_name: "synthetic-sr".into(),
        },
        nr: Corpus {
            task: Task::NR,
            sentences: nr_sentences,
            source_name: "synthetic-nr".into(),
        },
        tensors,
        manifest,
        imported,
        freq,
        lm_text,
        weights,
    }
}

pub const SR_CORPUS_FILE: &str = "corpus_sr.jsonl";
pub const NR_CORPUS_FILE: &str = "corpus_nr.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMPORTED_SCORES_FILE: &str = "scores_ez.jsonl";
pub const FREQ_FILE: &str = "freq.tsv";
pub const LM_TEXT_FILE: &str = "lm_train.txt";
pub const WEIGHTS_FILE: &str = "mock_weights.tsv";

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Writes every fixture file under `dir` (created if needed).
pub fn write_fixtures(fx: &Fixtures, dir: &Path) -> Result<(), AttnError> {
    fs::create_dir_all(dir.join("tensors"))?;
    for (corpus, name) in [(&fx.sr, SR_CORPUS_FILE), (&fx.nr, NR_CORPUS_FILE)] {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        corpus.write_jsonl(&mut w)?;
        w.flush()?;
    }
    for ((id, t), e) in fx.tensors.iter().zip(&fx.manifest.sentences) {
        debug_assert_eq!(id, &e.id);
        write_tensor(dir.join(&e.path), t)?;
    }
    fx.manifest.write(dir.join(MANIFEST_FILE))?;
    write_score_file(dir.join(IMPORTED_SCORES_FILE), fx.imported.iter())
        .map_err(|e| AttnError::Format(e.to_string()))?;
    write_lines(&dir.join(FREQ_FILE), fx.freq.iter().map(|(w, c)| format!("{w}\t{c}")))?;
    write_lines(&dir.join(LM_TEXT_FILE), fx.lm_text.iter().map(|s| s.join(" ")))?;
    write_lines(&dir.join(WEIGHTS_FILE), fx.weights.iter().map(|(w, v)| format!("{w}\t{v}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Aligner;

    #[test]
    fn tokenizer_shapes() {
        assert_eq!(wordpiece("don't"), vec!["don", "'", "t"]);
        assert_eq!(wordpiece("film"), vec!["film"]);
        assert_eq!(wordpiece("performance"), vec!["perfo", "##rmance"]);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = FixtureConfig::default();
        let (a, b) = (generate(&cfg), generate(&cfg));
        assert_eq!(a.sr, b.sr);
        assert_eq!(a.nr, b.nr);
        assert_eq!(a.tensors, b.tensors);
        let other = generate(&FixtureConfig { seed: 8, ..cfg });
        assert_ne!(a.sr, other.sr);
    }

    #[test]
    fn fixtures_are_consistent() {
        let fx = generate(&FixtureConfig::default());
        assert_eq!(fx.sr.len(), 24);
        assert_eq!(fx.nr.len(), 20);
        assert!(fx.sr.sentences.iter().all(|s| s.label.is_some() && s.len() >= 6));
        let labels: Vec<usize> = fx.sr.sentences.iter().filter_map(|s| s.label).collect();
        assert!(labels.contains(&0) && labels.contains(&1));
        let aligner = Aligner::default();
        for (s, (id, t)) in fx.sr.sentences.iter().zip(&fx.tensors) {
            assert_eq!(&s.id, id);
            let al = aligner.align(&s.words, &t.tokens, t.special_mask.as_deref()).unwrap();
            assert_eq!(al.num_words(), s.len());
            assert_eq!(al.num_aligned(), t.seq_len() - 2);
        }
        assert_eq!(crate::analyses::find_duplicates(&fx.nr, &fx.sr).len(), 8);
    }
}
