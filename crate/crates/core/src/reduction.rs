//! Input-reduction faithfulness: reveal words in importance order to an
//! external classifier and track the probability of the true label.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;

/// Allowed deviation of a response's probabilities from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_GRID: usize = 101;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("sentence `{sentence}`, step {step}: {message}")]
    Transport {
        sentence: String,
        step: usize,
        message: String,
    },
    #[error("sentence `{0}` has no label")]
    MissingLabel(String),
    #[error("sentence `{id}`: label {label} but scorer returned {classes} classes")]
    LabelOutOfRange { id: String, label: usize, classes: usize },
    #[error("sentence `{0}` is empty")]
    EmptySentence(String),
    #[error("order is not a permutation of 0..{0}")]
    BadOrder(usize),
    #[error("no curves to aggregate")]
    NoCurves,
    #[error("grid needs at least 2 points, got {0}")]
    BadGrid(usize),
    #[error("bad scorer endpoint `{0}`")]
    Endpoint(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Indices in descending score order, leftmost first among ties.
pub fn rank_tokens(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// A classifier returning class probabilities for a (possibly partial)
/// word sequence.
pub trait Scorer {
    fn score(&mut self, words: &[String], task: &str) -> Result<Vec<f64>, ReductionError>;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&mut self, words: &[String], task: &str) -> Result<Vec<f64>, ReductionError> {
        (**self).score(words, task)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binary scorer with `P(class 1) = logistic(bias + sum of word weights)`.
/// Words are looked up lower-cased; unknown words weigh 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockLinearScorer {
    weights: HashMap<String, f64>,
    pub bias: f64,
}

impl MockLinearScorer {
    pub fn new(weights: HashMap<String, f64>) -> Self {
        let weights = weights.into_iter().map(|(w, v)| (w.to_lowercase(), v)).collect();
        MockLinearScorer { weights, bias: 0.0 }
    }

    /// Reads `word<TAB>weight` lines.
    pub fn from_tsv<R: Read>(reader: R) -> Result<Self, ReductionError> {
        let mut weights = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| ReductionError::Parse { line: i + 1, message };
            let (word, w) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected `word<TAB>weight`".into()))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("weight `{w}`: {e}")))?;
            if !w.is_finite() {
                return Err(parse_err(format!("weight `{w}` is not finite")));
            }
            weights.insert(word.to_lowercase(), w);
        }
        Ok(MockLinearScorer { weights, bias: 0.0 })
    }

    pub fn weight(&self, word: &str) -> f64 {
        self.weights.get(&word.to_lowercase()).copied().unwrap_or(0.0)
    }

    /// Per-word contribution towards `label`: the weight for class 1 and
    /// its negation for class 0.
    pub fn contributions<S: AsRef<str>>(&self, words: &[S], label: usize) -> Vec<f64> {
        let sign = if label == 1 { 1.0 } else { -1.0 };
        words.iter().map(|w| sign * self.weight(w.as_ref())).collect()
    }
}

impl Scorer for MockLinearScorer {
    fn score(&mut self, words: &[String], _task: &str) -> Result<Vec<f64>, ReductionError> {
        let z = self.bias + words.iter().map(|w| self.weight(w)).sum::<f64>();
        let p = logistic(z);
        Ok(vec![1.0 - p, p])
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: u64,
    pub words: Vec<String>,
    pub task: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Client side of the newline-delimited JSON scorer protocol.
pub struct ProtocolScorer<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
}

impl<R: BufRead, W: Write> ProtocolScorer<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        ProtocolScorer {
            reader,
            writer,
            next_id: 1,
        }
    }
}

fn check_probs(probs: &[f64]) -> Result<(), ReductionError> {
    if probs.is_empty() {
        return Err(ReductionError::Protocol("empty probability vector".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ReductionError::Protocol(format!("invalid probabilities {probs:?}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(ReductionError::Protocol(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

impl<R: BufRead, W: Write> Scorer for ProtocolScorer<R, W> {
    fn score(&mut self, words: &[String], task: &str) -> Result<Vec<f64>, ReductionError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = ScoreRequest {
            id,
            words: words.to_vec(),
            task: task.to_string(),
        };
        let mut line = serde_json::to_string(&req).map_err(|e| ReductionError::Protocol(e.to_string()))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;

        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(ReductionError::Protocol("scorer closed the connection".into()));
        }
        let resp: ScoreResponse = serde_json::from_str(reply.trim_end())
            .map_err(|e| ReductionError::Protocol(format!("malformed response: {e}")))?;
        if resp.id != Some(id) {
            return Err(ReductionError::Protocol(format!(
                "response id {:?} does not match request id {id}",
                resp.id
            )));
        }
        if let Some(err) = resp.error {
            return Err(ReductionError::Protocol(format!("scorer reported: {err}")));
        }
        let probs = resp
            .probs
            .ok_or_else(|| ReductionError::Protocol("response without probs".into()))?;
        check_probs(&probs)?;
        Ok(probs)
    }
}

/// Scorer running as a child process speaking the protocol on stdio.
pub struct ChildScorer {
    child: Child,
    inner: ProtocolScorer<BufReader<ChildStdout>, ChildStdin>,
}

impl ChildScorer {
    pub fn spawn(program: &str, args: &[&str]) -> Result<Self, ReductionError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ChildScorer {
            child,
            inner: ProtocolScorer::new(BufReader::new(stdout), stdin),
        })
    }
}

impl Scorer for ChildScorer {
    fn score(&mut self, words: &[String], task: &str) -> Result<Vec<f64>, ReductionError> {
        self.inner.score(words, task)
    }
}

impl Drop for ChildScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Opens a scorer from an endpoint string: `tcp://host:port`,
/// `exec:<program> [args..]` or `mock:<weights.tsv>`.
pub fn connect(endpoint: &str) -> Result<Box<dyn Scorer>, ReductionError> {
    if let Some(addr) = endpoint.strip_prefix("tcp://") {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Box::new(ProtocolScorer::new(reader, stream)))
    } else if let Some(cmd) = endpoint.strip_prefix("exec:") {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| ReductionError::Endpoint(endpoint.to_string()))?;
        let args: Vec<&str> = parts.collect();
        Ok(Box::new(ChildScorer::spawn(program, &args)?))
    } else if let Some(path) = endpoint.strip_prefix("mock:") {
        Ok(Box::new(MockLinearScorer::from_tsv(File::open(path)?)?))
    } else {
        Err(ReductionError::Endpoint(endpoint.to_string()))
    }
}

/// Server side of the protocol: answers each request line with `scorer`
/// until the input ends. Malformed requests get an error response and the
/// loop continues.
pub fn serve<S: Scorer + ?Sized, R: BufRead, W: Write>(
    scorer: &mut S,
    reader: R,
    mut writer: W,
) -> Result<usize, ReductionError> {
    let mut answered = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<ScoreRequest>(&line) {
            Ok(req) => match scorer.score(&req.words, &req.task) {
                Ok(probs) => ScoreResponse {
                    id: Some(req.id),
                    probs: Some(probs),
                    error: None,
                },
                Err(e) => ScoreResponse {
                    id: Some(req.id),
                    probs: None,
                    error: Some(e.to_string()),
                },
            },
            Err(e) => ScoreResponse {
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64())),
                probs: None,
                error: Some(format!("malformed request: {e}")),
            },
        };
        let mut out = serde_json::to_string(&resp).map_err(|e| ReductionError::Protocol(e.to_string()))?;
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
        answered += 1;
    }
    Ok(answered)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCurve {
    pub sentence_id: String,
    pub order: Vec<usize>,
    /// Probability of the true label after revealing 1, 2, .. words.
    pub p_true: Vec<f64>,
    pub auc: f64,
    /// 1-based step at which the argmax first equals the true label.
    pub first_flip: Option<usize>,
    pub first_token_pos: Option<String>,
    /// POS of the word revealed at the first flip.
    pub first_flip_pos: Option<String>,
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Reveals `order` one word at a time (kept in sentence order, hidden words
/// omitted) and records the probability of the true label at every step.
pub fn run_reduction<S: Scorer + ?Sized>(
    sentence: &Sentence,
    order: &[usize],
    scorer: &mut S,
    task: &str,
) -> Result<ReductionCurve, ReductionError> {
    let n = sentence.words.len();
    if n == 0 {
        return Err(ReductionError::EmptySentence(sentence.id.clone()));
    }
    let label = sentence
        .label
        .ok_or_else(|| ReductionError::MissingLabel(sentence.id.clone()))?;
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(ReductionError::BadOrder(n));
    }

    let mut revealed = vec![false; n];
    let mut p_true = Vec::with_capacity(n);
    let mut first_flip = None;
    for (step, &pos) in order.iter().enumerate() {
        revealed[pos] = true;
        let words: Vec<String> = sentence
            .words
            .iter()
            .zip(&revealed)
            .filter(|(_, &r)| r)
            .map(|(w, _)| w.clone())
            .collect();
        let probs = scorer
            .score(&words, task)
            .map_err(|e| ReductionError::Transport {
                sentence: sentence.id.clone(),
                step: step + 1,
                message: e.to_string(),
            })?;
        let p = *probs.get(label).ok_or_else(|| ReductionError::LabelOutOfRange {
            id: sentence.id.clone(),
            label,
            classes: probs.len(),
        })?;
        if first_flip.is_none() && argmax(&probs) == label {
            first_flip = Some(step + 1);
        }
        p_true.push(p);
    }
    let auc = p_true.iter().sum::<f64>() / n as f64;
    let pos_of = |i: usize| sentence.pos.as_ref().map(|tags| tags[i].clone());
    Ok(ReductionCurve {
        sentence_id: sentence.id.clone(),
        order: order.to_vec(),
        p_true,
        auc,
        first_flip,
        first_token_pos: pos_of(order[0]),
        first_flip_pos: first_flip.and_then(|t| pos_of(order[t - 1])),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionSummary {
    pub curves: usize,
    /// Fraction of words revealed, `0..=1`.
    pub grid: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub mean_auc: f64,
    pub no_flip: usize,
    pub first_token_pos: BTreeMap<String, f64>,
    pub first_flip_pos: BTreeMap<String, f64>,
}

/// Curve value at grid point `i` of `grid`. Step `t` sits at fraction
/// `t / n`; values before the first step hold `p_true[0]`.
fn resample_point(p: &[f64], i: usize, grid: usize) -> f64 {
    let n = p.len();
    let den = grid - 1;
    let num = i * n;
    let lo = num / den;
    if lo < 1 {
        return p[0];
    }
    if lo >= n {
        return p[n - 1];
    }
    let frac = (num % den) as f64 / den as f64;
    if frac == 0.0 {
        p[lo - 1]
    } else {
        p[lo - 1] * (1.0 - frac) + p[lo] * frac
    }
}

pub fn resample(p_true: &[f64], grid: usize) -> Vec<f64> {
    (0..grid).map(|i| resample_point(p_true, i, grid)).collect()
}

fn fractions(tags: impl Iterator<Item = String>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in tags {
        *counts.entry(t).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect()
}

pub fn aggregate_reduction(curves: &[ReductionCurve], grid: usize) -> Result<ReductionSummary, ReductionError> {
    if curves.is_empty() {
        return Err(ReductionError::NoCurves);
    }
    if grid < 2 {
        return Err(ReductionError::BadGrid(grid));
    }
    let mut mean_curve = vec![0.0; grid];
    for c in curves {
        if c.p_true.is_empty() {
            return Err(ReductionError::EmptySentence(c.sentence_id.clone()));
        }
        for (m, v) in mean_curve.iter_mut().zip(resample(&c.p_true, grid)) {
            *m += v;
        }
    }
    let k = curves.len() as f64;
    mean_curve.iter_mut().for_each(|m| *m /= k);
    Ok(ReductionSummary {
        curves: curves.len(),
        grid: (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect(),
        mean_curve,
        mean_auc: curves.iter().map(|c| c.auc).sum::<f64>() / k,
        no_flip: curves.iter().filter(|c| c.first_flip.is_none()).count(),
        first_token_pos: fractions(curves.iter().filter_map(|c| c.first_token_pos.clone())),
        first_flip_pos: fractions(curves.iter().filter_map(|c| c.first_flip_pos.clone())),
    })
}

pub fn write_curves<W: Write>(curves: &[ReductionCurve], out: W) -> Result<(), ReductionError> {
    let mut out = BufWriter::new(out);
    for c in curves {
        serde_json::to_writer(&mut out, c).map_err(|e| ReductionError::Protocol(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<Vec<ReductionCurve>, ReductionError> {
    let mut curves = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        curves.push(serde_json::from_str(&line).map_err(|e| ReductionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(curves)
}
