//! Attention tensors and attention flow.
//!
//! Tokens at consecutive layers form a layered graph whose edge capacities
//! are head-averaged attention weights; the importance of an input token is
//! the maximum flow it can push to the target nodes at a chosen layer.

mod atnf;
mod graph;
mod manifest;
mod maxflow;

use thiserror::Error;

use crate::corpus::{pool_scores, trim_boundaries, Alignment};
use crate::metrics::spearman;
use crate::Scalar;

pub use atnf::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, ATNF_MAGIC, ATNF_VERSION};
pub use graph::{build_flow_graph, LayeredGraph};
pub use manifest::{ExportManifest, ManifestEntry, SkippedEntry};
pub use maxflow::{max_flow, FlowNetwork, Node, CAPACITY_EPS};

/// Row-sum tolerance accepted when loading tensors.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum AttnError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("attention row (layer {layer}, head {head}, query {query}) sums to {sum}")]
    RowSum {
        layer: usize,
        head: usize,
        query: usize,
        sum: f64,
    },
    #[error("attention value at (layer {layer}, head {head}, query {query}, key {key}) is {value}, outside [0, 1]")]
    OutOfRange {
        layer: usize,
        head: usize,
        query: usize,
        key: usize,
        value: f64,
    },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("layer {layer} out of range for {layers} layers")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("target position {position} out of range for {n} tokens")]
    PositionOutOfRange { position: usize, n: usize },
    #[error("invalid flow endpoints: {0}")]
    Endpoints(String),
    #[error("every head yields a degenerate correlation")]
    AllHeadsDegenerate,
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Self-attention probabilities `a[l, h, q, k]` for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor<T> {
    layers: usize,
    heads: usize,
    seq_len: usize,
    values: Vec<T>,
    pub tokens: Vec<String>,
    pub special_mask: Option<Vec<bool>>,
}

impl<T: Scalar> AttentionTensor<T> {
    /// Builds a tensor from `[l][h][q][k]`-ordered values and validates it.
    pub fn new(
        layers: usize,
        heads: usize,
        seq_len: usize,
        values: Vec<T>,
        tokens: Vec<String>,
        special_mask: Option<Vec<bool>>,
    ) -> Result<Self, AttnError> {
        if layers == 0 || heads == 0 || seq_len == 0 {
            return Err(AttnError::Shape(format!(
                "layers, heads and seq_len must be positive (got {layers}, {heads}, {seq_len})"
            )));
        }
        if values.len() != layers * heads * seq_len * seq_len {
            return Err(AttnError::Shape(format!(
                "{} values for shape {layers}x{heads}x{seq_len}x{seq_len}",
                values.len()
            )));
        }
        if tokens.len() != seq_len {
            return Err(AttnError::Shape(format!(
                "{} tokens for sequence length {seq_len}",
                tokens.len()
            )));
        }
        if let Some(mask) = &special_mask {
            if mask.len() != seq_len {
                return Err(AttnError::Shape(format!(
                    "special mask has {} entries for sequence length {seq_len}",
                    mask.len()
                )));
            }
        }
        let t = AttentionTensor {
            layers,
            heads,
            seq_len,
            values,
            tokens,
            special_mask,
        };
        t.validate(ROW_SUM_TOLERANCE)?;
        Ok(t)
    }

    /// Checks value range and row sums.
    pub fn validate(&self, tolerance: f64) -> Result<(), AttnError> {
        let n = self.seq_len;
        for layer in 0..self.layers {
            for head in 0..self.heads {
                for query in 0..n {
                    let row = self.row(layer, head, query);
                    let mut sum = 0.0f64;
                    for (key, &v) in row.iter().enumerate() {
                        let value = v.to_f64_lossy();
                        if !(0.0..=1.0 + tolerance).contains(&value) {
                            return Err(AttnError::OutOfRange {
                                layer,
                                head,
                                query,
                                key,
                                value,
                            });
                        }
                        sum += value;
                    }
                    if (sum - 1.0).abs() > tolerance {
                        return Err(AttnError::RowSum {
                            layer,
                            head,
                            query,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> T {
        self.values[self.offset(layer, head) + query * self.seq_len + key]
    }

    /// Attention of `query` over all keys.
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[T] {
        let start = self.offset(layer, head) + query * self.seq_len;
        &self.values[start..start + self.seq_len]
    }

    /// Row-major `n x n` matrix of one head.
    pub fn head_matrix(&self, layer: usize, head: usize) -> &[T] {
        let start = self.offset(layer, head);
        &self.values[start..start + self.seq_len * self.seq_len]
    }

    fn offset(&self, layer: usize, head: usize) -> usize {
        (layer * self.heads + head) * self.seq_len * self.seq_len
    }

    pub fn is_special(&self, i: usize) -> bool {
        self.special_mask.as_ref().is_some_and(|m| m[i])
    }

    /// Head mean of one layer, row-major `n x n`. Heads are summed in index
    /// order and then divided by the head count.
    pub fn head_mean(&self, layer: usize) -> Vec<T> {
        let nn = self.seq_len * self.seq_len;
        let mut acc = vec![T::zero(); nn];
        for head in 0..self.heads {
            for (a, &v) in acc.iter_mut().zip(self.head_matrix(layer, head)) {
                *a = *a + v;
            }
        }
        let h = T::from_usize_lossy(self.heads);
        acc.into_iter().map(|v| v / h).collect()
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> AttentionTensor<U> {
        AttentionTensor {
            layers: self.layers,
            heads: self.heads,
            seq_len: self.seq_len,
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
            tokens: self.tokens.clone(),
            special_mask: self.special_mask.clone(),
        }
    }
}

/// Which top-layer nodes absorb the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowTarget {
    /// All nodes of the top layer, joined by an uncapacitated super-sink.
    #[default]
    Aggregate,
    /// A single position, e.g. a classification token.
    Position(usize),
}

/// Attention-flow importance of every input token, propagated back from
/// attention layer `target_layer` (0-based).
pub fn flow_importance<T: Scalar>(
    tensor: &AttentionTensor<T>,
    target_layer: usize,
    target: FlowTarget,
    residual: bool,
) -> Result<Vec<T>, AttnError> {
    if target_layer >= tensor.layers() {
        return Err(AttnError::LayerOutOfRange {
            layer: target_layer,
            layers: tensor.layers(),
        });
    }
    let n = tensor.seq_len();
    let top = target_layer + 1;
    let sinks: Vec<Node> = match target {
        FlowTarget::Aggregate => (0..n).map(|i| Node::new(top, i)).collect(),
        FlowTarget::Position(p) => {
            if p >= n {
                return Err(AttnError::PositionOutOfRange { position: p, n });
            }
            vec![Node::new(top, p)]
        }
    };
    let graph = build_flow_graph(tensor, residual).truncated(top);
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .map(|i| max_flow(&graph, Node::new(0, i), &sinks))
        .collect()
}

/// Attention received per key in the final layer, averaged over heads and queries.
pub fn mean_last_layer<T: Scalar>(tensor: &AttentionTensor<T>) -> Vec<T> {
    let last = tensor.layers() - 1;
    let n = tensor.seq_len();
    let mut acc = vec![T::zero(); n];
    for head in 0..tensor.heads() {
        for q in 0..n {
            for (a, &v) in acc.iter_mut().zip(tensor.row(last, head, q)) {
                *a = *a + v;
            }
        }
    }
    let denom = T::from_usize_lossy(tensor.heads() * n);
    acc.into_iter().map(|v| v / denom).collect()
}

/// Attention received per key from one final-layer head, averaged over queries.
pub fn head_received<T: Scalar>(tensor: &AttentionTensor<T>, head: usize) -> Vec<T> {
    let last = tensor.layers() - 1;
    let n = tensor.seq_len();
    let mut acc = vec![T::zero(); n];
    for q in 0..n {
        for (a, &v) in acc.iter_mut().zip(tensor.row(last, head, q)) {
            *a = *a + v;
        }
    }
    let denom = T::from_usize_lossy(n);
    acc.into_iter().map(|v| v / denom).collect()
}

/// Final-layer head whose received attention best matches `human` in
/// Spearman correlation, after pooling to words and trimming boundaries.
/// Ties go to the lowest head index.
pub fn oracle_head<T: Scalar>(
    tensor: &AttentionTensor<T>,
    human: &[T],
    alignment: &Alignment,
) -> Result<(usize, T), AttnError> {
    if human.len() != alignment.num_words() {
        return Err(AttnError::Shape(format!(
            "{} human scores for {} aligned words",
            human.len(),
            alignment.num_words()
        )));
    }
    let human = trim_boundaries(human).ok_or(AttnError::AllHeadsDegenerate)?;
    let mut best: Option<(usize, T)> = None;
    for head in 0..tensor.heads() {
        let words = pool_scores(&head_received(tensor, head), alignment)?;
        let Some(words) = trim_boundaries(&words) else {
            continue;
        };
        let Ok(rho) = spearman(&words, &human) else {
            continue;
        };
        if best.is_none_or(|(_, b)| rho > b) {
            best = Some((head, rho));
        }
    }
    best.ok_or(AttnError::AllHeadsDegenerate)
}
