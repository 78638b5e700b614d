use super::AttentionTensor;
use crate::Scalar;

/// Flow network over `num_layers` node layers of `n` tokens each.
///
/// `capacity(l, k, q)` is the capacity of the edge from node `(l, k)` to
/// node `(l + 1, q)`; no other edges exist.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGraph<T> {
    n: usize,
    // one row-major [q][k] matrix per pair of consecutive node layers
    matrices: Vec<Vec<T>>,
}

impl<T: Scalar> LayeredGraph<T> {
    /// Builds a graph from row-major `[q][k]` matrices, one per layer transition.
    pub fn from_matrices(n: usize, matrices: Vec<Vec<T>>) -> Self {
        assert!(
            matrices.iter().all(|m| m.len() == n * n),
            "every capacity matrix must be n x n"
        );
        assert!(
            matrices.iter().flatten().all(|&c| c >= T::zero()),
            "capacities must be non-negative"
        );
        LayeredGraph { n, matrices }
    }

    pub fn num_layers(&self) -> usize {
        self.matrices.len() + 1
    }

    pub fn nodes_per_layer(&self) -> usize {
        self.n
    }

    pub fn capacity(&self, layer: usize, from: usize, to: usize) -> T {
        self.matrices[layer][to * self.n + from]
    }

    pub fn matrix(&self, layer: usize) -> &[T] {
        &self.matrices[layer]
    }

    /// Keeps node layers `0..=top`.
    pub fn truncated(mut self, top: usize) -> Self {
        self.matrices.truncate(top);
        self
    }

    /// Multiplies every capacity by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        LayeredGraph {
            n: self.n,
            matrices: self
                .matrices
                .iter()
                .map(|m| m.iter().map(|&c| c * factor).collect())
                .collect(),
        }
    }
}

/// Head-averaged attention per layer as edge capacities. With `residual`,
/// each averaged matrix becomes `0.5 A + 0.5 I` with rows renormalised.
pub fn build_flow_graph<T: Scalar>(tensor: &AttentionTensor<T>, residual: bool) -> LayeredGraph<T> {
    let n = tensor.seq_len();
    let half = T::lit(0.5);
    let matrices = (0..tensor.layers())
        .map(|layer| {
            let mut m = tensor.head_mean(layer);
            if residual {
                for q in 0..n {
                    let row = &mut m[q * n..(q + 1) * n];
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = half * *v + if k == q { half } else { T::zero() };
                    }
                    let sum = row.iter().fold(T::zero(), |a, &b| a + b);
                    if sum > T::zero() {
                        for v in row.iter_mut() {
                            *v = *v / sum;
                        }
                    }
                }
            }
            m
        })
        .collect();
    LayeredGraph { n, matrices }
}
