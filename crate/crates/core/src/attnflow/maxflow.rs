use std::collections::VecDeque;

use super::{AttnError, LayeredGraph};
use crate::Scalar;

/// Residual capacities at or below this value count as absent edges.
pub const CAPACITY_EPS: f64 = 1e-12;

/// A token position at a node layer of a [`LayeredGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub layer: usize,
    pub index: usize,
}

impl Node {
    pub fn new(layer: usize, index: usize) -> Self {
        Node { layer, index }
    }
}

#[derive(Debug, Clone)]
struct Edge<T> {
    to: usize,
    rev: usize,
    cap: T,
    original: T,
}

/// Dinic max-flow over real capacities.
///
/// Augmentation is single-path and follows edge insertion order, so
/// identical inputs give bit-identical results.
#[derive(Debug, Clone)]
pub struct FlowNetwork<T> {
    graph: Vec<Vec<Edge<T>>>,
    level: Vec<usize>,
    iter: Vec<usize>,
    eps: T,
}

impl<T: Scalar> FlowNetwork<T> {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            graph: vec![Vec::new(); nodes],
            level: vec![usize::MAX; nodes],
            iter: vec![0; nodes],
            eps: T::lit(CAPACITY_EPS),
        }
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Adds a directed edge; capacities at or below the epsilon are dropped.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN is dropped too
    pub fn add_edge(&mut self, from: usize, to: usize, cap: T) {
        if !(cap > self.eps) {
            return;
        }
        let rev_from = self.graph[to].len() + usize::from(from == to);
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge {
            to,
            rev: rev_from,
            cap,
            original: cap,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: T::zero(),
            original: T::zero(),
        });
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = usize::MAX);
        self.level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for e in &self.graph[u] {
                if e.cap > self.eps && self.level[e.to] == usize::MAX {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[sink] != usize::MAX
    }

    fn dfs(&mut self, u: usize, sink: usize, limit: T) -> T {
        if u == sink {
            return limit;
        }
        while self.iter[u] < self.graph[u].len() {
            let i = self.iter[u];
            let Edge { to, cap, .. } = self.graph[u][i];
            if cap > self.eps && self.level[to] == self.level[u] + 1 {
                let pushed = self.dfs(to, sink, limit.min(cap));
                if pushed > T::zero() {
                    let rev = self.graph[u][i].rev;
                    self.graph[u][i].cap = self.graph[u][i].cap - pushed;
                    self.graph[to][rev].cap = self.graph[to][rev].cap + pushed;
                    return pushed;
                }
            }
            self.iter[u] += 1;
        }
        T::zero()
    }

    /// Maximum flow value from `source` to `sink`. Consumes residual capacity.
    pub fn max_flow(&mut self, source: usize, sink: usize) -> T {
        let mut flow = T::zero();
        if source == sink {
            return flow;
        }
        while self.bfs(source, sink) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let pushed = self.dfs(source, sink, T::infinity());
                if pushed <= T::zero() {
                    break;
                }
                flow = flow + pushed;
            }
        }
        flow
    }

    /// `(from, to, flow)` for every forward edge after [`Self::max_flow`].
    pub fn edge_flows(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::new();
        for (u, edges) in self.graph.iter().enumerate() {
            for e in edges.iter().filter(|e| e.original > T::zero()) {
                out.push((u, e.to, e.original - e.cap));
            }
        }
        out
    }
}

fn check_endpoints<T: Scalar>(
    graph: &LayeredGraph<T>,
    source: Node,
    sinks: &[Node],
) -> Result<usize, AttnError> {
    let n = graph.nodes_per_layer();
    if source.layer != 0 {
        return Err(AttnError::Endpoints(format!(
            "source must be at layer 0, got layer {}",
            source.layer
        )));
    }
    let first = sinks
        .first()
        .ok_or_else(|| AttnError::Endpoints("no sink nodes".into()))?;
    let top = first.layer;
    if top == 0 || top >= graph.num_layers() {
        return Err(AttnError::Endpoints(format!(
            "sink layer {top} must lie in 1..{}",
            graph.num_layers()
        )));
    }
    if let Some(bad) = sinks.iter().find(|s| s.layer != top) {
        return Err(AttnError::Endpoints(format!(
            "sinks span layers {top} and {}",
            bad.layer
        )));
    }
    if let Some(bad) = std::iter::once(&source).chain(sinks).find(|s| s.index >= n) {
        return Err(AttnError::Endpoints(format!(
            "node index {} out of range for {n} tokens",
            bad.index
        )));
    }
    Ok(top)
}

/// Builds the Dinic network for node layers `0..=top` plus a super-sink at
/// index `(top + 1) * n`.
pub(crate) fn layered_network<T: Scalar>(graph: &LayeredGraph<T>, top: usize, sinks: &[Node]) -> FlowNetwork<T> {
    let n = graph.nodes_per_layer();
    let super_sink = (top + 1) * n;
    let mut net = FlowNetwork::new(super_sink + 1);
    for layer in 0..top {
        for from in 0..n {
            for to in 0..n {
                net.add_edge(layer * n + from, (layer + 1) * n + to, graph.capacity(layer, from, to));
            }
        }
    }
    for s in sinks {
        net.add_edge(top * n + s.index, super_sink, T::infinity());
    }
    net
}

/// Maximum flow from `source` (layer 0) into the set of `sinks`, which must
/// share one layer and drain into an uncapacitated super-sink.
pub fn max_flow<T: Scalar>(graph: &LayeredGraph<T>, source: Node, sinks: &[Node]) -> Result<T, AttnError> {
    let top = check_endpoints(graph, source, sinks)?;
    let mut net = layered_network(graph, top, sinks);
    let n = graph.nodes_per_layer();
    Ok(net.max_flow(source.index, (top + 1) * n))
}
