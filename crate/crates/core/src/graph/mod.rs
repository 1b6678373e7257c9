//! Undirected attributed graphs with materialized self-loops.
//!
//! Adjacency is stored in CSR form. Every node's neighborhood `N_i` contains
//! the node itself exactly once, so edge-aligned arrays (attention scores,
//! structural scores) have one slot per `(i, j ∈ N_i)` pair, the self pair
//! included.

mod convert;
mod io;
mod sbm;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Segments;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use convert::{convert_planetoid_raw, ConvertOptions, ConvertSummary};
pub use io::{load_graph, save_graph};
pub use sbm::{generate_sbm, SbmParams};

/// Which evaluation split a node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "none" => Ok(Split::None),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Edge-aligned view of the CSR adjacency: slot `e` connects `src[e]` (the
/// neighborhood owner, also the segment id) to `dst[e]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeIndex {
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    segments: Arc<Segments>,
    self_slot: Vec<usize>,
    inv_size: Vec<f64>,
}

impl EdgeIndex {
    fn from_csr(offsets: &[usize], neighbors: &[usize]) -> Self {
        let n = offsets.len() - 1;
        let mut src = Vec::with_capacity(neighbors.len());
        let mut self_slot = vec![0; n];
        let mut inv_size = Vec::with_capacity(n);
        for i in 0..n {
            for e in offsets[i]..offsets[i + 1] {
                src.push(i);
                if neighbors[e] == i {
                    self_slot[i] = e;
                }
            }
            inv_size.push(1.0 / (offsets[i + 1] - offsets[i]) as f64);
        }
        let segments = Segments::new(src.clone(), n).expect("src ids are node ids");
        EdgeIndex {
            src: src.into(),
            dst: neighbors.to_vec().into(),
            segments: Arc::new(segments),
            self_slot,
            inv_size,
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<[usize]> {
        &self.dst
    }

    /// Segment id per slot (equal to `src`).
    pub fn segments(&self) -> &Arc<Segments> {
        &self.segments
    }

    /// Slot holding the self pair `(i, i)`.
    pub fn self_slot(&self, i: usize) -> usize {
        self.self_slot[i]
    }

    /// `1 / |N_i|` per node.
    pub fn inv_neighborhood_size(&self) -> &[f64] {
        &self.inv_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Tensor,
    labels: Vec<usize>,
    n_classes: usize,
    splits: Vec<Split>,
    edge_index: EdgeIndex,
}

impl Graph {
    /// Builds a graph from undirected edges. Edges are symmetrized and
    /// deduplicated; input self-loops are dropped and a single self-loop per
    /// node is added.
    pub fn from_edges(
        n_nodes: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        labels: Vec<usize>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if features.rows() != n_nodes {
            return Err(Error::Argument(format!(
                "{} feature rows for {n_nodes} nodes",
                features.rows()
            )));
        }
        if labels.len() != n_nodes || splits.len() != n_nodes {
            return Err(Error::Argument(format!(
                "{} labels and {} splits for {n_nodes} nodes",
                labels.len(),
                splits.len()
            )));
        }
        let mut adjacency: Vec<BTreeSet<usize>> = (0..n_nodes).map(|i| BTreeSet::from([i])).collect();
        for &(u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Argument(format!(
                    "edge ({u}, {v}) out of range for {n_nodes} nodes"
                )));
            }
            adjacency[u].insert(v);
            adjacency[v].insert(u);
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for set in &adjacency {
            neighbors.extend(set.iter().copied());
            offsets.push(neighbors.len());
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let edge_index = EdgeIndex::from_csr(&offsets, &neighbors);
        Ok(Graph {
            offsets,
            neighbors,
            features,
            labels,
            n_classes,
            splits,
            edge_index,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total neighborhood slots, self-loops included.
    pub fn n_slots(&self) -> usize {
        self.neighbors.len()
    }

    /// Undirected edges without self-loops.
    pub fn n_undirected_edges(&self) -> usize {
        (self.n_slots() - self.n_nodes()) / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// `N_i` in storage order (ascending node id), `i` included.
    pub fn neighborhood(&self, i: usize) -> Result<&[usize]> {
        if i >= self.n_nodes() {
            return Err(Error::Argument(format!(
                "node {i} out of range for {} nodes",
                self.n_nodes()
            )));
        }
        Ok(&self.neighbors[self.offsets[i]..self.offsets[i + 1]])
    }

    /// `|N_i|`, counting the self-loop.
    pub fn neighborhood_size(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n_nodes()
            && self.neighbors[self.offsets[i]..self.offsets[i + 1]]
                .binary_search(&j)
                .is_ok()
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_undirected_edges());
        for i in 0..self.n_nodes() {
            for &j in &self.neighbors[self.offsets[i]..self.offsets[i + 1]] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_index(&self) -> &EdgeIndex {
        &self.edge_index
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn mask(&self, split: Split) -> Vec<bool> {
        self.splits.iter().map(|&s| s == split).collect()
    }

    /// Node ids assigned to `split`, ascending.
    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Argument("not a permutation of the node ids".into()));
        }
        let edges: Vec<_> = self
            .undirected_edges()
            .into_iter()
            .map(|(u, v)| (perm[u], perm[v]))
            .collect();
        let mut features = Tensor::zeros(n, self.feature_dim());
        let mut labels = vec![0; n];
        let mut splits = vec![Split::None; n];
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
            labels[perm[i]] = self.labels[i];
            splits[perm[i]] = self.splits[i];
        }
        Graph::from_edges(n, &edges, features, labels, splits)
    }

    /// Same topology and splits with replaced node features.
    pub fn with_features(&self, features: Tensor) -> Result<Graph> {
        if features.rows() != self.n_nodes() {
            return Err(Error::Argument(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.n_nodes()
            )));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }
}
