//! Structural interventions: pairwise scores `C_ij` over the neighborhood
//! slots, learned outside the attention layers.
//!
//! * **MF**: `C_ij = ⟨V_i, V_j⟩` fitted to the adjacency by a squared loss
//!   over observed edges (target 1) and an equal number of non-edges
//!   resampled every call (target 0).
//! * **SC**: the same inner-product scores, fitted so that each node's
//!   neighborhood reconstruction `Σ_{k∈N_i} ⟨V_i, V_k⟩ A_ik` matches `A_ij`
//!   for every `j ∈ N_i` (self-loops count as `A_ii = 1`).
//! * **FS**: fixed cosine similarity of input features.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::graph::{EdgeIndex, Graph};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionKind {
    Mf,
    Sc,
    Fs,
    None,
}

impl InterventionKind {
    /// Whether the intervention owns a learnable `V`.
    pub fn is_learned(self) -> bool {
        matches!(self, InterventionKind::Mf | InterventionKind::Sc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InterventionKind::Mf => "mf",
            InterventionKind::Sc => "sc",
            InterventionKind::Fs => "fs",
            InterventionKind::None => "none",
        }
    }
}

impl fmt::Display for InterventionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(InterventionKind::Mf),
            "sc" => Ok(InterventionKind::Sc),
            "fs" => Ok(InterventionKind::Fs),
            "none" => Ok(InterventionKind::None),
            other => Err(format!("unknown intervention `{other}` (expected mf, sc, fs or none)")),
        }
    }
}

/// Per-slot scores (`E × 1`) and the auxiliary loss that trains them.
#[derive(Clone, Copy, Debug)]
pub struct InterventionOutput {
    pub edge_scores: Var,
    pub aux_loss: Var,
}

/// `⟨V_i, V_j⟩` for every slot of the edge index, as an `E × 1` column.
pub fn inner_product_scores(tape: &mut Tape, v: Var, edges: &EdgeIndex) -> Result<Var> {
    pair_scores(tape, v, edges.src().clone(), edges.dst().clone())
}

fn pair_scores(tape: &mut Tape, v: Var, left: Arc<[usize]>, right: Arc<[usize]>) -> Result<Var> {
    let vl = tape.gather_rows(v, left)?;
    let vr = tape.gather_rows(v, right)?;
    let prod = tape.mul(vl, vr)?;
    tape.row_sum(prod)
}

/// Samples up to `count` distinct-endpoint node pairs that are not edges.
pub fn sample_non_edges<R: Rng + ?Sized>(graph: &Graph, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = graph.n_nodes();
    let mut out = Vec::with_capacity(count);
    if n < 2 {
        return out;
    }
    let max_attempts = count.saturating_mul(100).max(100);
    for _ in 0..max_attempts {
        if out.len() == count {
            break;
        }
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v && !graph.has_edge(u, v) {
            out.push((u, v));
        }
    }
    out
}

/// Matrix-factorization intervention over the given negative pairs.
pub fn mf_scores(
    tape: &mut Tape,
    v: Var,
    graph: &Graph,
    negatives: &[(usize, usize)],
) -> Result<InterventionOutput> {
    let edge_scores = inner_product_scores(tape, v, graph.edge_index())?;
    let positives = graph.undirected_edges();
    let (mut left, mut right): (Vec<usize>, Vec<usize>) = positives.iter().copied().unzip();
    let mut target = vec![1.0; positives.len()];
    for &(a, b) in negatives {
        left.push(a);
        right.push(b);
        target.push(0.0);
    }
    let aux_loss = if left.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let pred = pair_scores(tape, v, left.into(), right.into())?;
        tape.squared_error(pred, Tensor::column(target))?
    };
    Ok(InterventionOutput {
        edge_scores,
        aux_loss,
    })
}

/// Self-expressiveness intervention restricted to observed neighborhoods.
pub fn sc_scores(tape: &mut Tape, v: Var, graph: &Graph) -> Result<InterventionOutput> {
    let edges = graph.edge_index();
    let edge_scores = inner_product_scores(tape, v, edges)?;
    // A_ik = 1 on every stored slot, so the reconstruction is a plain segment sum.
    let recon = tape.segment_sum(edge_scores, edges.segments().clone())?;
    let per_slot = tape.gather_rows(recon, edges.src().clone())?;
    let aux_loss = tape.squared_error(per_slot, Tensor::filled(edges.len(), 1, 1.0))?;
    Ok(InterventionOutput {
        edge_scores,
        aux_loss,
    })
}

/// Cosine similarity of the slot endpoints' features; rows with zero norm
/// score 0 against everything.
pub fn fs_scores(features: &Tensor, edges: &EdgeIndex) -> Vec<f64> {
    let norms: Vec<f64> = (0..features.rows())
        .map(|i| features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    edges
        .src()
        .iter()
        .zip(edges.dst().iter())
        .map(|(&i, &j)| {
            let denom = norms[i] * norms[j];
            if denom == 0.0 {
                0.0
            } else {
                let dot: f64 = features.row(i).iter().zip(features.row(j)).map(|(a, b)| a * b).sum();
                dot / denom
            }
        })
        .collect()
}

/// One intervention instance shared by every layer and head of a model.
#[derive(Clone, Debug)]
pub struct Intervention {
    kind: InterventionKind,
    fixed: Option<Tensor>,
}

impl Intervention {
    pub fn new(kind: InterventionKind, graph: &Graph) -> Self {
        let fixed = (kind == InterventionKind::Fs)
            .then(|| Tensor::column(fs_scores(graph.features(), graph.edge_index())));
        Intervention { kind, fixed }
    }

    pub fn kind(&self) -> InterventionKind {
        self.kind
    }

    /// Records the scores and auxiliary loss on `tape`. `v` must be the bound
    /// `N × c_dim` parameter for learned kinds. Returns `None` for
    /// [`InterventionKind::None`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        v: Option<Var>,
        graph: &Graph,
        rng: &mut R,
    ) -> Result<Option<InterventionOutput>> {
        let need_v = || {
            v.ok_or_else(|| {
                crate::error::Error::Config(format!("{} intervention needs a V parameter", self.kind))
            })
        };
        let out = match self.kind {
            InterventionKind::None => return Ok(None),
            InterventionKind::Fs => {
                let scores = self.fixed.clone().expect("precomputed in new");
                InterventionOutput {
                    edge_scores: tape.constant(scores),
                    aux_loss: tape.constant(Tensor::scalar(0.0)),
                }
            }
            InterventionKind::Mf => {
                let negatives = sample_non_edges(graph, graph.n_undirected_edges(), rng);
                mf_scores(tape, need_v()?, graph, &negatives)?
            }
            InterventionKind::Sc => sc_scores(tape, need_v()?, graph)?,
        };
        Ok(Some(out))
    }
}
