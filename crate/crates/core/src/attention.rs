//! The conjoint attention (CA) layer.
//!
//! For a node `i` with neighborhood `N_i` (self included) one head computes
//!
//! * feature attention `f_ij = softmax_{j∈N_i} LeakyReLU(aᵀ[W h_i ∥ W h_j])`,
//! * structural attention `s_ij = softmax_{j∈N_i} C_ij` from an intervention,
//! * fused scores `α_ij`, either implicitly `r_f f_ij + r_s s_ij` with
//!   `(r_f, r_s) = softmax(g_f, g_s)`, or explicitly `f_ij s_ij / Σ_k f_ik s_ik`,
//! * the output `h'_i = Σ_{j∈N_i} α_ij W h_j + (ε / |N_i|) W h_i` with
//!   `ε = sigmoid(eps_raw) ∈ (0, 1)`.
//!
//! The concatenation in `f_ij` is evaluated as `a_leftᵀ W h_i + a_rightᵀ W h_j`
//! so the cost is `O(N·D + |E|)` rather than `O(|E|·D)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Segments, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// How feature and structural attention are fused into `α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Learned convex combination `r_f f + r_s s`.
    Implicit,
    /// Normalized product `f s / Σ f s`.
    Explicit,
    /// `α = f`, a plain GAT head.
    Feature,
    /// `α = s`, attention from the intervention alone.
    Structure,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Implicit => "implicit",
            Strategy::Explicit => "explicit",
            Strategy::Feature => "feature",
            Strategy::Structure => "structure",
        }
    }

    pub fn needs_structure(self) -> bool {
        !matches!(self, Strategy::Feature)
    }

    pub fn needs_features(self) -> bool {
        !matches!(self, Strategy::Structure)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "implicit" | "i" => Ok(Strategy::Implicit),
            "explicit" | "e" => Ok(Strategy::Explicit),
            "feature" | "featureonly" | "feature-only" | "f" => Ok(Strategy::Feature),
            "structure" | "structureonly" | "structure-only" | "s" => Ok(Strategy::Structure),
            other => Err(format!(
                "unknown strategy `{other}` (expected implicit, explicit, feature or structure)"
            )),
        }
    }
}

/// Parameters of one attention head, bound on a tape.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    /// `D_out × D_in`.
    pub w: Var,
    /// `2·D_out × 1`.
    pub a: Var,
    pub g_f: Var,
    pub g_s: Var,
    pub eps_raw: Var,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerOptions {
    pub strategy: Strategy,
    pub leaky_slope: f64,
    /// Adds the `(ε / |N_i|) W h_i` self term.
    pub eps_term: bool,
    /// Dropout rate applied to `α` in training mode.
    pub attn_dropout: f64,
    pub train: bool,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            strategy: Strategy::Implicit,
            leaky_slope: 0.2,
            eps_term: true,
            attn_dropout: 0.0,
            train: false,
        }
    }
}

/// Edge-aligned attention arrays of one head (`E × 1` each).
#[derive(Clone, Copy, Debug)]
pub struct ScoreVars {
    pub f: Option<Var>,
    pub s: Option<Var>,
    pub alpha: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    pub h: Var,
    pub projected: Var,
    pub scores: ScoreVars,
}

/// Plain-value copy of one head's attention arrays.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionScores {
    pub f: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
}

impl AttentionScores {
    pub fn from_tape(tape: &Tape, vars: &ScoreVars) -> Self {
        let grab = |v: Var| tape.value(v).data().to_vec();
        AttentionScores {
            f: vars.f.map(grab),
            s: vars.s.map(grab),
            alpha: grab(vars.alpha),
        }
    }
}

/// `h Wᵀ`: rows are `W h_i`.
pub fn project(tape: &mut Tape, h: Var, w: Var) -> Result<Var> {
    let wt = tape.transpose(w)?;
    tape.matmul(h, wt)
}

/// Feature attention `f` from projected features `wh = h Wᵀ`.
pub fn feature_attention(tape: &mut Tape, wh: Var, a: Var, graph: &Graph, slope: f64) -> Result<Var> {
    let d = tape.value(wh).cols();
    if tape.value(a).shape() != (2 * d, 1) {
        return Err(Error::shape(
            "feature_attention",
            format!("attention vector {:?}, expected ({}, 1)", tape.value(a).shape(), 2 * d),
        ));
    }
    let edges = graph.edge_index();
    let a_left = tape.slice_rows(a, 0, d)?;
    let a_right = tape.slice_rows(a, d, 2 * d)?;
    let left = tape.matmul(wh, a_left)?;
    let right = tape.matmul(wh, a_right)?;
    let left = tape.gather_rows(left, edges.src().clone())?;
    let right = tape.gather_rows(right, edges.dst().clone())?;
    let logits = tape.add(left, right)?;
    let logits = tape.leaky_relu(logits, slope)?;
    tape.segment_softmax(logits, edges.segments().clone())
}

/// Structural attention `s_ij = softmax_{j∈N_i} C_ij`.
pub fn structural_softmax(tape: &mut Tape, edge_scores: Var, graph: &Graph) -> Result<Var> {
    tape.segment_softmax(edge_scores, graph.edge_index().segments().clone())
}

/// `(r_f, r_s) = softmax(g_f, g_s)` as two `1 × 1` values.
pub fn relative_significance(tape: &mut Tape, g_f: Var, g_s: Var) -> Result<(Var, Var)> {
    let g = tape.concat_cols(&[g_f, g_s])?;
    let g = tape.transpose(g)?;
    let pair = Arc::new(Segments::new(vec![0, 0], 1)?);
    let r = tape.segment_softmax(g, pair)?;
    let r_f = tape.slice_rows(r, 0, 1)?;
    let r_s = tape.slice_rows(r, 1, 2)?;
    Ok((r_f, r_s))
}

/// Value-level `(r_f, r_s)` for reporting.
pub fn relative_significance_values(g_f: f64, g_s: f64) -> (f64, f64) {
    let m = g_f.max(g_s);
    let (ef, es) = ((g_f - m).exp(), (g_s - m).exp());
    (ef / (ef + es), es / (ef + es))
}

/// `ε = sigmoid(eps_raw)`.
pub fn epsilon_value(eps_raw: f64) -> f64 {
    sigmoid(eps_raw)
}

/// Implicit fusion `r_f f + r_s s`. Needs no renormalization since both inputs
/// are normalized per neighborhood and `r_f + r_s = 1`.
pub fn implicit_scores(tape: &mut Tape, f: Var, s: Var, r_f: Var, r_s: Var) -> Result<Var> {
    let wf = tape.scale_by(f, r_f)?;
    let ws = tape.scale_by(s, r_s)?;
    tape.add(wf, ws)
}

/// Smallest per-neighborhood mass `Σ f s` accepted by [`explicit_scores`].
pub const EXPLICIT_FLOOR: f64 = 1e-300;

/// Explicit fusion `f s / Σ_{k∈N_i} f_ik s_ik`.
pub fn explicit_scores(tape: &mut Tape, f: Var, s: Var, graph: &Graph) -> Result<Var> {
    let edges = graph.edge_index();
    let prod = tape.mul(f, s)?;
    let mass = tape.segment_sum(prod, edges.segments().clone())?;
    if let Some(segment) = tape.value(mass).data().iter().position(|&m| !(m > EXPLICIT_FLOOR)) {
        return Err(Error::DegenerateNormalizer {
            op: "explicit_scores",
            segment,
        });
    }
    let mass = tape.gather_rows(mass, edges.src().clone())?;
    tape.div(prod, mass)
}

/// `h'_i = Σ_{j∈N_i} α_ij wh_j`, plus `(ε/|N_i|) wh_i` when `eps` is given.
pub fn aggregate(tape: &mut Tape, wh: Var, alpha: Var, eps: Option<Var>, graph: &Graph) -> Result<Var> {
    let edges = graph.edge_index();
    let messages = tape.gather_rows(wh, edges.dst().clone())?;
    let weighted = tape.row_scale(messages, alpha)?;
    let mixed = tape.segment_sum(weighted, edges.segments().clone())?;
    let Some(eps) = eps else {
        return Ok(mixed);
    };
    let inv = tape.constant(Tensor::column(edges.inv_neighborhood_size().to_vec()));
    let own = tape.row_scale(wh, inv)?;
    let own = tape.scale_by(own, eps)?;
    tape.add(mixed, own)
}

/// One full CA head. `edge_scores` are the intervention's `C_ij` (`E × 1`) and
/// are required by every strategy except [`Strategy::Feature`].
pub fn conjoint_layer<R: Rng + ?Sized>(
    tape: &mut Tape,
    h: Var,
    params: &HeadVars,
    edge_scores: Option<Var>,
    graph: &Graph,
    opts: &LayerOptions,
    rng: &mut R,
) -> Result<LayerOutput> {
    let (w_rows, w_cols) = tape.value(params.w).shape();
    if tape.value(h).cols() != w_cols || tape.value(h).rows() != graph.n_nodes() {
        return Err(Error::shape(
            "conjoint_layer",
            format!(
                "input {:?} for W {w_rows}x{w_cols} on {} nodes",
                tape.value(h).shape(),
                graph.n_nodes()
            ),
        ));
    }
    let wh = project(tape, h, params.w)?;

    let f = if opts.strategy.needs_features() {
        Some(feature_attention(tape, wh, params.a, graph, opts.leaky_slope)?)
    } else {
        None
    };
    let s = if opts.strategy.needs_structure() {
        let scores = edge_scores.ok_or_else(|| {
            Error::Config(format!("strategy {} needs structural scores", opts.strategy))
        })?;
        Some(structural_softmax(tape, scores, graph)?)
    } else {
        None
    };

    let alpha = match (opts.strategy, f, s) {
        (Strategy::Implicit, Some(f), Some(s)) => {
            let (r_f, r_s) = relative_significance(tape, params.g_f, params.g_s)?;
            implicit_scores(tape, f, s, r_f, r_s)?
        }
        (Strategy::Explicit, Some(f), Some(s)) => explicit_scores(tape, f, s, graph)?,
        (Strategy::Feature, Some(f), _) => f,
        (Strategy::Structure, _, Some(s)) => s,
        _ => unreachable!("inputs computed according to the strategy"),
    };

    let dropped = tape.dropout(alpha, opts.attn_dropout, opts.train, rng)?;
    let eps = if opts.eps_term {
        Some(tape.sigmoid(params.eps_raw)?)
    } else {
        None
    };
    let out = aggregate(tape, wh, dropped, eps, graph)?;
    Ok(LayerOutput {
        h: out,
        projected: wh,
        scores: ScoreVars { f, s, alpha },
    })
}
