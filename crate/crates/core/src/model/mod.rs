//! Two-layer multi-head CAT network, its joint loss and training loop.

mod config;
mod optim;
mod params;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    conjoint_layer, epsilon_value, relative_significance_values, HeadVars, LayerOptions, LayerOutput,
};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::intervention::{Intervention, InterventionKind};
use crate::tensor::Tensor;

pub use config::{EvalTask, TrainConfig, CONFIG_KEYS};
pub use optim::Adam;
pub use params::{matrix_tsv, BoundParams, ParamId, ParamStore, CHECKPOINT_HEADER};
pub use train::{
    accuracy, evaluate, predict, train, DatasetSummary, EpochRecord, TrainOutcome, TrainReport,
};

/// Parameter ids of one attention head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadParamIds {
    pub w: ParamId,
    pub a: ParamId,
    pub g_f: ParamId,
    pub g_s: ParamId,
    pub eps_raw: ParamId,
}

impl HeadParamIds {
    fn bind(&self, bound: &BoundParams) -> HeadVars {
        HeadVars {
            w: bound.var(self.w),
            a: bound.var(self.a),
            g_f: bound.var(self.g_f),
            g_s: bound.var(self.g_s),
            eps_raw: bound.var(self.eps_raw),
        }
    }
}

/// Learned per-head quantities worth reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSummary {
    pub epsilon: f64,
    pub r_f: f64,
    pub r_s: f64,
}

/// Everything one forward pass recorded.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub bound: BoundParams,
    pub logits: Var,
    pub aux_loss: Option<Var>,
    /// Per layer, per head.
    pub heads: Vec<Vec<LayerOutput>>,
}

#[derive(Clone, Debug)]
pub struct CatModel {
    params: ParamStore,
    layers: Vec<Vec<HeadParamIds>>,
    v: Option<ParamId>,
    intervention: Intervention,
    config: TrainConfig,
    in_dim: usize,
    n_classes: usize,
}

impl CatModel {
    /// Glorot-initialized model for `graph`. Uses the stream 0 of the
    /// config's seed.
    pub fn new(config: &TrainConfig, graph: &Graph) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        CatModel::with_rng(config, graph, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(config: &TrainConfig, graph: &Graph, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let in_dim = graph.feature_dim();
        let n_classes = graph.n_classes();
        if in_dim == 0 || n_classes == 0 {
            return Err(Error::Config("graph needs features and at least one class".into()));
        }
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(2);
        let dims = [
            (in_dim, config.hidden_dim, config.heads_hidden),
            (config.hidden_dim * config.heads_hidden, n_classes, config.heads_out),
        ];
        for (l, &(d_in, d_out, heads)) in dims.iter().enumerate() {
            let mut layer = Vec::with_capacity(heads);
            for h in 0..heads {
                let name = |p: &str| format!("layer{l}.head{h}.{p}");
                layer.push(HeadParamIds {
                    w: params.add(name("w"), Tensor::glorot(d_out, d_in, rng), true),
                    a: params.add(name("a"), Tensor::glorot(2 * d_out, 1, rng), true),
                    g_f: params.add(name("g_f"), Tensor::scalar(0.0), false),
                    g_s: params.add(name("g_s"), Tensor::scalar(0.0), false),
                    eps_raw: params.add(name("eps_raw"), Tensor::scalar(0.0), false),
                });
            }
            layers.push(layer);
        }
        let v = config.intervention.is_learned().then(|| {
            let c_dim = config.c_dim.unwrap_or(n_classes);
            params.add("intervention.v", Tensor::glorot(graph.n_nodes(), c_dim, rng), false)
        });
        Ok(CatModel {
            params,
            layers,
            v,
            intervention: Intervention::new(config.intervention, graph),
            config: config.clone(),
            in_dim,
            n_classes,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Vec<HeadParamIds>] {
        &self.layers
    }

    pub fn intervention_kind(&self) -> InterventionKind {
        self.intervention.kind()
    }

    /// The learned intervention embedding `V`, if any.
    pub fn intervention_v(&self) -> Option<&Tensor> {
        self.v.map(|id| self.params.get(id))
    }

    pub fn intervention_v_id(&self) -> Option<ParamId> {
        self.v
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn layer_options(&self, train: bool) -> LayerOptions {
        LayerOptions {
            strategy: self.config.strategy,
            leaky_slope: self.config.leaky_slope,
            eps_term: self.config.eps_term,
            attn_dropout: self.config.dropout,
            train,
        }
    }

    /// dropout → hidden heads (concatenated) → ELU → dropout → output heads
    /// (averaged) → logits.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        graph: &Graph,
        train: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        if graph.feature_dim() != self.in_dim {
            return Err(Error::Config(format!(
                "graph has {} features, model expects {}",
                graph.feature_dim(),
                self.in_dim
            )));
        }
        if let Some(v) = self.intervention_v() {
            if v.rows() != graph.n_nodes() {
                return Err(Error::Config(format!(
                    "intervention V has {} rows for {} nodes",
                    v.rows(),
                    graph.n_nodes()
                )));
            }
        }
        let bound = self.params.bind(tape);
        let opts = self.layer_options(train);
        let p = self.config.dropout;

        let structural = self
            .intervention
            .forward(tape, self.v.map(|id| bound.var(id)), graph, rng)?;
        let edge_scores = structural.map(|s| s.edge_scores);

        let x = tape.constant(graph.features().clone());
        let x = tape.dropout(x, p, train, rng)?;

        let mut heads = Vec::with_capacity(2);
        let mut hidden = Vec::with_capacity(self.layers[0].len());
        for head in &self.layers[0] {
            hidden.push(conjoint_layer(tape, x, &head.bind(&bound), edge_scores, graph, &opts, rng)?);
        }
        let outs: Vec<Var> = hidden.iter().map(|o| o.h).collect();
        heads.push(hidden);
        let h = tape.concat_cols(&outs)?;
        let h = tape.elu(h)?;
        let h = tape.dropout(h, p, train, rng)?;

        let mut output = Vec::with_capacity(self.layers[1].len());
        for head in &self.layers[1] {
            output.push(conjoint_layer(tape, h, &head.bind(&bound), edge_scores, graph, &opts, rng)?);
        }
        let mut logits = output[0].h;
        for o in &output[1..] {
            logits = tape.add(logits, o.h)?;
        }
        if output.len() > 1 {
            logits = tape.scale(logits, 1.0 / output.len() as f64)?;
        }
        heads.push(output);

        Ok(ForwardOutput {
            bound,
            logits,
            aux_loss: structural.map(|s| s.aux_loss),
            heads,
        })
    }

    /// Mean cross-entropy over the training nodes, plus `λ·L_ext` and the L2
    /// penalty on every `W` and `a`.
    pub fn loss(&self, tape: &mut Tape, out: &ForwardOutput, graph: &Graph) -> Result<Var> {
        let train_nodes = graph.nodes_in(Split::Train);
        if train_nodes.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let log_probs = tape.log_softmax(out.logits)?;
        let mut total = tape.nll(log_probs, &train_nodes, graph.labels())?;
        if let Some(aux) = out.aux_loss {
            if self.config.lambda != 0.0 {
                let weighted = tape.scale(aux, self.config.lambda)?;
                total = tape.add(total, weighted)?;
            }
        }
        if self.config.weight_decay != 0.0 {
            for id in self.params.ids().filter(|&id| self.params.decays(id)) {
                let sq = tape.sum_squares(out.bound.var(id))?;
                let sq = tape.scale(sq, self.config.weight_decay)?;
                total = tape.add(total, sq)?;
            }
        }
        Ok(total)
    }

    /// Eval-mode logits as a plain tensor.
    pub fn logits(&self, graph: &Graph) -> Result<Tensor> {
        let mut tape = Tape::new();
        // The intervention may sample negatives; they do not affect the scores.
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let out = self.forward(&mut tape, graph, false, &mut rng)?;
        Ok(tape.value(out.logits).clone())
    }

    pub fn head_summaries(&self) -> Vec<Vec<HeadSummary>> {
        self.layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|h| {
                        let (r_f, r_s) = relative_significance_values(
                            self.params.get(h.g_f).item(),
                            self.params.get(h.g_s).item(),
                        );
                        HeadSummary {
                            epsilon: if self.config.eps_term {
                                epsilon_value(self.params.get(h.eps_raw).item())
                            } else {
                                0.0
                            },
                            r_f,
                            r_s,
                        }
                    })
                    .collect()
            })
            .collect()
    }
}
