use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::Strategy;
use crate::error::{Error, Result};
use crate::intervention::InterventionKind;

/// Which nodes the final accuracy is computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    /// Test-split nodes.
    Classification,
    /// Every node of the graph.
    Clustering,
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalTask::Classification => "classification",
            EvalTask::Clustering => "clustering",
        })
    }
}

impl FromStr for EvalTask {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "classification" => Ok(EvalTask::Classification),
            "clustering" => Ok(EvalTask::Clustering),
            other => Err(format!("unknown eval task `{other}`")),
        }
    }
}

/// Every knob of a training run. Defaults follow the two-layer, 8-head setup
/// used for the citation benchmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// L2 penalty on `W` and `a` (not on `V`, `g_f`, `g_s` or `eps_raw`).
    pub weight_decay: f64,
    /// Dropout on layer inputs and on attention scores.
    pub dropout: f64,
    pub epochs_max: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub heads_hidden: usize,
    pub heads_out: usize,
    /// Per-head width of the hidden layer.
    pub hidden_dim: usize,
    pub strategy: Strategy,
    pub intervention: InterventionKind,
    /// Weight of the intervention loss.
    pub lambda: f64,
    pub leaky_slope: f64,
    /// Columns of `V`; defaults to the number of classes.
    pub c_dim: Option<usize>,
    /// Include the `ε / |N_i|` self term.
    pub eps_term: bool,
    pub seed: u64,
    pub eval_task: EvalTask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.6,
            epochs_max: 1500,
            patience: 100,
            heads_hidden: 8,
            heads_out: 1,
            hidden_dim: 8,
            strategy: Strategy::Implicit,
            intervention: InterventionKind::Mf,
            lambda: 0.01,
            leaky_slope: 0.2,
            c_dim: None,
            eps_term: true,
            seed: 0,
            eval_task: EvalTask::Classification,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`] and in config files.
pub const CONFIG_KEYS: &[&str] = &[
    "lr",
    "weight_decay",
    "dropout",
    "epochs_max",
    "patience",
    "heads_hidden",
    "heads_out",
    "hidden_dim",
    "strategy",
    "intervention",
    "lambda",
    "leaky_slope",
    "c_dim",
    "eps_term",
    "seed",
    "eval_task",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))
}

impl TrainConfig {
    /// The structure-aware baseline: implicit fusion with the MF intervention.
    pub fn cat_i_mf() -> Self {
        TrainConfig::default()
    }

    /// Plain GAT: feature attention only, no intervention, no `ε` term.
    pub fn gat() -> Self {
        TrainConfig {
            strategy: Strategy::Feature,
            intervention: InterventionKind::None,
            eps_term: false,
            ..TrainConfig::default()
        }
    }

    /// Sets one field from its textual form. Dashes in `key` are read as
    /// underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "lr" => self.lr = parse(&key, value)?,
            "weight_decay" => self.weight_decay = parse(&key, value)?,
            "dropout" => self.dropout = parse(&key, value)?,
            "epochs_max" | "epochs" => self.epochs_max = parse(&key, value)?,
            "patience" => self.patience = parse(&key, value)?,
            "heads_hidden" => self.heads_hidden = parse(&key, value)?,
            "heads_out" => self.heads_out = parse(&key, value)?,
            "hidden_dim" => self.hidden_dim = parse(&key, value)?,
            "strategy" => self.strategy = parse(&key, value)?,
            "intervention" | "intervention_kind" => self.intervention = parse(&key, value)?,
            "lambda" => self.lambda = parse(&key, value)?,
            "leaky_slope" => self.leaky_slope = parse(&key, value)?,
            "c_dim" => {
                self.c_dim = match value {
                    "auto" | "" => None,
                    v => Some(parse(&key, v)?),
                }
            }
            "eps_term" => self.eps_term = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "eval_task" => self.eval_task = parse(&key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}` (known: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_kv_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config in the key/value file format.
    pub fn to_kv_text(&self) -> String {
        let c_dim = self.c_dim.map_or_else(|| "auto".to_string(), |c| c.to_string());
        format!(
            "lr = {}\nweight_decay = {}\ndropout = {}\nepochs_max = {}\npatience = {}\n\
             heads_hidden = {}\nheads_out = {}\nhidden_dim = {}\nstrategy = {}\n\
             intervention = {}\nlambda = {}\nleaky_slope = {}\nc_dim = {}\neps_term = {}\n\
             seed = {}\neval_task = {}\n",
            self.lr,
            self.weight_decay,
            self.dropout,
            self.epochs_max,
            self.patience,
            self.heads_hidden,
            self.heads_out,
            self.hidden_dim,
            self.strategy,
            self.intervention,
            self.lambda,
            self.leaky_slope,
            c_dim,
            self.eps_term,
            self.seed,
            self.eval_task,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.epochs_max == 0 {
            return fail("epochs_max must be >= 1".into());
        }
        if self.heads_hidden == 0 || self.heads_out == 0 || self.hidden_dim == 0 {
            return fail("heads_hidden, heads_out and hidden_dim must be >= 1".into());
        }
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.leaky_slope >= 0.0) {
            return fail(format!("leaky_slope must be >= 0, got {}", self.leaky_slope));
        }
        if self.c_dim == Some(0) {
            return fail("c_dim must be >= 1".into());
        }
        if self.strategy.needs_structure() && self.intervention == InterventionKind::None {
            return fail(format!(
                "strategy {} needs an intervention (mf, sc or fs)",
                self.strategy
            ));
        }
        Ok(())
    }
}
