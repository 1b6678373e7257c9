use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, CatModel, EvalTask, HeadSummary, TrainConfig};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_nodes: usize,
    pub undirected_edges: usize,
    pub neighborhood_slots: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl DatasetSummary {
    pub fn of(graph: &Graph) -> Self {
        DatasetSummary {
            n_nodes: graph.n_nodes(),
            undirected_edges: graph.n_undirected_edges(),
            neighborhood_slots: graph.n_slots(),
            feature_dim: graph.feature_dim(),
            n_classes: graph.n_classes(),
            n_train: graph.nodes_in(Split::Train).len(),
            n_val: graph.nodes_in(Split::Val).len(),
            n_test: graph.nodes_in(Split::Test).len(),
        }
    }
}

/// Outcome of one training run; serialized as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub dataset: DatasetSummary,
    pub epochs: Vec<EpochRecord>,
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Accuracy for the configured `eval_task`.
    pub test_accuracy: f64,
    pub classification_accuracy: f64,
    pub clustering_accuracy: f64,
    /// Learned `ε`, `r_f`, `r_s` per layer and head.
    pub heads: Vec<Vec<HeadSummary>>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// `epoch, train_loss, val_acc` rows with a header line.
    pub fn curves_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_acc\n");
        for e in &self.epochs {
            out.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.train_loss, e.val_accuracy));
        }
        out
    }

    /// Copy with timing fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Model with the best-validation parameters restored.
    pub model: CatModel,
}

/// Arg-max class per row; ties go to the lowest class id.
pub fn predict(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `nodes` whose prediction matches the label; 0 for no nodes.
pub fn accuracy(predictions: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&i| predictions[i] == labels[i]).count();
    hits as f64 / nodes.len() as f64
}

fn task_nodes(graph: &Graph, task: EvalTask) -> Vec<usize> {
    match task {
        EvalTask::Classification => graph.nodes_in(Split::Test),
        EvalTask::Clustering => (0..graph.n_nodes()).collect(),
    }
}

/// Eval-mode accuracy of `model`: test split for classification, all nodes
/// for clustering.
pub fn evaluate(model: &CatModel, graph: &Graph, task: EvalTask) -> Result<f64> {
    let predictions = predict(&model.logits(graph)?);
    Ok(accuracy(&predictions, graph.labels(), &task_nodes(graph, task)))
}

fn mean_nll(logits: &Tensor, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let total: f64 = nodes
        .iter()
        .map(|&i| {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[labels[i]]
        })
        .sum();
    total / nodes.len() as f64
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Divergence {
            epoch,
            cause: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Full-batch Adam training with early stopping on validation accuracy.
///
/// Each epoch draws its dropout masks and negative samples from stream
/// `epoch` of a ChaCha8 generator seeded with `config.seed`, so runs are
/// reproducible bit for bit. Validation ties are broken by lower validation
/// loss. Without validation nodes the last epoch is kept.
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let train_nodes = graph.nodes_in(Split::Train);
    if train_nodes.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let val_nodes = graph.nodes_in(Split::Val);

    let mut model = CatModel::new(config, graph)?;
    let mut adam = Adam::new(config.lr);
    let mut best_params = model.params().clone();
    let mut best: Option<(f64, f64)> = None;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=config.epochs_max {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);

        let mut tape = Tape::new();
        let out = model.forward(&mut tape, graph, true, &mut rng).map_err(diverged(epoch))?;
        let loss = model.loss(&mut tape, &out, graph).map_err(diverged(epoch))?;
        let train_loss = tape.value(loss).item();
        tape.backward(loss)?;
        let grads = out.bound.grads(&tape);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                cause: "non-finite gradient".into(),
            });
        }
        adam.step(model.params_mut(), &grads)?;

        let logits = model.logits(graph).map_err(diverged(epoch))?;
        let predictions = predict(&logits);
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy: accuracy(&predictions, graph.labels(), &train_nodes),
            val_loss: mean_nll(&logits, graph.labels(), &val_nodes),
            val_accuracy: accuracy(&predictions, graph.labels(), &val_nodes),
        };

        let improved = val_nodes.is_empty()
            || match best {
                None => true,
                Some((acc, loss)) => {
                    record.val_accuracy > acc || (record.val_accuracy == acc && record.val_loss < loss)
                }
            };
        if improved {
            best = Some((record.val_accuracy, record.val_loss));
            best_epoch = epoch;
            best_params = model.params().clone();
            stale = 0;
        } else {
            stale += 1;
        }
        epochs.push(record);
        if stale >= config.patience {
            break;
        }
    }

    model.params_mut().copy_values_from(&best_params)?;
    let predictions = predict(&model.logits(graph)?);
    let classification = accuracy(&predictions, graph.labels(), &task_nodes(graph, EvalTask::Classification));
    let clustering = accuracy(&predictions, graph.labels(), &task_nodes(graph, EvalTask::Clustering));
    let report = TrainReport {
        config: config.clone(),
        dataset: DatasetSummary::of(graph),
        epochs_run: epochs.len(),
        epochs,
        best_epoch,
        best_val_accuracy: best.map_or(0.0, |(acc, _)| acc),
        test_accuracy: match config.eval_task {
            EvalTask::Classification => classification,
            EvalTask::Clustering => clustering,
        },
        classification_accuracy: classification,
        clustering_accuracy: clustering,
        heads: model.head_summaries(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { report, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_breaks_ties_low() {
        let logits = Tensor::from_rows(&[vec![1.0, 3.0, 3.0], vec![0.0, 0.0, 0.0], vec![-1.0, -2.0, 5.0]]).unwrap();
        assert_eq!(predict(&logits), vec![1, 0, 2]);
    }

    #[test]
    fn accuracy_counts_selected_nodes() {
        let preds = [0, 1, 1, 2];
        let labels = [0, 1, 0, 0];
        assert_eq!(accuracy(&preds, &labels, &[0, 1]), 1.0);
        assert_eq!(accuracy(&preds, &labels, &[0, 1, 2, 3]), 0.5);
        assert_eq!(accuracy(&preds, &labels, &[]), 0.0);
    }

    #[test]
    fn mean_nll_matches_log_softmax() {
        let logits = Tensor::from_rows(&[vec![0.0; 7]]).unwrap();
        assert!((mean_nll(&logits, &[3], &[0]) - 7f64.ln()).abs() < 1e-15);
    }
}
