mod common;

use common::*;
use conjoint::attention::Strategy;
use conjoint::autodiff::Tape;
use conjoint::graph::{generate_sbm, Graph, SbmParams, Split};
use conjoint::intervention::InterventionKind;
use conjoint::model::{
    accuracy, evaluate, predict, train, CatModel, EvalTask, ForwardOutput, ParamStore, TrainConfig,
};
use conjoint::tensor::Tensor;
use conjoint::Error;

fn randomize(model: &mut CatModel, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let (rows, cols) = model.params().get(id).shape();
        *model.params_mut().get_mut(id) = uniform(rows, cols, -1.0, 1.0, &mut r);
    }
}

#[test]
fn feature_only_matches_plain_gat_oracle() {
    let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)];
    for seed in 0..5 {
        let graph = six_node_graph(seed);
        for heads_out in [1, 3] {
            let config = TrainConfig {
                heads_hidden: 3,
                heads_out,
                hidden_dim: 4,
                seed,
                ..TrainConfig::gat()
            };
            let mut model = CatModel::new(&config, &graph).unwrap();
            randomize(&mut model, seed + 10);
            let logits = model.logits(&graph).unwrap();
            let oracle = gat_oracle(&model, &graph, &edges, config.leaky_slope);
            for (i, row) in oracle.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    assert!((logits.get(i, c) - v).abs() <= 1e-10, "node {i} class {c}");
                }
            }
        }
    }
}

#[test]
fn isolated_nodes_match_hand_composition() {
    let features = Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![-0.3, 0.8, 0.1]]).unwrap();
    let graph = Graph::from_edges(2, &[], features.clone(), vec![0, 2], vec![Split::Train; 2]).unwrap();
    let config = TrainConfig {
        heads_hidden: 2,
        heads_out: 2,
        hidden_dim: 2,
        ..TrainConfig::default()
    };
    let mut model = CatModel::new(&config, &graph).unwrap();
    randomize(&mut model, 3);
    let logits = model.logits(&graph).unwrap();

    let p = model.params();
    let value = |name: String| p.get(p.find(&name).unwrap()).clone();
    let eps = |l: usize, h: usize| 1.0 / (1.0 + (-value(format!("layer{l}.head{h}.eps_raw")).item()).exp());
    let apply = |w: &Tensor, x: &[f64]| -> Vec<f64> {
        (0..w.rows()).map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    for i in 0..2 {
        let x = features.row(i);
        let mut hidden = Vec::new();
        for h in 0..2 {
            let w = value(format!("layer0.head{h}.w"));
            let k = 1.0 + eps(0, h);
            hidden.extend(apply(&w, x).into_iter().map(|v| k * v));
        }
        let hidden: Vec<f64> = hidden.into_iter().map(|v| if v > 0.0 { v } else { v.exp_m1() }).collect();
        let mut out = vec![0.0; 3];
        for h in 0..2 {
            let w = value(format!("layer1.head{h}.w"));
            let k = 1.0 + eps(1, h);
            for (o, v) in out.iter_mut().zip(apply(&w, &hidden)) {
                *o += k * v / 2.0;
            }
        }
        for c in 0..3 {
            assert!((logits.get(i, c) - out[c]).abs() <= 1e-12);
        }
    }
}

#[test]
fn loss_terms_add_up() {
    let graph = six_node_graph(1);
    let config = TrainConfig {
        heads_hidden: 2,
        hidden_dim: 3,
        lambda: 0.01,
        ..TrainConfig::default()
    };
    let model = CatModel::new(&config, &graph).unwrap();
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &graph, false, &mut rng(0)).unwrap();
    let uniform_logits = tape.constant(Tensor::zeros(6, 3));
    let aux = tape.constant(Tensor::scalar(2.0));
    let out = ForwardOutput {
        logits: uniform_logits,
        aux_loss: Some(aux),
        ..out
    };
    let total = model.loss(&mut tape, &out, &graph).unwrap();
    let p = model.params();
    let decay: f64 = p
        .ids()
        .filter(|&id| p.decays(id))
        .map(|id| p.get(id).data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let expected = 3f64.ln() + 0.02 + config.weight_decay * decay;
    assert!((tape.value(total).item() - expected).abs() < 1e-12);
}

#[test]
fn confident_correct_logits_give_near_zero_loss() {
    let graph = six_node_graph(2);
    let config = TrainConfig {
        weight_decay: 0.0,
        lambda: 0.0,
        ..TrainConfig::gat()
    };
    let model = CatModel::new(&config, &graph).unwrap();
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &graph, false, &mut rng(0)).unwrap();
    let mut perfect = Tensor::zeros(6, 3);
    for (i, &l) in graph.labels().iter().enumerate() {
        perfect.set(i, l, 60.0);
    }
    let out = ForwardOutput {
        logits: tape.constant(perfect),
        ..out
    };
    let loss = model.loss(&mut tape, &out, &graph).unwrap();
    assert!(tape.value(loss).item() < 1e-20);
}

#[test]
fn empty_training_split_is_config_error() {
    let features = Tensor::identity(3);
    let graph = Graph::from_edges(3, &[(0, 1)], features, vec![0, 1, 0], vec![Split::Test; 3]).unwrap();
    let model = CatModel::new(&TrainConfig::gat(), &graph).unwrap();
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &graph, true, &mut rng(0)).unwrap();
    assert!(matches!(model.loss(&mut tape, &out, &graph), Err(Error::Config(_))));
    assert!(matches!(train(&graph, &TrainConfig::gat()), Err(Error::Config(_))));
}

#[test]
fn feature_only_loss_ignores_intervention_embedding() {
    let graph = six_node_graph(3);
    let config = TrainConfig {
        strategy: Strategy::Feature,
        intervention: InterventionKind::Mf,
        lambda: 0.0,
        heads_hidden: 2,
        hidden_dim: 3,
        ..TrainConfig::default()
    };
    let mut model = CatModel::new(&config, &graph).unwrap();
    let loss_of = |m: &CatModel| {
        let mut tape = Tape::new();
        let out = m.forward(&mut tape, &graph, true, &mut rng(9)).unwrap();
        let loss = m.loss(&mut tape, &out, &graph).unwrap();
        tape.backward(loss).unwrap();
        let v_grad = tape.grad(out.bound.var(m.intervention_v_id().unwrap())).cloned();
        (tape.value(loss).item(), v_grad)
    };
    let (before, v_grad) = loss_of(&model);
    assert!(v_grad.map_or(true, |g| g.data().iter().all(|&v| v == 0.0)));
    let v_id = model.intervention_v_id().unwrap();
    *model.params_mut().get_mut(v_id) = uniform(6, 3, -5.0, 5.0, &mut rng(1));
    assert_eq!(loss_of(&model).0, before);
}

#[test]
fn memorizes_distinct_features() {
    let n = 12;
    let mut r = rng(5);
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i * 5 + 3) % n)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rand::Rng::gen_range(&mut r, 0..3)).collect();
    let graph = Graph::from_edges(n, &edges, Tensor::identity(n), labels, vec![Split::Train; n]).unwrap();
    let config = TrainConfig {
        dropout: 0.0,
        weight_decay: 0.0,
        epochs_max: 300,
        heads_hidden: 2,
        ..TrainConfig::default()
    };
    let report = train(&graph, &config).unwrap().report;
    assert_eq!(report.epochs.last().unwrap().train_accuracy, 1.0);
}

#[test]
fn clean_two_block_model_is_solved_within_200_epochs() {
    for seed in 0..5 {
        let graph = generate_sbm(&SbmParams {
            n_per_block: 30,
            n_blocks: 2,
            p_in: 0.3,
            p_out: 0.02,
            feat_dim: 2,
            feat_noise: 0.0,
            seed,
        })
        .unwrap();
        let config = TrainConfig {
            epochs_max: 200,
            seed,
            ..TrainConfig::cat_i_mf()
        };
        let report = train(&graph, &config).unwrap().report;
        assert_eq!(report.test_accuracy, 1.0, "seed {seed}");
    }
}

#[test]
fn training_is_deterministic() {
    let graph = generate_sbm(&SbmParams {
        n_per_block: 20,
        n_blocks: 3,
        p_in: 0.3,
        p_out: 0.05,
        feat_dim: 3,
        feat_noise: 0.8,
        seed: 4,
    })
    .unwrap();
    let config = TrainConfig {
        epochs_max: 40,
        heads_hidden: 2,
        seed: 17,
        ..TrainConfig::default()
    };
    let a = train(&graph, &config).unwrap();
    let b = train(&graph, &config).unwrap();
    assert_eq!(a.report.without_timing(), b.report.without_timing());
    assert_eq!(a.model.params(), b.model.params());
    assert!(a.report.best_epoch <= a.report.epochs_run);
    assert_eq!(a.report.epochs_run, a.report.epochs.len());
}

#[test]
fn early_stopping_restores_best_parameters() {
    let graph = structure_fixture();
    let config = TrainConfig {
        epochs_max: 400,
        patience: 10,
        heads_hidden: 2,
        ..TrainConfig::gat()
    };
    let outcome = train(&graph, &config).unwrap();
    let report = &outcome.report;
    assert!(report.epochs_run < 400);
    assert_eq!(report.epochs_run, report.best_epoch + 10);
    let best = &report.epochs[report.best_epoch - 1];
    assert_eq!(best.val_accuracy, report.best_val_accuracy);
    let predictions = predict(&outcome.model.logits(&graph).unwrap());
    let val = accuracy(&predictions, graph.labels(), &graph.nodes_in(Split::Val));
    assert_eq!(val, report.best_val_accuracy);
}

#[test]
fn classification_and_clustering_differ_only_in_scored_nodes() {
    let graph = six_node_graph(6);
    let model = CatModel::new(&TrainConfig::gat(), &graph).unwrap();
    let predictions = predict(&model.logits(&graph).unwrap());
    let all: Vec<usize> = (0..6).collect();
    assert_eq!(
        evaluate(&model, &graph, EvalTask::Clustering).unwrap(),
        accuracy(&predictions, graph.labels(), &all)
    );
    assert_eq!(
        evaluate(&model, &graph, EvalTask::Classification).unwrap(),
        accuracy(&predictions, graph.labels(), &graph.nodes_in(Split::Test))
    );
    let perfect: Vec<usize> = graph.labels().to_vec();
    assert_eq!(accuracy(&perfect, graph.labels(), &all), 1.0);
}

#[test]
fn non_finite_input_reports_divergence() {
    let mut features = Tensor::identity(4);
    features.set(2, 1, f64::INFINITY);
    let graph = Graph::from_edges(4, &[(0, 1), (2, 3)], features, vec![0, 1, 0, 1], vec![Split::Train; 4]).unwrap();
    match train(&graph, &TrainConfig::gat()) {
        Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.report.epochs_run)),
    }
}

#[test]
fn checkpoint_restores_identical_logits() {
    let graph = six_node_graph(7);
    let config = TrainConfig {
        epochs_max: 5,
        heads_hidden: 2,
        ..TrainConfig::default()
    };
    let trained = train(&graph, &config).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.tsv");
    trained.params().save_tsv(&path).unwrap();
    let mut fresh = CatModel::new(&TrainConfig { seed: 99, ..config }, &graph).unwrap();
    fresh.params_mut().copy_values_from(&ParamStore::load_tsv(&path).unwrap()).unwrap();
    assert_eq!(fresh.logits(&graph).unwrap(), trained.logits(&graph).unwrap());
}
