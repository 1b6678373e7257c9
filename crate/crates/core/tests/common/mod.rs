#![allow(dead_code)]

use conjoint::autodiff::{Tape, Var};
use conjoint::graph::{generate_sbm, Graph, SbmParams, Split};
use conjoint::model::{CatModel, TrainConfig};
use conjoint::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Entry-wise relative error with a small floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Values in `[-2, -margin] ∪ [margin, 2]`.
pub fn away_from_zero(rows: usize, cols: usize, margin: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v = rng.gen_range(margin..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Largest relative error between reverse-mode gradients and central
/// differences of `Σ w ⊙ build(inputs)` for fixed random weights `w`.
pub fn gradient_error<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> conjoint::Result<Var>,
{
    let eval = |xs: &[Tensor], want_grads: bool| -> (f64, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        let (r, c) = tape.value(out).shape();
        let w = tape.constant(uniform(r, c, 0.5, 1.5, &mut rng(4242)));
        let weighted = tape.mul(out, w).unwrap();
        let loss = tape.sum(weighted).unwrap();
        let value = tape.value(loss).item();
        let mut grads = Vec::new();
        if want_grads {
            tape.backward(loss).unwrap();
            grads = vars
                .iter()
                .zip(xs)
                .map(|(&v, x)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols())))
                .collect();
        }
        (value, grads)
    };

    let (_, grads) = eval(inputs, true);
    let mut worst = 0.0f64;
    for (k, x) in inputs.iter().enumerate() {
        for idx in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= FD_STEP;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[k].data()[idx], numeric));
        }
    }
    worst
}

/// Largest relative error of the full training loss gradient of `model`
/// with respect to every parameter. The forward pass runs in training mode
/// with a fixed generator, so dropout masks and negative samples repeat.
pub fn model_gradient_error(model: &mut CatModel, graph: &Graph, seed: u64) -> f64 {
    let loss_value = |m: &CatModel| -> f64 {
        let mut tape = Tape::new();
        let out = m.forward(&mut tape, graph, true, &mut rng(seed)).unwrap();
        let loss = m.loss(&mut tape, &out, graph).unwrap();
        tape.value(loss).item()
    };
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, graph, true, &mut rng(seed)).unwrap();
    let loss = model.loss(&mut tape, &out, graph).unwrap();
    tape.backward(loss).unwrap();
    let grads = out.bound.grads(&tape);

    let ids: Vec<_> = model.params().ids().collect();
    let mut worst = 0.0f64;
    for (id, g) in ids.into_iter().zip(grads) {
        for idx in 0..g.len() {
            model.params_mut().get_mut(id).data_mut()[idx] += FD_STEP;
            let plus = loss_value(model);
            model.params_mut().get_mut(id).data_mut()[idx] -= 2.0 * FD_STEP;
            let minus = loss_value(model);
            model.params_mut().get_mut(id).data_mut()[idx] += FD_STEP;
            worst = worst.max(rel_err(g.data()[idx], (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Six nodes, two triangles joined by one edge, random features, every split
/// represented.
pub fn six_node_graph(seed: u64) -> Graph {
    let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)];
    let features = uniform(6, 3, -1.0, 1.0, &mut rng(seed));
    let splits = vec![Split::Train, Split::Train, Split::Val, Split::Train, Split::Test, Split::Train];
    Graph::from_edges(6, &edges, features, vec![0, 0, 1, 1, 2, 2], splits).unwrap()
}

/// Erdős–Rényi graph with `n` nodes and random features and labels.
pub fn random_graph(n: usize, p: f64, feat_dim: usize, n_classes: usize, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let features = uniform(n, feat_dim, -1.0, 1.0, &mut r);
    let labels = (0..n).map(|_| r.gen_range(0..n_classes)).collect();
    let splits = (0..n)
        .map(|i| match i % 3 {
            0 => Split::Train,
            1 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    Graph::from_edges(n, &edges, features, labels, splits).unwrap()
}

/// Block model whose blocks are clean but whose features are mostly noise.
pub fn structure_fixture() -> Graph {
    generate_sbm(&SbmParams {
        n_per_block: 100,
        n_blocks: 4,
        p_in: 0.1,
        p_out: 0.02,
        feat_dim: 4,
        feat_noise: 1.5,
        seed: 11,
    })
    .unwrap()
}

/// Training budget used on the block-model fixtures.
pub fn fixture_config(base: TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs_max: 300,
        patience: 100,
        ..base
    }
}

/// Independent dense GAT forward: per node, per head, a softmax over the
/// closed neighborhood of `LeakyReLU(a_l·Wx_i + a_r·Wx_j)`, hidden heads
/// concatenated then ELU, output heads averaged.
pub fn gat_oracle(model: &CatModel, graph: &Graph, edges: &[(usize, usize)], slope: f64) -> Vec<Vec<f64>> {
    let n = graph.n_nodes();
    let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(u, v) in edges {
        if u != v && !nbrs[u].contains(&v) {
            nbrs[u].push(v);
            nbrs[v].push(u);
        }
    }
    let x: Vec<Vec<f64>> = (0..n).map(|i| graph.features().row(i).to_vec()).collect();
    let head = |input: &[Vec<f64>], layer: usize, h: usize| -> Vec<Vec<f64>> {
        let p = model.params();
        let w = p.get(p.find(&format!("layer{layer}.head{h}.w")).unwrap());
        let a = p.get(p.find(&format!("layer{layer}.head{h}.a")).unwrap());
        let d = w.rows();
        let z: Vec<Vec<f64>> = input
            .iter()
            .map(|xi| (0..d).map(|r| w.row(r).iter().zip(xi).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let dot = |v: &[f64], off: usize| -> f64 { (0..d).map(|k| a.get(off + k, 0) * v[k]).sum() };
        (0..n)
            .map(|i| {
                let e: Vec<f64> = nbrs[i]
                    .iter()
                    .map(|&j| {
                        let s = dot(&z[i], 0) + dot(&z[j], d);
                        if s > 0.0 {
                            s
                        } else {
                            slope * s
                        }
                    })
                    .collect();
                let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = e.iter().map(|v| (v - m).exp()).sum();
                let mut out = vec![0.0; d];
                for (&j, ej) in nbrs[i].iter().zip(&e) {
                    let alpha = (ej - m).exp() / total;
                    for k in 0..d {
                        out[k] += alpha * z[j][k];
                    }
                }
                out
            })
            .collect()
    };

    let hidden_heads = model.layers()[0].len();
    let heads: Vec<Vec<Vec<f64>>> = (0..hidden_heads).map(|h| head(&x, 0, h)).collect();
    let hidden: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            heads
                .iter()
                .flat_map(|hh| hh[i].iter().copied())
                .map(|v| if v > 0.0 { v } else { v.exp_m1() })
                .collect()
        })
        .collect();
    let out_heads = model.layers()[1].len();
    let outs: Vec<Vec<Vec<f64>>> = (0..out_heads).map(|h| head(&hidden, 1, h)).collect();
    (0..n)
        .map(|i| {
            let c = outs[0][i].len();
            (0..c)
                .map(|k| outs.iter().map(|o| o[i][k]).sum::<f64>() / out_heads as f64)
                .collect()
        })
        .collect()
}
