//! Fits a matrix-factorization embedding `V` to a graph of two triangles and
//! shows the learned structural scores: high inside a triangle, low across.
//!
//! ```text
//! cargo run --example intervention_mf
//! ```

use conjoint::autodiff::Tape;
use conjoint::graph::{Graph, Split};
use conjoint::intervention::{mf_scores, sample_non_edges};
use conjoint::model::{Adam, ParamStore};
use conjoint::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> conjoint::Result<()> {
    let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)];
    let graph = Graph::from_edges(6, &edges, Tensor::identity(6), vec![0, 0, 0, 1, 1, 1], vec![Split::Train; 6])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut store = ParamStore::new();
    let v_id = store.add("v", Tensor::glorot(6, 2, &mut rng), false);
    let mut adam = Adam::new(0.05);
    for step in 0..=300 {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let negatives = sample_non_edges(&graph, graph.n_undirected_edges(), &mut rng);
        let out = mf_scores(&mut tape, bound.var(v_id), &graph, &negatives)?;
        if step % 100 == 0 {
            println!("step {step:>3}  aux loss {:.4}", tape.value(out.aux_loss).item());
        }
        tape.backward(out.aux_loss)?;
        adam.step(&mut store, &bound.grads(&tape))?;
    }

    let v = store.get(v_id);
    let dot = |i: usize, j: usize| -> f64 { v.row(i).iter().zip(v.row(j)).map(|(a, b)| a * b).sum() };
    println!("<V_0, V_1> = {:+.3}  (same triangle)", dot(0, 1));
    println!("<V_2, V_3> = {:+.3}  (bridge edge)", dot(2, 3));
    println!("<V_0, V_5> = {:+.3}  (no edge)", dot(0, 5));
    Ok(())
}
