//! Prints the feature attention `f`, structural attention `s` and fused
//! attention `α` of one conjoint head on a small graph, for both fusion
//! strategies.
//!
//! ```text
//! cargo run --example attention_scores
//! ```

use conjoint::attention::{conjoint_layer, AttentionScores, HeadVars, LayerOptions, Strategy};
use conjoint::autodiff::Tape;
use conjoint::graph::{Graph, Split};
use conjoint::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> conjoint::Result<()> {
    let features = Tensor::from_rows(&[
        vec![1.0, 0.0],
        vec![0.9, 0.1],
        vec![0.0, 1.0],
        vec![0.2, 0.8],
    ])?;
    let graph = Graph::from_edges(4, &[(0, 1), (0, 2), (2, 3)], features, vec![0, 0, 1, 1], vec![Split::Train; 4])?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    for strategy in [Strategy::Implicit, Strategy::Explicit] {
        let mut tape = Tape::new();
        let h = tape.constant(graph.features().clone());
        let head = HeadVars {
            w: tape.param(Tensor::from_rows(&[vec![1.0, -0.5], vec![0.3, 0.8]])?),
            a: tape.param(Tensor::column(vec![0.4, -0.2, 0.7, 0.1])),
            g_f: tape.param(Tensor::scalar(0.0)),
            g_s: tape.param(Tensor::scalar(0.5)),
            eps_raw: tape.param(Tensor::scalar(0.0)),
        };
        // Structural scores favor slots whose endpoints share a label.
        let ei = graph.edge_index();
        let c: Vec<f64> = (0..ei.len())
            .map(|e| if graph.labels()[ei.src()[e]] == graph.labels()[ei.dst()[e]] { 1.0 } else { -1.0 })
            .collect();
        let c = tape.constant(Tensor::column(c));
        let opts = LayerOptions {
            strategy,
            ..LayerOptions::default()
        };
        let out = conjoint_layer(&mut tape, h, &head, Some(c), &graph, &opts, &mut rng)?;
        let scores = AttentionScores::from_tape(&tape, &out.scores);
        println!("{strategy:?} fusion");
        println!("  slot      f       s       alpha");
        let (f, s) = (scores.f.unwrap_or_default(), scores.s.unwrap_or_default());
        for e in 0..ei.len() {
            println!(
                "  {}->{}   {:.3}   {:.3}   {:.3}",
                ei.src()[e],
                ei.dst()[e],
                f[e],
                s[e],
                scores.alpha[e]
            );
        }
    }
    Ok(())
}
