//! Trains attention variants on a block-model graph whose blocks are clean
//! but whose features are mostly noise, and prints mean test accuracy.
//!
//! ```text
//! cargo run --release --example ablation -- [seeds] [all] [lambda]
//! ```
//!
//! By default only the feature-only and CAT-I-MF variants run; pass `all` to
//! train all seven.

use conjoint::ablation::{ablation_table, run_ablation, Variant};
use conjoint::graph::{generate_sbm, SbmParams};
use conjoint::model::TrainConfig;

fn main() -> conjoint::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let variants = if args.get(1).map(String::as_str) == Some("all") {
        Variant::ALL.to_vec()
    } else {
        vec![Variant::F, Variant::CatIMf]
    };
    let lambda: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let graph = generate_sbm(&SbmParams {
        n_per_block: 100,
        n_blocks: 4,
        p_in: 0.1,
        p_out: 0.02,
        feat_dim: 4,
        feat_noise: 1.5,
        seed: 11,
    })?;
    println!(
        "block model: {} nodes, {} edges, {} classes",
        graph.n_nodes(),
        graph.n_undirected_edges(),
        graph.n_classes()
    );
    let base = TrainConfig {
        epochs_max: 300,
        patience: 100,
        lambda,
        ..TrainConfig::default()
    };
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let rows = run_ablation(&graph, &base, &variants, &seeds)?;
    print!("{}", ablation_table(&rows));
    Ok(())
}
