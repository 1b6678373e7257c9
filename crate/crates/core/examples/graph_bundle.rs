//! Generates a block-model graph, writes it as a TSV bundle, reads it back
//! and prints a few neighborhoods.
//!
//! ```text
//! cargo run --example graph_bundle -- [out_dir]
//! ```

use conjoint::graph::{generate_sbm, load_graph, save_graph, SbmParams, Split};

fn main() -> conjoint::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("conjoint-bundle"));
    let graph = generate_sbm(&SbmParams {
        n_per_block: 8,
        n_blocks: 3,
        p_in: 0.5,
        p_out: 0.05,
        feat_dim: 3,
        feat_noise: 0.3,
        seed: 1,
    })?;
    save_graph(&graph, &out)?;
    let back = load_graph(&out)?;
    assert_eq!(back.undirected_edges(), graph.undirected_edges());

    println!("bundle written to {}", out.display());
    println!(
        "{} nodes, {} undirected edges, {} neighborhood slots (self-loops included)",
        back.n_nodes(),
        back.n_undirected_edges(),
        back.n_slots()
    );
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split:>5}: {} nodes", back.nodes_in(split).len());
    }
    for i in [0, 8, 16] {
        println!("N({i}) = {:?}  label {}", back.neighborhood(i)?, back.labels()[i]);
    }
    Ok(())
}
