use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Graph, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Planted-partition stochastic block model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n_per_block: usize,
    pub n_blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub feat_noise: f64,
    pub seed: u64,
}

/// Samples an SBM graph. Node `i` belongs to block `i / n_per_block`, which is
/// also its label. Features are `one_hot(block mod feat_dim)` plus Gaussian
/// noise. Each block is split 10% train, 10% val, rest test (at least one
/// train and one val node per block when the block has three or more nodes).
pub fn generate_sbm(params: &SbmParams) -> Result<Graph> {
    let SbmParams {
        n_per_block,
        n_blocks,
        p_in,
        p_out,
        feat_dim,
        feat_noise,
        seed,
    } = *params;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::Argument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if n_per_block == 0 || n_blocks == 0 || feat_dim == 0 {
        return Err(Error::Argument(
            "n_per_block, n_blocks and feat_dim must be positive".into(),
        ));
    }
    if !(feat_noise >= 0.0) {
        return Err(Error::Argument(format!("feat_noise must be >= 0, got {feat_noise}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_block * n_blocks;
    let block = |i: usize| i / n_per_block;

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let noise = Normal::new(0.0, feat_noise).expect("noise scale checked above");
    let mut features = Tensor::zeros(n, feat_dim);
    for i in 0..n {
        let row = features.row_mut(i);
        row[block(i) % feat_dim] = 1.0;
        if feat_noise > 0.0 {
            for v in row.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }

    let labels: Vec<usize> = (0..n).map(block).collect();
    let mut splits = vec![Split::Test; n];
    for b in 0..n_blocks {
        let mut members: Vec<usize> = (b * n_per_block..(b + 1) * n_per_block).collect();
        members.shuffle(&mut rng);
        let n_train = stratum(n_per_block);
        let n_val = stratum(n_per_block - n_train);
        for &i in &members[..n_train] {
            splits[i] = Split::Train;
        }
        for &i in &members[n_train..n_train + n_val] {
            splits[i] = Split::Val;
        }
    }

    Graph::from_edges(n, &edges, features, labels, splits)
}

fn stratum(available: usize) -> usize {
    if available == 0 {
        0
    } else {
        ((available as f64 * 0.1).round() as usize).clamp(1, available)
    }
}
