//! Graph conjoint attention (CAT) networks on a small reverse-mode autodiff
//! engine.
//!
//! * [`tensor`] and [`autodiff`]: dense `f64` matrices and a define-by-run tape.
//! * [`graph`]: neighborhoods with self-loops, TSV bundles, block-model
//!   generator and citation-data converter.
//! * [`intervention`]: structural scores `C_ij` (MF, SC, FS).
//! * [`attention`]: the conjoint attention layer.
//! * [`model`]: the two-layer network, training loop and checkpoints.
//! * [`ablation`]: the attention-variant comparison.
//! * [`theory`]: multiset collision and separation checks for the `ε` term.
//! * [`cli`]: the `conjoint` command line.

pub mod ablation;
pub mod attention;
pub mod autodiff;
pub mod cli;
pub mod error;
pub mod graph;
pub mod intervention;
pub mod model;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
