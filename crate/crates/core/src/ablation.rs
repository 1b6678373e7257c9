//! Attention-variant comparison: every fusion strategy and intervention
//! combination trained over several seeds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::attention::Strategy;
use crate::error::Result;
use crate::graph::Graph;
use crate::intervention::InterventionKind;
use crate::model::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    /// Feature attention only.
    F,
    /// Structural attention from MF only.
    MfOnly,
    /// Structural attention from SC only.
    ScOnly,
    CatIMf,
    CatISc,
    CatEMf,
    CatESc,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::F,
        Variant::MfOnly,
        Variant::ScOnly,
        Variant::CatIMf,
        Variant::CatISc,
        Variant::CatEMf,
        Variant::CatESc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::F => "F",
            Variant::MfOnly => "MF",
            Variant::ScOnly => "SC",
            Variant::CatIMf => "CAT-I-MF",
            Variant::CatISc => "CAT-I-SC",
            Variant::CatEMf => "CAT-E-MF",
            Variant::CatESc => "CAT-E-SC",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Variant::F => Strategy::Feature,
            Variant::MfOnly | Variant::ScOnly => Strategy::Structure,
            Variant::CatIMf | Variant::CatISc => Strategy::Implicit,
            Variant::CatEMf | Variant::CatESc => Strategy::Explicit,
        }
    }

    pub fn intervention(self) -> InterventionKind {
        match self {
            Variant::F => InterventionKind::None,
            Variant::MfOnly | Variant::CatIMf | Variant::CatEMf => InterventionKind::Mf,
            Variant::ScOnly | Variant::CatISc | Variant::CatESc => InterventionKind::Sc,
        }
    }

    /// `base` with this variant's strategy and intervention. Every other
    /// setting, the `ε` term included, is kept.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            strategy: self.strategy(),
            intervention: self.intervention(),
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('_', "-");
        let wanted = match wanted.as_str() {
            "MF-ONLY" => "MF",
            "SC-ONLY" => "SC",
            "FEATURE" | "F-ONLY" => "F",
            w => w,
        };
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == wanted)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Test accuracy of one (variant, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRun {
    pub variant: Variant,
    pub seed: u64,
    pub accuracy: f64,
    pub epochs_run: usize,
}

/// Aggregate over seeds for one variant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub runs: Vec<AblationRun>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains every `(variant, seed)` combination in parallel. Each run owns its
/// model; results come back in variant order, seeds ascending.
pub fn run_ablation(
    graph: &Graph,
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let config = TrainConfig {
                seed,
                ..variant.configure(base)
            };
            let report = train(graph, &config)?.report;
            Ok(AblationRun {
                variant,
                seed,
                accuracy: report.test_accuracy,
                epochs_run: report.epochs_run,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(variants
        .iter()
        .map(|&variant| {
            let runs: Vec<AblationRun> = runs.iter().filter(|r| r.variant == variant).cloned().collect();
            let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&accs);
            AblationRow {
                variant,
                mean,
                std,
                runs,
            }
        })
        .collect())
}

/// `variant  mean  std  n` as TSV with a header, accuracies in percent.
pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant\tmean\tstd\truns\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.2}\t{:.2}\t{}\n",
            r.variant,
            100.0 * r.mean,
            100.0 * r.std,
            r.runs.len()
        ));
    }
    out
}

/// Human-readable `mean ± std` table.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<10} {:>16} {:>5}\n", "variant", "accuracy (%)", "runs");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>7.2} ± {:<6.2} {:>5}\n",
            r.variant.name(),
            100.0 * r.mean,
            100.0 * r.std,
            r.runs.len()
        ));
    }
    out
}
