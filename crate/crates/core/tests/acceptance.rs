//! Acceptance report. Prints one `PASS`, `FAIL` or `NOT RUN` line per
//! criterion and exits non-zero when any criterion fails.
//!
//! Criteria that need the citation datasets look for bundles under
//! `$CAT_DATA_DIR/cora` and `$CAT_DATA_DIR/citeseer` and report `NOT RUN`
//! when they are absent.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use conjoint::ablation::{mean_std, run_ablation, Variant};
use conjoint::attention::{conjoint_layer, relative_significance_values, AttentionScores, HeadVars, LayerOptions, Strategy};
use conjoint::autodiff::{Segments, Tape};
use conjoint::graph::{load_graph, Graph};
use conjoint::intervention::InterventionKind;
use conjoint::model::{train, CatModel, TrainConfig, TrainReport};
use conjoint::theory::{theorem_grid, COLLISION_TOL, FORMULA_TOL};
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let a = uniform(3, 4, -2.0, 2.0, &mut r);
    let b = uniform(3, 4, -2.0, 2.0, &mut r);
    let pos = uniform(3, 4, 0.5, 2.0, &mut r);
    let m = uniform(4, 3, -2.0, 2.0, &mut r);
    let col = uniform(3, 1, -2.0, 2.0, &mut r);
    let s = uniform(1, 1, -2.0, 2.0, &mut r);
    let kinked = away_from_zero(3, 4, 0.05, &mut r);
    let edges = uniform(7, 2, -2.0, 2.0, &mut r);
    let segs = Arc::new(Segments::new(vec![0, 0, 1, 2, 2, 2, 1], 3).unwrap());
    let index: Arc<[usize]> = vec![2, 0, 0, 1, 2].into();
    let target = uniform(3, 4, -1.0, 1.0, &mut r);

    let mut errors = vec![
        gradient_error(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1])),
        gradient_error(&[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1])),
        gradient_error(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1])),
        gradient_error(&[a.clone(), pos], |t, v| t.div(v[0], v[1])),
        gradient_error(&[a.clone()], |t, v| t.scale(v[0], -1.7)),
        gradient_error(&[a.clone()], |t, v| t.exp(v[0])),
        gradient_error(&[a.clone()], |t, v| t.sigmoid(v[0])),
        gradient_error(&[a.clone()], |t, v| t.transpose(v[0])),
        gradient_error(&[kinked.clone()], |t, v| t.leaky_relu(v[0], 0.2)),
        gradient_error(&[kinked], |t, v| t.elu(v[0])),
        gradient_error(&[a.clone(), m], |t, v| t.matmul(v[0], v[1])),
        gradient_error(&[a.clone(), s], |t, v| t.scale_by(v[0], v[1])),
        gradient_error(&[a.clone(), col], |t, v| t.row_scale(v[0], v[1])),
        gradient_error(&[a.clone(), b], |t, v| t.concat_cols(&[v[0], v[1]])),
        gradient_error(&[a.clone()], |t, v| t.slice_rows(v[0], 1, 3)),
        gradient_error(&[a.clone()], |t, v| t.gather_rows(v[0], index.clone())),
        gradient_error(&[a.clone()], |t, v| t.row_sum(v[0])),
        gradient_error(&[a.clone()], |t, v| t.sum(v[0])),
        gradient_error(&[a.clone()], |t, v| t.sum_squares(v[0])),
        gradient_error(&[edges.clone()], |t, v| t.segment_sum(v[0], segs.clone())),
        gradient_error(&[edges], |t, v| t.segment_softmax(v[0], segs.clone())),
        gradient_error(&[a.clone()], |t, v| t.log_softmax(v[0])),
        gradient_error(&[a.clone()], |t, v| {
            let lp = t.log_softmax(v[0])?;
            t.nll(lp, &[0, 2], &[1, 0, 3])
        }),
        gradient_error(&[a.clone()], |t, v| t.squared_error(v[0], target.clone())),
        gradient_error(&[a], |t, v| t.dropout(v[0], 0.4, true, &mut rng(77))),
    ];
    let variants = [
        (Strategy::Implicit, InterventionKind::Mf),
        (Strategy::Implicit, InterventionKind::Sc),
        (Strategy::Explicit, InterventionKind::Mf),
        (Strategy::Explicit, InterventionKind::Sc),
        (Strategy::Feature, InterventionKind::None),
    ];
    for (k, (strategy, intervention)) in variants.into_iter().enumerate() {
        let graph = six_node_graph(k as u64);
        let config = TrainConfig {
            heads_hidden: 2,
            heads_out: 2,
            hidden_dim: 3,
            strategy,
            intervention,
            lambda: 0.5,
            dropout: 0.3,
            seed: k as u64,
            ..TrainConfig::default()
        };
        let mut model = CatModel::new(&config, &graph).unwrap();
        errors.push(model_gradient_error(&mut model, &graph, 100 + k as u64));
    }
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= GRAD_TOL && secs < 10.0,
        format!("{} checks, worst relative error {worst:.2e}, {secs:.2} s", errors.len()),
    )
}

fn normalization() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let n = r.gen_range(1..=50);
        let p = r.gen_range(0.0..0.3);
        let graph = random_graph(n, p, 3, 2, seed);
        for strategy in [Strategy::Implicit, Strategy::Explicit] {
            let mut tape = Tape::new();
            let h = tape.constant(graph.features().clone());
            let head = HeadVars {
                w: tape.param(uniform(4, 3, -1.5, 1.5, &mut r)),
                a: tape.param(uniform(8, 1, -1.5, 1.5, &mut r)),
                g_f: tape.param(uniform(1, 1, -3.0, 3.0, &mut r)),
                g_s: tape.param(uniform(1, 1, -3.0, 3.0, &mut r)),
                eps_raw: tape.param(uniform(1, 1, -2.0, 2.0, &mut r)),
            };
            let c = tape.constant(uniform(graph.n_slots(), 1, -4.0, 4.0, &mut r));
            let opts = LayerOptions {
                strategy,
                ..LayerOptions::default()
            };
            let out = conjoint_layer(&mut tape, h, &head, Some(c), &graph, &opts, &mut r).unwrap();
            let scores = AttentionScores::from_tape(&tape, &out.scores);
            for values in [scores.f.unwrap(), scores.s.unwrap(), scores.alpha] {
                let mut sums = vec![0.0; n];
                for (e, &i) in graph.edge_index().src().iter().enumerate() {
                    sums[i] += values[e];
                }
                for sum in sums {
                    worst = worst.max((sum - 1.0).abs());
                }
            }
        }
    }
    let mut r = rng(0);
    let mut worst_r = 0.0f64;
    for _ in 0..10_000 {
        let (r_f, r_s) = relative_significance_values(r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0));
        worst_r = worst_r.max((r_f + r_s - 1.0).abs());
    }
    verdict(
        worst <= 1e-10 && worst_r <= 1e-15,
        format!("100 graphs x 2 strategies, worst |sum-1| {worst:.1e}, worst |r_f+r_s-1| {worst_r:.1e}"),
    )
}

fn theorems() -> Outcome {
    let rows = theorem_grid(&[1, 2, 3, 4, 5, 6], 0.5, true).unwrap();
    let failed = rows.iter().filter(|r| !r.passed()).count();
    let gap = rows.iter().map(|r| r.collision_gap).fold(0.0, f64::max);
    let formula = rows.iter().map(|r| r.formula_error).fold(0.0, f64::max);
    verdict(
        failed == 0 && gap <= COLLISION_TOL && formula <= FORMULA_TOL,
        format!(
            "{} pairs, {failed} failed, max collision gap {gap:.1e}, max formula error {formula:.1e}",
            rows.len()
        ),
    )
}

fn gat_consistency() -> Outcome {
    let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)];
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let graph = six_node_graph(seed);
        let config = TrainConfig {
            heads_hidden: 3,
            heads_out: 2,
            hidden_dim: 4,
            seed,
            ..TrainConfig::gat()
        };
        let model = CatModel::new(&config, &graph).unwrap();
        let logits = model.logits(&graph).unwrap();
        let oracle = gat_oracle(&model, &graph, &edges, config.leaky_slope);
        for (i, row) in oracle.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                worst = worst.max((logits.get(i, c) - v).abs());
            }
        }
    }
    verdict(worst <= 1e-10, format!("5 fixtures, max |logit diff| {worst:.1e}"))
}

fn data_dir(name: &str) -> Option<PathBuf> {
    let root = std::env::var_os("CAT_DATA_DIR").map(PathBuf::from)?;
    let dir = root.join(name);
    dir.join("edges.tsv").exists().then_some(dir)
}

fn seed_sweep(graph: &Graph, base: &TrainConfig) -> (Vec<TrainReport>, f64) {
    let start = Instant::now();
    let reports = (0..10)
        .map(|seed| train(graph, &TrainConfig { seed, ..base.clone() }).unwrap().report)
        .collect();
    (reports, start.elapsed().as_secs_f64())
}

fn mean_of(reports: &[TrainReport], f: impl Fn(&TrainReport) -> f64) -> f64 {
    mean_std(&reports.iter().map(f).collect::<Vec<_>>()).0
}

/// Classification (and optionally clustering) outcomes on one citation bundle.
fn citation(name: &str, cat_min: f64, gat_min: Option<f64>, clustering_min: Option<f64>) -> Vec<Outcome> {
    let expected = 1 + clustering_min.is_some() as usize;
    let Some(dir) = data_dir(name) else {
        return (0..expected)
            .map(|_| Outcome::NotRun(format!("no bundle at $CAT_DATA_DIR/{name}")))
            .collect();
    };
    let graph = match load_graph(&dir) {
        Ok(g) => g,
        Err(e) => {
            return (0..expected)
                .map(|_| Outcome::Fail(format!("cannot load {}: {e}", dir.display())))
                .collect()
        }
    };
    let (cat, cat_secs) = seed_sweep(&graph, &TrainConfig::cat_i_mf());
    let cat_acc = mean_of(&cat, |r| r.test_accuracy);
    let mut ok = cat_acc >= cat_min && cat_secs <= 900.0;
    let mut detail = format!("CAT-I-MF {:.2}% ({cat_secs:.0} s)", 100.0 * cat_acc);
    if let Some(min) = gat_min {
        let (gat, gat_secs) = seed_sweep(&graph, &TrainConfig::gat());
        let gat_acc = mean_of(&gat, |r| r.test_accuracy);
        ok &= gat_acc >= min && gat_secs <= 900.0;
        detail += &format!(", feature-only {:.2}% ({gat_secs:.0} s)", 100.0 * gat_acc);
    }
    let mut outcomes = vec![verdict(ok, detail)];
    if let Some(min) = clustering_min {
        let clustering = mean_of(&cat, |r| r.clustering_accuracy);
        outcomes.push(verdict(
            clustering >= min,
            format!("CAT-I-MF all-node accuracy {:.2}%", 100.0 * clustering),
        ));
    }
    outcomes
}

struct FixtureRuns {
    feature_only: f64,
    reference: f64,
}

fn ablation_direction() -> (Outcome, FixtureRuns) {
    let graph = structure_fixture();
    let base = fixture_config(TrainConfig::default());
    let seeds: Vec<u64> = (0..10).collect();
    let rows = run_ablation(&graph, &base, &[Variant::F, Variant::CatIMf], &seeds).unwrap();
    let runs = FixtureRuns {
        feature_only: rows[0].mean,
        reference: rows[1].mean,
    };
    let gap = 100.0 * (runs.reference - runs.feature_only);
    let outcome = verdict(
        gap >= 2.0,
        format!(
            "CAT-I-MF {:.2}% vs feature-only {:.2}% over 10 seeds, gap {gap:.2} points",
            100.0 * runs.reference,
            100.0 * runs.feature_only
        ),
    );
    (outcome, runs)
}

fn lambda_robustness(reference: f64) -> Outcome {
    let graph = structure_fixture();
    let seeds: Vec<u64> = (0..10).collect();
    let mut worst = 0.0f64;
    let mut parts = vec![format!("1e-2: {:.2}", 100.0 * reference)];
    for lambda in [1e-4, 1.0, 100.0] {
        let base = fixture_config(TrainConfig {
            lambda,
            ..TrainConfig::default()
        });
        let mean = run_ablation(&graph, &base, &[Variant::CatIMf], &seeds).unwrap()[0].mean;
        worst = worst.max(100.0 * (mean - reference).abs());
        parts.push(format!("{lambda:e}: {:.2}", 100.0 * mean));
    }
    verdict(
        worst <= 3.0,
        format!("10-seed means [{}], max deviation {worst:.2} points", parts.join(", ")),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
            Outcome::NotRun(d) => ("NOT RUN", d),
        };
        println!("{tag:<8} {name:<28} {detail}");
    };

    report("gradient correctness", gradients());
    report("attention normalization", normalization());
    report("multiset separation", theorems());
    report("feature-only vs GAT oracle", gat_consistency());
    let names = ["cora classification", "cora clustering"];
    for (name, outcome) in names.into_iter().zip(citation("cora", 0.82, Some(0.80), Some(0.79))) {
        report(name, outcome);
    }
    for outcome in citation("citeseer", 0.70, None, None) {
        report("citeseer classification", outcome);
    }
    let (ablation, runs) = ablation_direction();
    report("ablation direction", ablation);
    report("lambda robustness", lambda_robustness(runs.reference));

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
