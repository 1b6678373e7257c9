//! The `conjoint` command line: `train`, `ablate`, `check-theorems`,
//! `gen-synth` and `convert-cora`.
//!
//! Exit codes: 0 on success, 1 on a failed check or an output error, 2 on a
//! bad configuration or unreadable dataset, 3 when training diverges.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ablation::{ablation_table, ablation_tsv, run_ablation, Variant};
use crate::error::Error;
use crate::graph::{convert_planetoid_raw, generate_sbm, load_graph, save_graph, ConvertOptions, SbmParams};
use crate::model::{matrix_tsv, train, TrainConfig};
use crate::theory::{build_collision_pair, epsilon_grid, epsilon_sweep, theorem_grid, CollisionKind, SeparationReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "conjoint", version, about = "Graph conjoint attention networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and write report.json, checkpoint.tsv and curves.tsv.
    Train(TrainArgs),
    /// Train every attention variant over several seeds and tabulate accuracy.
    Ablate(AblateArgs),
    /// Check the multiset collision and separation grid.
    CheckTheorems(TheoremArgs),
    /// Write a stochastic block model graph as a dataset bundle.
    GenSynth(SynthArgs),
    /// Convert raw `.content` / `.cites` citation files into a dataset bundle.
    ConvertCora(ConvertArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset bundle directory. Defaults to `<data-root>/<dataset>`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Root holding one bundle directory per dataset.
    #[arg(long, env = "CAT_DATA_DIR", default_value = "data")]
    pub data_root: PathBuf,
    #[arg(long, default_value = "cora")]
    pub dataset: String,
}

impl DataArgs {
    pub fn bundle_dir(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.data_root.join(&self.dataset))
    }
}

/// Training settings: a `key = value` file, then per-flag overrides.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub weight_decay: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long, alias = "epochs")]
    pub epochs_max: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub heads_hidden: Option<String>,
    #[arg(long)]
    pub heads_out: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    /// implicit, explicit, feature or structure.
    #[arg(long)]
    pub strategy: Option<String>,
    /// mf, sc, fs or none.
    #[arg(long)]
    pub intervention: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub leaky_slope: Option<String>,
    /// Number of columns of V, or `auto` for the number of classes.
    #[arg(long)]
    pub c_dim: Option<String>,
    #[arg(long)]
    pub eps_term: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// classification or clustering.
    #[arg(long)]
    pub eval_task: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> crate::Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_kv_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        let overrides = [
            ("lr", &self.lr),
            ("weight_decay", &self.weight_decay),
            ("dropout", &self.dropout),
            ("epochs_max", &self.epochs_max),
            ("patience", &self.patience),
            ("heads_hidden", &self.heads_hidden),
            ("heads_out", &self.heads_out),
            ("hidden_dim", &self.hidden_dim),
            ("strategy", &self.strategy),
            ("intervention", &self.intervention),
            ("lambda", &self.lambda),
            ("leaky_slope", &self.leaky_slope),
            ("c_dim", &self.c_dim),
            ("eps_term", &self.eps_term),
            ("seed", &self.seed),
            ("eval_task", &self.eval_task),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "runs/ablate")]
    pub out: PathBuf,
    /// Number of seeds per variant.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    /// Comma-separated subset, e.g. `F,CAT-I-MF`. Defaults to all seven.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TheoremArgs {
    /// Largest multiplicity in the grid; pairs range over 1..=max.
    #[arg(long, default_value_t = 6)]
    pub max_size: usize,
    /// ε used for the grid.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Run the separation check without the ε term (expected to fail).
    #[arg(long)]
    pub no_eps: bool,
    /// Also write the grid as TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "data/sbm")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 50)]
    pub block_size: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p_out: f64,
    #[arg(long, default_value_t = 8)]
    pub feat_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub feat_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Directory holding `<name>.content` and `<name>.cites`.
    #[arg(long)]
    pub raw: PathBuf,
    /// Base name of the raw files.
    #[arg(long, default_value = "cora")]
    pub name: String,
    /// Output bundle directory. Defaults to `<data-root>/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "CAT_DATA_DIR", default_value = "data")]
    pub data_root: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 500)]
    pub n_val: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    /// Keep raw binary features instead of row-normalizing them.
    #[arg(long)]
    pub raw_features: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn input_failure(e: Error) -> Failure {
    let code = match e {
        Error::Divergence { .. } | Error::NonFinite { .. } => EXIT_DIVERGED,
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Argument(_) => EXIT_CONFIG,
        _ => EXIT_FAILED,
    };
    Failure::new(code, e.to_string())
}

fn output_failure(e: Error) -> Failure {
    Failure::new(EXIT_FAILED, e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| output_failure(Error::io(path, e)))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| output_failure(Error::io(path, e)))
}

/// Parses `args` (program name first) and runs the command, writing
/// human-readable output to `out`.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8, Failure> {
    match cli.command {
        Command::Train(args) => cmd_train(&args, out),
        Command::Ablate(args) => cmd_ablate(&args, out),
        Command::CheckTheorems(args) => cmd_check_theorems(&args, out),
        Command::GenSynth(args) => cmd_gen_synth(&args, out),
        Command::ConvertCora(args) => cmd_convert(&args, out),
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| Failure::new(EXIT_FAILED, e.to_string()))?
    };
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let config = args.config.resolve().map_err(input_failure)?;
    let graph = load_graph(args.data.bundle_dir()).map_err(input_failure)?;
    let outcome = train(&graph, &config).map_err(input_failure)?;
    let report = &outcome.report;

    create_dir(&args.out)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Failure::new(EXIT_FAILED, e.to_string()))?;
    write_file(&args.out.join("report.json"), &(json + "\n"))?;
    write_file(&args.out.join("checkpoint.tsv"), &outcome.model.params().to_tsv())?;
    write_file(&args.out.join("curves.tsv"), &report.curves_tsv())?;
    if let Some(v) = outcome.model.intervention_v() {
        write_file(&args.out.join("intervention_v.tsv"), &matrix_tsv(v))?;
    }
    say!(
        out,
        "{} nodes, {} edges: {} after {} epochs (best {}), {} accuracy {:.4}",
        report.dataset.n_nodes,
        report.dataset.undirected_edges,
        config.strategy,
        report.epochs_run,
        report.best_epoch,
        config.eval_task,
        report.test_accuracy
    );
    say!(out, "wrote {}", args.out.display());
    Ok(EXIT_OK)
}

pub fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let base = args.config.resolve().map_err(input_failure)?;
    let variants = if args.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.variants
            .iter()
            .map(|v| v.parse::<Variant>().map_err(|e| Failure::new(EXIT_CONFIG, e)))
            .collect::<Result<Vec<_>, _>>()?
    };
    if args.seeds == 0 {
        return Err(Failure::new(EXIT_CONFIG, "--seeds must be at least 1"));
    }
    let graph = load_graph(args.data.bundle_dir()).map_err(input_failure)?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let rows = run_ablation(&graph, &base, &variants, &seeds).map_err(input_failure)?;

    create_dir(&args.out)?;
    write_file(&args.out.join("ablation.tsv"), &ablation_tsv(&rows))?;
    let mut runs = String::from("variant\tseed\taccuracy\tepochs_run\n");
    for run in rows.iter().flat_map(|r| &r.runs) {
        runs.push_str(&format!("{}\t{}\t{}\t{}\n", run.variant, run.seed, run.accuracy, run.epochs_run));
    }
    write_file(&args.out.join("ablation_runs.tsv"), &runs)?;
    say!(out, "{}", ablation_table(&rows).trim_end());
    Ok(EXIT_OK)
}

fn theorem_row(r: &SeparationReport) -> String {
    format!(
        "{:<9} {:<9} {:>2} {:>2} {:>4.2} {:>10.2e} {:>10.2e} {:>10.2e}  {}",
        r.kind.to_string(),
        r.strategy.to_string(),
        r.sizes.0,
        r.sizes.1,
        r.epsilon,
        r.collision_gap,
        r.difference_norm(),
        r.formula_error,
        if r.passed() { "pass" } else { "FAIL" }
    )
}

const THEOREM_HEADER: &str = "kind      strategy  n1 n2  eps  collision  separation  formula_err  result";

pub fn cmd_check_theorems(args: &TheoremArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    if args.max_size < 2 {
        return Err(Failure::new(EXIT_CONFIG, "--max-size must be at least 2"));
    }
    let sizes: Vec<usize> = (1..=args.max_size).collect();
    let grid = theorem_grid(&sizes, args.epsilon, !args.no_eps).map_err(input_failure)?;
    let pair = build_collision_pair(CollisionKind::Theorem1, (2, 3)).map_err(input_failure)?;
    let sweep = if args.no_eps {
        Vec::new()
    } else {
        epsilon_sweep(&pair, &epsilon_grid()).map_err(input_failure)?
    };

    say!(out, "{THEOREM_HEADER}");
    for r in &grid {
        say!(out, "{}", theorem_row(r));
        if !r.passed() {
            say!(out, "    counterexample: h(X1) = {:?}, h(X2) = {:?}", r.h_first, r.h_second);
        }
    }
    let mut sweep_ok = true;
    if !sweep.is_empty() {
        say!(out, "\nepsilon sweep for (n1, n2) = (2, 3)");
        say!(out, "{THEOREM_HEADER}");
        let mut last = 0.0;
        for r in &sweep {
            let norm = r.difference_norm();
            sweep_ok &= r.passed() && norm > last;
            last = norm;
            say!(out, "{}", theorem_row(r));
        }
    }
    let failures = grid.iter().filter(|r| !r.passed()).count();
    say!(
        out,
        "\n{} of {} pairs pass{}",
        grid.len() - failures,
        grid.len(),
        if args.no_eps {
            " (separation checked without the epsilon term)"
        } else if sweep_ok {
            "; sweep increasing"
        } else {
            "; sweep NOT increasing"
        }
    );

    if let Some(path) = &args.out {
        let mut tsv = String::from(
            "kind\tstrategy\tn1\tn2\tepsilon\tcollision_gap\tdifference_norm\tformula_error\tpassed\n",
        );
        for r in grid.iter().chain(&sweep) {
            tsv.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.kind,
                r.strategy,
                r.sizes.0,
                r.sizes.1,
                r.epsilon,
                r.collision_gap,
                r.difference_norm(),
                r.formula_error,
                r.passed()
            ));
        }
        write_file(path, &tsv)?;
    }
    Ok(if failures == 0 && sweep_ok { EXIT_OK } else { EXIT_FAILED })
}

pub fn cmd_gen_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let graph = generate_sbm(&SbmParams {
        n_per_block: args.block_size,
        n_blocks: args.blocks,
        p_in: args.p_in,
        p_out: args.p_out,
        feat_dim: args.feat_dim,
        feat_noise: args.feat_noise,
        seed: args.seed,
    })
    .map_err(input_failure)?;
    save_graph(&graph, &args.out).map_err(output_failure)?;
    say!(
        out,
        "wrote {} nodes, {} edges, {} classes to {}",
        graph.n_nodes(),
        graph.n_undirected_edges(),
        graph.n_classes(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

pub fn cmd_convert(args: &ConvertArgs, out: &mut dyn Write) -> Result<u8, Failure> {
    let content = args.raw.join(format!("{}.content", args.name));
    let cites = args.raw.join(format!("{}.cites", args.name));
    let dest = args.out.clone().unwrap_or_else(|| args.data_root.join(&args.name));
    let opts = ConvertOptions {
        train_per_class: args.train_per_class,
        n_val: args.n_val,
        n_test: args.n_test,
        row_normalize: !args.raw_features,
        seed: args.seed,
    };
    let summary = convert_planetoid_raw(&content, &cites, &dest, &opts).map_err(input_failure)?;
    say!(
        out,
        "{} nodes, {} features, {} classes, {} undirected edges ({} citation lines, {} skipped)",
        summary.n_nodes,
        summary.feature_dim,
        summary.n_classes,
        summary.undirected_edges,
        summary.raw_citation_lines,
        summary.skipped_citations
    );
    say!(
        out,
        "split: {} train, {} val, {} test; wrote {}",
        summary.n_train,
        summary.n_val,
        summary.n_test,
        dest.display()
    );
    Ok(EXIT_OK)
}
