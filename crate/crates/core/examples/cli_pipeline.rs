//! Drives the command-line front end in-process: generate a block-model
//! dataset, train on it, and print the resulting report.
//!
//! ```text
//! cargo run --example cli_pipeline
//! ```

use conjoint::cli::run_from;

fn main() {
    let root = std::env::temp_dir().join("conjoint-cli-pipeline");
    let data = root.join("sbm");
    let run = root.join("run");
    let (data, run) = (data.to_str().unwrap(), run.to_str().unwrap());
    let mut stdout = std::io::stdout();

    let steps: [&[&str]; 2] = [
        &["conjoint", "gen-synth", "--out", data, "--blocks", "3", "--block-size", "30"],
        &["conjoint", "train", "--data", data, "--out", run, "--epochs", "100", "--heads-hidden", "4"],
    ];
    for args in steps {
        let code = run_from(args.iter().copied(), &mut stdout);
        if code != 0 {
            eprintln!("`{}` exited with {code}", args[1]);
            std::process::exit(code.into());
        }
    }
    let report = std::fs::read_to_string(root.join("run").join("report.json")).expect("train writes report.json");
    println!("{}", report.lines().take(12).collect::<Vec<_>>().join("\n"));
}
