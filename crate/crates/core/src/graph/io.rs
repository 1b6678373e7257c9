//! Four-file TSV bundle: `edges.tsv`, `features.tsv`, `labels.tsv`, `splits.tsv`.
//!
//! * `edges.tsv`: two 0-based node ids per line, one undirected edge.
//! * `features.tsv`: one whitespace-separated row of floats per node.
//! * `labels.tsv`: one class id per node.
//! * `splits.tsv`: one of `train`, `val`, `test`, `none` per node.
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Graph, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.tsv";

struct Lines {
    path: PathBuf,
    text: String,
}

impl Lines {
    fn read(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Lines { path, text })
    }

    /// `(1-based line number, trimmed content)` for every data line.
    fn data(&self) -> impl Iterator<Item = (usize, &str)> {
        self.text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn parse<T: FromStr>(&self, line: usize, token: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.err(line, format!("cannot parse `{token}`")))
    }
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();

    let features_file = Lines::read(dir, FEATURES_FILE)?;
    let mut rows = Vec::new();
    let mut width = None;
    for (line, text) in features_file.data() {
        let row = text
            .split_whitespace()
            .map(|t| features_file.parse::<f64>(line, t))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(features_file.err(line, format!("{} values, expected {w}", row.len())))
            }
            _ => {}
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(features_file.err(line, format!("non-finite value {v}")));
        }
        rows.push(row);
    }
    let n = rows.len();
    let features = Tensor::from_rows(&rows)?;

    let labels_file = Lines::read(dir, LABELS_FILE)?;
    let labels = read_column::<usize>(&labels_file, n)?;
    let splits_file = Lines::read(dir, SPLITS_FILE)?;
    let splits = read_column::<Split>(&splits_file, n)?;

    let edges_file = Lines::read(dir, EDGES_FILE)?;
    let mut edges = Vec::new();
    for (line, text) in edges_file.data() {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(edges_file.err(line, format!("expected 2 node ids, got {}", tokens.len())));
        }
        let u: usize = edges_file.parse(line, tokens[0])?;
        let v: usize = edges_file.parse(line, tokens[1])?;
        if u >= n || v >= n {
            return Err(edges_file.err(line, format!("node id out of range for {n} nodes")));
        }
        edges.push((u, v));
    }

    Graph::from_edges(n, &edges, features, labels, splits)
}

fn read_column<T: FromStr>(file: &Lines, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let mut last_line = 0;
    for (line, text) in file.data() {
        if out.len() == n {
            return Err(file.err(line, format!("more rows than the {n} feature rows")));
        }
        out.push(file.parse(line, text)?);
        last_line = line;
    }
    if out.len() != n {
        return Err(file.err(
            last_line + 1,
            format!("{} rows, expected {n} (one per feature row)", out.len()),
        ));
    }
    Ok(out)
}

/// Writes the bundle so that [`load_graph`] reproduces `g` exactly.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut edges = String::new();
    for (u, v) in g.undirected_edges() {
        writeln!(edges, "{u}\t{v}").unwrap();
    }
    let mut features = String::new();
    for i in 0..g.n_nodes() {
        let row: Vec<String> = g.features().row(i).iter().map(f64::to_string).collect();
        writeln!(features, "{}", row.join("\t")).unwrap();
    }
    let mut labels = String::new();
    let mut splits = String::new();
    for i in 0..g.n_nodes() {
        writeln!(labels, "{}", g.labels()[i]).unwrap();
        writeln!(splits, "{}", g.splits()[i]).unwrap();
    }

    for (name, body) in [
        (EDGES_FILE, edges),
        (FEATURES_FILE, features),
        (LABELS_FILE, labels),
        (SPLITS_FILE, splits),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
