//! Conversion of the public LINQS citation dumps (`cora.content` /
//! `cora.cites`, same layout for Citeseer) into the TSV bundle.
//!
//! `*.content` lines are `<paper id> <binary word features...> <class name>`,
//! `*.cites` lines are `<cited id> <citing id>`. Node ids follow the order of
//! the content file; class ids follow the sorted class names. Citations that
//! reference papers missing from the content file are skipped and counted.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{save_graph, Graph, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NODE_MAP_FILE: &str = "node_map.tsv";
pub const CLASSES_FILE: &str = "classes.tsv";

#[derive(Clone, Debug)]
pub struct ConvertOptions {
    pub train_per_class: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub row_normalize: bool,
    pub seed: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions {
            train_per_class: 20,
            n_val: 500,
            n_test: 1000,
            row_normalize: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConvertSummary {
    pub n_nodes: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    /// Citation lines in the raw file, the count usually quoted as `|E|`.
    pub raw_citation_lines: usize,
    pub skipped_citations: usize,
    /// Distinct undirected edges after symmetrization, self-citations dropped.
    pub undirected_edges: usize,
    /// Neighborhood slots, self-loops included.
    pub neighborhood_slots: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        msg: msg.into(),
    }
}

pub fn convert_planetoid_raw(
    content: impl AsRef<Path>,
    cites: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    opts: &ConvertOptions,
) -> Result<ConvertSummary> {
    let (content, cites, out_dir) = (content.as_ref(), cites.as_ref(), out_dir.as_ref());
    let content_text = fs::read_to_string(content).map_err(|e| Error::io(content, e))?;
    let cites_text = fs::read_to_string(cites).map_err(|e| Error::io(cites, e))?;

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (i, line) in content_text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 3 {
            return Err(parse_err(content, i + 1, "expected id, features and class"));
        }
        let id = tokens[0].to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(parse_err(content, i + 1, format!("duplicate paper id `{id}`")));
        }
        let row = tokens[1..tokens.len() - 1]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(content, i + 1, format!("cannot parse `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(content, i + 1, "feature width differs from first row"));
            }
        }
        ids.push(id);
        rows.push(row);
        class_names.push(tokens[tokens.len() - 1].to_string());
    }
    let n = ids.len();
    if n == 0 {
        return Err(parse_err(content, 1, "no papers found"));
    }

    let classes: Vec<String> = class_names
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<usize> = class_names
        .iter()
        .map(|c| classes.binary_search(c).expect("collected above"))
        .collect();

    let mut edges = Vec::new();
    let mut raw_lines = 0;
    let mut skipped = 0;
    for (i, line) in cites_text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 2 {
            return Err(parse_err(cites, i + 1, "expected two paper ids"));
        }
        raw_lines += 1;
        match (index.get(tokens[0]), index.get(tokens[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => skipped += 1,
        }
    }

    if opts.row_normalize {
        for row in &mut rows {
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    let features = Tensor::from_rows(&rows)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let mut splits = vec![Split::None; n];
    let mut per_class = vec![0; classes.len()];
    let mut rest = Vec::new();
    for &i in &order {
        if per_class[labels[i]] < opts.train_per_class {
            per_class[labels[i]] += 1;
            splits[i] = Split::Train;
        } else {
            rest.push(i);
        }
    }
    let mut rest = rest.into_iter();
    for i in rest.by_ref().take(opts.n_val) {
        splits[i] = Split::Val;
    }
    for i in rest.take(opts.n_test) {
        splits[i] = Split::Test;
    }

    let graph = Graph::from_edges(n, &edges, features, labels, splits)?;
    save_graph(&graph, out_dir)?;

    let mut node_map = String::from("# paper_id\tnode_id\n");
    for (i, id) in ids.iter().enumerate() {
        writeln!(node_map, "{id}\t{i}").unwrap();
    }
    let mut class_map = String::from("# class_id\tname\n");
    for (i, c) in classes.iter().enumerate() {
        writeln!(class_map, "{i}\t{c}").unwrap();
    }
    for (name, body) in [(NODE_MAP_FILE, node_map), (CLASSES_FILE, class_map)] {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }

    Ok(ConvertSummary {
        n_nodes: n,
        feature_dim: graph.feature_dim(),
        n_classes: classes.len(),
        raw_citation_lines: raw_lines,
        skipped_citations: skipped,
        undirected_edges: graph.n_undirected_edges(),
        neighborhood_slots: graph.n_slots(),
        n_train: graph.nodes_in(Split::Train).len(),
        n_val: graph.nodes_in(Split::Val).len(),
        n_test: graph.nodes_in(Split::Test).len(),
    })
}
