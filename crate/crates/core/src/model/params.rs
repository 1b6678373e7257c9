//! Named parameter storage and its TSV checkpoint format. Fields on a line
//! are tab-separated:
//!
//! ```text
//! # conjoint checkpoint v1
//! param layer0.head0.w 8 1433
//! <8 rows of 1433 tab-separated values>
//! param layer0.head0.a 16 1
//! ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_HEADER: &str = "# conjoint checkpoint v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    value: Tensor,
    decay: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Registers a parameter. `decay` marks it for the L2 penalty.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> ParamId {
        self.entries.push(Entry {
            name: name.into(),
            value,
            decay,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn decays(&self, id: ParamId) -> bool {
        self.entries[id.0].decay
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Total scalar count.
    pub fn n_values(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Records every parameter as a trainable leaf; `vars[id]` is its handle.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self.entries.iter().map(|e| tape.param(e.value.clone())).collect(),
        }
    }

    /// Replaces values from another store with identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.entries.len() != self.entries.len() {
            return Err(Error::Argument(format!(
                "{} parameters, expected {}",
                other.entries.len(),
                self.entries.len()
            )));
        }
        for (mine, theirs) in self.entries.iter_mut().zip(&other.entries) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::Argument(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    mine.name,
                    mine.value.shape(),
                    theirs.name,
                    theirs.value.shape()
                )));
            }
            mine.value = theirs.value.clone();
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(CHECKPOINT_HEADER);
        out.push('\n');
        for e in &self.entries {
            writeln!(out, "param\t{}\t{}\t{}", e.name, e.value.rows(), e.value.cols()).unwrap();
            out.push_str(&matrix_tsv(&e.value));
        }
        out
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Parses a checkpoint. Every parameter is marked for decay; use
    /// [`ParamStore::copy_values_from`] to load values into a model's store.
    pub fn from_tsv(text: &str) -> Result<ParamStore> {
        let err = |line: usize, msg: &str| Error::Parse {
            path: "<checkpoint>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CHECKPOINT_HEADER => {}
            _ => return Err(err(1, "missing checkpoint header")),
        }
        let mut store = ParamStore::new();
        while let Some((i, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 4 || parts[0] != "param" {
                return Err(err(i + 1, "expected `param<TAB>name<TAB>rows<TAB>cols`"));
            }
            let rows: usize = parts[2].parse().map_err(|_| err(i + 1, "bad row count"))?;
            let cols: usize = parts[3].parse().map_err(|_| err(i + 1, "bad column count"))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (j, row) = lines.next().ok_or_else(|| err(i + 1, "truncated parameter"))?;
                let values = row
                    .split('\t')
                    .map(|t| t.parse::<f64>().map_err(|_| err(j + 1, "bad value")))
                    .collect::<Result<Vec<_>>>()?;
                if values.len() != cols {
                    return Err(err(j + 1, "wrong number of columns"));
                }
                data.extend(values);
            }
            store.add(parts[1], Tensor::new(rows, cols, data)?, true);
        }
        Ok(store)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<ParamStore> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ParamStore::from_tsv(&text)
    }
}

/// Rows of `t` as tab-separated lines, values printed in shortest
/// round-trip form.
pub fn matrix_tsv(t: &Tensor) -> String {
    let mut out = String::new();
    for r in 0..t.rows() {
        let row: Vec<String> = t.row(r).iter().map(f64::to_string).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Parameter handles of one forward pass.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters the loss did not reach get zeros.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|&v| {
                tape.grad(v).cloned().unwrap_or_else(|| {
                    let (r, c) = tape.value(v).shape();
                    Tensor::zeros(r, c)
                })
            })
            .collect()
    }
}
