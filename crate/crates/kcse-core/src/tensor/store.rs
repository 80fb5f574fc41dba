//! Named parameters with matching gradient accumulators, plus the text
//! checkpoint format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "kcse-params v1";

/// Map of name -> parameter matrix, with gradients accumulated under the
/// same names. Iteration order is the sorted name order, so checkpoints and
/// optimizer sweeps are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
    grads: BTreeMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.params.get(name)
    }

    /// Parameter lookup that panics with the name; models construct their
    /// parameter names deterministically, so a miss is a bug.
    pub fn expect(&self, name: &str) -> &Matrix {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' missing from store"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix> {
        self.grads.get(name)
    }

    /// Add `grad` into the accumulator for `name`; repeated calls without a
    /// clear accumulate additively.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Matrix) {
        let param = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("gradient for unknown parameter '{name}'"));
        assert_eq!(
            (param.rows(), param.cols()),
            (grad.rows(), grad.cols()),
            "gradient shape must equal parameter shape for '{name}'"
        );
        match self.grads.get_mut(name) {
            Some(acc) => acc.add_assign(grad),
            None => {
                self.grads.insert(name.to_string(), grad.clone());
            }
        }
    }

    pub fn clear_grads(&mut self) {
        self.grads.clear();
    }

    pub fn grads(&self) -> &BTreeMap<String, Matrix> {
        &self.grads
    }

    pub(crate) fn grads_mut(&mut self) -> &mut BTreeMap<String, Matrix> {
        &mut self.grads
    }

    pub fn total_entries(&self) -> usize {
        self.params.values().map(Matrix::len).sum()
    }

    /// Write all parameters as text. Float formatting uses the shortest
    /// representation that round-trips exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{CHECKPOINT_MAGIC}").map_err(|e| Error::io(path, e))?;
        for (name, m) in &self.params {
            writeln!(w, "{} {} {}", name, m.rows(), m.cols()).map_err(|e| Error::io(path, e))?;
            for i in 0..m.rows() {
                let line: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ParamStore> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();
        let fail = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };

        let (_, first) = lines
            .next()
            .ok_or_else(|| fail(1, "empty checkpoint".into()))?;
        let first = first.map_err(|e| Error::io(path, e))?;
        if first.trim() != CHECKPOINT_MAGIC {
            return Err(fail(1, format!("expected header '{CHECKPOINT_MAGIC}'")));
        }

        let mut store = ParamStore::new();
        while let Some((idx, line)) = lines.next() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| fail(idx + 1, "missing parameter name".into()))?
                .to_string();
            let rows: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| fail(idx + 1, "bad row count".into()))?;
            let cols: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| fail(idx + 1, "bad column count".into()))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ridx, row) = lines
                    .next()
                    .ok_or_else(|| fail(idx + 1, format!("truncated parameter '{name}'")))?;
                let row = row.map_err(|e| Error::io(path, e))?;
                let values: std::result::Result<Vec<f64>, _> =
                    row.split_whitespace().map(str::parse::<f64>).collect();
                let values =
                    values.map_err(|e| fail(ridx + 1, format!("bad float: {e}")))?;
                if values.len() != cols {
                    return Err(fail(
                        ridx + 1,
                        format!("expected {cols} values, found {}", values.len()),
                    ));
                }
                data.extend(values);
            }
            store.insert(name, Matrix::from_vec(rows, cols, data));
        }
        Ok(store)
    }
}
