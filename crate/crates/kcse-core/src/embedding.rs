//! Named dense vectors serialized as word2vec-style text: a `count dim`
//! header line, then one `name v1 v2 ... vd` line per entry. Names are
//! normalized like graph concepts so class-name lookups are spelling-proof.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::normalize_concept;
use crate::tensor::Matrix;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    names: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            names: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push(&mut self, name: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector for '{name}' has length {}, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        let norm = normalize_concept(name);
        if self.index.contains_key(&norm) {
            return Err(Error::Config(format!("duplicate embedding name '{norm}'")));
        }
        self.index.insert(norm.clone(), self.names.len());
        self.names.push(norm);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        let norm = normalize_concept(name);
        self.index
            .get(&norm)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows for `names`, stacked in the given order.
    pub fn gather(&self, names: &[String]) -> Result<Matrix> {
        let mut out = Matrix::zeros(names.len(), self.dim);
        for (r, name) in names.iter().enumerate() {
            let row = self.get(name).ok_or_else(|| {
                Error::MissingClasses(vec![normalize_concept(name)])
            })?;
            out.row_mut(r).copy_from_slice(row);
        }
        Ok(out)
    }

    pub fn from_matrix(names: Vec<String>, matrix: &Matrix) -> Result<Self> {
        let mut table = EmbeddingTable::new(matrix.cols());
        if names.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} names for {} rows",
                names.len(),
                matrix.rows()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            table.push(name, matrix.row(i))?;
        }
        Ok(table)
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let fail = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let (_, header) = lines
        .next()
        .ok_or_else(|| fail(1, "missing 'count dim' header".into()))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(1, "bad count in header".into()))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(1, "bad dim in header".into()))?;

    let mut table = EmbeddingTable::new(dim);
    for _ in 0..count {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| fail(count + 1, format!("expected {count} rows")))?;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| fail(idx + 1, "missing name".into()))?;
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| fail(idx + 1, format!("bad float: {e}")))?;
        if values.len() != dim {
            return Err(fail(
                idx + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        table.push(name, &values).map_err(|e| match e {
            Error::Config(msg) => fail(idx + 1, msg),
            other => other,
        })?;
    }
    Ok(table)
}

pub fn write_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {}", table.len(), table.dim()).map_err(|e| Error::io(path, e))?;
    for (i, name) in table.names().iter().enumerate() {
        let values: Vec<String> = table.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{} {}", name, values.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
