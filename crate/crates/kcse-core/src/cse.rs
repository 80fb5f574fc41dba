//! Phase-2 extraction of per-class commonsense embeddings from the trained
//! graph autoencoder.
//!
//! The reference path follows the literal procedure: cut the radius-2
//! subgraph around the class, forward it through the frozen encoder with
//! each node's initial feature mapped to its trained table row, and read the
//! class row. Because the encoder has exact two-hop locality and the
//! subgraph keeps every edge incident to nodes within one hop, this equals
//! selecting the class row from a full-graph encode; [`extract_all`] uses
//! that cheaper route and the test suite pins the agreement.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{normalize_concept, KnowledgeGraph};
use crate::kg_train::KgModel;

/// Ordered seen/unseen class lists; disjoint after normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassManifest {
    seen: Vec<String>,
    unseen: Vec<String>,
}

impl ClassManifest {
    pub fn new(seen: Vec<String>, unseen: Vec<String>) -> Result<Self> {
        let seen: Vec<String> = seen.iter().map(|s| normalize_concept(s)).collect();
        let unseen: Vec<String> = unseen.iter().map(|s| normalize_concept(s)).collect();
        let mut all = HashSet::new();
        for name in seen.iter().chain(&unseen) {
            if name.is_empty() {
                return Err(Error::Config("empty class name".into()));
            }
            if !all.insert(name.clone()) {
                return Err(Error::Config(format!(
                    "class '{name}' appears twice (seen and unseen sets must be disjoint)"
                )));
            }
        }
        Ok(ClassManifest { seen, unseen })
    }

    pub fn seen(&self) -> &[String] {
        &self.seen
    }

    pub fn unseen(&self) -> &[String] {
        &self.unseen
    }

    /// Seen classes first, then unseen; the tie-break order for inference.
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.seen.iter().chain(self.unseen.iter())
    }

    pub fn len(&self) -> usize {
        self.seen.len() + self.unseen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty() && self.unseen.is_empty()
    }

    /// Read the `[seen]` / `[unseen]` split file: one class name per line,
    /// blank lines and `#` comments ignored.
    pub fn read_split(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut seen = Vec::new();
        let mut unseen = Vec::new();
        let mut section: Option<bool> = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[seen]" => section = Some(true),
                "[unseen]" => section = Some(false),
                name => match section {
                    Some(true) => seen.push(name.to_string()),
                    Some(false) => unseen.push(name.to_string()),
                    None => {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: idx + 1,
                            msg: format!("'{name}' appears before any [seen]/[unseen] header"),
                        })
                    }
                },
            }
        }
        ClassManifest::new(seen, unseen)
    }

    pub fn write_split(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "[seen]").map_err(|e| Error::io(path, e))?;
        for name in &self.seen {
            writeln!(w, "{name}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w, "[unseen]").map_err(|e| Error::io(path, e))?;
        for name in &self.unseen {
            writeln!(w, "{name}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Closest concept names to `name`, for error messages.
pub fn nearest_concepts(graph: &KnowledgeGraph, name: &str, k: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = graph
        .concept_names()
        .iter()
        .map(|c| (levenshtein(name, c), c))
        .collect();
    scored.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, c)| c.clone()).collect()
}

fn class_node_or_suggest(graph: &KnowledgeGraph, class_name: &str) -> Result<String> {
    let norm = normalize_concept(class_name);
    if graph.concept_id(&norm).is_some() {
        Ok(norm)
    } else {
        Err(Error::UnknownConcept {
            name: norm.clone(),
            suggestions: nearest_concepts(graph, &norm, 3),
        })
    }
}

/// Commonsense embedding of one class via the per-class subgraph procedure.
///
/// Degree constants are recomputed inside the subgraph; nodes within one hop
/// of the class keep their full neighborhoods there, which is what makes the
/// class row exact. An isolated class yields the pure self-connection
/// embedding.
pub fn extract_cse(
    model: &KgModel,
    full_graph: &KnowledgeGraph,
    class_name: &str,
) -> Result<Vec<f64>> {
    if model.encoder.num_nodes != full_graph.num_concepts() {
        return Err(Error::Dimension(format!(
            "feature table has {} rows but the graph has {} concepts",
            model.encoder.num_nodes,
            full_graph.num_concepts()
        )));
    }
    let norm = class_node_or_suggest(full_graph, class_name)?;
    let (sub, _) = full_graph.neighborhood_subgraph(std::slice::from_ref(&norm), 2);
    let row_map: Vec<usize> = sub
        .concept_names()
        .iter()
        .map(|n| full_graph.concept_id(n).unwrap().0 as usize)
        .collect();
    let h = model.encoder.encode(&sub, Some(&row_map), &model.store)?;
    let idx = sub.concept_id(&norm).unwrap().0 as usize;
    Ok(h.row(idx).to_vec())
}

/// Embeddings for every manifest class, seen and unseen alike, via one
/// full-graph encode plus row selection. Extraction reads no ZSL data and
/// never fine-tunes the autoencoder.
pub fn extract_all(
    model: &KgModel,
    full_graph: &KnowledgeGraph,
    manifest: &ClassManifest,
) -> Result<EmbeddingTable> {
    if model.encoder.num_nodes != full_graph.num_concepts() {
        return Err(Error::Dimension(format!(
            "feature table has {} rows but the graph has {} concepts",
            model.encoder.num_nodes,
            full_graph.num_concepts()
        )));
    }
    let missing: Vec<String> = manifest
        .all()
        .filter(|c| full_graph.concept_id(c).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }

    let h = model.encoder.encode(full_graph, None, &model.store)?;
    let mut table = EmbeddingTable::new(model.encoder.config.d_out);
    for name in manifest.all() {
        let id = full_graph.concept_id(name).unwrap().0 as usize;
        table.push(name, h.row(id))?;
    }
    Ok(table)
}
