//! Knowledge-graph store: edge-file parsing, interned multigraph, and
//! seed-centered radius-k subgraph extraction.
//!
//! Graphs are immutable after [`GraphBuilder::finish`]; all queries are
//! read-only and safe to share across threads.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Interned concept (node) index, bijective with one graph's concept vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(pub u32);

/// Interned relation index, bijective with one graph's relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

/// One directed labeled edge. Self-edges are permitted; weights default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub head: ConceptId,
    pub relation: RelationId,
    pub tail: ConceptId,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Both,
}

/// Supported edge-file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFormat {
    /// `relation<TAB>head<TAB>tail[<TAB>weight]`, `#` comments ignored.
    SimpleTsv,
    /// The 5-field assertion format of ConceptNet 5.5 CSV dumps.
    ConceptNetDump,
}

impl FromStr for EdgeFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple-tsv" => Ok(EdgeFormat::SimpleTsv),
            "conceptnet-dump" => Ok(EdgeFormat::ConceptNetDump),
            other => Err(Error::Config(format!(
                "unknown edge format '{other}' (expected simple-tsv or conceptnet-dump)"
            ))),
        }
    }
}

impl fmt::Display for EdgeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeFormat::SimpleTsv => write!(f, "simple-tsv"),
            EdgeFormat::ConceptNetDump => write!(f, "conceptnet-dump"),
        }
    }
}

/// Normalize a concept string: lowercase, spaces and `+` become `_`.
///
/// Dataset class names like "blue+whale", "blue whale" and "Blue Whale" all
/// normalize to `blue_whale`, matching ConceptNet term spelling.
pub fn normalize_concept(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '+' { '_' } else { c })
        .collect()
}

/// Relation names keep their case but whitespace becomes `_` so they stay
/// usable as checkpoint parameter keys.
fn sanitize_relation(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

/// String interner; ids are dense and assigned in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
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
}

/// Single-writer construction phase for [`KnowledgeGraph`].
///
/// Duplicate `(head, relation, tail)` triples collapse to one edge keeping
/// the maximum weight, which is deterministic and order-independent.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    concepts: Vocab,
    relations: Vocab,
    edges: Vec<Triple>,
    dedup: HashMap<(u32, u32, u32), usize>,
    duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern a node without any incident edge.
    pub fn add_node(&mut self, concept: &str) -> ConceptId {
        ConceptId(self.concepts.intern(&normalize_concept(concept)))
    }

    /// Intern a relation ahead of its first edge, fixing its id.
    pub fn add_relation(&mut self, relation: &str) -> RelationId {
        RelationId(self.relations.intern(&sanitize_relation(relation)))
    }

    pub fn add_edge(&mut self, relation: &str, head: &str, tail: &str, weight: f64) {
        let r = self.relations.intern(&sanitize_relation(relation));
        let h = self.concepts.intern(&normalize_concept(head));
        let t = self.concepts.intern(&normalize_concept(tail));
        match self.dedup.entry((h, r, t)) {
            std::collections::hash_map::Entry::Occupied(e) => {
                let idx = *e.get();
                if weight > self.edges[idx].weight {
                    self.edges[idx].weight = weight;
                }
                self.duplicates += 1;
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(self.edges.len());
                self.edges.push(Triple {
                    head: ConceptId(h),
                    relation: RelationId(r),
                    tail: ConceptId(t),
                    weight,
                });
            }
        }
    }

    pub fn duplicates_collapsed(&self) -> usize {
        self.duplicates
    }

    pub fn finish(self) -> KnowledgeGraph {
        let n = self.concepts.len();
        let mut in_adj: Vec<Vec<(RelationId, ConceptId)>> = vec![Vec::new(); n];
        let mut out_adj: Vec<Vec<(RelationId, ConceptId)>> = vec![Vec::new(); n];
        for e in &self.edges {
            out_adj[e.head.0 as usize].push((e.relation, e.tail));
            in_adj[e.tail.0 as usize].push((e.relation, e.head));
        }
        for list in in_adj.iter_mut().chain(out_adj.iter_mut()) {
            list.sort_unstable();
        }
        KnowledgeGraph {
            concepts: self.concepts,
            relations: self.relations,
            edges: self.edges,
            in_adj,
            out_adj,
        }
    }
}

/// Directed labeled multigraph with interned vocabularies and per
/// (node, relation, direction) adjacency for O(degree) traversal.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    concepts: Vocab,
    relations: Vocab,
    edges: Vec<Triple>,
    /// `in_adj[i]` holds `(r, head)` for every edge `(head, r, i)`, sorted.
    in_adj: Vec<Vec<(RelationId, ConceptId)>>,
    /// `out_adj[i]` holds `(r, tail)` for every edge `(i, r, tail)`, sorted.
    out_adj: Vec<Vec<(RelationId, ConceptId)>>,
}

impl KnowledgeGraph {
    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    pub fn concept_id(&self, name: &str) -> Option<ConceptId> {
        self.concepts.get(&normalize_concept(name)).map(ConceptId)
    }

    pub fn concept_name(&self, id: ConceptId) -> &str {
        self.concepts.name(id.0)
    }

    pub fn concept_names(&self) -> &[String] {
        self.concepts.names()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.name(id.0)
    }

    pub fn relation_names(&self) -> &[String] {
        self.relations.names()
    }

    fn check_ids(&self, node: ConceptId, relation: RelationId) -> Result<()> {
        if node.0 as usize >= self.concepts.len() {
            return Err(Error::UnknownId(format!("concept id {}", node.0)));
        }
        if relation.0 as usize >= self.relations.len() {
            return Err(Error::UnknownId(format!("relation id {}", relation.0)));
        }
        Ok(())
    }

    fn adj_range<'a>(
        list: &'a [(RelationId, ConceptId)],
        relation: RelationId,
    ) -> &'a [(RelationId, ConceptId)] {
        let lo = list.partition_point(|&(r, _)| r < relation);
        let hi = list.partition_point(|&(r, _)| r <= relation);
        &list[lo..hi]
    }

    /// Neighbors of `node` under `relation` in the given direction.
    /// `In` yields heads of in-edges, `Out` yields tails of out-edges.
    pub fn neighbors(
        &self,
        node: ConceptId,
        relation: RelationId,
        direction: Direction,
    ) -> Result<Vec<ConceptId>> {
        self.check_ids(node, relation)?;
        let pick = |list: &[(RelationId, ConceptId)]| -> Vec<ConceptId> {
            Self::adj_range(list, relation).iter().map(|&(_, n)| n).collect()
        };
        Ok(match direction {
            Direction::In => pick(&self.in_adj[node.0 as usize]),
            Direction::Out => pick(&self.out_adj[node.0 as usize]),
            Direction::Both => {
                let mut v = pick(&self.in_adj[node.0 as usize]);
                v.extend(pick(&self.out_adj[node.0 as usize]));
                v
            }
        })
    }

    /// Neighbor count of `node` under `relation`; the fixed normalization
    /// constant of the graph-convolution layers. For `Both`, a self-loop
    /// contributes one, not two.
    pub fn degree(
        &self,
        node: ConceptId,
        relation: RelationId,
        direction: Direction,
    ) -> Result<usize> {
        self.check_ids(node, relation)?;
        let count_in = Self::adj_range(&self.in_adj[node.0 as usize], relation).len();
        let count_out = Self::adj_range(&self.out_adj[node.0 as usize], relation).len();
        Ok(match direction {
            Direction::In => count_in,
            Direction::Out => count_out,
            Direction::Both => {
                let self_loop = Self::adj_range(&self.in_adj[node.0 as usize], relation)
                    .iter()
                    .any(|&(_, n)| n == node) as usize;
                count_in + count_out - self_loop
            }
        })
    }

    /// All `(head, relation, tail)` keys, for collision checks.
    pub fn edge_key_set(&self) -> HashSet<(u32, u32, u32)> {
        self.edges
            .iter()
            .map(|e| (e.head.0, e.relation.0, e.tail.0))
            .collect()
    }

    /// Multi-source undirected hop distances from `sources`; `usize::MAX`
    /// marks unreachable nodes.
    pub fn undirected_distances(&self, sources: &[ConceptId]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_concepts()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s.0 as usize] == usize::MAX {
                dist[s.0 as usize] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u.0 as usize];
            let step = |v: ConceptId, dist: &mut Vec<usize>, queue: &mut VecDeque<ConceptId>| {
                if dist[v.0 as usize] == usize::MAX {
                    dist[v.0 as usize] = du + 1;
                    queue.push_back(v);
                }
            };
            for &(_, v) in &self.out_adj[u.0 as usize] {
                step(v, &mut dist, &mut queue);
            }
            for &(_, v) in &self.in_adj[u.0 as usize] {
                step(v, &mut dist, &mut queue);
            }
        }
        dist
    }

    /// Extract the radius-`radius` subgraph around `seeds`.
    ///
    /// Keeps every triple `(h, r, t)` with `min(dist(h), dist(t)) < radius`,
    /// where `dist` is undirected hop distance from the seed set. The node
    /// set is the endpoints of those edges plus all seeds found in the
    /// graph. Vocabularies are re-interned compactly, preserving the parent
    /// graph's id order so that message-passing summation order (and hence
    /// bit-level arithmetic) is reproducible inside the subgraph. Seeds
    /// missing from the graph are skipped and returned in the second tuple
    /// slot.
    pub fn neighborhood_subgraph(
        &self,
        seeds: &[String],
        radius: usize,
    ) -> (KnowledgeGraph, Vec<String>) {
        let mut missing = Vec::new();
        let mut seed_ids = Vec::new();
        let mut seen = HashSet::new();
        for s in seeds {
            let norm = normalize_concept(s);
            match self.concepts.get(&norm) {
                Some(id) if seen.insert(id) => seed_ids.push(ConceptId(id)),
                Some(_) => {}
                None => missing.push(norm),
            }
        }

        let dist = self.undirected_distances(&seed_ids);
        let mut keep_node = vec![false; self.num_concepts()];
        let mut keep_rel = vec![false; self.num_relations()];
        for &s in &seed_ids {
            keep_node[s.0 as usize] = true;
        }
        let mut kept_edges = Vec::new();
        for e in &self.edges {
            let dh = dist[e.head.0 as usize];
            let dt = dist[e.tail.0 as usize];
            if dh.min(dt) < radius {
                keep_node[e.head.0 as usize] = true;
                keep_node[e.tail.0 as usize] = true;
                keep_rel[e.relation.0 as usize] = true;
                kept_edges.push(e);
            }
        }

        let mut builder = GraphBuilder::new();
        for (id, &keep) in keep_node.iter().enumerate() {
            if keep {
                builder.add_node(self.concepts.name(id as u32));
            }
        }
        for (id, &keep) in keep_rel.iter().enumerate() {
            if keep {
                builder.add_relation(self.relations.name(id as u32));
            }
        }
        for e in kept_edges {
            builder.add_edge(
                self.relation_name(e.relation),
                self.concept_name(e.head),
                self.concept_name(e.tail),
                e.weight,
            );
        }
        (builder.finish(), missing)
    }
}

/// Bookkeeping from [`parse_edge_file`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Non-comment, non-blank lines.
    pub data_lines: usize,
    pub malformed: usize,
    /// Lines dropped by the language filter.
    pub filtered: usize,
    pub duplicates_collapsed: usize,
}

/// Parse an edge file into a graph.
///
/// Malformed lines are counted, not fatal, unless more than half of the data
/// lines are malformed (which signals the wrong format choice). The language
/// filter applies to ConceptNet dumps only.
pub fn parse_edge_file(
    path: &Path,
    format: EdgeFormat,
    language_filter: Option<&str>,
) -> Result<(KnowledgeGraph, ParseStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut builder = GraphBuilder::new();
    let mut stats = ParseStats::default();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        stats.data_lines += 1;
        match format {
            EdgeFormat::SimpleTsv => {
                if !parse_simple_tsv_line(line, &mut builder) {
                    stats.malformed += 1;
                }
            }
            EdgeFormat::ConceptNetDump => {
                match parse_conceptnet_line(line, language_filter, &mut builder) {
                    LineOutcome::Ok => {}
                    LineOutcome::Filtered => stats.filtered += 1,
                    LineOutcome::Malformed => stats.malformed += 1,
                }
            }
        }
        let _ = lineno;
    }

    stats.duplicates_collapsed = builder.duplicates_collapsed();
    if stats.data_lines > 0 && stats.malformed * 2 > stats.data_lines {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: stats.malformed,
            total: stats.data_lines,
        });
    }
    Ok((builder.finish(), stats))
}

fn parse_simple_tsv_line(line: &str, builder: &mut GraphBuilder) -> bool {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 || fields.len() > 4 {
        return false;
    }
    let relation = fields[0].trim();
    let head = normalize_concept(fields[1]);
    let tail = normalize_concept(fields[2]);
    if relation.is_empty() || head.is_empty() || tail.is_empty() {
        return false;
    }
    let weight = match fields.get(3) {
        None => 1.0,
        Some(w) => match w.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            _ => return false,
        },
    };
    builder.add_edge(relation, &head, &tail, weight);
    true
}

enum LineOutcome {
    Ok,
    Filtered,
    Malformed,
}

/// Split a `/c/<lang>/<term>[/<pos>...]` URI; parts after the term are
/// part-of-speech qualifiers and get dropped.
fn split_concept_uri(uri: &str) -> Option<(&str, &str)> {
    let rest = uri.strip_prefix("/c/")?;
    let mut parts = rest.splitn(3, '/');
    let lang = parts.next()?;
    let term = parts.next()?;
    if lang.is_empty() || term.is_empty() {
        return None;
    }
    Some((lang, term))
}

/// Lenient weight extraction: locate `"weight":` in the metadata blob and
/// read the number after it; 1.0 when absent or unparseable.
fn weight_from_metadata(blob: &str) -> f64 {
    let Some(pos) = blob.find("\"weight\":") else {
        return 1.0;
    };
    let rest = blob[pos + "\"weight\":".len()..].trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
        .unwrap_or(rest.len());
    match rest[..end].parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => v,
        _ => 1.0,
    }
}

fn parse_conceptnet_line(
    line: &str,
    language_filter: Option<&str>,
    builder: &mut GraphBuilder,
) -> LineOutcome {
    let fields: Vec<&str> = line.splitn(5, '\t').collect();
    if fields.len() < 4 {
        return LineOutcome::Malformed;
    }
    let Some(relation) = fields[1].strip_prefix("/r/") else {
        return LineOutcome::Malformed;
    };
    if relation.is_empty() {
        return LineOutcome::Malformed;
    }
    let (Some((head_lang, head)), Some((tail_lang, tail))) =
        (split_concept_uri(fields[2]), split_concept_uri(fields[3]))
    else {
        return LineOutcome::Malformed;
    };
    if let Some(lang) = language_filter {
        if head_lang != lang || tail_lang != lang {
            return LineOutcome::Filtered;
        }
    }
    let weight = fields.get(4).map_or(1.0, |blob| weight_from_metadata(blob));
    builder.add_edge(relation, head, tail, weight);
    LineOutcome::Ok
}

/// Write the graph in simple-tsv. Parsing the output back yields the same
/// edge multiset and weights.
pub fn write_edge_file(graph: &KnowledgeGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in graph.edges() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            graph.relation_name(e.relation),
            graph.concept_name(e.head),
            graph.concept_name(e.tail),
            e.weight
        )
        .map_err(|er| Error::io(path, er))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn tsv_graph(lines: &[&str]) -> (KnowledgeGraph, ParseStats) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        parse_edge_file(f.path(), EdgeFormat::SimpleTsv, None).unwrap()
    }

    /// Hand-built graph used across tests: a -r-> b, a -r-> c, c -s-> c.
    fn small_graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_edge("r", "a", "b", 1.0);
        b.add_edge("r", "a", "c", 1.0);
        b.add_edge("s", "c", "c", 2.0);
        b.finish()
    }

    #[test]
    fn parses_three_line_file_with_duplicate() {
        let (g, stats) = tsv_graph(&[
            "RelatedTo\tjetski\tmotorbike",
            "Synonym\taeroplane\tairplane",
            "RelatedTo\tjetski\tmotorbike",
        ]);
        assert_eq!(g.num_concepts(), 4);
        assert_eq!(g.num_relations(), 2);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(stats.duplicates_collapsed, 1);
        assert_eq!(stats.malformed, 0);
        assert!(g.concept_id("jetski").is_some());
        assert!(g.concept_id("airplane").is_some());
    }

    #[test]
    fn duplicate_keeps_max_weight_in_any_order() {
        let (g1, _) = tsv_graph(&["r\ta\tb\t0.5", "r\ta\tb\t3.0"]);
        let (g2, _) = tsv_graph(&["r\ta\tb\t3.0", "r\ta\tb\t0.5"]);
        assert_eq!(g1.num_edges(), 1);
        assert_eq!(g1.edges()[0].weight, 3.0);
        assert_eq!(g2.edges()[0].weight, 3.0);
    }

    #[test]
    fn empty_file_gives_empty_graph() {
        let (g, stats) = tsv_graph(&[]);
        assert_eq!(g.num_concepts(), 0);
        assert_eq!(g.num_relations(), 0);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(stats.data_lines, 0);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let (g, stats) = tsv_graph(&["# header", "", "r\ta\tb"]);
        assert_eq!(stats.data_lines, 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn weight_defaults_to_one_and_parses_when_given() {
        let (g, _) = tsv_graph(&["r\ta\tb", "r\tb\tc\t2.5"]);
        assert_eq!(g.edges()[0].weight, 1.0);
        assert_eq!(g.edges()[1].weight, 2.5);
    }

    #[test]
    fn malformed_lines_counted_not_fatal() {
        let (g, stats) = tsv_graph(&["r\ta\tb", "garbage-no-tabs", "r\tb\tc", "r\tc\td"]);
        assert_eq!(stats.malformed, 1);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn mostly_malformed_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "r\ta\tb").unwrap();
        writeln!(f, "bad line one").unwrap();
        writeln!(f, "bad line two").unwrap();
        let err = parse_edge_file(f.path(), EdgeFormat::SimpleTsv, None).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 2, total: 3, .. }));
    }

    #[test]
    fn negative_or_bad_weight_is_malformed() {
        let (g, stats) = tsv_graph(&[
            "r\ta\tb\t-1.0",
            "r\ta\tb\tx",
            "r\ta\tb",
            "r\tb\tc",
            "r\tc\td",
        ]);
        assert_eq!(stats.malformed, 2);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_edge_file(
            Path::new("/nonexistent/kg.tsv"),
            EdgeFormat::SimpleTsv,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn conceptnet_language_filter_and_uri_stripping() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "/a/x\t/r/RelatedTo\t/c/fr/avion\t/c/en/plane\t{{\"weight\": 1.0}}"
        )
        .unwrap();
        writeln!(
            f,
            "/a/y\t/r/RelatedTo\t/c/en/airplane/n\t/c/en/plane\t{{\"weight\": 2.5}}"
        )
        .unwrap();
        let (g, stats) =
            parse_edge_file(f.path(), EdgeFormat::ConceptNetDump, Some("en")).unwrap();
        assert_eq!(stats.filtered, 1);
        assert_eq!(g.num_edges(), 1);
        assert!(g.concept_id("airplane").is_some(), "POS suffix stripped");
        assert!(g.concept_id("avion").is_none());
        assert_eq!(g.edges()[0].weight, 2.5);
    }

    #[test]
    fn conceptnet_weight_defaults_when_metadata_unparseable() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "/a/x\t/r/IsA\t/c/en/cat\t/c/en/animal\tnot json at all").unwrap();
        writeln!(f, "/a/y\t/r/IsA\t/c/en/dog\t/c/en/animal").unwrap();
        let (g, stats) = parse_edge_file(f.path(), EdgeFormat::ConceptNetDump, None).unwrap();
        assert_eq!(stats.malformed, 0);
        assert_eq!(g.edges()[0].weight, 1.0);
        assert_eq!(g.edges()[1].weight, 1.0);
    }

    #[test]
    fn concept_normalization_unifies_spellings() {
        assert_eq!(normalize_concept("blue+whale"), "blue_whale");
        assert_eq!(normalize_concept("blue whale"), "blue_whale");
        assert_eq!(normalize_concept("Blue Whale"), "blue_whale");
        let (g, _) = tsv_graph(&["r\tBlue Whale\tblue+whale"]);
        // Both spellings intern to the same node: a self-edge.
        assert_eq!(g.num_concepts(), 1);
        let e = g.edges()[0];
        assert_eq!(e.head, e.tail);
    }

    #[test]
    fn chain_subgraph_radius_two() {
        let (g, _) = tsv_graph(&["r\ta\tb", "r\tb\tc", "r\tc\td"]);
        let (sub, missing) = g.neighborhood_subgraph(&["a".into()], 2);
        assert!(missing.is_empty());
        assert_eq!(sub.num_edges(), 2);
        let named: Vec<(String, String)> = sub
            .edges()
            .iter()
            .map(|e| {
                (
                    sub.concept_name(e.head).to_string(),
                    sub.concept_name(e.tail).to_string(),
                )
            })
            .collect();
        assert_eq!(named, vec![("a".into(), "b".into()), ("b".into(), "c".into())]);
        assert!(sub.concept_id("d").is_none());
    }

    #[test]
    fn radius_zero_returns_seed_nodes_only() {
        let (g, _) = tsv_graph(&["r\ta\tb", "r\tb\tc"]);
        let (sub, _) = g.neighborhood_subgraph(&["a".into(), "c".into()], 0);
        assert_eq!(sub.num_edges(), 0);
        assert_eq!(sub.num_concepts(), 2);
        assert!(sub.concept_id("a").is_some());
        assert!(sub.concept_id("c").is_some());
    }

    #[test]
    fn all_seeds_radius_one_returns_whole_graph() {
        let (g, _) = tsv_graph(&["r\ta\tb", "s\tb\tc", "r\tc\ta", "t\td\td"]);
        let seeds: Vec<String> = g.concept_names().to_vec();
        let (sub, missing) = g.neighborhood_subgraph(&seeds, 1);
        assert!(missing.is_empty());
        assert_eq!(sub.num_edges(), g.num_edges());
        assert_eq!(sub.num_concepts(), g.num_concepts());
    }

    #[test]
    fn missing_seeds_are_skipped_and_reported() {
        let (g, _) = tsv_graph(&["r\ta\tb"]);
        let (sub, missing) = g.neighborhood_subgraph(&["a".into(), "zebra".into()], 1);
        assert_eq!(missing, vec!["zebra".to_string()]);
        assert_eq!(sub.num_edges(), 1);
    }

    #[test]
    fn degree_matches_manual_enumeration() {
        let g = small_graph();
        let a = g.concept_id("a").unwrap();
        let c = g.concept_id("c").unwrap();
        let r = g.relation_id("r").unwrap();
        let s = g.relation_id("s").unwrap();
        assert_eq!(g.degree(a, r, Direction::Out).unwrap(), 2);
        assert_eq!(g.degree(a, r, Direction::In).unwrap(), 0);
        assert_eq!(g.degree(a, s, Direction::Both).unwrap(), 0);
        // Self-loop under s: in = out = 1 but both counts the edge once.
        assert_eq!(g.degree(c, s, Direction::In).unwrap(), 1);
        assert_eq!(g.degree(c, s, Direction::Out).unwrap(), 1);
        assert_eq!(g.degree(c, s, Direction::Both).unwrap(), 1);
    }

    #[test]
    fn degree_of_isolated_node_is_zero() {
        let mut b = GraphBuilder::new();
        b.add_edge("r", "a", "b", 1.0);
        b.add_node("lonely");
        let g = b.finish();
        let lonely = g.concept_id("lonely").unwrap();
        let r = g.relation_id("r").unwrap();
        for dir in [Direction::In, Direction::Out, Direction::Both] {
            assert_eq!(g.degree(lonely, r, dir).unwrap(), 0);
        }
    }

    #[test]
    fn degree_rejects_invalid_ids() {
        let g = small_graph();
        assert!(g.degree(ConceptId(99), RelationId(0), Direction::In).is_err());
        assert!(g.degree(ConceptId(0), RelationId(99), Direction::In).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let (g, _) = tsv_graph(&[
            "RelatedTo\tjetski\tmotorbike",
            "Synonym\taeroplane\tairplane",
            "RelatedTo\tjetski\tmotorbike",
        ]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_edge_file(&g, f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let (g2, _) = parse_edge_file(f.path(), EdgeFormat::SimpleTsv, None).unwrap();
        assert_eq!(g2.num_edges(), g.num_edges());
        assert_eq!(g2.num_concepts(), g.num_concepts());
    }

    #[test]
    fn empty_graph_writes_empty_file() {
        let g = GraphBuilder::new().finish();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_edge_file(&g, f.path()).unwrap();
        assert_eq!(std::fs::read_to_string(f.path()).unwrap(), "");
    }

    #[test]
    fn adjacency_enumerates_the_edge_multiset() {
        let g = small_graph();
        let mut from_adj = Vec::new();
        for node in 0..g.num_concepts() as u32 {
            for rel in 0..g.num_relations() as u32 {
                for n in g
                    .neighbors(ConceptId(node), RelationId(rel), Direction::Out)
                    .unwrap()
                {
                    from_adj.push((node, rel, n.0));
                }
            }
        }
        from_adj.sort_unstable();
        let mut from_edges: Vec<(u32, u32, u32)> = g
            .edges()
            .iter()
            .map(|e| (e.head.0, e.relation.0, e.tail.0))
            .collect();
        from_edges.sort_unstable();
        assert_eq!(from_adj, from_edges);
    }
}
