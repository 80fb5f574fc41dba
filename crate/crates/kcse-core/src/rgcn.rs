//! Two stacked relational graph-convolution layers over a multigraph.
//!
//! Each layer computes, per node i,
//! `relu( sum_r sum_{j in N_i^r} (1/c_{i,r}) W_r x_j  +  W_0 x_i )`
//! with the fixed normalization constant `c_{i,r} = |N_i^r|`. For every
//! original relation a synthetic inverse relation with its own weight matrix
//! carries messages against edge direction, so information flows both ways.
//! `W_0` provides the self connection; no extra self-loop relation is added.
//!
//! Message passing is sparse gather-scatter; dense adjacency appears only in
//! test oracles.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::rng::stream;
use crate::tensor::{Matrix, ParamStore, SparseMatrix, Tape, TapeId};

/// Layer dimensions; the embedding dimension d defaults to 128 end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RgcnConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
}

impl Default for RgcnConfig {
    fn default() -> Self {
        RgcnConfig {
            d_in: 128,
            d_hidden: 128,
            d_out: 128,
        }
    }
}

impl RgcnConfig {
    pub fn uniform(d: usize) -> Self {
        RgcnConfig {
            d_in: d,
            d_hidden: d,
            d_out: d,
        }
    }
}

/// One normalized message channel: a relation in one direction.
pub struct MessageChannel {
    pub relation: String,
    pub inverse: bool,
    pub matrix: Arc<SparseMatrix>,
}

/// Per-relation normalized adjacency, ready for repeated forward passes.
/// Channels exist only for (relation, direction) pairs with at least one
/// edge; empty neighborhoods contribute an empty sum, never a division.
pub struct MessageGraph {
    pub n_nodes: usize,
    pub channels: Vec<MessageChannel>,
}

impl MessageGraph {
    /// Build from every edge of the graph.
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        Self::from_masked(graph, None)
    }

    /// Build from the edges where `keep[edge_index]` is true.
    pub fn from_masked(graph: &KnowledgeGraph, keep: Option<&[bool]>) -> Self {
        let n = graph.num_concepts();
        let n_rel = graph.num_relations();
        // (receiver, sender) pairs per relation and direction.
        let mut incoming: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_rel];
        let mut outgoing: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_rel];
        for (idx, e) in graph.edges().iter().enumerate() {
            if let Some(mask) = keep {
                if !mask[idx] {
                    continue;
                }
            }
            let r = e.relation.0 as usize;
            incoming[r].push((e.tail.0 as usize, e.head.0 as usize));
            outgoing[r].push((e.head.0 as usize, e.tail.0 as usize));
        }

        let mut channels = Vec::new();
        for r in 0..n_rel {
            for (pairs, inverse) in [(&mut incoming[r], false), (&mut outgoing[r], true)] {
                if pairs.is_empty() {
                    continue;
                }
                pairs.sort_unstable();
                let mut m = SparseMatrix::new(n, n);
                let mut at = 0;
                while at < pairs.len() {
                    let node = pairs[at].0;
                    let mut end = at;
                    while end < pairs.len() && pairs[end].0 == node {
                        end += 1;
                    }
                    let coeff = 1.0 / (end - at) as f64;
                    for &(_, nbr) in &pairs[at..end] {
                        m.push(node, nbr, coeff);
                    }
                    at = end;
                }
                channels.push(MessageChannel {
                    relation: graph.relation_names()[r].clone(),
                    inverse,
                    matrix: Arc::new(m),
                });
            }
        }
        MessageGraph { n_nodes: n, channels }
    }
}

/// Parameter name for one relation weight of one layer.
fn weight_name(layer: usize, relation: &str, inverse: bool) -> String {
    if inverse {
        format!("layer{layer}.W.{relation}.inv")
    } else {
        format!("layer{layer}.W.{relation}")
    }
}

fn self_weight_name(layer: usize) -> String {
    format!("layer{layer}.W0")
}

/// Trainable parameter set: the node feature table `g` plus two layers of
/// per-relation and self weights, all living in a [`ParamStore`] under
/// relation-name-keyed entries so checkpoints survive vocabulary
/// reorderings.
#[derive(Debug, Clone)]
pub struct RgcnEncoder {
    pub config: RgcnConfig,
    pub relation_names: Vec<String>,
    pub num_nodes: usize,
}

pub fn xavier_fill(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl RgcnEncoder {
    /// Create parameters for `graph` in `store`. The initial feature table
    /// is trainable and initialized from the `"init"` stream of `seed`.
    pub fn init(
        graph: &KnowledgeGraph,
        config: RgcnConfig,
        seed: u64,
        store: &mut ParamStore,
    ) -> Self {
        let mut rng = stream(seed, "rgcn:init");
        let n = graph.num_concepts();
        let g_bound = (3.0 / config.d_in.max(1) as f64).sqrt();
        store.insert(
            "g",
            Matrix::from_fn(n, config.d_in, |_, _| rng.random_range(-g_bound..g_bound)),
        );
        let relation_names: Vec<String> = graph.relation_names().to_vec();
        for (layer, d_in, d_out) in [
            (1, config.d_in, config.d_hidden),
            (2, config.d_hidden, config.d_out),
        ] {
            store.insert(self_weight_name(layer), xavier_fill(d_out, d_in, &mut rng));
            for rel in &relation_names {
                store.insert(weight_name(layer, rel, false), xavier_fill(d_out, d_in, &mut rng));
                store.insert(weight_name(layer, rel, true), xavier_fill(d_out, d_in, &mut rng));
            }
        }
        RgcnEncoder {
            config,
            relation_names,
            num_nodes: n,
        }
    }

    /// Rebuild encoder metadata from a loaded checkpoint.
    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let g = store
            .get("g")
            .ok_or_else(|| Error::Config("checkpoint has no feature table 'g'".into()))?;
        let w0_1 = store
            .get("layer1.W0")
            .ok_or_else(|| Error::Config("checkpoint has no 'layer1.W0'".into()))?;
        let w0_2 = store
            .get("layer2.W0")
            .ok_or_else(|| Error::Config("checkpoint has no 'layer2.W0'".into()))?;
        let config = RgcnConfig {
            d_in: w0_1.cols(),
            d_hidden: w0_2.cols(),
            d_out: w0_2.rows(),
        };
        if g.cols() != config.d_in || w0_1.rows() != config.d_hidden {
            return Err(Error::Dimension(format!(
                "inconsistent checkpoint shapes: g is {}x{}, layer1.W0 {}x{}, layer2.W0 {}x{}",
                g.rows(),
                g.cols(),
                w0_1.rows(),
                w0_1.cols(),
                w0_2.rows(),
                w0_2.cols()
            )));
        }
        let mut relation_names = Vec::new();
        for name in store.names() {
            if let Some(rest) = name.strip_prefix("layer1.W.") {
                if let Some(rel) = rest.strip_suffix(".inv") {
                    relation_names.push(rel.to_string());
                }
            }
        }
        relation_names.sort();
        relation_names.dedup();
        Ok(RgcnEncoder {
            config,
            relation_names,
            num_nodes: g.rows(),
        })
    }

    fn check_relations(&self, msg: &MessageGraph) -> Result<()> {
        let known: HashMap<&str, ()> = self
            .relation_names
            .iter()
            .map(|r| (r.as_str(), ()))
            .collect();
        for ch in &msg.channels {
            if !known.contains_key(ch.relation.as_str()) {
                return Err(Error::UnknownRelation(ch.relation.clone()));
            }
        }
        Ok(())
    }

    /// One graph-convolution layer over features already on the tape.
    pub fn layer_forward(
        &self,
        tape: &mut Tape,
        msg: &MessageGraph,
        features: TapeId,
        layer: usize,
        store: &ParamStore,
    ) -> Result<TapeId> {
        self.check_relations(msg)?;
        let expected_in = match layer {
            1 => self.config.d_in,
            2 => self.config.d_hidden,
            other => return Err(Error::Config(format!("no layer {other}"))),
        };
        let f = tape.value(features);
        if f.rows() != msg.n_nodes || f.cols() != expected_in {
            return Err(Error::Shape(format!(
                "layer {layer} expects {}x{} features, got {}x{}",
                msg.n_nodes,
                expected_in,
                f.rows(),
                f.cols()
            )));
        }
        let w0 = tape.param(store, &self_weight_name(layer));
        let mut acc = tape.matmul_nt(features, w0);
        for ch in &msg.channels {
            let w = tape.param(store, &weight_name(layer, &ch.relation, ch.inverse));
            let gathered = tape.sparse_mm(ch.matrix.clone(), features);
            let term = tape.matmul_nt(gathered, w);
            acc = tape.add(acc, term);
        }
        Ok(tape.relu(acc))
    }

    /// Two-layer encode on the tape. `row_map[i]` selects the row of the
    /// trained feature table for node i of the message graph; `None` means
    /// node ids already index `g` directly.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        msg: &MessageGraph,
        row_map: Option<&[usize]>,
        store: &ParamStore,
    ) -> Result<TapeId> {
        if let Some(map) = row_map {
            if map.len() != msg.n_nodes {
                return Err(Error::Shape(format!(
                    "row map covers {} nodes, message graph has {}",
                    map.len(),
                    msg.n_nodes
                )));
            }
            if let Some(&bad) = map.iter().find(|&&r| r >= self.num_nodes) {
                return Err(Error::UnknownId(format!(
                    "feature row {bad} out of range ({} rows)",
                    self.num_nodes
                )));
            }
        } else if msg.n_nodes != self.num_nodes {
            return Err(Error::Shape(format!(
                "graph has {} nodes but the feature table has {} rows",
                msg.n_nodes, self.num_nodes
            )));
        }
        let g = tape.param(store, "g");
        let x0 = match row_map {
            Some(map) => tape.gather_rows(g, map.to_vec()),
            None => g,
        };
        let h1 = self.layer_forward(tape, msg, x0, 1, store)?;
        self.layer_forward(tape, msg, h1, 2, store)
    }

    /// Forward-only convenience: encode every node of `graph` and return the
    /// dense `[|V| x d]` embedding matrix.
    pub fn encode(
        &self,
        graph: &KnowledgeGraph,
        row_map: Option<&[usize]>,
        store: &ParamStore,
    ) -> Result<Matrix> {
        let msg = MessageGraph::from_graph(graph);
        let mut tape = Tape::new();
        let out = self.encode_on_tape(&mut tape, &msg, row_map, store)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use rand::Rng;

    fn fresh_encoder(
        graph: &KnowledgeGraph,
        d: usize,
    ) -> (RgcnEncoder, ParamStore) {
        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(graph, RgcnConfig::uniform(d), 1, &mut store);
        (enc, store)
    }

    fn set_all_weights(store: &mut ParamStore, names: Vec<String>, value: Matrix) {
        for n in names {
            store.insert(n, value.clone());
        }
    }

    #[test]
    fn isolated_node_sees_only_self_weight() {
        let mut b = GraphBuilder::new();
        b.add_node("solo");
        let g = b.finish();
        let (enc, mut store) = fresh_encoder(&g, 2);
        store.insert("g", Matrix::from_rows(&[vec![1.0, -2.0]]));
        store.insert("layer1.W0", Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        store.insert("layer2.W0", Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]));
        let out = enc.encode(&g, None, &store).unwrap();
        // relu(W0_2 relu(W0_1 g)) = relu(2 * relu((1, -2))) = (2, 0)
        assert_eq!(out.data(), &[2.0, 0.0]);
    }

    #[test]
    fn single_neighbor_identity_weight_copies_neighbor() {
        // a -r-> b: under the original channel, b receives x_a.
        let mut builder = GraphBuilder::new();
        builder.add_edge("r", "a", "b", 1.0);
        let g = builder.finish();
        let (enc, mut store) = fresh_encoder(&g, 2);
        store.insert(
            "g",
            Matrix::from_rows(&[vec![0.7, -0.3], vec![10.0, 10.0]]),
        );
        let eye = Matrix::identity(2);
        let zero = Matrix::zeros(2, 2);
        store.insert("layer1.W0", zero.clone());
        store.insert("layer1.W.r", eye.clone());
        store.insert("layer1.W.r.inv", zero.clone());

        let msg = MessageGraph::from_graph(&g);
        let mut tape = Tape::new();
        let feats = tape.param(&store, "g");
        let out = enc.layer_forward(&mut tape, &msg, feats, 1, &store).unwrap();
        let out = tape.value(out);
        let b_id = g.concept_id("b").unwrap().0 as usize;
        let a_id = g.concept_id("a").unwrap().0 as usize;
        assert_eq!(out.row(b_id), &[0.7, 0.0], "relu(x_a)");
        // a has no in-edges and only the inverse channel, which is zeroed.
        assert_eq!(out.row(a_id), &[0.0, 0.0]);
    }

    /// Dense oracle: relu(sum_r A_r X W_r^T + X W0^T) with per-row
    /// normalized dense adjacency, written with plain loops.
    fn dense_layer_oracle(
        g: &KnowledgeGraph,
        x: &Matrix,
        store: &ParamStore,
        layer: usize,
        d_in: usize,
        d_out: usize,
    ) -> Matrix {
        let n = g.num_concepts();
        let mut pre = x.matmul_nt(store.expect(&self_weight_name(layer)));
        for (r_idx, rel) in g.relation_names().iter().enumerate() {
            for inverse in [false, true] {
                // adjacency: receivers x senders
                let mut adj = Matrix::zeros(n, n);
                for e in g.edges() {
                    if e.relation.0 as usize != r_idx {
                        continue;
                    }
                    let (recv, send) = if inverse {
                        (e.head.0 as usize, e.tail.0 as usize)
                    } else {
                        (e.tail.0 as usize, e.head.0 as usize)
                    };
                    adj.set(recv, send, 1.0);
                }
                // row-normalize
                for i in 0..n {
                    let deg: f64 = adj.row(i).iter().sum();
                    if deg > 0.0 {
                        for v in adj.row_mut(i) {
                            *v /= deg;
                        }
                    }
                }
                let w = store.expect(&weight_name(layer, rel, inverse));
                assert_eq!((w.rows(), w.cols()), (d_out, d_in));
                let term = adj.matmul_nn(x).matmul_nt(w);
                pre.add_assign(&term);
            }
        }
        pre.map_inplace(|v| v.max(0.0));
        pre
    }

    fn random_multigraph(seed: u64, n_nodes: usize, n_edges: usize, n_rels: usize) -> KnowledgeGraph {
        let mut rng = stream(seed, "rgcn-test-graph");
        let mut b = GraphBuilder::new();
        for i in 0..n_nodes {
            b.add_node(&format!("n{i}"));
        }
        for _ in 0..n_edges {
            let h = rng.random_range(0..n_nodes);
            let t = rng.random_range(0..n_nodes);
            let r = rng.random_range(0..n_rels);
            b.add_edge(&format!("r{r}"), &format!("n{h}"), &format!("n{t}"), 1.0);
        }
        b.finish()
    }

    #[test]
    fn layer_matches_dense_oracle_on_random_graph() {
        let g = random_multigraph(3, 18, 50, 3);
        let d = 5;
        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(&g, RgcnConfig::uniform(d), 9, &mut store);

        let msg = MessageGraph::from_graph(&g);
        let mut tape = Tape::new();
        let feats = tape.param(&store, "g");
        let got = enc.layer_forward(&mut tape, &msg, feats, 1, &store).unwrap();
        let got = tape.value(got);

        let want = dense_layer_oracle(&g, store.expect("g"), &store, 1, d, d);
        for (a, e) in got.data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }

    #[test]
    fn encode_composes_two_oracle_layers() {
        let g = random_multigraph(4, 20, 60, 2);
        let d = 4;
        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(&g, RgcnConfig::uniform(d), 10, &mut store);
        let got = enc.encode(&g, None, &store).unwrap();

        let h1 = dense_layer_oracle(&g, store.expect("g"), &store, 1, d, d);
        let want = dense_layer_oracle(&g, &h1, &store, 2, d, d);
        for (a, e) in got.data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
        assert!(got.is_finite());
    }

    #[test]
    fn encode_is_bitwise_deterministic() {
        let g = random_multigraph(5, 15, 40, 2);
        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(&g, RgcnConfig::uniform(6), 11, &mut store);
        let a = enc.encode(&g, None, &store).unwrap();
        let b = enc.encode(&g, None, &store).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let g = random_multigraph(6, 10, 25, 2);
        let (enc, mut store) = fresh_encoder(&g, 3);
        let names: Vec<String> = store
            .names()
            .filter(|n| n.starts_with("layer"))
            .map(str::to_string)
            .collect();
        set_all_weights(&mut store, names, Matrix::zeros(3, 3));
        let out = enc.encode(&g, None, &store).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relabeling_nodes_permutes_embeddings() {
        // Same edges, interned in a different node order.
        let mut b1 = GraphBuilder::new();
        b1.add_edge("r", "a", "b", 1.0);
        b1.add_edge("r", "b", "c", 1.0);
        let g1 = b1.finish();
        let mut b2 = GraphBuilder::new();
        b2.add_node("c");
        b2.add_node("b");
        b2.add_node("a");
        b2.add_edge("r", "a", "b", 1.0);
        b2.add_edge("r", "b", "c", 1.0);
        let g2 = b2.finish();

        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(&g1, RgcnConfig::uniform(4), 12, &mut store);
        let out1 = enc.encode(&g1, None, &store).unwrap();

        // Feed g2 the same per-name feature rows via a row map into g1's table.
        let map: Vec<usize> = g2
            .concept_names()
            .iter()
            .map(|n| g1.concept_id(n).unwrap().0 as usize)
            .collect();
        let out2 = enc.encode(&g2, Some(&map), &store).unwrap();

        for name in ["a", "b", "c"] {
            let i1 = g1.concept_id(name).unwrap().0 as usize;
            let i2 = g2.concept_id(name).unwrap().0 as usize;
            assert_eq!(out1.row(i1), out2.row(i2), "row for {name}");
        }
    }

    #[test]
    fn edits_beyond_two_hops_leave_embedding_unchanged() {
        // chain: x0 - x1 - x2 - x3 - x4; node x0's embedding depends only on
        // nodes within two hops, so changing the x3-x4 edge must not move it.
        let mut b1 = GraphBuilder::new();
        for i in 0..4 {
            b1.add_edge("r", &format!("x{i}"), &format!("x{}", i + 1), 1.0);
        }
        let g1 = b1.finish();

        let mut b2 = GraphBuilder::new();
        for i in 0..3 {
            b2.add_edge("r", &format!("x{i}"), &format!("x{}", i + 1), 1.0);
        }
        // replace (x3 -> x4) with a reversed heavier edge plus a new branch
        b2.add_edge("r", "x4", "x3", 5.0);
        b2.add_edge("r", "x4", "x5", 1.0);
        let g2 = b2.finish();

        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(&g1, RgcnConfig::uniform(4), 13, &mut store);
        let out1 = enc.encode(&g1, None, &store).unwrap();
        let map: Vec<usize> = g2
            .concept_names()
            .iter()
            .map(|n| {
                g1.concept_id(n)
                    .map(|c| c.0 as usize)
                    // x5 is new; borrow any feature row, it is > 2 hops away.
                    .unwrap_or(0)
            })
            .collect();
        let out2 = enc.encode(&g2, Some(&map), &store).unwrap();

        let i1 = g1.concept_id("x0").unwrap().0 as usize;
        let i2 = g2.concept_id("x0").unwrap().0 as usize;
        assert_eq!(out1.row(i1), out2.row(i2));
        // Sanity: x2 (two hops from the edit) does move.
        let j1 = g1.concept_id("x3").unwrap().0 as usize;
        let j2 = g2.concept_id("x3").unwrap().0 as usize;
        assert_ne!(out1.row(j1), out2.row(j2));
    }

    #[test]
    fn unknown_relation_is_an_error() {
        let mut b = GraphBuilder::new();
        b.add_edge("r", "a", "b", 1.0);
        let g = b.finish();
        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(&g, RgcnConfig::uniform(3), 14, &mut store);

        let mut b2 = GraphBuilder::new();
        b2.add_edge("never_seen", "a", "b", 1.0);
        let g2 = b2.finish();
        let err = enc.encode(&g2, Some(&[0, 1]), &store).unwrap_err();
        assert!(matches!(err, Error::UnknownRelation(_)));
    }

    #[test]
    fn from_store_recovers_metadata() {
        let g = random_multigraph(7, 8, 20, 3);
        let mut store = ParamStore::new();
        let enc = RgcnEncoder::init(
            &g,
            RgcnConfig {
                d_in: 5,
                d_hidden: 4,
                d_out: 3,
            },
            15,
            &mut store,
        );
        let rebuilt = RgcnEncoder::from_store(&store).unwrap();
        assert_eq!(rebuilt.config, enc.config);
        assert_eq!(rebuilt.num_nodes, enc.num_nodes);
        let mut want = enc.relation_names.clone();
        want.sort();
        assert_eq!(rebuilt.relation_names, want);
    }
}
