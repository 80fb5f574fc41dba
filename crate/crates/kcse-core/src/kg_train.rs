//! Graph-autoencoder training: link prediction with negative sampling and
//! cross-entropy, plus AUC/mean-rank evaluation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::distmult::RelationDiagonals;
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::rgcn::{MessageGraph, RgcnConfig, RgcnEncoder};
use crate::rng::stream;
use crate::tensor::{AdamConfig, AdamState, Matrix, ParamStore, Tape};

/// Triple as plain indices: (head, relation, tail).
pub type TripleKey = (usize, usize, usize);

#[derive(Debug, Clone)]
pub struct KgTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Probability of corrupting head / tail / relation; must sum to 1.
    pub corruption: [f64; 3],
    /// Fraction of edges dropped per epoch to form the incomplete edge set.
    /// Zero trains the model to reconstruct the observed edges against a
    /// fixed negative set.
    pub edge_dropout: f64,
    pub seed: u64,
    /// Fraction of edges held out entirely for validation AUC; zero
    /// disables early stopping.
    pub validation_fraction: f64,
    /// Early-stopping patience in epochs, used when validating.
    pub patience: usize,
    pub dims: RgcnConfig,
}

impl Default for KgTrainConfig {
    fn default() -> Self {
        KgTrainConfig {
            epochs: 500,
            lr: 1e-2,
            corruption: [1.0 / 3.0; 3],
            edge_dropout: 0.2,
            seed: 0,
            validation_fraction: 0.0,
            patience: 50,
            dims: RgcnConfig::default(),
        }
    }
}

impl KgTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.corruption.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.corruption.iter().any(|&c| c < 0.0) {
            return Err(Error::Config(format!(
                "corruption probabilities must be non-negative and sum to 1, got {:?}",
                self.corruption
            )));
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return Err(Error::Config(format!(
                "edge dropout must be in [0, 1), got {}",
                self.edge_dropout
            )));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 0.5), got {}",
                self.validation_fraction
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Balanced scoring batch: equal counts of positive and negative triples.
#[derive(Debug, Clone)]
pub struct TrainingTripleBatch {
    pub triples: Vec<TripleKey>,
    pub labels: Vec<bool>,
}

impl TrainingTripleBatch {
    pub fn balanced(positives: &[TripleKey], negatives: &[TripleKey]) -> Self {
        assert_eq!(
            positives.len(),
            negatives.len(),
            "batch must hold equal numbers of positives and negatives"
        );
        let mut triples = Vec::with_capacity(positives.len() * 2);
        let mut labels = Vec::with_capacity(positives.len() * 2);
        triples.extend_from_slice(positives);
        labels.extend(std::iter::repeat(true).take(positives.len()));
        triples.extend_from_slice(negatives);
        labels.extend(std::iter::repeat(false).take(negatives.len()));
        TrainingTripleBatch { triples, labels }
    }

    pub fn label_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.labels.len(),
            1,
            self.labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

fn sample_negatives_impl(
    graph: &KnowledgeGraph,
    known: &std::collections::HashSet<(u32, u32, u32)>,
    positives: &[TripleKey],
    corruption: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> (Vec<TripleKey>, usize) {
    let n = graph.num_concepts();
    let r = graph.num_relations();
    let mut out = Vec::with_capacity(positives.len());
    let mut forced = 0;
    for &(h, rel, t) in positives {
        let mut kept = (h, rel, t);
        let mut ok = false;
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.0..1.0);
            let mut cand = (h, rel, t);
            if x < corruption[0] {
                cand.0 = rng.random_range(0..n);
            } else if x < corruption[0] + corruption[1] {
                cand.2 = rng.random_range(0..n);
            } else {
                cand.1 = rng.random_range(0..r);
            }
            kept = cand;
            if !known.contains(&(cand.0 as u32, cand.1 as u32, cand.2 as u32)) {
                ok = true;
                break;
            }
        }
        if !ok {
            forced += 1;
        }
        out.push(kept);
    }
    (out, forced)
}

/// Corrupt each positive in exactly one position (chosen per the corruption
/// distribution, resampled uniformly from the vocabulary). Candidates that
/// collide with a known positive edge are redrawn up to 100 times, then kept.
pub fn sample_negatives(
    graph: &KnowledgeGraph,
    positives: &[TripleKey],
    corruption: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> Vec<TripleKey> {
    let known = graph.edge_key_set();
    sample_negatives_impl(graph, &known, positives, corruption, rng).0
}

/// Mean binary cross-entropy of probability scores against 0/1 labels.
pub fn kg_loss(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        if !(0.0..=1.0).contains(&s) || s == 0.0 || s == 1.0 {
            return Err(Error::Config(format!("score {s} outside the open interval (0,1)")));
        }
        total += if y { -s.ln() } else { -(1.0 - s).ln() };
    }
    Ok(total / scores.len() as f64)
}

/// Trained autoencoder: encoder and decoder parameters share one store.
#[derive(Debug, Clone)]
pub struct KgModel {
    pub encoder: RgcnEncoder,
    pub diagonals: RelationDiagonals,
    pub store: ParamStore,
}

impl KgModel {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.store.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let store = ParamStore::load(path)?;
        let encoder = RgcnEncoder::from_store(&store)?;
        let diagonals = RelationDiagonals::from_store(&store)?;
        Ok(KgModel {
            encoder,
            diagonals,
            store,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct KgTrainReport {
    pub loss_history: Vec<f64>,
    pub val_auc_history: Vec<f64>,
    /// Epoch at which early stopping triggered, if it did.
    pub stopped_epoch: Option<usize>,
    /// Negatives kept despite colliding with known positives.
    pub forced_negative_keeps: usize,
}

/// Average of the second half of the final `frac` window does not exceed
/// the first half: the training-progress check used by the tests.
pub fn final_stretch_non_increasing(history: &[f64], frac: f64) -> bool {
    let w = ((history.len() as f64 * frac).round() as usize).max(2);
    if history.len() < w {
        return true;
    }
    let tail = &history[history.len() - w..];
    let mid = tail.len() / 2;
    let first: f64 = tail[..mid].iter().sum::<f64>() / mid as f64;
    let second: f64 = tail[mid..].iter().sum::<f64>() / (tail.len() - mid) as f64;
    second <= first + 1e-12
}

/// Train the autoencoder on `graph` for link prediction.
///
/// With edge dropout, each epoch drops a fresh fraction of training edges
/// from message passing and scores exactly those dropped edges as positives
/// (plus matched negatives). With dropout zero the model reconstructs the
/// full observed edge set against a fixed negative sample, so the loss
/// history is constant whenever the parameters stop changing.
pub fn train_kg(graph: &KnowledgeGraph, config: &KgTrainConfig) -> Result<(KgModel, KgTrainReport)> {
    config.validate()?;
    if graph.num_edges() == 0 {
        return Err(Error::Empty("graph has no edges"));
    }

    let mut store = ParamStore::new();
    let encoder = RgcnEncoder::init(graph, config.dims, config.seed, &mut store);
    let diagonals = RelationDiagonals::init(
        &graph.relation_names().to_vec(),
        config.dims.d_out,
        config.seed,
        &mut store,
    );
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));

    let all_edges: Vec<TripleKey> = graph
        .edges()
        .iter()
        .map(|e| (e.head.0 as usize, e.relation.0 as usize, e.tail.0 as usize))
        .collect();
    let known = graph.edge_key_set();

    // Validation split: held-out edges never enter message passing or the
    // positive pool.
    let mut edge_indices: Vec<usize> = (0..all_edges.len()).collect();
    let val_count = (all_edges.len() as f64 * config.validation_fraction).floor() as usize;
    if val_count > 0 {
        let mut rng_val = stream(config.seed, "kg:valsplit");
        for i in 0..val_count {
            let j = rng_val.random_range(i..edge_indices.len());
            edge_indices.swap(i, j);
        }
    }
    let (val_idx, train_idx) = edge_indices.split_at(val_count);
    let val_positives: Vec<TripleKey> = val_idx.iter().map(|&i| all_edges[i]).collect();
    let mut train_order: Vec<usize> = train_idx.to_vec();
    if train_order.is_empty() {
        return Err(Error::Config("validation split leaves no training edges".into()));
    }

    // Fixed validation negatives keep the early-stopping signal comparable
    // across epochs.
    let val_negatives: Vec<Vec<TripleKey>> = {
        let mut rng = stream(config.seed, "kg:valnegatives");
        val_positives
            .iter()
            .map(|&p| sample_negatives_impl(graph, &known, &[p; 10], config.corruption, &mut rng).0)
            .collect()
    };

    let mut rng_drop = stream(config.seed, "kg:dropout");
    let mut rng_neg = stream(config.seed, "kg:negatives");
    let mut report = KgTrainReport::default();

    let full_mask = {
        let mut m = vec![false; all_edges.len()];
        for &i in &train_order {
            m[i] = true;
        }
        m
    };
    let static_msg = MessageGraph::from_masked(graph, Some(&full_mask));

    // Fixed positives and negatives for the dropout-free mode.
    let static_positives: Vec<TripleKey> = train_order.iter().map(|&i| all_edges[i]).collect();
    let static_negatives = if config.edge_dropout == 0.0 {
        let (neg, forced) = sample_negatives_impl(
            graph,
            &known,
            &static_positives,
            config.corruption,
            &mut rng_neg,
        );
        report.forced_negative_keeps += forced;
        Some(neg)
    } else {
        None
    };

    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        let (msg, batch);
        if config.edge_dropout > 0.0 {
            let k = ((train_order.len() as f64 * config.edge_dropout).round() as usize)
                .clamp(1, train_order.len());
            for i in 0..k {
                let j = rng_drop.random_range(i..train_order.len());
                train_order.swap(i, j);
            }
            let mut mask = full_mask.clone();
            let mut positives = Vec::with_capacity(k);
            for &i in &train_order[..k] {
                mask[i] = false;
                positives.push(all_edges[i]);
            }
            let (negatives, forced) =
                sample_negatives_impl(graph, &known, &positives, config.corruption, &mut rng_neg);
            report.forced_negative_keeps += forced;
            msg = MessageGraph::from_masked(graph, Some(&mask));
            batch = TrainingTripleBatch::balanced(&positives, &negatives);
        } else {
            msg = MessageGraph::from_masked(graph, Some(&full_mask));
            batch = TrainingTripleBatch::balanced(
                &static_positives,
                static_negatives.as_ref().unwrap(),
            );
        }

        let mut tape = Tape::new();
        let h = encoder.encode_on_tape(&mut tape, &msg, None, &store)?;
        let logits = diagonals.score_batch_logits(&mut tape, h, &batch.triples, &store);
        let loss = tape.bce_with_logits(logits, batch.label_matrix());
        report.loss_history.push(tape.scalar_value(loss));
        tape.backward(loss, &mut store);
        adam.step(&mut store);

        if !val_positives.is_empty() {
            let auc = validation_auc(
                &encoder,
                &diagonals,
                &static_msg,
                &store,
                &val_positives,
                &val_negatives,
            )?;
            report.val_auc_history.push(auc);
            if auc > best_val + 1e-12 {
                best_val = auc;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > config.patience {
                    report.stopped_epoch = Some(epoch);
                    break;
                }
            }
        }
    }

    Ok((
        KgModel {
            encoder,
            diagonals,
            store,
        },
        report,
    ))
}

fn validation_auc(
    encoder: &RgcnEncoder,
    diagonals: &RelationDiagonals,
    msg: &MessageGraph,
    store: &ParamStore,
    positives: &[TripleKey],
    negatives: &[Vec<TripleKey>],
) -> Result<f64> {
    let mut tape = Tape::new();
    let h = encoder.encode_on_tape(&mut tape, msg, None, store)?;
    let all: Vec<TripleKey> = positives
        .iter()
        .copied()
        .chain(negatives.iter().flatten().copied())
        .collect();
    let logits = diagonals.score_batch_logits(&mut tape, h, &all, store);
    let values = tape.value(logits);
    let pos: Vec<f64> = (0..positives.len()).map(|i| values.get(i, 0)).collect();
    let neg: Vec<f64> = (positives.len()..all.len()).map(|i| values.get(i, 0)).collect();
    Ok(auc(&pos, &neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    assert!(!pos.is_empty() && !neg.is_empty(), "auc needs both classes");
    let mut sorted_neg = neg.to_vec();
    sorted_neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut wins = 0.0;
    for &p in pos {
        let below = sorted_neg.partition_point(|&v| v < p);
        let not_above = sorted_neg.partition_point(|&v| v <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (pos.len() as f64 * neg.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPredMetrics {
    pub auc: f64,
    /// Mean rank of each positive among its own sampled negatives (rank 1 =
    /// best; ties add one half).
    pub mean_rank: f64,
}

/// Score held-out positives against freshly sampled corrupted negatives.
pub fn evaluate_link_prediction(
    model: &KgModel,
    message_graph: &KnowledgeGraph,
    held_out: &[TripleKey],
    negatives_per_positive: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LinkPredMetrics> {
    if held_out.is_empty() {
        return Err(Error::Empty("held-out positives"));
    }
    let mut known = message_graph.edge_key_set();
    for &(h, r, t) in held_out {
        if !known.insert((h as u32, r as u32, t as u32)) {
            return Err(Error::Config(format!(
                "held-out triple ({h},{r},{t}) overlaps the message-passing edges"
            )));
        }
    }

    let h = model.encoder.encode(message_graph, None, &model.store)?;
    let diag_rows: Vec<&Matrix> = model
        .diagonals
        .relation_names
        .iter()
        .map(|r| model.diagonals.diagonal(&model.store, r))
        .collect::<Result<_>>()?;
    let score = |t: TripleKey| -> f64 {
        crate::distmult::score_logit(h.row(t.0), diag_rows[t.1].row(0), h.row(t.2))
    };

    let mut pos_scores = Vec::with_capacity(held_out.len());
    let mut neg_scores = Vec::new();
    let mut rank_sum = 0.0;
    for &p in held_out {
        let sp = score(p);
        pos_scores.push(sp);
        let negs = sample_negatives_impl(
            message_graph,
            &known,
            &vec![p; negatives_per_positive],
            [1.0 / 3.0; 3],
            rng,
        )
        .0;
        let mut higher = 0.0;
        for &n in &negs {
            let sn = score(n);
            neg_scores.push(sn);
            if sn > sp {
                higher += 1.0;
            } else if sn == sp {
                higher += 0.5;
            }
        }
        rank_sum += 1.0 + higher;
    }

    Ok(LinkPredMetrics {
        auc: auc(&pos_scores, &neg_scores),
        mean_rank: rank_sum / held_out.len() as f64,
    })
}
