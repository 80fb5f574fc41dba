//! DistMult triple scoring: sigmoid of the diagonal bilinear form
//! `h_i^T R_r h_j`. Symmetric in head and tail by construction.
//!
//! Diagonals exist only for original relations; the encoder's synthetic
//! inverse relations never appear here.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::{sigmoid_scalar, Matrix, ParamStore, Tape, TapeId};

/// Raw bilinear logit `sum_k h_i[k] r[k] h_j[k]`; the numerically stable
/// path for losses.
pub fn score_logit(h_i: &[f64], r_diag: &[f64], h_j: &[f64]) -> f64 {
    debug_assert!(h_i.len() == r_diag.len() && r_diag.len() == h_j.len());
    let mut acc = 0.0;
    for k in 0..h_i.len() {
        acc += h_i[k] * r_diag[k] * h_j[k];
    }
    acc
}

/// Post-sigmoid triple score in (0, 1).
pub fn score_triple(h_i: &[f64], r_diag: &[f64], h_j: &[f64]) -> Result<f64> {
    if h_i.len() != r_diag.len() || h_j.len() != r_diag.len() {
        return Err(Error::Dimension(format!(
            "score_triple: got vectors of length {}, {}, {}",
            h_i.len(),
            r_diag.len(),
            h_j.len()
        )));
    }
    Ok(sigmoid_scalar(score_logit(h_i, r_diag, h_j)))
}

/// One trainable diagonal per original relation, stored as
/// `distmult.R.<relation>` rows of length d.
#[derive(Debug, Clone)]
pub struct RelationDiagonals {
    pub relation_names: Vec<String>,
    pub d: usize,
}

fn diag_name(relation: &str) -> String {
    format!("distmult.R.{relation}")
}

impl RelationDiagonals {
    /// Initialize diagonals to 1.0 + U(-0.1, 0.1), one per relation.
    pub fn init(
        relation_names: &[String],
        d: usize,
        seed: u64,
        store: &mut ParamStore,
    ) -> Self {
        let mut rng = stream(seed, "distmult:init");
        for rel in relation_names {
            store.insert(
                diag_name(rel),
                Matrix::from_fn(1, d, |_, _| 1.0 + rng.random_range(-0.1..0.1)),
            );
        }
        RelationDiagonals {
            relation_names: relation_names.to_vec(),
            d,
        }
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let mut relation_names = Vec::new();
        let mut d = None;
        for name in store.names() {
            if let Some(rel) = name.strip_prefix("distmult.R.") {
                let m = store.get(name).unwrap();
                match d {
                    None => d = Some(m.cols()),
                    Some(prev) if prev != m.cols() => {
                        return Err(Error::Dimension(format!(
                            "diagonal '{rel}' has length {}, others {prev}",
                            m.cols()
                        )))
                    }
                    _ => {}
                }
                relation_names.push(rel.to_string());
            }
        }
        let d = d.ok_or_else(|| Error::Config("checkpoint has no DistMult diagonals".into()))?;
        Ok(RelationDiagonals { relation_names, d })
    }

    pub fn diagonal<'s>(&self, store: &'s ParamStore, relation: &str) -> Result<&'s Matrix> {
        store
            .get(&diag_name(relation))
            .ok_or_else(|| Error::UnknownRelation(relation.to_string()))
    }

    /// Stack all diagonals into one `[|R| x d]` tape node; row order follows
    /// `relation_names`.
    pub fn stacked(&self, tape: &mut Tape, store: &ParamStore) -> TapeId {
        let parts: Vec<TapeId> = self
            .relation_names
            .iter()
            .map(|rel| tape.param(store, &diag_name(rel)))
            .collect();
        tape.concat_rows(&parts)
    }

    /// Score a batch of `(head_row, relation_index, tail_row)` triples
    /// against encoded embeddings `h`; returns `[n x 1]` raw logits.
    /// Relation indices refer to `relation_names` order.
    pub fn score_batch_logits(
        &self,
        tape: &mut Tape,
        h: TapeId,
        triples: &[(usize, usize, usize)],
        store: &ParamStore,
    ) -> TapeId {
        let stacked = self.stacked(tape, store);
        let heads: Vec<usize> = triples.iter().map(|t| t.0).collect();
        let rels: Vec<usize> = triples.iter().map(|t| t.1).collect();
        let tails: Vec<usize> = triples.iter().map(|t| t.2).collect();
        let h_heads = tape.gather_rows(h, heads);
        let h_tails = tape.gather_rows(h, tails);
        let r_rows = tape.gather_rows(stacked, rels);
        let prod = tape.mul_elem(h_heads, r_rows);
        let prod = tape.mul_elem(prod, h_tails);
        tape.row_sum(prod)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_scores_one_half() {
        let h_i = vec![0.0; 4];
        let r = vec![2.0, -1.0, 0.5, 3.0];
        let h_j = vec![1.0, 1.0, 1.0, 1.0];
        assert_eq!(score_triple(&h_i, &r, &h_j).unwrap(), 0.5);
    }

    #[test]
    fn unit_basis_all_ones_gives_sigma_one() {
        let e1 = vec![1.0, 0.0, 0.0];
        let ones = vec![1.0, 1.0, 1.0];
        let s = score_triple(&e1, &ones, &e1).unwrap();
        assert!((s - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_example() {
        // (1,2) . (0.5, 0.25) . (3,4) = 1.5 + 2.0 = 3.5
        let s = score_triple(&[1.0, 2.0], &[0.5, 0.25], &[3.0, 4.0]).unwrap();
        assert!((s - 0.9706877692486436).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(score_triple(&[1.0], &[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn head_tail_symmetry_to_machine_precision() {
        let mut rng = stream(42, "distmult-sym");
        for _ in 0..200 {
            let d = 16;
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s1 = score_triple(&a, &r, &b).unwrap();
            let s2 = score_triple(&b, &r, &a).unwrap();
            assert!((s1 - s2).abs() < 1e-12);
        }
    }

    #[test]
    fn score_stays_inside_open_interval() {
        // logit 18: close to saturation but still strictly inside (0,1)
        let big = vec![3.0, -3.0];
        let r = vec![1.0, 1.0];
        let s = score_triple(&big, &r, &big).unwrap();
        assert!(s > 0.0 && s < 1.0 && s > 0.999);
        let s_low = score_triple(&[3.0, 3.0], &r, &[-3.0, 3.0]).unwrap();
        assert!(s_low > 0.0 && s_low < 1.0);
    }

    #[test]
    fn positive_form_scaling_raises_score() {
        let h_i = vec![1.0, 0.5];
        let r = vec![1.0, 1.0];
        let h_j = vec![0.5, 1.0];
        let base = score_triple(&h_i, &r, &h_j).unwrap();
        let scaled: Vec<f64> = h_i.iter().map(|v| v * 2.0).collect();
        let up = score_triple(&scaled, &r, &h_j).unwrap();
        assert!(up > base);
    }

    #[test]
    fn batch_logits_match_scalar_path() {
        let mut store = ParamStore::new();
        let rels = vec!["RelatedTo".to_string(), "IsA".to_string()];
        let diags = RelationDiagonals::init(&rels, 3, 7, &mut store);

        let h = Matrix::from_rows(&[
            vec![0.5, -1.0, 2.0],
            vec![1.5, 0.25, -0.75],
            vec![-0.1, 0.2, 0.3],
        ]);
        let triples = vec![(0, 0, 1), (2, 1, 2), (1, 0, 0)];

        let mut tape = Tape::new();
        let hid = tape.constant(h.clone());
        let logits = diags.score_batch_logits(&mut tape, hid, &triples, &store);
        let logits = tape.value(logits);

        for (row, &(i, r, j)) in triples.iter().enumerate() {
            let diag = diags.diagonal(&store, &rels[r]).unwrap();
            let want = score_logit(h.row(i), diag.row(0), h.row(j));
            assert!((logits.get(row, 0) - want).abs() < 1e-12);
        }
    }
}
