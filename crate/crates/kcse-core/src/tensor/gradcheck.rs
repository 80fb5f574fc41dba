//! Central-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use super::{Matrix, ParamStore, Tape, TapeId};

/// Compare the tape gradient of `loss_fn` against central finite
/// differences, entry by entry over every parameter in the store, and
/// return the maximum relative error.
///
/// `loss_fn` must deterministically rebuild the same scalar loss from the
/// current parameter values (seed any randomness outside the closure). The
/// relative error denominator is max(|analytic|, |numeric|, 1e-8).
pub fn finite_diff_check<F>(store: &mut ParamStore, h: f64, mut loss_fn: F) -> f64
where
    F: FnMut(&mut Tape, &ParamStore) -> TapeId,
{
    store.clear_grads();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store);
    tape.backward(loss, store);
    let analytic: BTreeMap<String, Matrix> = store.grads().clone();
    store.clear_grads();

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut max_rel = 0.0f64;
    for name in &names {
        let entries = store.get(name).unwrap().len();
        for k in 0..entries {
            let original = store.get(name).unwrap().data()[k];

            store.get_mut(name).unwrap().data_mut()[k] = original + h;
            let f_plus = eval(&mut loss_fn, store);
            store.get_mut(name).unwrap().data_mut()[k] = original - h;
            let f_minus = eval(&mut loss_fn, store);
            store.get_mut(name).unwrap().data_mut()[k] = original;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic.get(name).map_or(0.0, |g| g.data()[k]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    max_rel
}

fn eval<F>(loss_fn: &mut F, store: &ParamStore) -> f64
where
    F: FnMut(&mut Tape, &ParamStore) -> TapeId,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store);
    tape.scalar_value(loss)
}
