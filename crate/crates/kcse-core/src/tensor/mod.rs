//! Dense double-precision matrix core with reverse-mode gradients.
//!
//! Deliberately small: row-major [`Matrix`] values, a [`Tape`] recording the
//! forward pass, a named [`ParamStore`] that collects gradients, the Adam
//! optimizer, and a central-difference gradient checker. Matrices are value
//! types and safe to move between threads; a tape and its store belong to a
//! single training thread.

mod adam;
mod gradcheck;
mod matrix;
mod sparse;
mod store;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::finite_diff_check;
pub use matrix::Matrix;
pub use sparse::SparseMatrix;
pub use store::ParamStore;
pub use tape::{Tape, TapeId};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

pub fn relu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rowwise affine map followed by an elementwise activation, computed
/// directly (no tape). `weights` is `[out x in]`, `bias` `[1 x out]`,
/// `input` `[n x in]`.
pub fn fc_forward(
    weights: &Matrix,
    bias: &Matrix,
    input: &Matrix,
    activation: Activation,
) -> Result<Matrix> {
    if weights.cols() != input.cols() {
        return Err(Error::Shape(format!(
            "fc_forward: weights are {}x{} but input has {} columns",
            weights.rows(),
            weights.cols(),
            input.cols()
        )));
    }
    if bias.rows() != 1 || bias.cols() != weights.rows() {
        return Err(Error::Shape(format!(
            "fc_forward: bias is {}x{} but weights produce {} outputs",
            bias.rows(),
            bias.cols(),
            weights.rows()
        )));
    }
    let mut out = input.matmul_nt(weights);
    out.add_row_broadcast(bias);
    match activation {
        Activation::Relu => out.map_inplace(relu_scalar),
        Activation::Sigmoid => out.map_inplace(sigmoid_scalar),
        Activation::None => {}
    }
    Ok(out)
}
