//! Dense matrices, sparse mean aggregation and a reverse-mode tape.
//!
//! Everything runs in `f64` on a single thread so that identical inputs
//! give bit-identical results.

mod adam;
mod init;
mod matrix;
mod params;
mod sparse;
mod tape;

pub use adam::Adam;
pub use init::{xavier_bound, xavier_init, xavier_init_with};
pub use matrix::Matrix;
pub use params::{ParamId, ParamStore, Parameter};
pub use sparse::LabelAdjacency;
pub use tape::{sigmoid, softmax_rows, Tape, Var, PROB_CLIP};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("data of length {len} cannot fill a {rows}x{cols} matrix")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("loss must be a 1x1 scalar, got {}x{}", shape.0, shape.1)]
    NotScalar { shape: (usize, usize) },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    ZeroDimension { rows: usize, cols: usize },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        TensorError::Shape { op, lhs, rhs }
    }
}
