//! Dense/sparse linear algebra, differentiable kernels with hand-written
//! backward passes, a linear tape over those kernels, and Adam.

mod adam;
mod dense;
pub mod kernels;
mod sparse;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::DenseMatrix;
pub use sparse::SparseMatrix;
pub use tape::{Tape, Var};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
