//! Forward and backward passes of every differentiable kernel used by the
//! model. Backward functions take the upstream gradient `dy` (same shape as
//! the forward output) and return gradients for the inputs.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{sigmoid, DenseMatrix, SparseMatrix};
use crate::error::{Error, Result};

fn same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn map(x: &DenseMatrix, f: impl Fn(f64) -> f64) -> DenseMatrix {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

fn zip_map(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    let mut out = a.clone();
    for (o, b) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, *b);
    }
    out
}

pub fn matmul_forward(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

pub fn matmul_backward(
    a: &DenseMatrix,
    b: &DenseMatrix,
    dy: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    Ok((dy.matmul_nt(b)?, a.matmul_tn(dy)?))
}

pub fn spmm_forward(a: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    a.spmm(x)
}

pub fn spmm_backward(a: &SparseMatrix, dy: &DenseMatrix) -> Result<DenseMatrix> {
    a.spmm_transpose(dy)
}

pub fn relu_forward(x: &DenseMatrix) -> DenseMatrix {
    map(x, |v| if v > 0.0 { v } else { 0.0 })
}

pub fn relu_backward(x: &DenseMatrix, dy: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape("relu_backward", x, dy)?;
    Ok(zip_map(x, dy, |x, g| if x > 0.0 { g } else { 0.0 }))
}

pub fn sigmoid_forward(x: &DenseMatrix) -> DenseMatrix {
    map(x, sigmoid)
}

/// Takes the forward *output* `y`.
pub fn sigmoid_backward(y: &DenseMatrix, dy: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape("sigmoid_backward", y, dy)?;
    Ok(zip_map(y, dy, |y, g| g * y * (1.0 - y)))
}

pub fn hadamard_forward(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape("hadamard", a, b)?;
    Ok(zip_map(a, b, |a, b| a * b))
}

pub fn hadamard_backward(
    a: &DenseMatrix,
    b: &DenseMatrix,
    dy: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    same_shape("hadamard_backward", a, dy)?;
    same_shape("hadamard_backward", b, dy)?;
    Ok((zip_map(dy, b, |g, b| g * b), zip_map(dy, a, |g, a| g * a)))
}

/// Adds a `1 x c` bias row to every row of `x`.
pub fn add_bias_forward(x: &DenseMatrix, bias: &DenseMatrix) -> Result<DenseMatrix> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(Error::shape(
            "add_bias",
            format!("{:?} + bias {:?}", x.shape(), bias.shape()),
        ));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (o, b) in out.row_mut(i).iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

pub fn add_bias_backward(dy: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    (dy.clone(), sum_rows_forward(dy))
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout: kept entries are scaled by `1/(1-p)`. Returns the output
/// and the multiplicative mask needed by the backward pass.
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &DenseMatrix,
    p: f64,
    rng: &mut R,
) -> Result<(DenseMatrix, Vec<f64>)> {
    check_rate(p)?;
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.data().len())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mut out = x.clone();
    for (o, m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((out, mask))
}

/// Eval-time dropout is the identity.
pub fn dropout_eval(x: &DenseMatrix, p: f64) -> Result<DenseMatrix> {
    check_rate(p)?;
    Ok(x.clone())
}

pub fn dropout_backward(mask: &[f64], dy: &DenseMatrix) -> Result<DenseMatrix> {
    if mask.len() != dy.data().len() {
        return Err(Error::shape("dropout_backward", "mask length differs from gradient"));
    }
    let mut out = dy.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask) {
        *o *= m;
    }
    Ok(out)
}

/// Column sums as a `1 x c` row.
pub fn sum_rows_forward(x: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(1, x.cols());
    for i in 0..x.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    out
}

pub fn sum_rows_backward(rows: usize, dy: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows, dy.cols());
    for i in 0..rows {
        out.row_mut(i).copy_from_slice(dy.data());
    }
    out
}

pub fn mean_rows_forward(x: &DenseMatrix) -> DenseMatrix {
    let mut out = sum_rows_forward(x);
    out.scale(1.0 / x.rows() as f64);
    out
}

pub fn mean_rows_backward(rows: usize, dy: &DenseMatrix) -> DenseMatrix {
    let mut out = sum_rows_backward(rows, dy);
    out.scale(1.0 / rows as f64);
    out
}

/// Row-major flatten into a single `1 x (r*c)` row.
pub fn flatten_forward(x: &DenseMatrix) -> DenseMatrix {
    let (r, c) = x.shape();
    let mut out = DenseMatrix::zeros(1, r * c);
    out.data_mut().copy_from_slice(x.data());
    out
}

pub fn flatten_backward(rows: usize, cols: usize, dy: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows, cols);
    out.data_mut().copy_from_slice(dy.data());
    out
}

/// Binary cross-entropy evaluated on the logit `z` of the score, i.e.
/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` without forming `ln 0`.
pub fn bce_with_logits(z: f64, label: f64) -> f64 {
    let softplus_neg_abs = libm::log1p(libm::exp(-libm::fabs(z)));
    z.max(0.0) - z * label + softplus_neg_abs
}

pub fn bce_with_logits_grad(z: f64, label: f64) -> f64 {
    sigmoid(z) - label
}

/// `y (1-s)² + (1-y) max(0, s-m)²`.
pub fn contrastive(score: f64, label: f64, margin: f64) -> f64 {
    let hinge = (score - margin).max(0.0);
    label * (1.0 - score) * (1.0 - score) + (1.0 - label) * hinge * hinge
}

pub fn contrastive_grad(score: f64, label: f64, margin: f64) -> f64 {
    let hinge = (score - margin).max(0.0);
    -2.0 * label * (1.0 - score) + 2.0 * (1.0 - label) * hinge
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn relu_blocks_negative_gradient() {
        let x = DenseMatrix::from_rows(&[&[-1.0, 2.0]]).unwrap();
        let dy = DenseMatrix::from_rows(&[&[5.0, 5.0]]).unwrap();
        assert_eq!(relu_backward(&x, &dy).unwrap().data(), &[0.0, 5.0]);
    }

    #[test]
    fn dropout_rate_is_validated() {
        let x = DenseMatrix::zeros(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout_forward(&x, 1.0, &mut rng).is_err());
        assert!(dropout_forward(&x, -0.1, &mut rng).is_err());
        assert!(dropout_eval(&x, 1.5).is_err());
    }

    #[test]
    fn dropout_mask_is_seeded() {
        let x = DenseMatrix::from_vec(4, 5, (0..20).map(f64::from).collect()).unwrap();
        let a = dropout_forward(&x, 0.2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = dropout_forward(&x, 0.2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(dropout_eval(&x, 0.2).unwrap(), x);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = DenseMatrix::from_vec(100, 100, alloc::vec![1.0; 10_000]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (y, _) = dropout_forward(&x, 0.2, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn bce_symmetric_point_and_stability() {
        assert!((bce_with_logits(0.0, 1.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logits(1000.0, 0.0).is_finite());
        assert!((bce_with_logits(-1000.0, 1.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn contrastive_zero_inside_margin() {
        assert_eq!(contrastive(0.3, 0.0, 0.5), 0.0);
        assert_eq!(contrastive(0.5, 0.0, 0.5), 0.0);
        assert_eq!(contrastive_grad(0.3, 0.0, 0.5), 0.0);
    }
}
