use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels as k;
use super::{DenseMatrix, SparseMatrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    SpMM(&'a SparseMatrix, Var),
    Relu(Var),
    Sigmoid(Var),
    Hadamard(Var, Var),
    AddBias(Var, Var),
    Dropout(Var, Vec<f64>),
    SumRows(Var),
    MeanRows(Var),
    Flatten(Var),
    StackRows(Vec<Var>),
    BceWithLogits(Var, Vec<f64>),
    Contrastive(Var, Vec<f64>, f64),
}

struct Node<'a> {
    value: Cow<'a, DenseMatrix>,
    op: Op<'a>,
    requires_grad: bool,
}

/// Linear record of executed kernels. Values are kept for the backward pass,
/// which walks the records in reverse and accumulates gradients additively.
/// Leaves may borrow their values, so parameters are never copied onto the
/// tape.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&DenseMatrix> {
        self.grads[var.0].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<DenseMatrix> {
        self.grads[var.0].take()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf borrowed from the caller.
    pub fn param(&mut self, value: &'a DenseMatrix) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Cow<'a, DenseMatrix>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &DenseMatrix {
        &self.nodes[var.0].value
    }

    fn rg(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = k::matmul_forward(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(y, Op::MatMul(a, b), rg))
    }

    pub fn spmm(&mut self, a: &'a SparseMatrix, x: Var) -> Result<Var> {
        let y = k::spmm_forward(a, self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(y, Op::SpMM(a, x), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = k::relu_forward(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = k::sigmoid_forward(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::Sigmoid(x), rg)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = k::hadamard_forward(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(y, Op::Hadamard(a, b), rg))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let y = k::add_bias_forward(self.value(x), self.value(bias))?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(y, Op::AddBias(x, bias), rg))
    }

    /// Training-mode inverted dropout. For eval mode simply skip the call.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        let (y, mask) = k::dropout_forward(self.value(x), p, rng)?;
        let rg = self.rg(x);
        Ok(self.push(y, Op::Dropout(x, mask), rg))
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let y = k::sum_rows_forward(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::SumRows(x), rg)
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let y = k::mean_rows_forward(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::MeanRows(x), rg)
    }

    pub fn flatten(&mut self, x: Var) -> Var {
        let y = k::flatten_forward(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::Flatten(x), rg)
    }

    /// Concatenates row blocks with equal column counts.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("stack_rows", "no inputs"));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &v in parts {
            let m = self.value(v);
            if m.cols() != cols {
                return Err(Error::shape("stack_rows", format!("{} vs {} columns", m.cols(), cols)));
            }
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        let y = DenseMatrix::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|&v| self.rg(v));
        Ok(self.push(y, Op::StackRows(parts.to_vec()), rg))
    }

    fn column(&self, op: &'static str, z: Var, labels: &[f64]) -> Result<()> {
        let shape = self.value(z).shape();
        if shape != (labels.len(), 1) || labels.is_empty() {
            return Err(Error::shape(op, format!("{shape:?} against {} labels", labels.len())));
        }
        Ok(())
    }

    fn scalar(&self, op: &'static str, z: Var) -> Result<f64> {
        let v = self.value(z);
        if v.shape() != (1, 1) {
            return Err(Error::shape(op, format!("expected 1x1, got {:?}", v.shape())));
        }
        Ok(v.data()[0])
    }

    /// Binary cross-entropy on a `1x1` logit.
    pub fn bce_with_logits(&mut self, logit: Var, label: f64) -> Result<Var> {
        self.bce_with_logits_mean(logit, vec![label])
    }

    /// Mean binary cross-entropy over a `b x 1` column of logits.
    pub fn bce_with_logits_mean(&mut self, logits: Var, labels: Vec<f64>) -> Result<Var> {
        self.column("bce_with_logits", logits, &labels)?;
        let z = self.value(logits).data();
        let total: f64 = z.iter().zip(&labels).map(|(&z, &y)| k::bce_with_logits(z, y)).sum();
        let y = DenseMatrix::from_vec(1, 1, vec![total / labels.len() as f64])?;
        let rg = self.rg(logits);
        Ok(self.push(y, Op::BceWithLogits(logits, labels), rg))
    }

    /// Contrastive loss on a `1x1` score in (0, 1).
    pub fn contrastive(&mut self, score: Var, label: f64, margin: f64) -> Result<Var> {
        self.contrastive_mean(score, vec![label], margin)
    }

    /// Mean contrastive loss over a `b x 1` column of scores.
    pub fn contrastive_mean(&mut self, scores: Var, labels: Vec<f64>, margin: f64) -> Result<Var> {
        self.column("contrastive", scores, &labels)?;
        let s = self.value(scores).data();
        let total: f64 = s.iter().zip(&labels).map(|(&s, &y)| k::contrastive(s, y, margin)).sum();
        let y = DenseMatrix::from_vec(1, 1, vec![total / labels.len() as f64])?;
        let rg = self.rg(scores);
        Ok(self.push(y, Op::Contrastive(scores, labels, margin), rg))
    }

    /// Reverse pass from a `1x1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.scalar("backward", output)?;
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0])?);

        fn accumulate(
            grads: &mut [Option<DenseMatrix>],
            nodes: &[Node<'_>],
            var: Var,
            g: DenseMatrix,
        ) -> Result<()> {
            if !nodes[var.0].requires_grad {
                return Ok(());
            }
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&g),
                slot => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            let acc = |grads: &mut [Option<DenseMatrix>], v: Var, g| {
                accumulate(grads, &self.nodes, v, g)
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(dy);
                }
                Op::MatMul(a, b) => {
                    let (ga, gb) = (self.rg(*a), self.rg(*b));
                    if ga {
                        acc(&mut grads, *a, dy.matmul_nt(self.value(*b))?)?;
                    }
                    if gb {
                        acc(&mut grads, *b, self.value(*a).matmul_tn(&dy)?)?;
                    }
                }
                Op::SpMM(a, x) => acc(&mut grads, *x, k::spmm_backward(a, &dy)?)?,
                Op::Relu(x) => acc(&mut grads, *x, k::relu_backward(self.value(*x), &dy)?)?,
                Op::Sigmoid(x) => acc(&mut grads, *x, k::sigmoid_backward(&node.value, &dy)?)?,
                Op::Hadamard(a, b) => {
                    let (da, db) = k::hadamard_backward(self.value(*a), self.value(*b), &dy)?;
                    acc(&mut grads, *a, da)?;
                    acc(&mut grads, *b, db)?;
                }
                Op::AddBias(x, b) => {
                    let (dx, db) = k::add_bias_backward(&dy);
                    acc(&mut grads, *x, dx)?;
                    acc(&mut grads, *b, db)?;
                }
                Op::Dropout(x, mask) => acc(&mut grads, *x, k::dropout_backward(mask, &dy)?)?,
                Op::SumRows(x) => {
                    let rows = self.value(*x).rows();
                    acc(&mut grads, *x, k::sum_rows_backward(rows, &dy))?
                }
                Op::MeanRows(x) => {
                    let rows = self.value(*x).rows();
                    acc(&mut grads, *x, k::mean_rows_backward(rows, &dy))?
                }
                Op::Flatten(x) => {
                    let (r, c) = self.value(*x).shape();
                    acc(&mut grads, *x, k::flatten_backward(r, c, &dy))?
                }
                Op::StackRows(parts) => {
                    let mut start = 0;
                    for &v in parts {
                        let (r, c) = self.value(v).shape();
                        let block = dy.data()[start * c..(start + r) * c].to_vec();
                        start += r;
                        acc(&mut grads, v, DenseMatrix::from_vec(r, c, block)?)?;
                    }
                }
                Op::BceWithLogits(z, labels) => {
                    let scale = dy.data()[0] / labels.len() as f64;
                    let g = self.value(*z).data().iter().zip(labels)
                        .map(|(&zv, &y)| scale * k::bce_with_logits_grad(zv, y))
                        .collect();
                    acc(&mut grads, *z, DenseMatrix::from_vec(labels.len(), 1, g)?)?
                }
                Op::Contrastive(s, labels, margin) => {
                    let scale = dy.data()[0] / labels.len() as f64;
                    let g = self.value(*s).data().iter().zip(labels)
                        .map(|(&sv, &y)| scale * k::contrastive_grad(sv, y, *margin))
                        .collect();
                    acc(&mut grads, *s, DenseMatrix::from_vec(labels.len(), 1, g)?)?
                }
            }
        }
        Ok(Gradients { grads })
    }
}
