//! Dual-path network: a two-layer graph convolution over the shared word
//! graph for texts, a linear projection for precomputed image features, and
//! a sigmoid head over the elementwise product of the two embeddings.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::kernels::{bce_with_logits, contrastive, contrastive_grad};
use crate::numerics::{sigmoid, DenseMatrix, SparseMatrix, Tape, Var};

pub const DEFAULT_SEMANTIC_DIM: usize = 1024;
pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const DEFAULT_MARGIN: f64 = 0.5;

/// Reduction from node features to a single text vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Mean,
    Sum,
    /// Concatenate every node's channels (keeps node identity).
    Flatten,
}

impl FromStr for Pool {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            "flatten" => Ok(Self::Flatten),
            other => Err(Error::Config(format!("unknown pooling `{other}`"))),
        }
    }
}

impl Pool {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
            Self::Flatten => "flatten",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Binary cross-entropy on the pair label.
    Bce,
    /// `y (1-s)² + (1-y) max(0, s-m)²`.
    Contrastive,
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(Self::Bce),
            "contrastive" => Ok(Self::Contrastive),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bce => "bce",
            Self::Contrastive => "contrastive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_nodes: usize,
    pub in_channels: usize,
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    pub pool: Pool,
    pub semantic_dim: usize,
    pub image_feat_dim: usize,
    pub dropout_p: f64,
    /// Also drop out the image features before the image projection.
    pub dropout_image: bool,
    pub loss: LossKind,
    pub margin: f64,
}

impl ModelConfig {
    pub fn new(n_nodes: usize, in_channels: usize, image_feat_dim: usize) -> Self {
        Self {
            n_nodes,
            in_channels,
            gcn_hidden: 32,
            gcn_out: 16,
            pool: Pool::Flatten,
            semantic_dim: DEFAULT_SEMANTIC_DIM,
            image_feat_dim,
            dropout_p: DEFAULT_DROPOUT,
            dropout_image: true,
            loss: LossKind::Bce,
            margin: DEFAULT_MARGIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_nodes", self.n_nodes),
            ("in_channels", self.in_channels),
            ("gcn_hidden", self.gcn_hidden),
            ("gcn_out", self.gcn_out),
            ("semantic_dim", self.semantic_dim),
            ("image_feat_dim", self.image_feat_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        if !self.margin.is_finite() {
            return Err(Error::Config("margin must be finite".into()));
        }
        Ok(())
    }

    /// Width of the pooled text vector fed to the text projection.
    pub fn pooled_dim(&self) -> usize {
        match self.pool {
            Pool::Mean | Pool::Sum => self.gcn_out,
            Pool::Flatten => self.n_nodes * self.gcn_out,
        }
    }
}

/// Every trainable tensor. Also used to hold gradients of the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv1: DenseMatrix,
    pub conv2: DenseMatrix,
    pub text_w: DenseMatrix,
    pub text_b: DenseMatrix,
    pub image_w: DenseMatrix,
    pub image_b: DenseMatrix,
    pub sim_w: DenseMatrix,
    pub sim_b: DenseMatrix,
}

/// Tensor names in storage order; weights decay, biases do not.
pub const PARAM_NAMES: [(&str, bool); 8] = [
    ("conv1", true),
    ("conv2", true),
    ("text_w", true),
    ("text_b", false),
    ("image_w", true),
    ("image_b", false),
    ("sim_w", true),
    ("sim_b", false),
];

impl ModelParams {
    fn shapes(cfg: &ModelConfig) -> [(usize, usize); 8] {
        [
            (cfg.in_channels, cfg.gcn_hidden),
            (cfg.gcn_hidden, cfg.gcn_out),
            (cfg.pooled_dim(), cfg.semantic_dim),
            (1, cfg.semantic_dim),
            (cfg.image_feat_dim, cfg.semantic_dim),
            (1, cfg.semantic_dim),
            (cfg.semantic_dim, 1),
            (1, 1),
        ]
    }

    fn from_tensors(t: [DenseMatrix; 8]) -> Self {
        let [conv1, conv2, text_w, text_b, image_w, image_b, sim_w, sim_b] = t;
        Self {
            conv1,
            conv2,
            text_w,
            text_b,
            image_w,
            image_b,
            sim_w,
            sim_b,
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::from_tensors(Self::shapes(cfg).map(|(r, c)| DenseMatrix::zeros(r, c)))
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(cfg);
        for ((_, decay), t) in PARAM_NAMES.iter().zip(p.tensors_mut()) {
            if !decay {
                continue;
            }
            let limit = libm::sqrt(6.0 / (t.rows() + t.cols()) as f64);
            for v in t.data_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Ok(p)
    }

    /// Rebuilds parameters from tensors in [`PARAM_NAMES`] order, checking
    /// every shape against `cfg`.
    pub fn from_vec(cfg: &ModelConfig, tensors: Vec<DenseMatrix>) -> Result<Self> {
        let shapes = Self::shapes(cfg);
        if tensors.len() != shapes.len() {
            return Err(Error::Validation(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, want), (name, _)) in tensors.iter().zip(shapes).zip(PARAM_NAMES) {
            if t.shape() != want {
                return Err(Error::Validation(format!(
                    "tensor `{name}` is {:?}, config expects {want:?}",
                    t.shape()
                )));
            }
        }
        let arr: [DenseMatrix; 8] = tensors.try_into().expect("length checked");
        Ok(Self::from_tensors(arr))
    }

    pub fn tensors(&self) -> [&DenseMatrix; 8] {
        [
            &self.conv1,
            &self.conv2,
            &self.text_w,
            &self.text_b,
            &self.image_w,
            &self.image_b,
            &self.sim_w,
            &self.sim_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix; 8] {
        [
            &mut self.conv1,
            &mut self.conv2,
            &mut self.text_w,
            &mut self.text_b,
            &mut self.image_w,
            &mut self.image_b,
            &mut self.sim_w,
            &mut self.sim_b,
        ]
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum()
    }
}

struct ParamVars {
    conv1: Var,
    conv2: Var,
    text_w: Var,
    text_b: Var,
    image_w: Var,
    image_b: Var,
    sim_w: Var,
    sim_b: Var,
}

impl ParamVars {
    fn record<'a>(tape: &mut Tape<'a>, p: &'a ModelParams) -> Self {
        Self {
            conv1: tape.param(&p.conv1),
            conv2: tape.param(&p.conv2),
            text_w: tape.param(&p.text_w),
            text_b: tape.param(&p.text_b),
            image_w: tape.param(&p.image_w),
            image_b: tape.param(&p.image_b),
            sim_w: tape.param(&p.sim_w),
            sim_b: tape.param(&p.sim_b),
        }
    }

    fn all(&self) -> [Var; 8] {
        [
            self.conv1,
            self.conv2,
            self.text_w,
            self.text_b,
            self.image_w,
            self.image_b,
            self.sim_w,
            self.sim_b,
        ]
    }
}

fn check_features(cfg: &ModelConfig, prop: &SparseMatrix, x: &DenseMatrix) -> Result<()> {
    if prop.rows() != cfg.n_nodes || prop.cols() != cfg.n_nodes {
        return Err(Error::shape(
            "text_forward",
            format!("propagation {}x{} vs {} nodes", prop.rows(), prop.cols(), cfg.n_nodes),
        ));
    }
    if x.shape() != (cfg.n_nodes, cfg.in_channels) {
        return Err(Error::shape(
            "text_forward",
            format!("features {:?}, expected {}x{}", x.shape(), cfg.n_nodes, cfg.in_channels),
        ));
    }
    Ok(())
}

/// Two graph convolutions and pooling: `1 x pooled_dim`.
fn text_pooled<'a>(
    tape: &mut Tape<'a>,
    vars: &ParamVars,
    cfg: &ModelConfig,
    prop: &'a SparseMatrix,
    x: &'a DenseMatrix,
) -> Result<Var> {
    check_features(cfg, prop, x)?;
    let x = tape.constant(Cow::Borrowed(x));
    let ax = tape.spmm(prop, x)?;
    let h = tape.matmul(ax, vars.conv1)?;
    let h1 = tape.relu(h);
    let ah = tape.spmm(prop, h1)?;
    let h = tape.matmul(ah, vars.conv2)?;
    let h2 = tape.relu(h);
    Ok(match cfg.pool {
        Pool::Mean => tape.mean_rows(h2),
        Pool::Sum => tape.sum_rows(h2),
        Pool::Flatten => tape.flatten(h2),
    })
}

/// Dropout and projection of pooled rows into the semantic space.
fn text_projection<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    vars: &ParamVars,
    cfg: &ModelConfig,
    mut pooled: Var,
    rng: Option<&mut R>,
) -> Result<Var> {
    if let Some(rng) = rng {
        if cfg.dropout_p > 0.0 {
            pooled = tape.dropout(pooled, cfg.dropout_p, rng)?;
        }
    }
    let t = tape.matmul(pooled, vars.text_w)?;
    tape.add_bias(t, vars.text_b)
}

fn image_path<'a, R: Rng + ?Sized>(
    tape: &mut Tape<'a>,
    vars: &ParamVars,
    cfg: &ModelConfig,
    v: &'a DenseMatrix,
    rng: Option<&mut R>,
) -> Result<Var> {
    if v.cols() != cfg.image_feat_dim {
        return Err(Error::shape(
            "image_forward",
            format!("visual features {:?}, expected {} columns", v.shape(), cfg.image_feat_dim),
        ));
    }
    let mut v = tape.constant(Cow::Borrowed(v));
    if let Some(rng) = rng {
        if cfg.dropout_image && cfg.dropout_p > 0.0 {
            v = tape.dropout(v, cfg.dropout_p, rng)?;
        }
    }
    let e = tape.matmul(v, vars.image_w)?;
    tape.add_bias(e, vars.image_b)
}

fn head_logit(tape: &mut Tape<'_>, vars: &ParamVars, t: Var, v: Var) -> Result<Var> {
    let prod = tape.hadamard(t, v)?;
    let z = tape.matmul(prod, vars.sim_w)?;
    tape.add_bias(z, vars.sim_b)
}

fn row(v: &[f64]) -> Result<DenseMatrix> {
    DenseMatrix::row_vector(v.to_vec())
}

/// Eval-mode text embedding (`1 x semantic_dim`).
pub fn text_forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    prop: &SparseMatrix,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params);
    let pooled = text_pooled(&mut tape, &vars, cfg, prop, x)?;
    let out = text_projection::<ChaCha8Rng>(&mut tape, &vars, cfg, pooled, None)?;
    Ok(tape.value(out).clone())
}

/// Eval-mode image embedding (`1 x semantic_dim`).
pub fn image_forward(params: &ModelParams, cfg: &ModelConfig, v: &[f64]) -> Result<DenseMatrix> {
    let v = row(v)?;
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params);
    let out = image_path::<ChaCha8Rng>(&mut tape, &vars, cfg, &v, None)?;
    Ok(tape.value(out).clone())
}

/// Pre-sigmoid similarity `sim_w · (t ⊙ v) + sim_b`.
pub fn similarity_logit(params: &ModelParams, t: &[f64], v: &[f64]) -> Result<f64> {
    let dim = params.sim_w.rows();
    if t.len() != dim || v.len() != dim {
        return Err(Error::shape(
            "similarity",
            format!("embeddings {} and {}, semantic_dim {dim}", t.len(), v.len()),
        ));
    }
    let dot: f64 = t
        .iter()
        .zip(v)
        .zip(params.sim_w.data())
        .map(|((a, b), w)| a * b * w)
        .sum();
    Ok(dot + params.sim_b.data()[0])
}

/// Similarity score in `(0, 1)`.
pub fn similarity(params: &ModelParams, t: &[f64], v: &[f64]) -> Result<f64> {
    similarity_logit(params, t, v).map(sigmoid)
}

/// Loss of one scored pair. BCE is evaluated from the score directly, so a
/// saturated score yields an infinite loss; training uses the logit form.
pub fn pair_loss(score: f64, label: f64, kind: LossKind, margin: f64) -> f64 {
    match kind {
        LossKind::Bce => -(label * libm::log(score) + (1.0 - label) * libm::log(1.0 - score)),
        LossKind::Contrastive => contrastive(score, label, margin),
    }
}

/// Derivative of [`pair_loss`] with respect to the score.
pub fn pair_loss_grad(score: f64, label: f64, kind: LossKind, margin: f64) -> f64 {
    match kind {
        LossKind::Bce => -label / score + (1.0 - label) / (1.0 - score),
        LossKind::Contrastive => contrastive_grad(score, label, margin),
    }
}

/// Result of a forward/backward pass over one pair.
pub struct PairPass {
    pub loss: f64,
    pub score: f64,
    pub grads: ModelParams,
}

/// Forward and backward through the whole network for one `(text, image)`
/// pair. `rng = Some(..)` runs in training mode (dropout active).
pub fn pair_forward_backward<R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &ModelConfig,
    prop: &SparseMatrix,
    x: &DenseMatrix,
    v: &[f64],
    label: f64,
    rng: Option<&mut R>,
) -> Result<PairPass> {
    let pass = batch_forward_backward(params, cfg, prop, &[PairInput { x, v, label }], rng)?;
    Ok(PairPass {
        loss: pass.loss,
        score: pass.scores[0],
        grads: pass.grads,
    })
}

/// One labelled pair of a batch.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'x> {
    pub x: &'x DenseMatrix,
    pub v: &'x [f64],
    pub label: f64,
}

/// Mean loss over a batch, per-pair scores, and the gradient of the mean.
pub struct BatchPass {
    pub loss: f64,
    pub scores: Vec<f64>,
    pub grads: ModelParams,
}

/// Forward and backward over a batch of pairs on one tape.
///
/// Text graphs are convolved one at a time, then the pooled rows are stacked
/// so both projections and the head run as single matrix products. Dropout
/// masks are drawn for all text rows first, then all image rows.
pub fn batch_forward_backward<R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &ModelConfig,
    prop: &SparseMatrix,
    batch: &[PairInput<'_>],
    mut rng: Option<&mut R>,
) -> Result<BatchPass> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut image_rows = Vec::with_capacity(batch.len() * cfg.image_feat_dim);
    for p in batch {
        if p.v.len() != cfg.image_feat_dim {
            return Err(Error::shape(
                "image_forward",
                format!("visual feature of length {}, expected {}", p.v.len(), cfg.image_feat_dim),
            ));
        }
        image_rows.extend_from_slice(p.v);
    }
    let images = DenseMatrix::from_vec(batch.len(), cfg.image_feat_dim, image_rows)?;

    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params);
    let pooled = batch
        .iter()
        .map(|p| text_pooled(&mut tape, &vars, cfg, prop, p.x))
        .collect::<Result<Vec<_>>>()?;
    let stacked = match pooled.as_slice() {
        [one] => *one,
        many => tape.stack_rows(many)?,
    };
    let t = text_projection(&mut tape, &vars, cfg, stacked, rng.as_deref_mut())?;
    let e = image_path(&mut tape, &vars, cfg, &images, rng)?;
    let z = head_logit(&mut tape, &vars, t, e)?;
    let score = tape.sigmoid(z);
    let labels: Vec<f64> = batch.iter().map(|p| p.label).collect();
    let loss = match cfg.loss {
        LossKind::Bce => tape.bce_with_logits_mean(z, labels)?,
        LossKind::Contrastive => tape.contrastive_mean(score, labels, cfg.margin)?,
    };
    let mut grads = tape.backward(loss)?;
    let tensors: Vec<DenseMatrix> = vars
        .all()
        .iter()
        .zip(params.tensors())
        .map(|(&var, p)| grads.take(var).unwrap_or_else(|| DenseMatrix::zeros(p.rows(), p.cols())))
        .collect();
    Ok(BatchPass {
        loss: tape.value(loss).data()[0],
        scores: tape.value(score).data().to_vec(),
        grads: ModelParams::from_vec(cfg, tensors)?,
    })
}

/// Eval-mode loss of one pair.
pub fn pair_eval_loss(
    params: &ModelParams,
    cfg: &ModelConfig,
    prop: &SparseMatrix,
    x: &DenseMatrix,
    v: &[f64],
    label: f64,
) -> Result<f64> {
    let t = text_forward(params, cfg, prop, x)?;
    let e = image_forward(params, cfg, v)?;
    let z = similarity_logit(params, t.data(), e.data())?;
    Ok(match cfg.loss {
        LossKind::Bce => bce_with_logits(z, label),
        LossKind::Contrastive => contrastive(sigmoid(z), label, cfg.margin),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_cfg(pool: Pool) -> ModelConfig {
        ModelConfig {
            gcn_hidden: 1,
            gcn_out: 1,
            semantic_dim: 1,
            pool,
            ..ModelConfig::new(1, 1, 1)
        }
    }

    fn one(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn defaults() {
        let c = ModelConfig::new(10, 1, 4);
        assert_eq!(c.semantic_dim, 1024);
        assert_eq!(c.dropout_p, 0.2);
        assert_eq!((c.gcn_hidden, c.gcn_out), (32, 16));
        assert_eq!(c.loss, LossKind::Bce);
        assert_eq!(c.margin, 0.5);
    }

    #[test]
    fn hand_computed_relu_chain() {
        let cfg = scalar_cfg(Pool::Mean);
        let mut p = ModelParams::zeros(&cfg);
        p.conv1 = one(1.0);
        p.conv2 = one(1.0);
        p.text_w = one(1.0);
        let prop = SparseMatrix::identity(1);
        let out = text_forward(&p, &cfg, &prop, &one(2.0)).unwrap();
        assert_eq!(out.data(), &[2.0]);
    }

    #[test]
    fn zero_features_give_text_bias() {
        for pool in [Pool::Mean, Pool::Sum, Pool::Flatten] {
            let cfg = ModelConfig {
                semantic_dim: 6,
                pool,
                ..ModelConfig::new(4, 2, 3)
            };
            let mut p = ModelParams::init(&cfg, 1).unwrap();
            for (i, b) in p.text_b.data_mut().iter_mut().enumerate() {
                *b = i as f64 * 0.1;
            }
            let prop = SparseMatrix::identity(4);
            let out = text_forward(&p, &cfg, &prop, &DenseMatrix::zeros(4, 2)).unwrap();
            assert_eq!(out, p.text_b);
        }
    }

    #[test]
    fn image_projection() {
        let cfg = ModelConfig {
            semantic_dim: 3,
            ..ModelConfig::new(2, 1, 3)
        };
        let mut p = ModelParams::init(&cfg, 0).unwrap();
        p.image_b = DenseMatrix::row_vector(vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(image_forward(&p, &cfg, &[0.0; 3]).unwrap(), p.image_b);
        p.image_w = DenseMatrix::identity(3);
        p.image_b = DenseMatrix::zeros(1, 3);
        let v = [1.5, -2.0, 0.25];
        assert_eq!(image_forward(&p, &cfg, &v).unwrap().data(), &v);
        assert!(image_forward(&p, &cfg, &[1.0]).is_err());
    }

    #[test]
    fn similarity_values() {
        let cfg = scalar_cfg(Pool::Mean);
        let mut p = ModelParams::zeros(&cfg);
        p.sim_w = one(1.0);
        let s = similarity(&p, &[2.0], &[3.0]).unwrap();
        assert!((s - 0.997_527_376_843_365_7).abs() < 1e-12);
        p.sim_b = one(-0.7);
        assert_eq!(similarity(&p, &[0.0], &[3.0]).unwrap(), sigmoid(-0.7));
        assert!(similarity(&p, &[1.0, 2.0], &[3.0]).is_err());
    }

    #[test]
    fn loss_values() {
        assert!((pair_loss(0.5, 1.0, LossKind::Bce, 0.5) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(pair_loss(0.4, 0.0, LossKind::Contrastive, 0.5), 0.0);
        assert!((pair_loss(0.9, 1.0, LossKind::Contrastive, 0.5) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let cfg = ModelConfig::new(3, 1, 2);
        let p = ModelParams::init(&cfg, 0).unwrap();
        let prop = SparseMatrix::identity(3);
        assert!(text_forward(&p, &cfg, &prop, &DenseMatrix::zeros(2, 1)).is_err());
        assert!(text_forward(&p, &cfg, &SparseMatrix::identity(2), &DenseMatrix::zeros(3, 1)).is_err());
        let bad = ModelConfig {
            dropout_p: 1.0,
            ..cfg.clone()
        };
        assert!(ModelParams::init(&bad, 0).is_err());
        let mut tensors: Vec<DenseMatrix> = p.tensors().iter().map(|t| (*t).clone()).collect();
        tensors[0] = DenseMatrix::zeros(2, 2);
        assert!(ModelParams::from_vec(&cfg, tensors).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig {
            semantic_dim: 8,
            ..ModelConfig::new(5, 1, 4)
        };
        let a = ModelParams::init(&cfg, 42).unwrap();
        assert_eq!(a, ModelParams::init(&cfg, 42).unwrap());
        assert_ne!(a, ModelParams::init(&cfg, 43).unwrap());
        let limit = libm::sqrt(6.0 / (80.0 + 8.0));
        assert!(a.text_w.data().iter().all(|v| v.abs() <= limit));
        assert!(a.text_b.data().iter().all(|&v| v == 0.0));
    }
}
