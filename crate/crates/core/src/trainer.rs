//! Mini-batch training of the dual-path model over labelled pairs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::PairSample;
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalSet, MapReport, RelevanceRule};
use crate::model::{
    batch_forward_backward, LossKind, ModelConfig, ModelParams, PairInput, DEFAULT_DROPOUT,
    PARAM_NAMES,
};
use crate::numerics::{adam_step, AdamConfig, AdamState, DenseMatrix, SparseMatrix};

/// Offsets added to the run seed for each randomness consumer.
pub mod seed_stream {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const PAIRS: u64 = 3;
    pub const SPLIT: u64 = 4;
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout_p: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Validate every this many epochs (when a validation set is given).
    pub eval_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 20,
            batch_size: 64,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            dropout_p: DEFAULT_DROPOUT,
            seed: 0,
            loss_kind: LossKind::Bce,
            eval_every: 1,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("lr must be positive and weight_decay nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

/// Per-text node features, per-image visual features, and the pairs.
pub struct TrainData<'a> {
    pub text_features: &'a BTreeMap<String, DenseMatrix>,
    pub image_features: &'a BTreeMap<String, Vec<f64>>,
    pub pairs: &'a [PairSample],
}

impl TrainData<'_> {
    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Validation("no training pairs".into()));
        }
        for p in self.pairs {
            let x = self.text_features.get(&p.text_id).ok_or_else(|| {
                Error::Validation(format!("pair references unknown text `{}`", p.text_id))
            })?;
            let v = self.image_features.get(&p.image_id).ok_or_else(|| {
                Error::Validation(format!("pair references unknown image `{}`", p.image_id))
            })?;
            if !x.is_finite() {
                return Err(Error::Validation(format!("text `{}` has non-finite features", p.text_id)));
            }
            if !v.iter().all(|a| a.is_finite()) {
                return Err(Error::Validation(format!("image `{}` has non-finite features", p.image_id)));
            }
        }
        Ok(())
    }
}

/// Held-out set scored during training to pick the best parameters.
pub struct Validation<'a> {
    pub set: &'a EvalSet,
    pub k: usize,
    pub rule: RelevanceRule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub val: Option<MapReport>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub final_params: ModelParams,
    pub best_params: ModelParams,
}

/// Trains from a fresh seeded initialisation.
pub fn train(
    model_cfg: &ModelConfig,
    prop: &SparseMatrix,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    validation: Option<&Validation<'_>>,
) -> Result<TrainOutcome> {
    let params = ModelParams::init(model_cfg, derive_seed(cfg.seed, seed_stream::INIT))?;
    train_from(model_cfg, params, prop, data, cfg, validation)
}

/// Trains starting from `params`.
///
/// Each epoch reshuffles the pairs and runs mini-batches; the gradient of
/// each batch's mean loss is computed on one tape (a fixed reduction order)
/// and applied with one Adam step per tensor. The best validation average (or the last epoch without
/// validation) is kept as `best_params`.
pub fn train_from(
    model_cfg: &ModelConfig,
    mut params: ModelParams,
    prop: &SparseMatrix,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    validation: Option<&Validation<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.check()?;
    let model_cfg = ModelConfig {
        dropout_p: cfg.dropout_p,
        loss: cfg.loss_kind,
        ..model_cfg.clone()
    };
    model_cfg.validate()?;

    let adam = cfg.adam();
    let mut states: Vec<AdamState> = params
        .tensors()
        .iter()
        .map(|t| AdamState::new(t.data().len()))
        .collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, seed_stream::SHUFFLE));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, seed_stream::DROPOUT));
    let mut order: Vec<usize> = (0..data.pairs.len()).collect();

    let mut report = TrainReport::default();
    let mut best_params = params.clone();
    let mut best_score = f64::NEG_INFINITY;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<PairInput<'_>> = batch
                .iter()
                .map(|&i| {
                    let pair = &data.pairs[i];
                    PairInput {
                        x: &data.text_features[&pair.text_id],
                        v: &data.image_features[&pair.image_id],
                        label: pair.label(),
                    }
                })
                .collect();
            let context = |message: String| Error::Training {
                epoch,
                batch: batch_idx,
                message,
            };
            let pass = batch_forward_backward(&params, &model_cfg, prop, &inputs, Some(&mut dropout_rng))
                .map_err(|e| context(format!("{e}")))?;
            if !pass.loss.is_finite() {
                let first = &data.pairs[batch[0]];
                return Err(context(format!(
                    "batch loss {} (first pair {}, {})",
                    pass.loss, first.text_id, first.image_id
                )));
            }
            loss_sum += pass.loss * batch.len() as f64;
            for (((name, decay), (p, g)), state) in PARAM_NAMES
                .iter()
                .zip(params.tensors_mut().into_iter().zip(pass.grads.tensors()))
                .zip(states.iter_mut())
            {
                adam_step(name, p.data_mut(), g.data(), state, &adam, *decay)
                    .map_err(|e| context(format!("{e}")))?;
            }
        }
        let mean_loss = loss_sum / data.pairs.len() as f64;

        let val = match validation {
            Some(v) if epoch % cfg.eval_every == 0 || epoch == cfg.epochs => {
                Some(evaluate(&params, &model_cfg, prop, v.set, v.k, v.rule)?)
            }
            _ => None,
        };
        let score = match (validation, val) {
            (Some(_), Some(r)) => Some(r.avg),
            (Some(_), None) => None,
            (None, _) => Some(epoch as f64),
        };
        if let Some(s) = score {
            if s > best_score {
                best_score = s;
                best_params = params.clone();
                report.best_epoch = Some(epoch);
            }
        }
        report.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            val,
        });
    }

    Ok(TrainOutcome {
        report,
        final_params: params,
        best_params,
    })
}
