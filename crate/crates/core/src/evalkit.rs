//! Ranking evaluation: AP@k, MAP@k in both retrieval directions, and the
//! four-way relation ablation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::corpus::TextSample;
use crate::error::{Error, Result};
use crate::model::{image_forward, similarity_logit, text_forward, ModelConfig, ModelParams};
use crate::numerics::{sigmoid, DenseMatrix, SparseMatrix};
use crate::relgraph::{
    filter_by_provenance, propagation_matrix, stats, GraphStats, PropagationScheme,
    RelationGraph, RelationMix,
};
use crate::trainer::{train, TrainConfig, TrainData, TrainReport};

pub const DEFAULT_MAP_K: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Text queries ranking images.
    TextQuery,
    /// Image queries ranking texts.
    ImageQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelevanceRule {
    #[default]
    SameCategory,
    ExactPair,
}

impl FromStr for RelevanceRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same_category" => Ok(Self::SameCategory),
            "exact_pair" => Ok(Self::ExactPair),
            other => Err(Error::Config(format!("unknown relevance rule `{other}`"))),
        }
    }
}

/// One query's ranked candidates (indices into the candidate pool).
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub query: usize,
    pub candidates: Vec<(usize, f64)>,
    pub relevant: Vec<bool>,
}

/// Candidate order by descending score, ascending index on ties.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// AP@k over a full ranking: the sum of precision@r at every relevant rank
/// `r <= k`, divided by `min(R, k)` where `R` counts all relevant entries in
/// `relevance`. Zero when nothing is relevant.
pub fn average_precision_at_k(relevance: &[bool], k: usize) -> f64 {
    let total = relevance.iter().filter(|&&r| r).count();
    if total == 0 || k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, _) in relevance.iter().take(k).enumerate().filter(|(_, &rel)| rel) {
        hits += 1;
        sum += hits as f64 / (r + 1) as f64;
    }
    sum / total.min(k) as f64
}

/// Mean AP@k over queries, each ranking the whole candidate pool.
/// Returns the mean and the per-query values.
pub fn map_with_scorer(
    n_queries: usize,
    n_candidates: usize,
    k: usize,
    mut score: impl FnMut(usize, usize) -> f64,
    relevant: impl Fn(usize, usize) -> bool,
) -> Result<(f64, Vec<f64>)> {
    if n_queries == 0 {
        return Err(Error::Validation("no queries to evaluate".into()));
    }
    if n_candidates == 0 {
        return Err(Error::Validation("empty candidate pool".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut per_query = Vec::with_capacity(n_queries);
    let mut scores = Vec::with_capacity(n_candidates);
    for q in 0..n_queries {
        scores.clear();
        scores.extend((0..n_candidates).map(|c| score(q, c)));
        let relevance: Vec<bool> = rank(&scores).into_iter().map(|c| relevant(q, c)).collect();
        per_query.push(average_precision_at_k(&relevance, k));
    }
    let mean = per_query.iter().sum::<f64>() / n_queries as f64;
    Ok((mean, per_query))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalText {
    pub id: String,
    pub category: u32,
    pub image_id: String,
    pub features: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage {
    pub id: String,
    pub category: u32,
    pub features: Vec<f64>,
}

/// Texts and images of one split, each sorted by id so that candidate index
/// order is id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub texts: Vec<EvalText>,
    pub images: Vec<EvalImage>,
}

impl EvalSet {
    /// Builds from split samples. Each distinct image takes the category of
    /// the first text that references it.
    pub fn new(
        samples: &[&TextSample],
        mut features: impl FnMut(&TextSample) -> DenseMatrix,
        images: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let mut texts = Vec::with_capacity(samples.len());
        let mut seen: BTreeMap<&str, EvalImage> = BTreeMap::new();
        for s in samples {
            let v = images.get(&s.image_id).ok_or_else(|| {
                Error::Validation(format!("text `{}` references unknown image `{}`", s.id, s.image_id))
            })?;
            seen.entry(&s.image_id).or_insert_with(|| EvalImage {
                id: s.image_id.clone(),
                category: s.category,
                features: v.clone(),
            });
            texts.push(EvalText {
                id: s.id.clone(),
                category: s.category,
                image_id: s.image_id.clone(),
                features: features(s),
            });
        }
        texts.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            texts,
            images: seen.into_values().collect(),
        })
    }

    fn relevant(&self, text: usize, image: usize, rule: RelevanceRule) -> bool {
        let (t, i) = (&self.texts[text], &self.images[image]);
        match rule {
            RelevanceRule::SameCategory => t.category == i.category,
            RelevanceRule::ExactPair => t.image_id == i.id,
        }
    }
}

/// MAP@k of each direction and their mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapReport {
    pub q_t: f64,
    pub q_i: f64,
    pub avg: f64,
    pub k: usize,
}

impl MapReport {
    pub fn new(q_t: f64, q_i: f64, k: usize) -> Self {
        Self {
            q_t,
            q_i,
            avg: (q_t + q_i) / 2.0,
            k,
        }
    }
}

/// Embeddings of every text and image in `set` under eval mode.
pub struct Embedded {
    pub texts: Vec<Vec<f64>>,
    pub images: Vec<Vec<f64>>,
}

pub fn embed(
    params: &ModelParams,
    cfg: &ModelConfig,
    prop: &SparseMatrix,
    set: &EvalSet,
) -> Result<Embedded> {
    let texts = set
        .texts
        .iter()
        .map(|t| text_forward(params, cfg, prop, &t.features).map(DenseMatrix::into_vec))
        .collect::<Result<_>>()?;
    let images = set
        .images
        .iter()
        .map(|i| image_forward(params, cfg, &i.features).map(DenseMatrix::into_vec))
        .collect::<Result<_>>()?;
    Ok(Embedded { texts, images })
}

/// MAP@k of one direction; returns the mean and per-query AP values.
pub fn map_at_k(
    params: &ModelParams,
    embedded: &Embedded,
    set: &EvalSet,
    direction: Direction,
    k: usize,
    rule: RelevanceRule,
) -> Result<(f64, Vec<f64>)> {
    let score = |t: usize, i: usize| {
        similarity_logit(params, &embedded.texts[t], &embedded.images[i])
            .map(sigmoid)
            .unwrap_or(f64::NAN)
    };
    let (nt, ni) = (set.texts.len(), set.images.len());
    match direction {
        Direction::TextQuery => map_with_scorer(nt, ni, k, score, |q, c| set.relevant(q, c, rule)),
        Direction::ImageQuery => {
            map_with_scorer(ni, nt, k, |q, c| score(c, q), |q, c| set.relevant(c, q, rule))
        }
    }
}

/// Both directions at once.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    prop: &SparseMatrix,
    set: &EvalSet,
    k: usize,
    rule: RelevanceRule,
) -> Result<MapReport> {
    let embedded = embed(params, cfg, prop, set)?;
    let (q_t, _) = map_at_k(params, &embedded, set, Direction::TextQuery, k, rule)?;
    let (q_i, _) = map_at_k(params, &embedded, set, Direction::ImageQuery, k, rule)?;
    Ok(MapReport::new(q_t, q_i, k))
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub mix: RelationMix,
    pub graph: GraphStats,
    pub report: MapReport,
    pub train: TrainReport,
}

/// Trains and evaluates one model per relation mix (SR, SCR, SKR, SCKR) on
/// the corresponding sub-graph of `fused`, with identical seeds and data.
pub fn ablation_sweep(
    fused: &RelationGraph,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &TrainData<'_>,
    eval_set: &EvalSet,
    k: usize,
    rule: RelevanceRule,
) -> Result<Vec<AblationRow>> {
    RelationMix::ALL
        .iter()
        .map(|&mix| {
            let graph = filter_by_provenance(fused, mix.mask())?;
            let prop = propagation_matrix(&graph, PropagationScheme::SymRenorm);
            let outcome = train(model_cfg, &prop, data, train_cfg, None)?;
            let report = evaluate(&outcome.best_params, model_cfg, &prop, eval_set, k, rule)?;
            Ok(AblationRow {
                mix,
                graph: stats(&graph),
                report,
                train: outcome.report,
            })
        })
        .collect()
}
