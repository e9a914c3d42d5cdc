//! Project configuration: one TOML file, every key optional, command-line
//! flags applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xmr_core::corpus::Alignment;
use xmr_core::evalkit::{RelevanceRule, DEFAULT_MAP_K};
use xmr_core::model::{LossKind, ModelConfig, Pool, DEFAULT_DROPOUT, DEFAULT_MARGIN, DEFAULT_SEMANTIC_DIM};
use xmr_core::relgraph::{RelationMix, DEFAULT_EPSILON, DEFAULT_K};
use xmr_core::trainer::TrainConfig;

use crate::error::{Error, Result};
use crate::formats::{self, CorpusFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    pub workdir: PathBuf,
    pub paths: Paths,
    pub vocab: VocabSection,
    pub graph: GraphSection,
    pub split: SplitSection,
    pub pairs: PairsSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// Input files. Relative paths are resolved against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    /// `jsonl` or `tsv`; inferred from the extension when absent.
    pub corpus_format: Option<String>,
    pub embeddings: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub visual_features: Option<PathBuf>,
    pub node_features: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub noun_lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub min_df: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// Neighbours per word for semantic edges.
    pub k: usize,
    /// Minimum sentence co-occurrences for a co-occurrence edge.
    pub epsilon: u32,
    /// Sources built by `build-graph`.
    pub sources: Vec<String>,
    /// Sub-graph used by `train`: sr, scr, skr or sckr.
    pub relations: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub val_fraction: f64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    pub positives: usize,
    pub negatives: usize,
    /// `exact_pair` or `same_category`.
    pub alignment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    /// `flatten`, `mean` or `sum`.
    pub pool: String,
    pub semantic_dim: usize,
    pub dropout_image: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// `bce` or `contrastive`.
    pub loss: String,
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    /// `same_category` or `exact_pair`.
    pub relevance: String,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workdir: PathBuf::from("work"),
            paths: Paths::default(),
            vocab: VocabSection::default(),
            graph: GraphSection::default(),
            split: SplitSection::default(),
            pairs: PairsSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for VocabSection {
    fn default() -> Self {
        Self { min_df: 2 }
    }
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            epsilon: DEFAULT_EPSILON,
            sources: vec!["sr".into(), "cr".into(), "kr".into()],
            relations: "sckr".into(),
        }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { val_fraction: 0.1, test_fraction: 0.2 }
    }
}

impl Default for PairsSection {
    fn default() -> Self {
        Self { positives: 40_000, negatives: 40_000, alignment: "exact_pair".into() }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            gcn_hidden: 32,
            gcn_out: 16,
            pool: Pool::Flatten.name().into(),
            semantic_dim: DEFAULT_SEMANTIC_DIM,
            dropout_image: true,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            dropout: DEFAULT_DROPOUT,
            loss: LossKind::Bce.name().into(),
            eval_every: t.eval_every,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: DEFAULT_MAP_K, relevance: "same_category".into() }
    }
}

/// Graph sources that `build-graph` knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Sr,
    Cr,
    Kr,
}

impl std::str::FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sr" => Ok(Self::Sr),
            "cr" => Ok(Self::Cr),
            "kr" => Ok(Self::Kr),
            other => Err(Error::Config(format!("unknown graph source `{other}` (expected sr, cr or kr)"))),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ProjectConfig {
    /// Reads `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput { what: "config file", path: path.to_path_buf() },
            _ => Error::io(path, e),
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for f in [
            &mut p.corpus,
            &mut p.embeddings,
            &mut p.triples,
            &mut p.visual_features,
            &mut p.node_features,
            &mut p.stopwords,
            &mut p.noun_lexicon,
        ] {
            resolve(base, f);
        }
        if cfg.workdir.is_relative() {
            cfg.workdir = base.join(&cfg.workdir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks ranges and spellings without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.sources()?;
        self.relations()?;
        self.alignment()?;
        self.relevance()?;
        self.train_config()?.validate()?;
        if self.graph.k == 0 || self.graph.epsilon == 0 {
            return Err(Error::Config("graph.k and graph.epsilon must be positive".into()));
        }
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be positive".into()));
        }
        let m = &self.model;
        if m.gcn_hidden == 0 || m.gcn_out == 0 || m.semantic_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn sources(&self) -> Result<Vec<Source>> {
        let mut s = self.graph.sources.iter().map(|s| s.parse()).collect::<Result<Vec<Source>>>()?;
        s.sort();
        s.dedup();
        if s.is_empty() {
            return Err(Error::Config("graph.sources is empty".into()));
        }
        Ok(s)
    }

    pub fn relations(&self) -> Result<RelationMix> {
        Ok(self.graph.relations.parse()?)
    }

    pub fn alignment(&self) -> Result<Alignment> {
        match self.pairs.alignment.as_str() {
            "exact_pair" => Ok(Alignment::ExactPair),
            "same_category" => Ok(Alignment::SameCategory),
            other => Err(Error::Config(format!("unknown alignment `{other}` (expected exact_pair or same_category)"))),
        }
    }

    pub fn relevance(&self) -> Result<RelevanceRule> {
        Ok(self.eval.relevance.parse()?)
    }

    pub fn corpus_format(&self, path: &Path) -> Result<CorpusFormat> {
        match self.paths.corpus_format.as_deref() {
            None => Ok(CorpusFormat::from_path(path)),
            Some("jsonl") => Ok(CorpusFormat::Jsonl),
            Some("tsv") => Ok(CorpusFormat::Tsv),
            Some(other) => Err(Error::Config(format!("unknown corpus format `{other}` (expected jsonl or tsv)"))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            dropout_p: t.dropout,
            seed: self.seed,
            loss_kind: t.loss.parse()?,
            eval_every: t.eval_every,
            ..TrainConfig::default()
        })
    }

    pub fn model_config(&self, n_nodes: usize, in_channels: usize, image_dim: usize) -> Result<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            gcn_hidden: m.gcn_hidden,
            gcn_out: m.gcn_out,
            pool: m.pool.parse()?,
            semantic_dim: m.semantic_dim,
            dropout_p: self.train.dropout,
            dropout_image: m.dropout_image,
            loss: self.train.loss.parse()?,
            margin: m.margin,
            ..ModelConfig::new(n_nodes, in_channels, image_dim)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A configured input path, or an error naming the missing key.
    pub fn input(&self, key: &'static str) -> Result<&Path> {
        let p = &self.paths;
        let value = match key {
            "corpus" => &p.corpus,
            "embeddings" => &p.embeddings,
            "triples" => &p.triples,
            "visual_features" => &p.visual_features,
            _ => unreachable!("unknown input key {key}"),
        };
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("paths.{key} is not set in the configuration")))
    }

    pub fn stopwords(&self) -> Result<std::collections::BTreeSet<String>> {
        match &self.paths.stopwords {
            Some(p) => formats::load_word_set(p, "stopword list"),
            None => Ok(DEFAULT_STOPWORDS.iter().map(|w| w.to_string()).collect()),
        }
    }
}

/// Used when no stopword file is configured.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "being", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "during", "each", "for", "from", "had", "has", "have", "he", "her", "here", "his", "how",
    "i", "if", "in", "into", "is", "it", "its", "many", "more", "most", "much", "my", "no",
    "not", "of", "on", "one", "only", "or", "other", "our", "out", "over", "she", "so", "some",
    "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "through", "to", "under", "up", "very", "was", "we", "were", "what", "when",
    "where", "which", "while", "who", "will", "with", "would", "you", "your",
];
