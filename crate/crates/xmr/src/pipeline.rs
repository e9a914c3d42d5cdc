//! The pipeline stages behind each command. Artifacts live in the work
//! directory; every stage checks its prerequisites and names the command
//! that produces a missing one.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use xmr_core::corpus::{
    node_feature_matrix, sample_pairs, ExternalNodeFeatures, SplitSpec, TextSample, Vocabulary,
};
use xmr_core::evalkit::{
    ablation_sweep, embed, evaluate, rank, AblationRow, EvalSet, MapReport,
};
use xmr_core::model::similarity;
use xmr_core::numerics::{DenseMatrix, SparseMatrix};
use xmr_core::relgraph::{
    build_cr, build_kr, build_sr, filter_by_provenance, integrate, propagation_matrix, stats,
    GraphStats, PropagationScheme, RelationGraph, RelationMix,
};
use xmr_core::trainer::{derive_seed, seed_stream, train, TrainData, TrainReport, Validation};

use crate::checkpoint::Checkpoint;
use crate::config::{ProjectConfig, Source};
use crate::error::{Error, Result};
use crate::formats;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const GRAPH_FILE: &str = "graph.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const ABLATION_FILE: &str = "ablation.tsv";

/// Which part of the split a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train, val or test)"))),
        }
    }
}

pub struct Project {
    pub cfg: ProjectConfig,
}

/// Corpus with its seeded split.
pub struct Corpus {
    pub samples: Vec<TextSample>,
    pub split: SplitSpec,
}

impl Corpus {
    pub fn part(&self, part: SplitPart) -> Vec<&TextSample> {
        let ids = match part {
            SplitPart::Train => &self.split.train,
            SplitPart::Val => &self.split.val,
            SplitPart::Test => &self.split.test,
        };
        SplitSpec::select(&self.samples, ids)
    }

    pub fn train_owned(&self) -> Vec<TextSample> {
        self.part(SplitPart::Train).into_iter().cloned().collect()
    }
}

/// Everything needed to run the model over a corpus.
pub struct Prepared {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub external: Option<ExternalNodeFeatures>,
    pub images: BTreeMap<String, Vec<f64>>,
}

impl Prepared {
    pub fn in_channels(&self) -> usize {
        self.external.as_ref().map_or(1, |e| e.channels)
    }

    pub fn image_dim(&self) -> Result<usize> {
        self.images
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Config("visual feature file lists no images".into()))
    }

    pub fn features(&self, sample: &TextSample) -> DenseMatrix {
        node_feature_matrix(sample, &self.vocab, self.external.as_ref())
    }

    pub fn eval_set(&self, part: SplitPart) -> Result<EvalSet> {
        let samples = self.corpus.part(part);
        if samples.is_empty() {
            return Err(Error::Config(format!("the {part:?} split is empty").to_lowercase()));
        }
        Ok(EvalSet::new(&samples, |s| self.features(s), &self.images)?)
    }
}

impl Project {
    pub fn new(cfg: ProjectConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.cfg.workdir.join(name)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let path = self.cfg.input("corpus")?;
        let samples = formats::load_corpus(path, self.cfg.corpus_format(path)?)?;
        if samples.is_empty() {
            return Err(Error::Config(format!("corpus {} has no records", path.display())));
        }
        let s = &self.cfg.split;
        let seed = derive_seed(self.cfg.seed, seed_stream::SPLIT);
        let split = SplitSpec::stratified(&samples, s.val_fraction, s.test_fraction, seed)?;
        Ok(Corpus { samples, split })
    }

    /// Vocabulary over the training texts.
    pub fn build_vocabulary(&self, corpus: &Corpus) -> Result<Vocabulary> {
        let lexicon = match &self.cfg.paths.noun_lexicon {
            Some(p) => Some(formats::load_word_set(p, "noun lexicon")?),
            None => None,
        };
        let stop = self.cfg.stopwords()?;
        Ok(Vocabulary::build(&corpus.train_owned(), lexicon.as_ref(), &stop, self.cfg.vocab.min_df)?)
    }

    pub fn load_vocabulary(&self, corpus: &Corpus) -> Result<Vocabulary> {
        let path = self.artifact(VOCAB_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "vocabulary", path, producer: "build-vocab" });
        }
        let words = formats::load_vocabulary_words(&path)?;
        Ok(Vocabulary::from_words(words, &corpus.train_owned())?)
    }

    pub fn load_graph(&self, vocab: &Vocabulary) -> Result<RelationGraph> {
        let path = self.artifact(GRAPH_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "relation graph", path, producer: "build-graph" });
        }
        let graph = formats::load_graph(&path)?;
        if graph.n_nodes() != vocab.len() {
            return Err(Error::Config(format!(
                "graph has {} nodes but the vocabulary has {} words; rerun `xmr build-graph`",
                graph.n_nodes(),
                vocab.len()
            )));
        }
        Ok(graph)
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let corpus = self.load_corpus()?;
        let vocab = self.load_vocabulary(&corpus)?;
        let external = match &self.cfg.paths.node_features {
            Some(p) => Some(formats::load_node_features(p, vocab.len())?),
            None => None,
        };
        let images = formats::load_visual_features(self.cfg.input("visual_features")?)?;
        Ok(Prepared { corpus, vocab, external, images })
    }

    // ---- commands ---------------------------------------------------------

    /// Writes the vocabulary file and returns the vocabulary.
    pub fn build_vocab(&self, diag: &mut dyn Write) -> Result<Vocabulary> {
        let corpus = self.load_corpus()?;
        let vocab = self.build_vocabulary(&corpus)?;
        let path = self.artifact(VOCAB_FILE);
        formats::write_file(&path, formats::render_vocabulary(&vocab))?;
        let _ = writeln!(
            diag,
            "{} words from {} training texts -> {}",
            vocab.len(),
            corpus.split.train.len(),
            path.display()
        );
        Ok(vocab)
    }

    /// Builds the requested relation sources, fuses them and writes the graph.
    pub fn build_graph(&self, sources: &[Source], diag: &mut dyn Write) -> Result<RelationGraph> {
        let corpus = self.load_corpus()?;
        let vocab = self.load_vocabulary(&corpus)?;
        let mut parts = Vec::new();
        for &source in sources {
            let g = match source {
                Source::Sr => {
                    let table = formats::load_embeddings(self.cfg.input("embeddings")?, &vocab)?;
                    let _ = writeln!(
                        diag,
                        "embeddings cover {}/{} words",
                        table.present_count(),
                        vocab.len()
                    );
                    build_sr(&table, self.cfg.graph.k)?
                }
                Source::Cr => build_cr(&corpus.train_owned(), &vocab, self.cfg.graph.epsilon)?,
                Source::Kr => build_kr(&formats::load_triples(self.cfg.input("triples")?)?, &vocab)?,
            };
            let _ = writeln!(diag, "{source:?}: {}", stats(&g));
            parts.push(g);
        }
        let fused = integrate(&parts)?;
        let path = self.artifact(GRAPH_FILE);
        formats::write_file(&path, formats::render_graph(&fused))?;
        let _ = writeln!(diag, "fused: {} -> {}", stats(&fused), path.display());
        Ok(fused)
    }

    /// Trains on the configured relation mix and writes the checkpoint and
    /// the training log. Returns the log text.
    pub fn train(&self, diag: &mut dyn Write) -> Result<(TrainReport, String)> {
        let prep = self.prepare()?;
        let graph = self.load_graph(&prep.vocab)?;
        let mix = self.cfg.relations()?;
        let sub = filter_by_provenance(&graph, mix.mask())?;
        let prop = propagation_matrix(&sub, PropagationScheme::SymRenorm);
        let model_cfg = self.cfg.model_config(prep.vocab.len(), prep.in_channels(), prep.image_dim()?)?;
        let train_cfg = self.cfg.train_config()?;

        let train_texts = prep.corpus.train_owned();
        let pairs = sample_pairs(
            &train_texts,
            self.cfg.pairs.positives,
            self.cfg.pairs.negatives,
            self.cfg.alignment()?,
            derive_seed(self.cfg.seed, seed_stream::PAIRS),
        )?;
        let text_features: BTreeMap<String, DenseMatrix> =
            train_texts.iter().map(|s| (s.id.clone(), prep.features(s))).collect();
        let data = TrainData { text_features: &text_features, image_features: &prep.images, pairs: &pairs };
        let val_set = match prep.corpus.split.val.is_empty() {
            true => None,
            false => Some(prep.eval_set(SplitPart::Val)?),
        };
        let validation = val_set.as_ref().map(|set| Validation {
            set,
            k: self.cfg.eval.k,
            rule: self.cfg.relevance().expect("validated"),
        });
        let _ = writeln!(
            diag,
            "training {mix} on {} pairs, graph {}, {} epochs",
            pairs.len(),
            stats(&sub),
            train_cfg.epochs
        );
        let outcome = train(&model_cfg, &prop, &data, &train_cfg, validation.as_ref())?;
        let ckpt = Checkpoint {
            mix,
            graph_fingerprint: sub.fingerprint(),
            config: model_cfg,
            params: outcome.best_params,
        };
        let path = self.artifact(CHECKPOINT_FILE);
        ckpt.save(&path)?;
        let log = formats::render_train_log(&outcome.report);
        formats::write_file(&self.artifact(TRAIN_LOG_FILE), &log)?;
        if let Some(best) = outcome.report.best_epoch {
            let _ = writeln!(diag, "kept epoch {best} -> {}", path.display());
        }
        Ok((outcome.report, log))
    }

    /// Loads the checkpoint and the matching propagation matrix, refusing a
    /// graph that differs from the one the model was trained on.
    pub fn load_model(&self, prep: &Prepared) -> Result<(Checkpoint, SparseMatrix)> {
        let ckpt = Checkpoint::load(&self.artifact(CHECKPOINT_FILE))?;
        let graph = self.load_graph(&prep.vocab)?;
        let sub = filter_by_provenance(&graph, ckpt.mix.mask())?;
        if sub.fingerprint() != ckpt.graph_fingerprint {
            return Err(Error::Config(format!(
                "the {} graph in {} (hash {:016x}) differs from the one the checkpoint was trained on \
                 (hash {:016x}); retrain with `xmr train` or restore the original graph",
                ckpt.mix,
                self.artifact(GRAPH_FILE).display(),
                sub.fingerprint(),
                ckpt.graph_fingerprint
            )));
        }
        let c = &ckpt.config;
        if c.in_channels != prep.in_channels() || prep.image_dim()? != c.image_feat_dim {
            return Err(Error::Config(format!(
                "checkpoint expects {} feature channels and {}-d image features, inputs provide {} and {}",
                c.in_channels,
                c.image_feat_dim,
                prep.in_channels(),
                prep.image_dim()?
            )));
        }
        Ok((ckpt, propagation_matrix(&sub, PropagationScheme::SymRenorm)))
    }

    /// MAP@k of the checkpoint on one split; returns the report TSV.
    pub fn eval(&self, part: SplitPart) -> Result<(MapReport, String)> {
        let prep = self.prepare()?;
        let (ckpt, prop) = self.load_model(&prep)?;
        let set = prep.eval_set(part)?;
        let report = evaluate(&ckpt.params, &ckpt.config, &prop, &set, self.cfg.eval.k, self.cfg.relevance()?)?;
        let tsv = formats::render_report([(ckpt.mix.label(), report)]);
        formats::write_file(&self.artifact(REPORT_FILE), &tsv)?;
        Ok((report, tsv))
    }

    /// Ranks the opposite modality of `part` for a free-text or image query.
    pub fn query(&self, query: &Query, part: SplitPart, top: usize) -> Result<Vec<(String, f64)>> {
        let prep = self.prepare()?;
        let (ckpt, prop) = self.load_model(&prep)?;
        let set = prep.eval_set(part)?;
        let embedded = embed(&ckpt.params, &ckpt.config, &prop, &set)?;
        let (scores, ids): (Vec<f64>, Vec<&str>) = match query {
            Query::Text(text) => {
                let sample = TextSample::new("query", text, 0, "");
                let t = xmr_core::model::text_forward(&ckpt.params, &ckpt.config, &prop, &prep.features(&sample))?
                    .into_vec();
                let scores = embedded
                    .images
                    .iter()
                    .map(|v| similarity(&ckpt.params, &t, v))
                    .collect::<std::result::Result<_, _>>()?;
                (scores, set.images.iter().map(|i| i.id.as_str()).collect())
            }
            Query::Image(id) => {
                let v = prep.images.get(id).ok_or_else(|| {
                    Error::Config(format!("image `{id}` is not in the visual feature file"))
                })?;
                let e = xmr_core::model::image_forward(&ckpt.params, &ckpt.config, v)?.into_vec();
                let scores = embedded
                    .texts
                    .iter()
                    .map(|t| similarity(&ckpt.params, t, &e))
                    .collect::<std::result::Result<_, _>>()?;
                (scores, set.texts.iter().map(|t| t.id.as_str()).collect())
            }
        };
        Ok(rank(&scores).into_iter().take(top).map(|i| (ids[i].to_string(), scores[i])).collect())
    }

    /// Statistics of the stored graph, optionally restricted to one mix.
    pub fn stats(&self, mix: Option<RelationMix>) -> Result<GraphStats> {
        let path = self.artifact(GRAPH_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "relation graph", path, producer: "build-graph" });
        }
        let graph = formats::load_graph(&path)?;
        Ok(match mix {
            Some(m) => stats(&filter_by_provenance(&graph, m.mask())?),
            None => stats(&graph),
        })
    }

    /// Trains and evaluates SR, SCR, SKR and SCKR on the test split.
    pub fn ablate(&self, diag: &mut dyn Write) -> Result<(Vec<AblationRow>, String)> {
        let prep = self.prepare()?;
        let graph = self.load_graph(&prep.vocab)?;
        let model_cfg = self.cfg.model_config(prep.vocab.len(), prep.in_channels(), prep.image_dim()?)?;
        let train_texts = prep.corpus.train_owned();
        let pairs = sample_pairs(
            &train_texts,
            self.cfg.pairs.positives,
            self.cfg.pairs.negatives,
            self.cfg.alignment()?,
            derive_seed(self.cfg.seed, seed_stream::PAIRS),
        )?;
        let text_features: BTreeMap<String, DenseMatrix> =
            train_texts.iter().map(|s| (s.id.clone(), prep.features(s))).collect();
        let data = TrainData { text_features: &text_features, image_features: &prep.images, pairs: &pairs };
        let test = prep.eval_set(SplitPart::Test)?;
        let rows = ablation_sweep(
            &graph,
            &model_cfg,
            &self.cfg.train_config()?,
            &data,
            &test,
            self.cfg.eval.k,
            self.cfg.relevance()?,
        )?;
        for r in &rows {
            let _ = writeln!(diag, "{}: graph {}, avg {:.4}", r.mix, r.graph, r.report.avg);
        }
        let tsv = formats::render_report(rows.iter().map(|r| (r.mix.label(), r.report)));
        formats::write_file(&self.artifact(ABLATION_FILE), &tsv)?;
        Ok((rows, tsv))
    }
}

pub enum Query {
    Text(String),
    Image(String),
}
