use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xmr::config::{ProjectConfig, Source};
use xmr::formats::emit;
use xmr::pipeline::{Project, Query, SplitPart};
use xmr::synth::{self, SynthSpec};
use xmr_core::relgraph::RelationMix;

/// Cross-modal text/image retrieval over multi-view word relation graphs.
#[derive(Parser)]
#[command(name = "xmr", version)]
struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured work directory.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select nouns from the training texts and write the vocabulary.
    BuildVocab,
    /// Build relation sources and write the fused graph.
    BuildGraph {
        /// Comma-separated subset of sr, cr, kr.
        #[arg(long, value_delimiter = ',')]
        sources: Option<Vec<String>>,
    },
    /// Train on the configured relation mix and write a checkpoint.
    Train,
    /// Report MAP@k of the checkpoint in both directions.
    Eval {
        #[arg(long, default_value = "test")]
        split: SplitPart,
    },
    /// Rank images for a text, or texts for an image.
    Query {
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        text: Option<String>,
        #[arg(long)]
        image: Option<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value = "test")]
        split: SplitPart,
    },
    /// Print `nodes edges density%` of the stored graph.
    Stats {
        /// Restrict to sr, scr, skr or sckr.
        #[arg(long)]
        relations: Option<RelationMix>,
    },
    /// Train and evaluate SR, SCR, SKR and SCKR.
    Ablate,
    /// Print the effective configuration.
    Config,
    /// Write a planted-structure example dataset and its config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        categories: usize,
        #[arg(long, default_value_t = 40)]
        texts_per_category: usize,
    },
}

fn run(cli: Cli) -> xmr::Result<()> {
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr().lock();
    if let Command::Synth { out, categories, texts_per_category } = &cli.command {
        let spec = SynthSpec {
            seed: cli.seed.unwrap_or(SynthSpec::default().seed),
            categories: *categories,
            texts_per_category: *texts_per_category,
            ..SynthSpec::default()
        };
        let data = synth::write(&spec, out)?;
        let _ = writeln!(stderr, "{} texts in {} categories -> {}", data.records.len(), categories, out.display());
        return Ok(());
    }

    let mut cfg = match &cli.config {
        Some(path) => ProjectConfig::load(path)?,
        None => ProjectConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.workdir {
        cfg.workdir = dir;
    }
    if let Command::BuildGraph { sources: Some(s) } = &cli.command {
        cfg.graph.sources = s.clone();
    }
    let project = Project::new(cfg)?;

    match cli.command {
        Command::BuildVocab => {
            project.build_vocab(&mut stderr)?;
        }
        Command::BuildGraph { .. } => {
            let sources: Vec<Source> = project.cfg.sources()?;
            project.build_graph(&sources, &mut stderr)?;
        }
        Command::Train => {
            let (_, log) = project.train(&mut stderr)?;
            emit(&mut stdout, &log)?;
        }
        Command::Eval { split } => {
            let (_, tsv) = project.eval(split)?;
            emit(&mut stdout, &tsv)?;
        }
        Command::Query { text, image, top, split } => {
            let query = match (text, image) {
                (Some(t), _) => Query::Text(t),
                (None, Some(i)) => Query::Image(i),
                (None, None) => unreachable!("clap requires one of --text or --image"),
            };
            let mut out = String::new();
            for (id, score) in project.query(&query, split, top)? {
                out.push_str(&format!("{id}\t{score:.6}\n"));
            }
            emit(&mut stdout, &out)?;
        }
        Command::Stats { relations } => {
            emit(&mut stdout, &format!("{}\n", project.stats(relations)?))?;
        }
        Command::Ablate => {
            let (_, tsv) = project.ablate(&mut stderr)?;
            emit(&mut stdout, &tsv)?;
        }
        Command::Config => emit(&mut stdout, &project.cfg.to_toml())?,
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
