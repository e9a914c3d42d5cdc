//! End-to-end behaviour of the `xmr` binary on small fixtures.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;
use xmr::checkpoint::Checkpoint;
use xmr::config::ProjectConfig;
use xmr::formats::{self, CorpusFormat, CorpusRecord};
use xmr::pipeline::Project;
use xmr_core::model::{ModelConfig, ModelParams, Pool};
use xmr_core::numerics::DenseMatrix;
use xmr_core::relgraph::{filter_by_provenance, stats, RelationGraph, RelationMix};

fn xmr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = xmr(dir, args);
    assert!(
        out.status.success(),
        "xmr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = xmr(dir, args);
    assert!(!out.status.success(), "xmr {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn small_synth(dir: &Path) {
    ok(dir, &["synth", "--out", "data", "--categories", "3", "--texts-per-category", "10"]);
}

#[test]
fn vocabulary_is_deterministic_and_matches_the_library() {
    let dir = tempdir().unwrap();
    small_synth(dir.path());
    let cfg = "data/config.toml";
    ok(dir.path(), &["--config", cfg, "--workdir", "a", "build-vocab"]);
    ok(dir.path(), &["--config", cfg, "--workdir", "b", "build-vocab"]);
    let a = fs::read(dir.path().join("a/vocab.txt")).unwrap();
    let b = fs::read(dir.path().join("b/vocab.txt")).unwrap();
    assert_eq!(a, b);

    let project = Project::new(ProjectConfig::load(&dir.path().join(cfg)).unwrap()).unwrap();
    let vocab = project.build_vocabulary(&project.load_corpus().unwrap()).unwrap();
    assert_eq!(formats::render_vocabulary(&vocab).into_bytes(), a);
    assert!(vocab.len() > 3);
}

#[test]
fn missing_corpus_is_named() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[paths]\ncorpus = \"nope.jsonl\"\n").unwrap();
    let err = fails(dir.path(), &["--config", "c.toml", "build-vocab"]);
    assert!(err.contains("nope.jsonl"), "{err}");
    let err = fails(dir.path(), &["build-vocab"]);
    assert!(err.contains("corpus"), "{err}");
}

#[test]
fn missing_artifacts_name_their_producer() {
    let dir = tempdir().unwrap();
    small_synth(dir.path());
    let with = |cmd: &'static str| ["--config", "data/config.toml", cmd];
    assert!(fails(dir.path(), &with("build-graph")).contains("run `xmr build-vocab` first"));
    assert!(fails(dir.path(), &with("train")).contains("run `xmr build-vocab` first"));
    assert!(fails(dir.path(), &with("stats")).contains("run `xmr build-graph` first"));
    ok(dir.path(), &with("build-vocab"));
    assert!(fails(dir.path(), &with("train")).contains("run `xmr build-graph` first"));
    ok(dir.path(), &with("build-graph"));
    assert!(fails(dir.path(), &with("eval")).contains("run `xmr train` first"));
}

#[test]
fn stats_agree_with_the_library() {
    let dir = tempdir().unwrap();
    small_synth(dir.path());
    let cfg = ["--config", "data/config.toml"];
    ok(dir.path(), &[cfg[0], cfg[1], "build-vocab"]);
    ok(dir.path(), &[cfg[0], cfg[1], "build-graph"]);
    let graph = formats::load_graph(&dir.path().join("data/work/graph.txt")).unwrap();
    assert_eq!(ok(dir.path(), &[cfg[0], cfg[1], "stats"]), format!("{}\n", stats(&graph)));
    let mut previous = 0;
    for mix in RelationMix::ALL {
        let label = mix.label().to_lowercase();
        let out = ok(dir.path(), &[cfg[0], cfg[1], "stats", "--relations", &label]);
        let sub = filter_by_provenance(&graph, mix.mask()).unwrap();
        assert_eq!(out, format!("{}\n", stats(&sub)));
        if mix != RelationMix::Skr {
            assert!(sub.n_edges() >= previous);
            previous = sub.n_edges();
        }
    }
}

#[test]
fn single_word_vocabulary_gives_an_empty_graph() {
    let dir = tempdir().unwrap();
    let records: Vec<CorpusRecord> = (0..10)
        .map(|i| CorpusRecord {
            id: format!("t{i}"),
            text: "The cat was on the mat. The cat was there.".into(),
            category: i % 2,
            image_id: format!("i{i}"),
        })
        .collect();
    formats::write_corpus(&dir.path().join("c.jsonl"), &records, CorpusFormat::Jsonl).unwrap();
    // "mat" has no vector, so only "cat" can be a node.
    fs::write(dir.path().join("stop.txt"), "the\nwas\non\nthere\nmat\n").unwrap();
    fs::write(dir.path().join("e.txt"), "cat 1 0\n").unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[paths]\ncorpus = \"c.jsonl\"\nembeddings = \"e.txt\"\nstopwords = \"stop.txt\"\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", "c.toml", "build-vocab"]);
    assert_eq!(fs::read_to_string(dir.path().join("work/vocab.txt")).unwrap(), "cat\n");
    ok(dir.path(), &["--config", "c.toml", "build-graph", "--sources", "sr"]);
    let out = ok(dir.path(), &["--config", "c.toml", "stats"]);
    assert!(out.starts_with("1 0 "), "{out}");
}

#[test]
fn config_dump_shows_defaults() {
    let dir = tempdir().unwrap();
    let out = ok(dir.path(), &["config"]);
    assert!(out.contains("k = 8\n"), "{out}");
    assert!(out.contains("epsilon = 5\n"), "{out}");
    assert!(out.contains("semantic_dim = 1024\n"), "{out}");
    let parsed: ProjectConfig = toml::from_str(&out).unwrap();
    assert_eq!(parsed.to_toml(), out);
}

const NOUNS: [&str; 5] = ["glacier", "violin", "falcon", "harbor", "quartz"];

/// Five categories, each text naming its category noun, one-hot visual
/// features, no graph edges, and hand-set weights under which the score of
/// a text and an image is high exactly when their categories agree.
fn oracle_fixture(dir: &Path) {
    let records: Vec<CorpusRecord> = (0..50)
        .map(|i| {
            let c = i % 5;
            CorpusRecord {
                id: format!("t{i:02}"),
                text: format!("The {0} was by the {0}. It is a {0}.", NOUNS[c]),
                category: c as u32,
                image_id: format!("img{i:02}"),
            }
        })
        .collect();
    formats::write_corpus(&dir.join("c.jsonl"), &records, CorpusFormat::Jsonl).unwrap();
    let visual: BTreeMap<String, Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut v = vec![0.0; 5];
            v[r.category as usize] = 1.0;
            (r.image_id.clone(), v)
        })
        .collect();
    formats::write_visual_features(&dir.join("v.txt"), &visual).unwrap();
    fs::write(dir.join("c.toml"), "[paths]\ncorpus = \"c.jsonl\"\nvisual_features = \"v.txt\"\n").unwrap();
    ok(dir, &["--config", "c.toml", "build-vocab"]);

    let words: Vec<String> = fs::read_to_string(dir.join("work/vocab.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let mut sorted = words.clone();
    sorted.sort();
    let mut expected: Vec<String> = NOUNS.iter().map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(sorted, expected);

    let graph = RelationGraph::empty(5);
    fs::write(dir.join("work/graph.txt"), formats::render_graph(&graph)).unwrap();

    let config = ModelConfig {
        gcn_hidden: 1,
        gcn_out: 1,
        semantic_dim: 5,
        pool: Pool::Flatten,
        ..ModelConfig::new(5, 1, 5)
    };
    let mut params = ModelParams::zeros(&config);
    params.conv1 = DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap();
    params.conv2 = DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap();
    for (node, w) in words.iter().enumerate() {
        let c = NOUNS.iter().position(|n| n == w).unwrap();
        params.text_w.set(node, c, 1.0);
    }
    for c in 0..5 {
        params.image_w.set(c, c, 1.0);
        params.sim_w.set(c, 0, 1.0);
    }
    Checkpoint {
        mix: RelationMix::Sckr,
        graph_fingerprint: filter_by_provenance(&graph, RelationMix::Sckr.mask()).unwrap().fingerprint(),
        config,
        params,
    }
    .save(&dir.join("work/model.ckpt"))
    .unwrap();
}

#[test]
fn oracle_checkpoint_scores_full_marks() {
    let dir = tempdir().unwrap();
    oracle_fixture(dir.path());
    let out = ok(dir.path(), &["--config", "c.toml", "eval"]);
    assert_eq!(out, "model\tQ_T\tQ_I\tAvg\nSCKR\t100.0\t100.0\t100.0\n");
    assert_eq!(fs::read_to_string(dir.path().join("work/report.tsv")).unwrap(), out);
}

#[test]
fn queries_rank_the_matching_category_first() {
    let dir = tempdir().unwrap();
    oracle_fixture(dir.path());
    let out = ok(dir.path(), &["--config", "c.toml", "query", "--text", "A falcon over a falcon", "--top", "2"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let id = row.split('\t').next().unwrap();
        let n: usize = id.trim_start_matches("img").parse().unwrap();
        assert_eq!(n % 5, 2, "{out}");
    }
    let out = ok(dir.path(), &["--config", "c.toml", "query", "--image", "img03", "--top", "1"]);
    let id = out.split('\t').next().unwrap();
    let n: usize = id.trim_start_matches('t').parse().unwrap();
    assert_eq!(n % 5, 3, "{out}");
}

#[test]
fn changed_graph_is_refused() {
    let dir = tempdir().unwrap();
    oracle_fixture(dir.path());
    fs::write(dir.path().join("work/graph.txt"), "5 1\n0 1 2\n").unwrap();
    let err = fails(dir.path(), &["--config", "c.toml", "eval"]);
    assert!(err.contains("differs from the one the checkpoint was trained on"), "{err}");
}
