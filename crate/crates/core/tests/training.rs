mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmr_core::corpus::PairSample;
use xmr_core::model::*;
use xmr_core::numerics::{DenseMatrix, SparseMatrix};
use xmr_core::relgraph::{propagation_matrix, PropagationScheme, Provenance, RelationGraph};
use xmr_core::trainer::*;

use common::random_graph;

struct Toy {
    cfg: ModelConfig,
    prop: SparseMatrix,
    texts: BTreeMap<String, DenseMatrix>,
    images: BTreeMap<String, Vec<f64>>,
    pairs: Vec<PairSample>,
}

/// Twenty texts and images with random features; ten arbitrary pairs are
/// labelled positive and ten negative, so fitting them means memorising.
fn toy(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12;
    let graph = random_graph(&mut rng, n, 0.25, Provenance::SR);
    let mut texts = BTreeMap::new();
    let mut images = BTreeMap::new();
    let mut pairs = Vec::new();
    for i in 0..20 {
        let counts: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..3u8))).collect();
        texts.insert(format!("t{i}"), DenseMatrix::from_vec(n, 1, counts).unwrap());
        images.insert(format!("i{i}"), (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect());
        pairs.push(PairSample {
            text_id: format!("t{i}"),
            image_id: format!("i{}", (i * 7) % 20),
            positive: i % 2 == 0,
        });
    }
    Toy {
        cfg: ModelConfig::new(n, 1, 32),
        prop: propagation_matrix(&graph, PropagationScheme::SymRenorm),
        texts,
        images,
        pairs,
    }
}

fn eval_mean_loss(toy: &Toy, params: &ModelParams) -> f64 {
    toy.pairs
        .iter()
        .map(|p| {
            pair_eval_loss(params, &toy.cfg, &toy.prop, &toy.texts[&p.text_id], &toy.images[&p.image_id], p.label())
                .unwrap()
        })
        .sum::<f64>()
        / toy.pairs.len() as f64
}

#[test]
fn overfits_twenty_pairs() {
    let toy = toy(51);
    let data = TrainData { text_features: &toy.texts, image_features: &toy.images, pairs: &toy.pairs };
    let cfg = TrainConfig { epochs: 500, seed: 7, ..TrainConfig::default() };
    let out = train(&toy.cfg, &toy.prop, &data, &cfg, None).unwrap();
    let last = out.report.epochs.last().unwrap().mean_loss;
    let eval = eval_mean_loss(&toy, &out.final_params);
    // Training-mode loss carries dropout noise; the fit is judged in eval mode.
    assert!(last.is_finite());
    assert!(eval < 0.05, "final eval loss {eval}");

    let again = train(&toy.cfg, &toy.prop, &data, &cfg, None).unwrap();
    assert_eq!(again.report, out.report);
    assert_eq!(again.final_params, out.final_params);
}

#[test]
fn early_loss_trend_is_downward() {
    let toy = toy(52);
    let data = TrainData { text_features: &toy.texts, image_features: &toy.images, pairs: &toy.pairs };
    let cfg = TrainConfig { epochs: 20, seed: 3, ..TrainConfig::default() };
    let out = train(&toy.cfg, &toy.prop, &data, &cfg, None).unwrap();
    let ys: Vec<f64> = out.report.epochs.iter().map(|e| e.mean_loss).collect();
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let slope: f64 = ys.iter().enumerate().map(|(x, y)| (x as f64 - mx) * (y - my)).sum::<f64>()
        / ys.iter().enumerate().map(|(x, _)| (x as f64 - mx).powi(2)).sum::<f64>();
    assert!(slope < 0.0, "slope {slope} over {ys:?}");
    assert!(out.report.epochs.iter().enumerate().all(|(i, e)| e.epoch == i + 1));
}

#[test]
fn weight_decay_alone_shrinks_parameters() {
    // Labels chosen so the data gradient is zero: contrastive loss with the
    // score inside the margin and a negative label.
    let toy = toy(53);
    let mut cfg = toy.cfg.clone();
    cfg.semantic_dim = 8;
    let mut params = ModelParams::init(&cfg, 1).unwrap();
    // A zero similarity weight pins the score at sigmoid(-5) < margin.
    params.sim_w = DenseMatrix::zeros(8, 1);
    params.sim_b = DenseMatrix::from_vec(1, 1, vec![-5.0]).unwrap();
    let negatives: Vec<PairSample> = toy.pairs.iter().filter(|p| !p.positive).cloned().collect();
    let data = TrainData { text_features: &toy.texts, image_features: &toy.images, pairs: &negatives };
    let mut norm = params.squared_norm();
    for epoch in 1..=5 {
        let tc = TrainConfig { epochs: 1, seed: epoch, loss_kind: LossKind::Contrastive, ..TrainConfig::default() };
        let out = train_from(&cfg, params, &toy.prop, &data, &tc, None).unwrap();
        assert_eq!(out.report.epochs[0].mean_loss, 0.0);
        params = out.final_params;
        let next = params.squared_norm();
        assert!(next < norm, "epoch {epoch}: {next} >= {norm}");
        norm = next;
    }
}

fn permute_graph(graph: &RelationGraph, perm: &[usize]) -> RelationGraph {
    let edges = graph.edges().map(|(i, j, p)| (perm[i as usize] as u32, perm[j as usize] as u32, p));
    RelationGraph::from_edges(graph.n_nodes(), edges).unwrap()
}

#[test]
fn pooled_text_embedding_ignores_node_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    for pool in [Pool::Mean, Pool::Sum] {
        for _ in 0..10 {
            let n = 15;
            let graph = random_graph(&mut rng, n, 0.3, Provenance::CR);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let x = DenseMatrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
            let mut px = DenseMatrix::zeros(n, 3);
            for (i, &p) in perm.iter().enumerate() {
                px.row_mut(p).copy_from_slice(x.row(i));
            }
            let mut cfg = ModelConfig::new(n, 3, 4);
            cfg.pool = pool;
            cfg.semantic_dim = 16;
            let params = ModelParams::init(&cfg, 5).unwrap();
            let a = propagation_matrix(&graph, PropagationScheme::SymRenorm);
            let pa = propagation_matrix(&permute_graph(&graph, &perm), PropagationScheme::SymRenorm);
            let t = text_forward(&params, &cfg, &a, &x).unwrap();
            let pt = text_forward(&params, &cfg, &pa, &px).unwrap();
            assert!(t.max_abs_diff(&pt) < 1e-12, "{pool:?}");
        }
    }
}

#[test]
fn eval_forward_is_bitwise_repeatable() {
    let toy = toy(55);
    let params = ModelParams::init(&toy.cfg, 9).unwrap();
    for (id, x) in &toy.texts {
        let a = text_forward(&params, &toy.cfg, &toy.prop, x).unwrap();
        let b = text_forward(&params, &toy.cfg, &toy.prop, x).unwrap();
        assert_eq!(a.data(), b.data(), "{id}");
    }
    let v = &toy.images["i0"];
    assert_eq!(image_forward(&params, &toy.cfg, v).unwrap(), image_forward(&params, &toy.cfg, v).unwrap());
}

#[test]
fn non_finite_inputs_are_rejected_up_front() {
    let mut toy = toy(56);
    toy.images.get_mut("i0").unwrap()[0] = f64::NAN;
    let data = TrainData { text_features: &toy.texts, image_features: &toy.images, pairs: &toy.pairs };
    let err = train(&toy.cfg, &toy.prop, &data, &TrainConfig::default(), None).err().unwrap();
    assert!(err.to_string().contains("`i0`"), "{err}");
}

#[test]
fn overflowing_loss_aborts_with_context() {
    let toy = toy(57);
    let mut params = ModelParams::init(&toy.cfg, 2).unwrap();
    params.sim_w.data_mut().iter_mut().for_each(|w| *w = f64::MAX);
    let data = TrainData { text_features: &toy.texts, image_features: &toy.images, pairs: &toy.pairs };
    let cfg = TrainConfig { epochs: 2, dropout_p: 0.0, ..TrainConfig::default() };
    match train_from(&toy.cfg, params, &toy.prop, &data, &cfg, None) {
        Err(xmr_core::Error::Training { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 0)),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("overflow went unnoticed"),
    }
}
