//! Central finite-difference probes. Each check returns the relative error
//! between the analytic and numeric gradient so callers can assert or report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmr_core::model::{pair_forward_backward, LossKind, ModelConfig, ModelParams, Pool, PARAM_NAMES};
use xmr_core::numerics::kernels as k;
use xmr_core::numerics::{DenseMatrix, SparseMatrix};
use xmr_core::relgraph::{propagation_matrix, PropagationScheme, Provenance, RelationGraph};

pub const H: f64 = 1e-5;
pub const KERNEL_TOL: f64 = 1e-6;
pub const MODEL_TOL: f64 = 1e-4;

/// Entries bounded away from zero so ReLU kinks are never straddled.
pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = rng.gen_range(0.1..1.0);
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

pub fn weighted_sum(y: &DenseMatrix, w: &DenseMatrix) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

pub fn relative_error(analytic: &DenseMatrix, numeric: &DenseMatrix) -> f64 {
    let mut diff = analytic.clone();
    let mut neg = numeric.clone();
    neg.scale(-1.0);
    diff.add_assign(&neg).unwrap();
    let scale = analytic.frobenius_norm().max(numeric.frobenius_norm()).max(1e-12);
    diff.frobenius_norm() / scale
}

pub fn numeric_grad(x: &DenseMatrix, f: &mut dyn FnMut(&DenseMatrix) -> f64) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.data().len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + H;
        let up = f(&probe);
        probe.data_mut()[i] = orig - H;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * H);
    }
    g
}

pub fn assert_close(name: &str, analytic: &DenseMatrix, numeric: &DenseMatrix, tol: f64) {
    let err = relative_error(analytic, numeric);
    assert!(err <= tol, "{name}: relative error {err:e} > {tol:e}");
}

/// Named relative errors of every differentiable kernel on one random draw.
pub fn kernel_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let x = random(5, 4, &mut rng);
    let w = random(5, 4, &mut rng);

    out.push((
        "relu",
        relative_error(
            &k::relu_backward(&x, &w).unwrap(),
            &numeric_grad(&x, &mut |p| weighted_sum(&k::relu_forward(p), &w)),
        ),
    ));
    out.push((
        "sigmoid",
        relative_error(
            &k::sigmoid_backward(&k::sigmoid_forward(&x), &w).unwrap(),
            &numeric_grad(&x, &mut |p| weighted_sum(&k::sigmoid_forward(p), &w)),
        ),
    ));

    let b = random(4, 3, &mut rng);
    let wm = random(5, 3, &mut rng);
    let (da, db) = k::matmul_backward(&x, &b, &wm).unwrap();
    out.push(("matmul lhs", relative_error(&da, &numeric_grad(&x, &mut |p| weighted_sum(&p.matmul(&b).unwrap(), &wm)))));
    out.push(("matmul rhs", relative_error(&db, &numeric_grad(&b, &mut |p| weighted_sum(&x.matmul(p).unwrap(), &wm)))));

    let c = random(5, 4, &mut rng);
    let (dh_a, dh_c) = k::hadamard_backward(&x, &c, &w).unwrap();
    out.push((
        "hadamard lhs",
        relative_error(&dh_a, &numeric_grad(&x, &mut |p| weighted_sum(&k::hadamard_forward(p, &c).unwrap(), &w))),
    ));
    out.push((
        "hadamard rhs",
        relative_error(&dh_c, &numeric_grad(&c, &mut |p| weighted_sum(&k::hadamard_forward(&x, p).unwrap(), &w))),
    ));

    let bias = random(1, 4, &mut rng);
    let (dx, dbias) = k::add_bias_backward(&w);
    out.push((
        "bias input",
        relative_error(&dx, &numeric_grad(&x, &mut |p| weighted_sum(&k::add_bias_forward(p, &bias).unwrap(), &w))),
    ));
    out.push((
        "bias",
        relative_error(&dbias, &numeric_grad(&bias, &mut |p| weighted_sum(&k::add_bias_forward(&x, p).unwrap(), &w))),
    ));

    let dense = random(5, 5, &mut rng);
    let mut triplets = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            if rng.gen_bool(0.4) {
                triplets.push((i, j, dense.get(i, j)));
            }
        }
    }
    let a = SparseMatrix::from_triplets(5, 5, triplets).unwrap();
    out.push((
        "spmm",
        relative_error(&k::spmm_backward(&a, &w).unwrap(), &numeric_grad(&x, &mut |p| weighted_sum(&a.spmm(p).unwrap(), &w))),
    ));

    let w_row = random(1, 4, &mut rng);
    out.push((
        "sum_rows",
        relative_error(
            &k::sum_rows_backward(5, &w_row),
            &numeric_grad(&x, &mut |p| weighted_sum(&k::sum_rows_forward(p), &w_row)),
        ),
    ));
    out.push((
        "mean_rows",
        relative_error(
            &k::mean_rows_backward(5, &w_row),
            &numeric_grad(&x, &mut |p| weighted_sum(&k::mean_rows_forward(p), &w_row)),
        ),
    ));
    let w_flat = random(1, 20, &mut rng);
    out.push((
        "flatten",
        relative_error(
            &k::flatten_backward(5, 4, &w_flat),
            &numeric_grad(&x, &mut |p| weighted_sum(&k::flatten_forward(p), &w_flat)),
        ),
    ));

    let drop_seed = rng.gen::<u64>();
    let (_, mask) = k::dropout_forward(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(drop_seed)).unwrap();
    out.push((
        "dropout",
        relative_error(
            &k::dropout_backward(&mask, &w).unwrap(),
            &numeric_grad(&x, &mut |p| {
                let (y, _) = k::dropout_forward(p, 0.3, &mut ChaCha8Rng::seed_from_u64(drop_seed)).unwrap();
                weighted_sum(&y, &w)
            }),
        ),
    ));

    let z = random(1, 6, &mut rng);
    let labels = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let bce = |p: &DenseMatrix| p.data().iter().zip(labels).map(|(&z, y)| k::bce_with_logits(3.0 * z, y)).sum::<f64>();
    let analytic = DenseMatrix::from_vec(
        1,
        6,
        z.data().iter().zip(labels).map(|(&z, y)| 3.0 * k::bce_with_logits_grad(3.0 * z, y)).collect(),
    )
    .unwrap();
    out.push(("bce with logits", relative_error(&analytic, &numeric_grad(&z, &mut |p| bce(p)))));
    out
}

/// Ring plus random chords, normalized.
pub fn ring_graph(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        edges.push((i, (i + 1) % n as u32, Provenance::SR));
        let j = rng.gen_range(0..n as u32);
        if j != i {
            edges.push((i, j, Provenance::CR));
        }
    }
    let g = RelationGraph::from_edges(n, edges).unwrap();
    propagation_matrix(&g, PropagationScheme::SymRenorm)
}

pub fn tensor_mut(p: &mut ModelParams, i: usize) -> &mut DenseMatrix {
    p.tensors_mut().into_iter().nth(i).unwrap()
}

/// Full network on a 30-node graph: text path, image path, head and loss,
/// with dropout masks pinned by reseeding the RNG for every evaluation.
/// Returns the relative error of every parameter tensor for both labels.
pub fn full_model_errors(pool: Pool, loss: LossKind, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        gcn_hidden: 8,
        gcn_out: 4,
        semantic_dim: 16,
        pool,
        loss,
        ..ModelConfig::new(30, 2, 6)
    };
    let prop = ring_graph(30, &mut rng);
    let x = DenseMatrix::from_vec(30, 2, (0..60).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
    let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut params = ModelParams::init(&cfg, seed).unwrap();
    for b in [&mut params.text_b, &mut params.image_b, &mut params.sim_b] {
        for x in b.data_mut() {
            *x = rng.gen_range(-0.2..0.2);
        }
    }
    let dropout_seed = rng.gen::<u64>();
    let mut out = Vec::new();
    for label in [0.0, 1.0] {
        let loss_of = |p: &ModelParams| {
            let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
            pair_forward_backward(p, &cfg, &prop, &x, &v, label, Some(&mut r)).unwrap().loss
        };
        let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
        let pass = pair_forward_backward(&params, &cfg, &prop, &x, &v, label, Some(&mut r)).unwrap();
        for (idx, analytic) in pass.grads.tensors().into_iter().enumerate() {
            let numeric = numeric_grad(params.tensors()[idx], &mut |t| {
                let mut p = params.clone();
                *tensor_mut(&mut p, idx) = t.clone();
                loss_of(&p)
            });
            let name = format!("{pool:?}/{loss:?}/y={label}/{}", PARAM_NAMES[idx].0);
            out.push((name, relative_error(analytic, &numeric)));
        }
    }
    out
}
