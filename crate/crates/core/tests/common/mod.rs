//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use detctx::scf::{cross_entropy_gradients, normalize, ContextGraph, GcnWeights, RelationDescriptor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod scenes;

type Dense = Vec<Vec<f64>>;

pub fn dense(m: &Array2<f64>) -> Dense {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn leaky(a: &Dense, slope: f64) -> Dense {
    a.iter()
        .map(|r| r.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect())
        .collect()
}

pub fn oracle_forward(a_hat: &Dense, h: &Dense, w1: &Dense, w2: &Dense, slope: f64) -> Dense {
    let hidden = leaky(&matmul(&matmul(a_hat, h), w1), slope);
    leaky(&matmul(&matmul(a_hat, &hidden), w2), slope)
}

pub fn oracle_loss(a_hat: &Dense, h: &Dense, w1: &Dense, w2: &Dense, slope: f64, f: &Dense, labels: &[usize]) -> f64 {
    let logits = matmul(&oracle_forward(a_hat, h, w1, w2, slope), f);
    let n_regions = labels.len();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let col: Vec<f64> = logits.iter().map(|row| row[r]).collect();
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - col[y];
    }
    total / n_regions as f64
}

pub struct Instance {
    pub a_hat: Array2<f64>,
    pub h: Array2<f64>,
    pub weights: GcnWeights,
    pub f: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let d = rng.random_range(1..=8);
    let hidden = rng.random_range(1..=8);
    let feat = rng.random_range(1..=8);
    let regions = rng.random_range(1..=16);
    let adjacency = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
    let graph = ContextGraph {
        categories: (0..n).map(|i| format!("c{i}")).collect(),
        descriptor: RelationDescriptor::Conditional,
        adjacency,
    };
    Instance {
        a_hat: normalize(&graph),
        h: random_matrix(&mut rng, n, d),
        weights: GcnWeights {
            w1: random_matrix(&mut rng, d, hidden),
            w2: random_matrix(&mut rng, hidden, feat),
            leaky_slope: rng.random_range(0.0..0.3),
        },
        f: random_matrix(&mut rng, feat, regions),
        labels: (0..regions).map(|_| rng.random_range(0..n)).collect(),
    }
}

/// Relative error, with the denominator floored at 1e-5. A central difference
/// with step 1e-6 carries up to ~3e-10 of absolute rounding noise, which makes
/// a relative comparison meaningless for entries much smaller than that floor.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Largest relative error between analytic gradients and central differences
/// of the oracle loss over every weight entry.
pub fn worst_gradient_error(inst: &Instance, eps: f64) -> f64 {
    let g = cross_entropy_gradients(&inst.a_hat, &inst.h, &inst.weights, &inst.f, &inst.labels).unwrap();
    let (a, h, f) = (dense(&inst.a_hat), dense(&inst.h), dense(&inst.f));
    let slope = inst.weights.leaky_slope;
    let w1 = dense(&inst.weights.w1);
    let w2 = dense(&inst.weights.w2);
    let mut worst = (g.loss - oracle_loss(&a, &h, &w1, &w2, slope, &f, &inst.labels)).abs();
    for (which, base, grad) in [(1, &w1, &g.w1), (2, &w2, &g.w2)] {
        for i in 0..base.len() {
            for j in 0..base[i].len() {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[i][j] += eps;
                minus[i][j] -= eps;
                let (lp, lm) = if which == 1 {
                    (
                        oracle_loss(&a, &h, &plus, &w2, slope, &f, &inst.labels),
                        oracle_loss(&a, &h, &minus, &w2, slope, &f, &inst.labels),
                    )
                } else {
                    (
                        oracle_loss(&a, &h, &w1, &plus, slope, &f, &inst.labels),
                        oracle_loss(&a, &h, &w1, &minus, slope, &f, &inst.labels),
                    )
                };
                let numeric = (lp - lm) / (2.0 * eps);
                worst = worst.max(relative_error(grad[[i, j]], numeric));
            }
        }
    }
    worst
}
