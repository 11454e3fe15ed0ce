//! Semantic projection checked against independent straight-line oracles.

mod common;

use common::{dense, oracle_forward, random_instance, worst_gradient_error};
use detctx::scf::{fit, gcn_forward, project, Hyper};
use detctx::synth::separable_problem;

#[test]
fn forward_matches_dense_oracle() {
    for seed in 0..100 {
        let inst = random_instance(seed);
        let got = gcn_forward(&inst.a_hat, &inst.h, &inst.weights).unwrap();
        let want = oracle_forward(
            &dense(&inst.a_hat),
            &dense(&inst.h),
            &dense(&inst.weights.w1),
            &dense(&inst.weights.w2),
            inst.weights.leaky_slope,
        );
        for (g, w) in dense(&got).iter().flatten().zip(want.iter().flatten()) {
            assert!((g - w).abs() <= 1e-9, "seed {seed}: {g} vs {w}");
        }
    }
}

#[test]
fn projection_columns_are_distributions() {
    for seed in 0..100 {
        let inst = random_instance(seed);
        let space = gcn_forward(&inst.a_hat, &inst.h, &inst.weights).unwrap();
        let p = project(&space, &inst.f).unwrap();
        for col in p.columns() {
            assert!((col.sum() - 1.0).abs() <= 1e-9);
            assert!(col.iter().all(|&v| v > 0.0 && v < 1.0 || col.len() == 1));
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..20 {
        let inst = random_instance(1000 + seed);
        let worst = worst_gradient_error(&inst, 1e-6);
        assert!(worst < 1e-4, "seed {seed}: worst relative error {worst}");
    }
}

#[test]
fn loss_non_increasing_with_small_steps() {
    let (g, e, r) = separable_problem(3, 200, 8).unwrap();
    for lr in [0.001, 0.01] {
        let hyper = Hyper {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            epochs: 200,
            hidden_dim: 16,
            ..Hyper::default()
        };
        let out = fit(&g, &e, &r, &hyper).unwrap();
        for pair in out.loss_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "lr {lr}: {pair:?}");
        }
    }
}

#[test]
fn separable_reaches_full_accuracy() {
    let (g, e, r) = separable_problem(5, 200, 8).unwrap();
    let hyper = Hyper {
        epochs: 200,
        hidden_dim: 16,
        ..Hyper::default()
    };
    let out = fit(&g, &e, &r, &hyper).unwrap();
    assert_eq!(out.train_accuracy, 1.0, "final loss {:?}", out.loss_trace.last());
}
