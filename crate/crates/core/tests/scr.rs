//! SCR cross-checked against the exhaustive enumeration oracle, plus the
//! structural invariants of the promotion pass.

mod common;

use common::scenes::{random_scene, MAX_DETECTIONS_PER_IMAGE};
use detctx::scr::{apply, ApplyParams, SceneContext};
use detctx::synth::oracle_scr;

#[test]
fn apply_matches_oracle() {
    let mut promoted = 0;
    for seed in 0..300 {
        let s = random_scene(seed);
        let scene = SceneContext::new(&s.dataset).unwrap();
        let fast = apply(&s.detections, &s.rules, &scene, &s.params);
        let slow = oracle_scr(&s.detections, &s.rules, &scene, &s.params);
        match (fast, slow) {
            (Ok(a), Ok(b)) => {
                promoted += a.promoted.len();
                assert_eq!(a, b, "seed {seed}");
            }
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string(), "seed {seed}"),
            (a, b) => panic!("seed {seed}: apply {a:?} vs oracle {b:?}"),
        }
    }
    assert!(promoted > 50, "scenes should exercise promotion, got {promoted}");
}

#[test]
fn scenes_respect_size_bound() {
    for seed in 0..100 {
        let s = random_scene(seed);
        for image in s.dataset.images() {
            let n = s.detections.iter().filter(|d| d.image_id == image.id).count();
            assert!(n <= MAX_DETECTIONS_PER_IMAGE);
        }
    }
}

#[test]
fn output_is_bounded_superset_of_baseline() {
    for seed in 0..300 {
        let s = random_scene(seed);
        let scene = SceneContext::new(&s.dataset).unwrap();
        let Ok(out) = apply(&s.detections, &s.rules, &scene, &s.params) else {
            continue;
        };
        let baseline: Vec<_> = s.detections.iter().filter(|d| s.params.retains(d.score)).collect();
        for d in &baseline {
            assert!(
                out.detections.iter().any(|o| o == *d),
                "seed {seed}: baseline detection dropped"
            );
        }
        let subjects = baseline.len().max(s.dataset.annotations().len());
        assert!(out.detections.len() <= baseline.len() + s.rules.len() * subjects);
        assert_eq!(out.detections.len(), baseline.len() + out.promoted.len());
        for &i in &out.promoted {
            let d = &s.detections.as_slice()[i];
            assert!(s.params.is_candidate(d.score), "seed {seed}: promoted a non-candidate");
        }
    }
}

#[test]
fn lowering_the_floor_keeps_promotions() {
    for seed in 0..300 {
        let s = random_scene(seed);
        let scene = SceneContext::new(&s.dataset).unwrap();
        let Ok(high) = apply(&s.detections, &s.rules, &scene, &s.params) else {
            continue;
        };
        let lower = ApplyParams {
            candidate_floor: s.params.candidate_floor / 2.0,
            ..s.params
        };
        let low = apply(&s.detections, &s.rules, &scene, &lower).unwrap();
        for i in &high.promoted {
            assert!(
                low.promoted.contains(i),
                "seed {seed}: promotion {i} lost when lowering the floor"
            );
        }
    }
}
