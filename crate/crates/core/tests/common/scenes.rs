//! Random scenes and rule sets for comparing `scr::apply` against the
//! enumeration oracle.

use detctx::dataset::{CategoryKind, Dataset, Detection, DetectionSet};
use detctx::geometry::{ios, BBox, Region};
use detctx::scr::{eval_pred, eval_topology, ApplyParams, DimExpr, Predicate, RelationRule, Topology};
use detctx::synth::{
    generate, CategorySpec, NoiseModel, ObjectSpec, RelationTemplate, SceneSpec, StuffBand, Suppression,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const THINGS: [&str; 5] = ["rider", "bicycle", "door", "knob", "pedestrian"];
pub const MAX_DETECTIONS_PER_IMAGE: usize = 10;

pub struct RandomScene {
    pub dataset: Dataset,
    pub detections: DetectionSet,
    pub rules: Vec<RelationRule>,
    pub params: ApplyParams,
}

fn categories() -> Vec<CategorySpec> {
    let mut cats: Vec<CategorySpec> = THINGS
        .iter()
        .map(|n| CategorySpec {
            name: n.to_string(),
            kind: CategoryKind::Thing,
        })
        .collect();
    cats.push(CategorySpec {
        name: "road".into(),
        kind: CategoryKind::Stuff,
    });
    cats
}

/// A rule fitted to an actual (retained subject, candidate) pair: a predicate
/// and topology that hold for it and a threshold at or below its IoS.
fn fitted_rule(rng: &mut ChaCha8Rng, s: &Detection, o: &Detection) -> RelationRule {
    let (rs, ro) = (Region::Box(s.bbox), Region::Box(o.bbox));
    let preds: Vec<Predicate> = [
        Predicate::Under,
        Predicate::Above,
        Predicate::LeftOf,
        Predicate::RightOf,
    ]
    .into_iter()
    .filter(|&p| eval_pred(p, &rs, &ro).unwrap())
    .collect();
    let pred = if rng.random_bool(0.5) {
        preds.choose(rng).copied()
    } else {
        None
    };
    let v = ios(&rs, &ro).unwrap();
    let topology = if v > 0.0 && v < 1.0 && rng.random_bool(0.7) {
        Topology::Overlap
    } else if eval_topology(Topology::Within, &rs, &ro, None).unwrap() {
        Topology::Within
    } else {
        Topology::Overlap
    };
    let mut rule = RelationRule::new(
        THINGS[s.category_id as usize - 1],
        THINGS[o.category_id as usize - 1],
        pred,
        topology,
    );
    if topology == Topology::Overlap {
        rule.overlap_threshold = Some(v * rng.random_range(0.5..=1.0));
    }
    rule
}

/// Draws a rule between arbitrary categories.
fn random_rule(rng: &mut ChaCha8Rng) -> RelationRule {
    let subject = *THINGS.choose(rng).unwrap();
    let object = if rng.random_bool(0.2) {
        "road"
    } else {
        *THINGS.choose(rng).unwrap()
    };
    let pred = [
        None,
        Some(Predicate::Under),
        Some(Predicate::Above),
        Some(Predicate::LeftOf),
        Some(Predicate::RightOf),
    ]
    .choose(rng)
    .copied()
    .unwrap();
    let topology = *[
        Topology::Overlap,
        Topology::Overlap,
        Topology::Overlap,
        Topology::Within,
        Topology::Contains,
        Topology::Equal,
        Topology::Touch,
        Topology::Disjoint,
    ]
    .choose(rng)
    .unwrap();
    let mut rule = RelationRule::new(subject, object, pred, topology);
    if topology == Topology::Overlap {
        rule.overlap_threshold = Some(rng.random_range(0.0..0.9));
    }
    if object != "road" && rng.random_bool(0.5) {
        let mut expr = || DimExpr {
            constant: rng.random_range(1.0..40.0),
            height_subject: rng.random_range(0.0..1.0),
            width_subject: if rng.random_bool(0.5) {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            },
            height_object: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
            width_object: rng.random_range(0.0..1.5),
        };
        let h = expr();
        let w = expr();
        rule = rule.with_search(h, w);
    }
    rule
}

/// A one- or two-image scene with at most ten detections per image, a few
/// nested and jittered copies so that containment and overlap rules fire,
/// and a random rule set.
pub fn random_scene(seed: u64) -> RandomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SceneSpec {
        image_width: 240,
        image_height: 180,
        num_images: rng.random_range(1..=2),
        categories: categories(),
        objects: vec![
            ObjectSpec {
                category: "door".into(),
                count: rng.random_range(0..=1),
                width: [30.0, 50.0],
                height: [60.0, 90.0],
                visible_ratio: None,
            },
            ObjectSpec {
                category: "pedestrian".into(),
                count: rng.random_range(0..=1),
                width: [15.0, 30.0],
                height: [40.0, 80.0],
                visible_ratio: None,
            },
        ],
        relations: vec![RelationTemplate {
            subject: "rider".into(),
            object: "bicycle".into(),
            count: rng.random_range(0..=1),
            ios: [0.2, 0.8],
            subject_width: [20.0, 35.0],
            subject_height: [40.0, 70.0],
            object_width: [30.0, 55.0],
            object_height: [30.0, 50.0],
            visible_ratio: None,
        }],
        stuff: if rng.random_bool(0.5) {
            vec![StuffBand {
                category: "road".into(),
                top: 0.7,
                bottom: 1.0,
            }]
        } else {
            Vec::new()
        },
        noise: NoiseModel {
            drop_prob: 0.1,
            score_noise_sd: 0.15,
            jitter_px: rng.random_range(0.0..6.0),
            base_score: [0.3, 0.9],
            suppress: vec![Suppression {
                category: "bicycle".into(),
                prob: 0.5,
                score: [0.05, 0.5],
            }],
            false_positives_per_image: rng.random_range(0..=2),
            false_positive_score: [0.02, 0.7],
        },
        seed,
    };
    let (dataset, detections) = generate(&spec).expect("random scene spec is feasible");

    // nested copies so containment, equality and thresholded overlaps occur
    let mut dets: Vec<Detection> = detections.as_slice().to_vec();
    let extra = rng.random_range(0..=3);
    for _ in 0..extra {
        if dets.is_empty() {
            break;
        }
        let base = dets[rng.random_range(0..dets.len())].bbox;
        let image_id = dets[rng.random_range(0..dets.len())].image_id;
        let bbox = match rng.random_range(0..3) {
            0 => base,
            1 => {
                let w = base.w * rng.random_range(0.1..0.9);
                let h = base.h * rng.random_range(0.1..0.9);
                BBox::new(
                    base.x + rng.random_range(0.0..base.w - w),
                    base.y + rng.random_range(0.0..base.h - h),
                    w,
                    h,
                )
            }
            _ => BBox::new(
                base.x + rng.random_range(-10.0..10.0),
                base.bottom() - rng.random_range(1.0..base.h),
                base.w,
                base.h,
            )
            .clip(240.0, 180.0)
            .unwrap_or(base),
        };
        dets.push(Detection {
            image_id,
            category_id: rng.random_range(1..=THINGS.len() as u64),
            bbox,
            score: (rng.random_range(0.0..1.0f64) * 100.0).round() / 100.0,
        });
    }
    for image in dataset.images() {
        let mut n = 0;
        dets.retain(|d| {
            if d.image_id != image.id {
                return true;
            }
            n += 1;
            n <= MAX_DETECTIONS_PER_IMAGE
        });
    }
    let detections = DetectionSet::new(dets, &dataset).unwrap();

    let params = ApplyParams {
        keep_threshold: rng.random_range(0.4..0.7),
        candidate_floor: rng.random_range(0.0..0.3),
    };
    let mut present = Vec::new();
    for s in detections.iter().filter(|d| params.retains(d.score)) {
        for o in detections
            .iter()
            .filter(|d| d.image_id == s.image_id && params.is_candidate(d.score))
        {
            present.push((s, o));
        }
    }
    let rules = (0..rng.random_range(0..=4))
        .map(|_| match present.choose(&mut rng) {
            Some(&(s, o)) if rng.random_bool(0.6) => fitted_rule(&mut rng, s, o),
            _ => random_rule(&mut rng),
        })
        .collect();
    RandomScene {
        dataset,
        detections,
        rules,
        params,
    }
}
