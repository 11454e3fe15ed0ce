//! Synthetic scenes with known spatial relations and a simple detector noise
//! model, plus a brute-force SCR reference used to cross-check `scr::apply`.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    Annotation, Category, CategoryKind, Dataset, Detection, DetectionSet, ImageRecord, Rle, Segmentation,
};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Mask, Region};
use crate::scf::{ContextGraph, LabelEmbedding, RegionFeatures, RegionRow, RelationDescriptor};
use crate::scr::{eval_pred, eval_topology, search_area, ApplyParams, RelationRule, SceneContext, ScrOutput};

/// Closed sampling interval.
pub type Range = [f64; 2];

fn sample(rng: &mut ChaCha8Rng, [lo, hi]: Range) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub name: String,
    #[serde(default)]
    pub kind: CategoryKind,
}

/// Free-standing objects placed at random, without overlapping anything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub category: String,
    pub count: usize,
    pub width: Range,
    pub height: Range,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_ratio: Option<Range>,
}

/// Places an object under each subject so that the object covers a target
/// share of the subject, drawn from `ios`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationTemplate {
    pub subject: String,
    pub object: String,
    pub count: usize,
    pub ios: Range,
    pub subject_width: Range,
    pub subject_height: Range,
    pub object_width: Range,
    pub object_height: Range,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_ratio: Option<Range>,
}

/// Full-width stuff mask covering the rows between two fractions of the
/// image height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StuffBand {
    pub category: String,
    pub top: f64,
    pub bottom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suppression {
    pub category: String,
    pub prob: f64,
    pub score: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub drop_prob: f64,
    pub score_noise_sd: f64,
    /// Uniform perturbation of each box corner, in pixels.
    pub jitter_px: f64,
    pub base_score: Range,
    /// Per-category chance that a detection comes out with a low score.
    pub suppress: Vec<Suppression>,
    pub false_positives_per_image: usize,
    pub false_positive_score: Range,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            drop_prob: 0.0,
            score_noise_sd: 0.0,
            jitter_px: 0.0,
            base_score: [0.9, 0.9],
            suppress: Vec::new(),
            false_positives_per_image: 0,
            false_positive_score: [0.05, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub image_width: u32,
    pub image_height: u32,
    pub num_images: usize,
    pub categories: Vec<CategorySpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub relations: Vec<RelationTemplate>,
    #[serde(default)]
    pub stuff: Vec<StuffBand>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

/// Placement attempts per object before generation gives up.
pub const MAX_ATTEMPTS: usize = 200;

impl SceneSpec {
    /// Doors with a stair under each, covering 25% of the door.
    pub fn door_stair(seed: u64) -> Self {
        SceneSpec {
            image_width: 640,
            image_height: 480,
            num_images: 1,
            categories: vec![cat("door"), cat("stair")],
            objects: Vec::new(),
            relations: vec![RelationTemplate {
                subject: "door".into(),
                object: "stair".into(),
                count: 1,
                ios: [0.25, 0.25],
                subject_width: [40.0, 80.0],
                subject_height: [100.0, 200.0],
                object_width: [60.0, 120.0],
                object_height: [40.0, 80.0],
                visible_ratio: None,
            }],
            stuff: Vec::new(),
            noise: NoiseModel::default(),
            seed,
        }
    }

    /// Riders over bicycles; a share of the bicycles is score-suppressed.
    pub fn rider_bicycle(seed: u64, suppress_prob: f64) -> Self {
        SceneSpec {
            image_width: 1024,
            image_height: 512,
            num_images: 4,
            categories: vec![cat("rider"), cat("bicycle"), cat("pedestrian")],
            objects: vec![ObjectSpec {
                category: "pedestrian".into(),
                count: 1,
                width: [20.0, 40.0],
                height: [60.0, 120.0],
                visible_ratio: None,
            }],
            relations: vec![RelationTemplate {
                subject: "rider".into(),
                object: "bicycle".into(),
                count: 2,
                ios: [0.5, 0.7],
                subject_width: [30.0, 50.0],
                subject_height: [80.0, 120.0],
                object_width: [60.0, 90.0],
                object_height: [60.0, 90.0],
                visible_ratio: None,
            }],
            stuff: Vec::new(),
            noise: NoiseModel {
                base_score: [0.7, 0.95],
                jitter_px: 1.0,
                suppress: vec![Suppression {
                    category: "bicycle".into(),
                    prob: suppress_prob,
                    score: [0.1, 0.45],
                }],
                false_positives_per_image: 1,
                ..NoiseModel::default()
            },
            seed,
        }
    }
}

fn cat(name: &str) -> CategorySpec {
    CategorySpec {
        name: name.into(),
        kind: CategoryKind::Thing,
    }
}

struct Builder<'s> {
    spec: &'s SceneSpec,
    rng: ChaCha8Rng,
    annotations: Vec<Annotation>,
}

impl Builder<'_> {
    fn category_id(&self, name: &str) -> Result<u64> {
        self.spec
            .categories
            .iter()
            .position(|c| c.name == name)
            .map(|i| i as u64 + 1)
            .ok_or_else(|| Error::config("categories", format!("scene references unknown category `{name}`")))
    }

    fn free(&self, image_id: u64, b: &BBox) -> bool {
        self.annotations
            .iter()
            .filter(|a| a.image_id == image_id && a.segmentation.is_none())
            .all(|a| a.bbox.intersection_area(b) == 0.0)
    }

    fn push(&mut self, image_id: u64, category_id: u64, bbox: BBox, visible: Option<Range>) {
        let id = self.annotations.len() as u64 + 1;
        let mut a = Annotation::new(id, image_id, category_id, bbox);
        a.visible_ratio = visible.map(|r| sample(&mut self.rng, r));
        self.annotations.push(a);
    }

    fn place_pair(&mut self, image_id: u64, t: &RelationTemplate) -> Result<()> {
        let (iw, ih) = (self.spec.image_width as f64, self.spec.image_height as f64);
        let (s_cat, o_cat) = (self.category_id(&t.subject)?, self.category_id(&t.object)?);
        for _ in 0..MAX_ATTEMPTS {
            let target = sample(&mut self.rng, t.ios);
            let sw = sample(&mut self.rng, t.subject_width);
            let sh = sample(&mut self.rng, t.subject_height);
            let ow = sample(&mut self.rng, t.object_width);
            let oh = sample(&mut self.rng, t.object_height);
            // the narrower box sits horizontally inside the wider one, so the
            // overlap height alone sets the intersection
            let inter_w = ow.min(sw);
            let overlap_y = target * sw * sh / inter_w;
            if !(overlap_y > 0.0 && overlap_y < sh && overlap_y <= oh) {
                continue;
            }
            let total_w = ow.max(sw);
            let total_h = sh - overlap_y + oh;
            if total_w > iw || total_h > ih {
                continue;
            }
            let left = self.rng.random_range(0.0..=iw - total_w);
            let top = self.rng.random_range(0.0..=ih - total_h);
            let (sx, ox) = if sw >= ow {
                (left, left + self.rng.random_range(0.0..=sw - ow))
            } else {
                (left + self.rng.random_range(0.0..=ow - sw), left)
            };
            let s = BBox::new(sx, top, sw, sh);
            let o = BBox::new(ox, s.bottom() - overlap_y, ow, oh);
            let union = BBox::from_edges(left, top, left + total_w, top + total_h);
            if !self.free(image_id, &union) {
                continue;
            }
            self.push(image_id, s_cat, s, t.visible_ratio);
            self.push(image_id, o_cat, o, None);
            return Ok(());
        }
        Err(Error::Generation(format!(
            "could not place [{}, {}] in image {image_id} after {MAX_ATTEMPTS} attempts",
            t.subject, t.object
        )))
    }

    fn place_object(&mut self, image_id: u64, o: &ObjectSpec) -> Result<()> {
        let (iw, ih) = (self.spec.image_width as f64, self.spec.image_height as f64);
        let cat = self.category_id(&o.category)?;
        for _ in 0..MAX_ATTEMPTS {
            let w = sample(&mut self.rng, o.width);
            let h = sample(&mut self.rng, o.height);
            if w > iw || h > ih {
                continue;
            }
            let b = BBox::new(
                self.rng.random_range(0.0..=iw - w),
                self.rng.random_range(0.0..=ih - h),
                w,
                h,
            );
            if self.free(image_id, &b) {
                self.push(image_id, cat, b, o.visible_ratio);
                return Ok(());
            }
        }
        Err(Error::Generation(format!(
            "could not place {} in image {image_id} after {MAX_ATTEMPTS} attempts",
            o.category
        )))
    }

    fn place_band(&mut self, image_id: u64, band: &StuffBand) -> Result<()> {
        let (w, h) = (self.spec.image_width as usize, self.spec.image_height as usize);
        let cat = self.category_id(&band.category)?;
        let bbox = BBox::from_edges(0.0, band.top * h as f64, w as f64, band.bottom * h as f64);
        if !(bbox.is_valid()) {
            return Err(Error::Generation(format!("empty stuff band for {}", band.category)));
        }
        let mask = Mask::from_bbox(w, h, &bbox);
        let id = self.annotations.len() as u64 + 1;
        let mut a = Annotation::new(id, image_id, cat, bbox);
        a.segmentation = Some(Segmentation::Rle(Rle::encode(&mask)));
        self.annotations.push(a);
        Ok(())
    }
}

fn check_spec(spec: &SceneSpec) -> Result<()> {
    if spec.image_width == 0 || spec.image_height == 0 {
        return Err(Error::config("image_width", "image size must be positive"));
    }
    let n = &spec.noise;
    for (key, p) in [("noise.drop_prob", n.drop_prob)]
        .into_iter()
        .chain(n.suppress.iter().map(|s| ("noise.suppress.prob", s.prob)))
    {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(key, format!("{p} outside [0, 1]")));
        }
    }
    if !(n.score_noise_sd >= 0.0 && n.jitter_px >= 0.0) {
        return Err(Error::config("noise", "noise magnitudes must be non-negative"));
    }
    for t in &spec.relations {
        if !(t.ios[0] > 0.0 && t.ios[1] < 1.0 && t.ios[0] <= t.ios[1]) {
            return Err(Error::config(
                "relations.ios",
                format!("{:?} must lie inside (0, 1)", t.ios),
            ));
        }
    }
    Ok(())
}

/// Ground truth realizing the spec and simulated detections derived from it.
/// Identical specs (including the seed) give identical output.
pub fn generate(spec: &SceneSpec) -> Result<(Dataset, DetectionSet)> {
    check_spec(spec)?;
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        annotations: Vec::new(),
    };
    for image_id in 1..=spec.num_images as u64 {
        for band in &spec.stuff {
            b.place_band(image_id, band)?;
        }
        for t in &spec.relations {
            for _ in 0..t.count {
                b.place_pair(image_id, t)?;
            }
        }
        for o in &spec.objects {
            for _ in 0..o.count {
                b.place_object(image_id, o)?;
            }
        }
    }
    let categories: Vec<Category> = spec
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| Category {
            id: i as u64 + 1,
            name: c.name.clone(),
            kind: c.kind,
            supercategory: None,
        })
        .collect();
    let images = (1..=spec.num_images as u64)
        .map(|id| ImageRecord {
            id,
            width: spec.image_width,
            height: spec.image_height,
            file_name: format!("synth_{id:05}.png"),
        })
        .collect();
    let Builder {
        mut rng, annotations, ..
    } = b;
    let (dataset, _) = Dataset::new(categories, images, annotations)?;
    let detections = simulate_detections(&dataset, &spec.noise, &mut rng)?;
    Ok((dataset, detections))
}

fn simulate_detections(dataset: &Dataset, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> Result<DetectionSet> {
    let normal =
        Normal::new(0.0, noise.score_noise_sd).map_err(|e| Error::config("noise.score_noise_sd", e.to_string()))?;
    let things: Vec<&Category> = dataset
        .categories()
        .iter()
        .filter(|c| c.kind == CategoryKind::Thing)
        .collect();
    let mut dets = Vec::new();
    for a in dataset.annotations() {
        let category = dataset.category(a.category_id).expect("validated reference");
        if category.kind == CategoryKind::Stuff {
            continue;
        }
        if rng.random::<f64>() < noise.drop_prob {
            continue;
        }
        let image = dataset.image(a.image_id).expect("validated reference");
        let j = noise.jitter_px;
        let mut jitter = || if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
        let raw = BBox::from_edges(
            a.bbox.x + jitter(),
            a.bbox.y + jitter(),
            a.bbox.right() + jitter(),
            a.bbox.bottom() + jitter(),
        );
        let bbox = if raw.is_valid() {
            raw.clip(image.width as f64, image.height as f64).unwrap_or(a.bbox)
        } else {
            a.bbox
        };
        let suppression = noise.suppress.iter().find(|s| s.category == category.name);
        let score = match suppression {
            Some(s) if rng.random::<f64>() < s.prob => sample(rng, s.score),
            _ => sample(rng, noise.base_score) + normal.sample(rng),
        };
        dets.push(Detection {
            image_id: a.image_id,
            category_id: a.category_id,
            bbox,
            score: score.clamp(0.0, 1.0),
        });
    }
    if !things.is_empty() {
        for image in dataset.images() {
            for _ in 0..noise.false_positives_per_image {
                let (iw, ih) = (image.width as f64, image.height as f64);
                let w = rng.random_range(0.05..=0.2) * iw;
                let h = rng.random_range(0.05..=0.2) * ih;
                let bbox = BBox::new(rng.random_range(0.0..=iw - w), rng.random_range(0.0..=ih - h), w, h);
                let category = things[rng.random_range(0..things.len())];
                dets.push(Detection {
                    image_id: image.id,
                    category_id: category.id,
                    bbox,
                    score: sample(rng, noise.false_positive_score).clamp(0.0, 1.0),
                });
            }
        }
    }
    DetectionSet::new(dets, dataset)
}

fn lookup(dataset: &Dataset, name: &str) -> Result<(u64, bool)> {
    dataset
        .category_by_name(name)
        .map(|c| (c.id, c.kind == CategoryKind::Stuff))
        .ok_or_else(|| Error::config("Subject", format!("unknown category `{name}`")))
}

/// Reference SCR by exhaustive enumeration of every (rule, subject,
/// candidate) triple over the whole detection list. Slow by design; meant for
/// cross-checking `scr::apply` on small scenes.
pub fn oracle_scr(
    detections: &DetectionSet,
    rules: &[RelationRule],
    scene: &SceneContext<'_>,
    params: &ApplyParams,
) -> Result<ScrOutput> {
    let dets = detections.as_slice();
    let keep = |d: &Detection| d.score >= params.keep_threshold;
    let suppressed = |d: &Detection| d.score >= params.candidate_floor && d.score < params.keep_threshold;
    let better = |best: Option<usize>, i: usize| match best {
        None => true,
        Some(b) => dets[i].score > dets[b].score || (dets[i].score == dets[b].score && i < b),
    };
    let mut promoted = BTreeSet::new();
    for rule in rules {
        let (s_cat, _) = lookup(scene.dataset(), &rule.subject)?;
        let (o_cat, o_stuff) = lookup(scene.dataset(), &rule.object)?;
        if o_stuff {
            for image in scene.dataset().images() {
                for mask in scene.masks(image.id, o_cat) {
                    let mut best = None;
                    for (ci, c) in dets.iter().enumerate() {
                        if c.image_id != image.id || c.category_id != s_cat || !suppressed(c) {
                            continue;
                        }
                        let (rc, rm) = (Region::Box(c.bbox), Region::Mask(mask));
                        let pred_ok = match rule.pred {
                            Some(p) => eval_pred(p, &rc, &rm)?,
                            None => true,
                        };
                        let topo_ok = eval_topology(rule.topology, &rc, &rm, rule.overlap_threshold)?;
                        if pred_ok && topo_ok && better(best, ci) {
                            best = Some(ci);
                        }
                    }
                    promoted.extend(best);
                }
            }
            continue;
        }
        for (si, s) in dets.iter().enumerate() {
            if s.category_id != s_cat || !keep(s) {
                continue;
            }
            let image = scene.image(s.image_id);
            let mut best = None;
            for (ci, c) in dets.iter().enumerate() {
                if ci == si || c.image_id != s.image_id || c.category_id != o_cat || !suppressed(c) {
                    continue;
                }
                let in_zone = match search_area(rule, &s.bbox, &c.bbox, image)? {
                    Some(zone) => zone.contains_point(c.bbox.center()),
                    None => false,
                };
                let (rs, rc) = (Region::Box(s.bbox), Region::Box(c.bbox));
                let pred_ok = match rule.pred {
                    Some(p) => eval_pred(p, &rs, &rc)?,
                    None => true,
                };
                let topo_ok = eval_topology(rule.topology, &rs, &rc, rule.overlap_threshold)?;
                if in_zone && pred_ok && topo_ok && better(best, ci) {
                    best = Some(ci);
                }
            }
            promoted.extend(best);
        }
    }
    let kept: Vec<Detection> = dets
        .iter()
        .enumerate()
        .filter(|(i, d)| keep(d) || promoted.contains(i))
        .map(|(_, d)| d.clone())
        .collect();
    Ok(ScrOutput {
        detections: DetectionSet::new(kept, scene.dataset())?,
        promoted: promoted.into_iter().collect(),
    })
}

/// A two-category projection problem whose regions are separable along the
/// first feature: positive for the first category, negative for the second.
pub fn separable_problem(
    seed: u64,
    regions: usize,
    dim: usize,
) -> Result<(ContextGraph, LabelEmbedding, RegionFeatures)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories = vec!["left".to_string(), "right".to_string()];
    let graph = ContextGraph {
        categories: categories.clone(),
        descriptor: RelationDescriptor::Conditional,
        adjacency: ndarray::array![[0.0, 0.3], [0.3, 0.0]],
    };
    let embeddings = LabelEmbedding {
        categories,
        matrix: Array2::from_shape_fn((2, dim), |_| rng.random_range(-1.0..1.0)),
    };
    let rows: Vec<RegionRow> = (0..regions)
        .map(|i| {
            let label = i % 2;
            let sign = if label == 0 { 1.0 } else { -1.0 };
            let mut features: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
            features[0] = sign * rng.random_range(1.0..2.0);
            RegionRow {
                features,
                label: Some(label),
            }
        })
        .collect();
    Ok((graph, embeddings, RegionFeatures::from_rows(dim, &rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ios;

    #[test]
    fn door_stair_hits_target_ios() {
        for seed in 0..50 {
            let (ds, _) = generate(&SceneSpec::door_stair(seed)).unwrap();
            let a = ds.annotations();
            assert_eq!(a.len(), 2);
            let v = ios(&Region::Box(a[0].bbox), &Region::Box(a[1].bbox)).unwrap();
            assert!((v - 0.25).abs() <= 0.01, "seed {seed}: {v}");
            assert!(eval_pred(
                crate::scr::Predicate::Under,
                &Region::Box(a[0].bbox),
                &Region::Box(a[1].bbox)
            )
            .unwrap());
        }
    }

    #[test]
    fn full_drop_gives_no_detections() {
        let mut spec = SceneSpec::door_stair(1);
        spec.noise.drop_prob = 1.0;
        assert!(generate(&spec).unwrap().1.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SceneSpec::rider_bicycle(9, 0.3);
        let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let other = generate(&SceneSpec::rider_bicycle(10, 0.3)).unwrap();
        assert_ne!(a.1, other.1);
    }

    #[test]
    fn infeasible_placement_fails() {
        let mut spec = SceneSpec::door_stair(0);
        spec.image_width = 30;
        assert!(matches!(generate(&spec), Err(Error::Generation(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SceneSpec::rider_bicycle(3, 0.3);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
    }
}
