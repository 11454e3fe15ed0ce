use std::collections::HashMap;

use crate::dataset::{decode_segmentation, Annotation, CategoryKind, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{ios, Mask, Region};

use super::relation::eval_pred;
use super::rules::{RelationRule, Topology};

pub const DEFAULT_PERCENTILE: f64 = 0.05;

/// Nearest-rank percentile of an ascending sample: `sorted[⌈p·n⌉ − 1]`, with
/// the rank clamped to `1..=n`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

struct GroundTruth<'a> {
    dataset: &'a Dataset,
    masks: HashMap<u64, Mask>,
}

impl<'a> GroundTruth<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        GroundTruth {
            dataset,
            masks: HashMap::new(),
        }
    }

    fn is_stuff(&self, ann: &Annotation) -> bool {
        self.dataset.category(ann.category_id).map(|c| c.kind) == Some(CategoryKind::Stuff)
    }

    fn load_mask(&mut self, ann: &Annotation) -> Result<()> {
        if self.is_stuff(ann) && ann.segmentation.is_some() && !self.masks.contains_key(&ann.id) {
            let image = self.dataset.image(ann.image_id).expect("validated reference");
            self.masks.insert(ann.id, decode_segmentation(ann, image)?);
        }
        Ok(())
    }

    /// Stuff annotations with a segmentation take part as masks, everything
    /// else as boxes.
    fn region(&self, ann: &Annotation) -> Region<'_> {
        match self.masks.get(&ann.id) {
            Some(m) => Region::Mask(m),
            None => Region::Box(ann.bbox),
        }
    }
}

fn category_id(dataset: &Dataset, rule: &RelationRule, name: &str) -> Result<u64> {
    dataset
        .category_by_name(name)
        .map(|c| c.id)
        .ok_or_else(|| Error::config(format!("{rule}"), format!("unknown category `{name}`")))
}

/// IoS values of every same-image ground-truth pair matching the rule's
/// categories with positive overlap and a satisfied predicate. Twin labels and
/// ignore regions are skipped; when the rule names an occlusion subset, only
/// subjects inside that subset are sampled. Sorted ascending.
pub fn collect_ios_samples(dataset: &Dataset, rule: &RelationRule) -> Result<Vec<f64>> {
    let mut gt = GroundTruth::new(dataset);
    collect(&mut gt, rule)
}

fn collect(gt: &mut GroundTruth<'_>, rule: &RelationRule) -> Result<Vec<f64>> {
    let dataset = gt.dataset;
    let s_cat = category_id(dataset, rule, &rule.subject)?;
    let o_cat = category_id(dataset, rule, &rule.object)?;
    let subset = rule.occlusion.map(|o| o.subset());

    let usable = |a: &&Annotation| a.lcr_source_id.is_none() && !a.ignore;
    let mut by_image: HashMap<u64, (Vec<&Annotation>, Vec<&Annotation>)> = HashMap::new();
    for a in dataset.annotations().iter().filter(usable) {
        if a.category_id == s_cat && subset.as_ref().is_none_or(|s| s.admits(a)) {
            by_image.entry(a.image_id).or_default().0.push(a);
        }
        if a.category_id == o_cat {
            by_image.entry(a.image_id).or_default().1.push(a);
        }
    }

    let mut samples = Vec::new();
    let mut images: Vec<_> = by_image.into_iter().collect();
    images.sort_by_key(|(id, _)| *id);
    for (_, (subjects, objects)) in images {
        if subjects.is_empty() {
            continue;
        }
        for a in subjects.iter().chain(&objects) {
            gt.load_mask(a)?;
        }
        for s in &subjects {
            for o in &objects {
                if s.id == o.id {
                    continue;
                }
                let (rs, ro) = (gt.region(s), gt.region(o));
                let v = ios(&rs, &ro)?;
                if v <= 0.0 {
                    continue;
                }
                if let Some(p) = rule.pred {
                    if !eval_pred(p, &rs, &ro)? {
                        continue;
                    }
                }
                samples.push(v);
            }
        }
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples)
}

/// Fills in missing overlap thresholds from ground truth using the
/// nearest-rank `percentile` of the observed IoS sample. Rules that already
/// carry a threshold, and rules with other topologies, pass through
/// untouched.
pub fn derive_thresholds(dataset: &Dataset, rules: &[RelationRule], percentile: f64) -> Result<Vec<RelationRule>> {
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::config("Percentile", format!("{percentile} outside [0, 1]")));
    }
    let mut gt = GroundTruth::new(dataset);
    let mut out = Vec::with_capacity(rules.len());
    let mut unresolved = Vec::new();
    for rule in rules {
        let mut rule = rule.clone();
        if rule.topology == Topology::Overlap && rule.overlap_threshold.is_none() {
            let samples = collect(&mut gt, &rule)?;
            match nearest_rank(&samples, percentile) {
                Some(t) => {
                    log::info!("{rule}: threshold {t} from {} ground-truth pairs", samples.len());
                    rule.overlap_threshold = Some(t);
                }
                None => unresolved.push(rule.to_string()),
            }
        }
        out.push(rule);
    }
    if !unresolved.is_empty() {
        return Err(Error::UnresolvedThreshold { rules: unresolved });
    }
    Ok(out)
}
