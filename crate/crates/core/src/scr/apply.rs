use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{decode_segmentation, CategoryKind, Dataset, Detection, DetectionSet, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{Mask, Region};

use super::relation::{eval_pred, eval_topology, search_area};
use super::rules::RelationRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplyParams {
    pub keep_threshold: f64,
    pub candidate_floor: f64,
}

impl Default for ApplyParams {
    fn default() -> Self {
        ApplyParams {
            keep_threshold: 0.5,
            candidate_floor: 0.05,
        }
    }
}

impl ApplyParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("keep_threshold", self.keep_threshold),
            ("candidate_floor", self.candidate_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("Apply.{key}"), format!("{v} outside [0, 1]")));
            }
        }
        if self.candidate_floor > self.keep_threshold {
            return Err(Error::config(
                "Apply.candidate_floor",
                format!(
                    "{} exceeds keep_threshold {}",
                    self.candidate_floor, self.keep_threshold
                ),
            ));
        }
        Ok(())
    }

    pub fn retains(&self, score: f64) -> bool {
        score >= self.keep_threshold
    }

    pub fn is_candidate(&self, score: f64) -> bool {
        score >= self.candidate_floor && score < self.keep_threshold
    }
}

/// Everything apply needs besides the detections: the category universe,
/// image sizes and the decoded stuff masks.
#[derive(Debug, Clone)]
pub struct SceneContext<'a> {
    dataset: &'a Dataset,
    masks: HashMap<(u64, u64), Vec<Mask>>,
}

impl<'a> SceneContext<'a> {
    /// Decodes every stuff annotation of `dataset`. Stuff annotations without
    /// a segmentation are rasterized from their box.
    pub fn new(dataset: &'a Dataset) -> Result<Self> {
        let mut masks: HashMap<(u64, u64), Vec<Mask>> = HashMap::new();
        let mut stuff: Vec<_> = dataset
            .annotations()
            .iter()
            .filter(|a| dataset.category(a.category_id).map(|c| c.kind) == Some(CategoryKind::Stuff))
            .collect();
        stuff.sort_by_key(|a| a.id);
        for a in stuff {
            let image = dataset.image(a.image_id).expect("validated reference");
            let mask = match a.segmentation {
                Some(_) => decode_segmentation(a, image)?,
                None => Mask::from_bbox(image.width as usize, image.height as usize, &a.bbox),
            };
            masks.entry((a.image_id, a.category_id)).or_default().push(mask);
        }
        Ok(SceneContext { dataset, masks })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    /// Stuff masks of one category in one image, in annotation-id order.
    pub fn masks(&self, image_id: u64, category_id: u64) -> &[Mask] {
        self.masks.get(&(image_id, category_id)).map_or(&[], Vec::as_slice)
    }

    pub fn image(&self, id: u64) -> &ImageRecord {
        self.dataset
            .image(id)
            .expect("detections are validated against the dataset")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScrOutput {
    pub detections: DetectionSet,
    /// Input indices of the promoted detections, ascending.
    pub promoted: Vec<usize>,
}

pub(crate) struct ResolvedRule<'r> {
    pub rule: &'r RelationRule,
    pub subject: u64,
    pub object: u64,
    pub stuff_object: bool,
    pub threshold: Option<f64>,
}

pub(crate) fn resolve<'r>(rules: &'r [RelationRule], dataset: &Dataset) -> Result<Vec<ResolvedRule<'r>>> {
    rules
        .iter()
        .map(|rule| {
            rule.validate()?;
            let lookup = |name: &str, key: &str| {
                dataset
                    .category_by_name(name)
                    .ok_or_else(|| Error::config(format!("{rule}.{key}"), format!("unknown category `{name}`")))
            };
            let subject = lookup(&rule.subject, "Subject")?;
            let object = lookup(&rule.object, "Object")?;
            if subject.kind == CategoryKind::Stuff {
                return Err(Error::config(
                    format!("{rule}.Subject"),
                    "a subject must be a thing category",
                ));
            }
            let stuff_object = object.kind == CategoryKind::Stuff;
            if stuff_object && rule.has_search_area() {
                return Err(Error::config(
                    format!("{rule}.Search_height"),
                    "search areas are not defined for stuff objects",
                ));
            }
            if rule.topology == super::Topology::Overlap && rule.overlap_threshold.is_none() {
                return Err(Error::MissingThreshold { rule: rule.to_string() });
            }
            Ok(ResolvedRule {
                rule,
                subject: subject.id,
                object: object.id,
                stuff_object,
                threshold: rule.overlap_threshold,
            })
        })
        .collect()
}

/// Whether candidate `c` satisfies `r` with respect to retained subject `s`.
pub(crate) fn thing_relation_holds(
    r: &ResolvedRule<'_>,
    s: &Detection,
    c: &Detection,
    image: &ImageRecord,
) -> Result<bool> {
    if let Some(zone) = search_area(r.rule, &s.bbox, &c.bbox, image)? {
        if !zone.contains_point(c.bbox.center()) {
            return Ok(false);
        }
    } else {
        return Ok(false);
    }
    let (rs, rc) = (Region::Box(s.bbox), Region::Box(c.bbox));
    if let Some(p) = r.rule.pred {
        if !eval_pred(p, &rs, &rc)? {
            return Ok(false);
        }
    }
    eval_topology(r.rule.topology, &rs, &rc, r.threshold)
}

/// Whether subject candidate `c` stands in relation `r` to a stuff mask.
pub(crate) fn stuff_relation_holds(r: &ResolvedRule<'_>, c: &Detection, mask: &Mask) -> Result<bool> {
    let (rc, rm) = (Region::Box(c.bbox), Region::Mask(mask));
    if let Some(p) = r.rule.pred {
        if !eval_pred(p, &rc, &rm)? {
            return Ok(false);
        }
    }
    eval_topology(r.rule.topology, &rc, &rm, r.threshold)
}

/// Keeps every detection at or above `keep_threshold` and promotes
/// suppressed candidates that fit the rules.
///
/// For a thing object, each retained subject promotes at most one object
/// candidate: the highest-scoring one whose center lies in the rule's search
/// area and that satisfies predicate and topology. For a stuff object the
/// mask is the anchor and the highest-scoring subject candidate standing in
/// the relation to it is promoted. Ties go to the earlier detection. Nothing
/// is removed or re-scored, and promoted detections never act as subjects.
pub fn apply(
    detections: &DetectionSet,
    rules: &[RelationRule],
    scene: &SceneContext<'_>,
    params: &ApplyParams,
) -> Result<ScrOutput> {
    params.validate()?;
    let rules = resolve(rules, scene.dataset())?;
    let dets = detections.as_slice();
    let mut promoted = BTreeSet::new();

    let mut start = 0;
    while start < dets.len() {
        let image_id = dets[start].image_id;
        let end = start + dets[start..].iter().take_while(|d| d.image_id == image_id).count();
        let image = scene.image(image_id);
        let range = start..end;

        let mut retained: HashMap<u64, Vec<usize>> = HashMap::new();
        let mut candidates: HashMap<u64, Vec<usize>> = HashMap::new();
        for i in range.clone() {
            let d = &dets[i];
            if params.retains(d.score) {
                retained.entry(d.category_id).or_default().push(i);
            } else if params.is_candidate(d.score) {
                candidates.entry(d.category_id).or_default().push(i);
            }
        }
        let pick = |best: Option<usize>, i: usize| match best {
            Some(b) if dets[b].score >= dets[i].score => Some(b),
            _ => Some(i),
        };

        for r in &rules {
            let pool = candidates.get(&if r.stuff_object { r.subject } else { r.object });
            let Some(pool) = pool else { continue };
            if r.stuff_object {
                for mask in scene.masks(image_id, r.object) {
                    let mut best = None;
                    for &c in pool {
                        if stuff_relation_holds(r, &dets[c], mask)? {
                            best = pick(best, c);
                        }
                    }
                    promoted.extend(best);
                }
            } else {
                for &s in retained.get(&r.subject).map_or(&[][..], Vec::as_slice) {
                    let mut best = None;
                    for &c in pool {
                        if thing_relation_holds(r, &dets[s], &dets[c], image)? {
                            best = pick(best, c);
                        }
                    }
                    promoted.extend(best);
                }
            }
        }
        start = end;
    }

    let kept = detections.retain_indices(|i| params.retains(dets[i].score) || promoted.contains(&i));
    Ok(ScrOutput {
        detections: kept,
        promoted: promoted.into_iter().collect(),
    })
}
