//! Detection evaluation: greedy matching at an IoU threshold, all-point AP,
//! precision/recall at a score cutoff and the log-average miss rate over
//! pedestrian-style visibility subsets.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, CategoryKind, Dataset, Detection, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::iou;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Clamp applied to miss rates before taking logs.
pub const MISS_RATE_FLOOR: f64 = 1e-10;

/// Ground-truth slice by box height, visible ratio and optionally area.
///
/// The visibility range is half-open `[lo, hi)` unless `hi` is 1, in which
/// case it is closed, so reasonable and heavy partition the visible ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSpec {
    pub min_height: f64,
    pub visibility: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_area: Option<f64>,
}

impl SubsetSpec {
    pub fn reasonable() -> Self {
        SubsetSpec {
            min_height: 50.0,
            visibility: [0.65, 1.0],
            max_area: None,
        }
    }

    pub fn heavy() -> Self {
        SubsetSpec {
            min_height: 50.0,
            visibility: [0.0, 0.65],
            max_area: None,
        }
    }

    pub fn all() -> Self {
        SubsetSpec {
            min_height: 0.0,
            visibility: [0.0, 1.0],
            max_area: None,
        }
    }

    /// Objects below 32×32 px.
    pub fn small() -> Self {
        SubsetSpec {
            max_area: Some(crate::lcr::COCO_SMALL_AREA),
            ..SubsetSpec::all()
        }
    }

    /// A missing visible ratio counts as fully visible.
    pub fn admits(&self, ann: &Annotation) -> bool {
        let v = ann.visible_ratio.unwrap_or(1.0);
        let [lo, hi] = self.visibility;
        let in_range = v >= lo && (v < hi || (hi >= 1.0 && v <= hi));
        ann.bbox.h >= self.min_height && in_range && self.max_area.is_none_or(|m| ann.bbox.area() < m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Reasonable,
    Heavy,
    Small,
}

impl Subset {
    pub fn spec(&self) -> SubsetSpec {
        match self {
            Subset::All => SubsetSpec::all(),
            Subset::Reasonable => SubsetSpec::reasonable(),
            Subset::Heavy => SubsetSpec::heavy(),
            Subset::Small => SubsetSpec::small(),
        }
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Subset::All),
            "reasonable" => Ok(Subset::Reasonable),
            "heavy" => Ok(Subset::Heavy),
            "small" => Ok(Subset::Small),
            other => Err(Error::config("subset", format!("unknown subset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    TruePositive,
    FalsePositive,
    /// Hit an object whose LCR group was already matched; not scored.
    Duplicate,
    /// Hit an ignore region; not scored.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// Position of the detection in its DetectionSet.
    pub detection: usize,
    pub image_id: u64,
    pub score: f64,
    pub kind: MatchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_id: Option<u64>,
    pub iou: f64,
}

/// Matches of one category, in descending score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLog {
    pub category_id: u64,
    /// Number of distinct non-ignored ground-truth objects (twin groups count once).
    pub npos: usize,
    pub num_images: usize,
    pub records: Vec<MatchRecord>,
}

impl MatchLog {
    pub fn count(&self, kind: MatchKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}

/// Greedy matching of one category's detections against ground truth.
///
/// Detections are visited in descending score, ties in input order. A
/// detection takes the unmatched, non-ignored object with the best IoU at or
/// above `iou_threshold`; matching any member of an LCR group consumes the
/// whole group. A detection that only reaches an already consumed twin group
/// is a duplicate, one that only reaches ignore regions is ignored, anything
/// else is a false positive.
///
/// `ignore` marks additional ground truth as ignore regions; an annotation
/// inherits the decision of its group's source so twins stay consistent.
pub fn match_category(
    dataset: &Dataset,
    detections: &DetectionSet,
    category_id: u64,
    iou_threshold: f64,
    ignore: impl Fn(&Annotation) -> bool,
) -> MatchLog {
    let mut gts: HashMap<u64, Vec<(&Annotation, bool)>> = HashMap::new();
    let mut group_size: HashMap<u64, usize> = HashMap::new();
    let mut positives = HashSet::new();
    for a in dataset.annotations().iter().filter(|a| a.category_id == category_id) {
        let source = dataset.annotation(a.group_id()).unwrap_or(a);
        let ignored = source.ignore || a.ignore || ignore(source);
        if !ignored {
            positives.insert(a.group_id());
        }
        *group_size.entry(a.group_id()).or_default() += 1;
        gts.entry(a.image_id).or_default().push((a, ignored));
    }

    let mut order: Vec<(usize, &Detection)> = detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.category_id == category_id)
        .collect();
    order.sort_by(|(i, a), (j, b)| b.score.total_cmp(&a.score).then(i.cmp(j)));

    let mut consumed = HashSet::new();
    let mut records = Vec::with_capacity(order.len());
    for (idx, d) in order {
        let mut best: Option<(&Annotation, f64)> = None;
        let mut duplicate: Option<(&Annotation, f64)> = None;
        let mut ignored_hit: Option<(&Annotation, f64)> = None;
        for &(g, ignored) in gts.get(&d.image_id).map_or(&[][..], Vec::as_slice) {
            let v = iou(&d.bbox, &g.bbox);
            if v < iou_threshold {
                continue;
            }
            let slot = if ignored {
                &mut ignored_hit
            } else if consumed.contains(&g.group_id()) {
                if group_size[&g.group_id()] < 2 {
                    continue;
                }
                &mut duplicate
            } else {
                &mut best
            };
            if slot.is_none_or(|(_, b)| v > b) {
                *slot = Some((g, v));
            }
        }
        let (kind, hit) = if let Some(hit) = best {
            consumed.insert(hit.0.group_id());
            (MatchKind::TruePositive, Some(hit))
        } else if let Some(hit) = duplicate {
            (MatchKind::Duplicate, Some(hit))
        } else if let Some(hit) = ignored_hit {
            (MatchKind::Ignored, Some(hit))
        } else {
            (MatchKind::FalsePositive, None)
        };
        records.push(MatchRecord {
            detection: idx,
            image_id: d.image_id,
            score: d.score,
            kind,
            gt_id: hit.map(|(g, _)| g.id),
            iou: hit.map_or(0.0, |(_, v)| v),
        });
    }
    MatchLog {
        category_id,
        npos: positives.len(),
        num_images: dataset.images().len(),
        records,
    }
}

fn scored(log: &MatchLog) -> impl Iterator<Item = &MatchRecord> {
    log.records
        .iter()
        .filter(|r| matches!(r.kind, MatchKind::TruePositive | MatchKind::FalsePositive))
}

/// All-point interpolated AP: the area under the precision envelope.
/// `None` when the category has no ground truth.
pub fn average_precision(log: &MatchLog) -> Option<f64> {
    if log.npos == 0 {
        return None;
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    for r in scored(log) {
        match r.kind {
            MatchKind::TruePositive => tp += 1,
            _ => fp += 1,
        }
        recall.push(tp as f64 / log.npos as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let ap = recall
        .windows(2)
        .zip(&precision[1..])
        .map(|(w, p)| (w[1] - w[0]) * p)
        .sum::<f64>();
    Some(ap)
}

/// Precision and recall of the detections scoring at least `threshold`.
/// Precision is 0 without detections; recall is `None` without ground truth.
pub fn precision_recall(log: &MatchLog, threshold: f64) -> (f64, Option<f64>) {
    let (mut tp, mut n) = (0usize, 0usize);
    for r in scored(log).filter(|r| r.score >= threshold) {
        n += 1;
        if r.kind == MatchKind::TruePositive {
            tp += 1;
        }
    }
    let precision = if n == 0 { 0.0 } else { tp as f64 / n as f64 };
    let recall = (log.npos > 0).then(|| tp as f64 / log.npos as f64);
    (precision, recall)
}

/// The nine FPPI reference points, log-spaced over [1e-2, 1].
pub fn fppi_references() -> [f64; 9] {
    std::array::from_fn(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / 8.0))
}

/// Miss-rate/FPPI operating points after each scored detection.
pub fn miss_rate_curve(log: &MatchLog) -> Vec<(f64, f64)> {
    let (mut tp, mut fp) = (0usize, 0usize);
    let images = log.num_images.max(1) as f64;
    scored(log)
        .map(|r| {
            match r.kind {
                MatchKind::TruePositive => tp += 1,
                _ => fp += 1,
            }
            (fp as f64 / images, 1.0 - tp as f64 / log.npos as f64)
        })
        .collect()
}

/// Log-average miss rate over the nine FPPI references.
///
/// Each reference takes the miss rate of the last operating point whose FPPI
/// does not exceed it. References below the first achieved FPPI take the miss
/// rate of that first operating point; without any detections the miss rate
/// is 1 throughout.
pub fn log_avg_miss_rate(log: &MatchLog) -> Result<f64> {
    if log.npos == 0 {
        return Err(Error::UndefinedMetric(format!(
            "no ground truth of category {} in the evaluated subset",
            log.category_id
        )));
    }
    let curve = miss_rate_curve(log);
    let refs = fppi_references();
    let mean_log = refs
        .iter()
        .map(|&r| {
            let mr = match curve.iter().rposition(|&(f, _)| f <= r) {
                Some(k) => curve[k].1,
                None => curve.first().map_or(1.0, |p| p.1),
            };
            mr.max(MISS_RATE_FLOOR).ln()
        })
        .sum::<f64>()
        / refs.len() as f64;
    Ok(mean_log.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub iou: f64,
    pub score_threshold: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            iou: 0.5,
            score_threshold: 0.5,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou > 0.0 && self.iou <= 1.0) {
            return Err(Error::config("EVAL.iou", format!("{} outside (0, 1]", self.iou)));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::config(
                "EVAL.score_threshold",
                format!("{} outside [0, 1]", self.score_threshold),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category_id: u64,
    pub name: String,
    pub num_gt: usize,
    pub num_detections: usize,
    pub precision: f64,
    pub recall: Option<f64>,
    /// `None` when the category has no ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissRateReport {
    pub subset: Subset,
    pub category: String,
    pub num_gt: usize,
    /// `None` when the subset holds no ground truth of this category.
    pub mr2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub iou_threshold: f64,
    pub score_threshold: f64,
    pub categories: Vec<CategoryReport>,
    /// Mean AP over the categories that have ground truth.
    pub map: Option<f64>,
    pub miss_rates: Vec<MissRateReport>,
    pub matches: Vec<MatchLog>,
}

impl EvalReport {
    pub fn category(&self, name: &str) -> Option<&CategoryReport> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn miss_rate(&self, subset: Subset, category: &str) -> Option<f64> {
        self.miss_rates
            .iter()
            .find(|m| m.subset == subset && m.category == category)
            .and_then(|m| m.mr2)
    }
}

/// Evaluates every thing category of `dataset` and the requested MR⁻² subsets.
pub fn evaluate(
    dataset: &Dataset,
    detections: &DetectionSet,
    params: &EvalParams,
    subsets: &[Subset],
) -> Result<EvalReport> {
    params.validate()?;
    let things: Vec<_> = dataset
        .categories()
        .iter()
        .filter(|c| c.kind == CategoryKind::Thing)
        .collect();
    let mut categories = Vec::new();
    let mut matches = Vec::new();
    for c in &things {
        let log = match_category(dataset, detections, c.id, params.iou, |_| false);
        let (precision, recall) = precision_recall(&log, params.score_threshold);
        categories.push(CategoryReport {
            category_id: c.id,
            name: c.name.clone(),
            num_gt: log.npos,
            num_detections: detections.iter().filter(|d| d.category_id == c.id).count(),
            precision,
            recall,
            ap: average_precision(&log),
        });
        matches.push(log);
    }
    let aps: Vec<f64> = categories.iter().filter_map(|c| c.ap).collect();
    let map = (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64);

    let mut miss_rates = Vec::new();
    for &subset in subsets {
        let spec = subset.spec();
        for c in &things {
            let log = match_category(dataset, detections, c.id, params.iou, |a| !spec.admits(a));
            let mr2 = match log_avg_miss_rate(&log) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            miss_rates.push(MissRateReport {
                subset,
                category: c.name.clone(),
                num_gt: log.npos,
                mr2,
            });
        }
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        iou_threshold: params.iou,
        score_threshold: params.score_threshold,
        categories,
        map,
        miss_rates,
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Category, ImageRecord};
    use crate::geometry::BBox;

    fn dataset(images: u64, anns: Vec<Annotation>) -> Dataset {
        let cats = vec![Category {
            id: 1,
            name: "pedestrian".into(),
            kind: CategoryKind::Thing,
            supercategory: None,
        }];
        let imgs = (1..=images)
            .map(|id| ImageRecord {
                id,
                width: 1000,
                height: 1000,
                file_name: String::new(),
            })
            .collect();
        Dataset::new(cats, imgs, anns).unwrap().0
    }

    fn det(image_id: u64, bbox: BBox, score: f64) -> Detection {
        Detection {
            image_id,
            category_id: 1,
            bbox,
            score,
        }
    }

    fn boxed(i: f64) -> BBox {
        BBox::new(100.0 * i, 0.0, 50.0, 100.0)
    }

    fn log_of(ds: &Dataset, dets: Vec<Detection>) -> MatchLog {
        let set = DetectionSet::new(dets, ds).unwrap();
        match_category(ds, &set, 1, 0.5, |_| false)
    }

    #[test]
    fn single_match() {
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, BBox::new(0.0, 0.0, 10.0, 10.0))]);
        // iou = 80 / 120
        let log = log_of(&ds, vec![det(1, BBox::new(2.0, 0.0, 10.0, 10.0), 0.9)]);
        assert_eq!(log.count(MatchKind::TruePositive), 1);
        assert_eq!(log.count(MatchKind::FalsePositive), 0);
        assert_eq!(average_precision(&log), Some(1.0));
    }

    #[test]
    fn below_threshold_is_false_positive() {
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, BBox::new(0.0, 0.0, 10.0, 10.0))]);
        // shifted by 6: iou = 40 / 160
        let log = log_of(&ds, vec![det(1, BBox::new(6.0, 0.0, 10.0, 10.0), 0.9)]);
        assert_eq!(log.count(MatchKind::FalsePositive), 1);
        assert_eq!(average_precision(&log), Some(0.0));
    }

    #[test]
    fn worked_ap_example() {
        let ds = dataset(
            1,
            vec![
                Annotation::new(1, 1, 1, boxed(0.0)),
                Annotation::new(2, 1, 1, boxed(1.0)),
            ],
        );
        let log = log_of(
            &ds,
            vec![
                det(1, boxed(0.0), 0.9),
                det(1, boxed(5.0), 0.8),
                det(1, boxed(1.0), 0.7),
            ],
        );
        let ap = average_precision(&log).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12, "{ap}");
    }

    #[test]
    fn twin_group_counts_once() {
        let gt = BBox::new(100.0, 100.0, 20.0, 20.0);
        let mut twin = Annotation::new(2, 1, 1, BBox::new(98.5, 98.5, 23.0, 23.0));
        twin.lcr_source_id = Some(1);
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, gt), twin]);
        let log = log_of(
            &ds,
            vec![det(1, gt, 0.9), det(1, BBox::new(98.5, 98.5, 23.0, 23.0), 0.8)],
        );
        assert_eq!(log.npos, 1);
        let kinds: Vec<_> = log.records.iter().map(|r| r.kind).collect();
        assert_eq!(kinds, vec![MatchKind::TruePositive, MatchKind::Duplicate]);
        assert_eq!(average_precision(&log), Some(1.0));
    }

    #[test]
    fn repeated_detection_of_single_object_is_false_positive() {
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, boxed(0.0))]);
        let log = log_of(&ds, vec![det(1, boxed(0.0), 0.9), det(1, boxed(0.0), 0.8)]);
        assert_eq!(log.count(MatchKind::FalsePositive), 1);
    }

    #[test]
    fn ignore_regions_are_neutral() {
        let mut ign = Annotation::new(2, 1, 1, boxed(1.0));
        ign.ignore = true;
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, boxed(0.0)), ign]);
        let log = log_of(&ds, vec![det(1, boxed(0.0), 0.9), det(1, boxed(1.0), 0.8)]);
        assert_eq!(log.npos, 1);
        assert_eq!(log.count(MatchKind::Ignored), 1);
        assert_eq!(precision_recall(&log, 0.5), (1.0, Some(1.0)));
    }

    #[test]
    fn no_ground_truth_means_no_ap() {
        let ds = dataset(1, vec![]);
        let log = log_of(&ds, vec![det(1, boxed(0.0), 0.9)]);
        assert_eq!(average_precision(&log), None);
        assert!(matches!(log_avg_miss_rate(&log), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn perfect_detector_miss_rate_is_floor() {
        let ds = dataset(
            2,
            vec![
                Annotation::new(1, 1, 1, boxed(0.0)),
                Annotation::new(2, 2, 1, boxed(0.0)),
            ],
        );
        let log = log_of(&ds, vec![det(1, boxed(0.0), 0.9), det(2, boxed(0.0), 0.8)]);
        let mr = log_avg_miss_rate(&log).unwrap();
        assert!((mr - MISS_RATE_FLOOR).abs() < 1e-15, "{mr}");
    }

    #[test]
    fn constant_half_miss_rate() {
        // 100 images, two objects in the first; one found, then 200 false positives
        let ds = dataset(
            100,
            vec![
                Annotation::new(1, 1, 1, boxed(0.0)),
                Annotation::new(2, 1, 1, boxed(1.0)),
            ],
        );
        let mut dets = vec![det(1, boxed(0.0), 0.99)];
        for i in 0..200 {
            dets.push(det(1 + i % 100, boxed(5.0), 0.5));
        }
        let mr = log_avg_miss_rate(&log_of(&ds, dets)).unwrap();
        assert!((mr - 0.5).abs() < 1e-12, "{mr}");
    }

    #[test]
    fn no_detections_miss_everything() {
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, boxed(0.0))]);
        assert_eq!(log_avg_miss_rate(&log_of(&ds, vec![])).unwrap(), 1.0);
    }

    #[test]
    fn fppi_reference_grid() {
        let r = fppi_references();
        assert!((r[0] - 0.01).abs() < 1e-15 && (r[8] - 1.0).abs() < 1e-15);
        assert!((r[4] - 0.1).abs() < 1e-15);
    }

    fn person(id: u64, h: f64, v: Option<f64>) -> Annotation {
        let mut a = Annotation::new(id, 1, 1, BBox::new(0.0, 0.0, h / 2.0, h));
        a.visible_ratio = v;
        a
    }

    #[test]
    fn subset_bounds() {
        let gts = [
            person(1, 80.0, Some(0.9)),
            person(2, 50.0, Some(0.65)),
            person(3, 49.9, Some(0.9)),
            person(4, 80.0, Some(0.64)),
            person(5, 80.0, Some(0.0)),
            person(6, 80.0, Some(1.0)),
            person(7, 80.0, None),
        ];
        let pick = |s: SubsetSpec| gts.iter().filter(|a| s.admits(a)).map(|a| a.id).collect::<Vec<_>>();
        assert_eq!(pick(SubsetSpec::reasonable()), vec![1, 2, 6, 7]);
        assert_eq!(pick(SubsetSpec::heavy()), vec![4, 5]);
        assert_eq!(pick(SubsetSpec::all()).len(), 7);
    }

    #[test]
    fn evaluate_report_shape() {
        let ds = dataset(1, vec![Annotation::new(1, 1, 1, boxed(0.0))]);
        let set = DetectionSet::new(vec![det(1, boxed(0.0), 0.9)], &ds).unwrap();
        let report = evaluate(&ds, &set, &EvalParams::default(), &[Subset::Reasonable, Subset::Heavy]).unwrap();
        assert_eq!(report.schema_version, 1);
        assert_eq!(report.map, Some(1.0));
        assert!((report.miss_rate(Subset::Reasonable, "pedestrian").unwrap() - MISS_RATE_FLOOR).abs() < 1e-15);
        assert_eq!(report.miss_rate(Subset::Heavy, "pedestrian"), None);
        let text = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
