//! COCO-layout ground truth, detection results and stuff segmentations.
//!
//! Annotation files follow the COCO object layout (`images`, `annotations`,
//! `categories`, `bbox = [x, y, w, h]`) with two optional extension fields on
//! annotations: `visible_ratio` and `lcr_source_id`. Categories may carry a
//! `kind` of `"thing"` (default) or `"stuff"`. Unknown top-level keys such as
//! `info` and `licenses` are ignored.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Mask};
use crate::json;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryKind {
    #[default]
    Thing,
    Stuff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    #[serde(default)]
    pub kind: CategoryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
}

impl ImageRecord {
    /// Pixel count of the image.
    pub fn resolution(&self) -> f64 {
        self.width as f64 * self.height as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Uncompressed(Vec<u64>),
    /// LEB128-style compressed string; recognised only to report it clearly.
    Compressed(String),
}

/// Run-length encoding in COCO order: column-major, runs alternate starting
/// with unset pixels. `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rle {
    pub counts: RleCounts,
    pub size: [usize; 2],
}

impl Rle {
    pub fn encode(mask: &Mask) -> Rle {
        let (w, h) = (mask.width(), mask.height());
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for x in 0..w {
            for y in 0..h {
                if mask.get(x, y) != current {
                    counts.push(run);
                    run = 0;
                    current = !current;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle {
            counts: RleCounts::Uncompressed(counts),
            size: [h, w],
        }
    }

    pub fn decode(&self, width: usize, height: usize) -> Result<Mask> {
        let counts = match &self.counts {
            RleCounts::Uncompressed(c) => c,
            RleCounts::Compressed(_) => return Err(Error::Decode("compressed RLE strings are not supported".into())),
        };
        if self.size != [height, width] {
            return Err(Error::Decode(format!(
                "RLE size {:?} does not match image [{height}, {width}]",
                self.size
            )));
        }
        let total: u64 = counts.iter().sum();
        if total != (width * height) as u64 {
            return Err(Error::Decode(format!(
                "RLE counts sum to {total}, expected {}",
                width * height
            )));
        }
        let mut mask = Mask::new(width, height);
        let mut index = 0usize;
        for (run, &len) in counts.iter().enumerate() {
            let set = run % 2 == 1;
            for i in index..index + len as usize {
                if set {
                    mask.set(i / height, i % height, true);
                }
            }
            index += len as usize;
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    /// Each polygon is a flat `[x1, y1, x2, y2, ...]` list.
    Polygons(Vec<Vec<f64>>),
    Rle(Rle),
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Segmentation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub ignore: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lcr_source_id: Option<u64>,
}

impl Annotation {
    pub fn new(id: u64, image_id: u64, category_id: u64, bbox: BBox) -> Self {
        Annotation {
            id,
            image_id,
            category_id,
            bbox,
            segmentation: None,
            visible_ratio: None,
            ignore: false,
            lcr_source_id: None,
        }
    }

    /// The id shared by an annotation and all its enlarged twins.
    pub fn group_id(&self) -> u64 {
        self.lcr_source_id.unwrap_or(self.id)
    }
}

/// Non-fatal issue found while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning {
    pub annotation_id: u64,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "annotation {}: {}", self.annotation_id, self.message)
    }
}

#[derive(Deserialize)]
struct DatasetFile {
    images: Vec<ImageRecord>,
    annotations: Vec<Annotation>,
    categories: Vec<Category>,
}

#[derive(Serialize)]
struct DatasetFileRef<'a> {
    images: &'a [ImageRecord],
    annotations: &'a [Annotation],
    categories: &'a [Category],
}

/// Validated ground truth with referential integrity across all ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    categories: Vec<Category>,
    images: Vec<ImageRecord>,
    annotations: Vec<Annotation>,
    category_index: HashMap<u64, usize>,
    image_index: HashMap<u64, usize>,
    annotation_index: HashMap<u64, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.categories == other.categories && self.images == other.images && self.annotations == other.annotations
    }
}

impl Serialize for Dataset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetFileRef {
            images: &self.images,
            annotations: &self.annotations,
            categories: &self.categories,
        }
        .serialize(serializer)
    }
}

fn unique_index<T>(items: &[T], id: impl Fn(&T) -> u64, what: &str) -> Result<HashMap<u64, usize>> {
    let mut index = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if index.insert(id(item), i).is_some() {
            return Err(Error::InvalidData(format!("duplicate {what} id {}", id(item))));
        }
    }
    Ok(index)
}

impl Dataset {
    /// Validates the parts, clipping out-of-bounds boxes to their image.
    pub fn new(
        categories: Vec<Category>,
        images: Vec<ImageRecord>,
        mut annotations: Vec<Annotation>,
    ) -> Result<(Dataset, Vec<Warning>)> {
        let category_index = unique_index(&categories, |c| c.id, "category")?;
        let mut names = HashSet::new();
        for c in &categories {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate category name `{}`", c.name)));
            }
        }
        let image_index = unique_index(&images, |i| i.id, "image")?;
        for img in &images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::InvalidData(format!("image {} has zero size", img.id)));
            }
        }
        let annotation_index = unique_index(&annotations, |a| a.id, "annotation")?;

        let mut warnings = Vec::new();
        for ann in &mut annotations {
            if !category_index.contains_key(&ann.category_id) {
                return Err(Error::DanglingReference {
                    kind: "category",
                    id: ann.category_id,
                });
            }
            let Some(&img) = image_index.get(&ann.image_id) else {
                return Err(Error::DanglingReference {
                    kind: "image",
                    id: ann.image_id,
                });
            };
            let img = &images[img];
            if !ann.bbox.is_valid() {
                return Err(Error::InvalidData(format!(
                    "annotation {} has invalid bbox {:?}",
                    ann.id, ann.bbox
                )));
            }
            match ann.bbox.clip(img.width as f64, img.height as f64) {
                None => {
                    return Err(Error::InvalidData(format!(
                        "annotation {} bbox lies outside image {}",
                        ann.id, img.id
                    )))
                }
                Some(clipped) if clipped != ann.bbox => {
                    warnings.push(Warning {
                        annotation_id: ann.id,
                        message: format!(
                            "bbox {:?} clipped to {:?}",
                            <[f64; 4]>::from(ann.bbox),
                            <[f64; 4]>::from(clipped)
                        ),
                    });
                    ann.bbox = clipped;
                }
                Some(_) => {}
            }
            if let Some(v) = ann.visible_ratio {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Range {
                        what: format!("annotation {} visible_ratio", ann.id),
                        value: v,
                    });
                }
            }
        }
        for ann in &annotations {
            if let Some(src) = ann.lcr_source_id {
                let Some(&si) = annotation_index.get(&src) else {
                    return Err(Error::DanglingReference {
                        kind: "lcr source annotation",
                        id: src,
                    });
                };
                let source = &annotations[si];
                if source.image_id != ann.image_id || source.category_id != ann.category_id || source.id == ann.id {
                    return Err(Error::InvalidData(format!(
                        "annotation {} links to lcr source {} from another image or category",
                        ann.id, src
                    )));
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok((
            Dataset {
                categories,
                images,
                annotations,
                category_index,
                image_index,
                annotation_index,
            },
            warnings,
        ))
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<(Dataset, Vec<Warning>)> {
        let file: DatasetFile = json::from_str(text, origin)?;
        Dataset::new(file.categories, file.images, file.annotations)
    }

    /// Same categories and images with a replacement annotation list.
    pub fn with_annotations(&self, annotations: Vec<Annotation>) -> Result<Dataset> {
        Ok(Dataset::new(self.categories.clone(), self.images.clone(), annotations)?.0)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn category(&self, id: u64) -> Option<&Category> {
        self.category_index.get(&id).map(|&i| &self.categories[i])
    }

    pub fn category_by_name(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.image_index.get(&id).map(|&i| &self.images[i])
    }

    pub fn annotation(&self, id: u64) -> Option<&Annotation> {
        self.annotation_index.get(&id).map(|&i| &self.annotations[i])
    }

    pub fn to_json(&self) -> String {
        json::to_string(self)
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<(Dataset, Vec<Warning>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json_str(&text, &path.display().to_string())
}

pub fn save_annotations(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    json::write(path, dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

/// Detections validated against a dataset and ordered by
/// `(image_id, descending score)`; equal scores keep input order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct DetectionSet {
    detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(mut detections: Vec<Detection>, dataset: &Dataset) -> Result<DetectionSet> {
        for d in &detections {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::Range {
                    what: "detection score".into(),
                    value: d.score,
                });
            }
            if dataset.image(d.image_id).is_none() {
                return Err(Error::DanglingReference {
                    kind: "image",
                    id: d.image_id,
                });
            }
            if dataset.category(d.category_id).is_none() {
                return Err(Error::DanglingReference {
                    kind: "category",
                    id: d.category_id,
                });
            }
            if !d.bbox.is_valid() {
                return Err(Error::InvalidData(format!("detection has invalid bbox {:?}", d.bbox)));
            }
        }
        detections.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(b.score.total_cmp(&a.score)));
        Ok(DetectionSet { detections })
    }

    /// Keeps the detections whose position satisfies `keep`, preserving order.
    pub(crate) fn retain_indices(&self, mut keep: impl FnMut(usize) -> bool) -> DetectionSet {
        DetectionSet {
            detections: self
                .detections
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, d)| d.clone())
                .collect(),
        }
    }

    /// Keeps the detections satisfying `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&Detection) -> bool) -> DetectionSet {
        self.retain_indices(|i| keep(&self.detections[i]))
    }

    pub fn from_json_str(text: &str, origin: &str, dataset: &Dataset) -> Result<DetectionSet> {
        let raw: Vec<Detection> = json::from_str(text, origin)?;
        DetectionSet::new(raw, dataset)
    }

    pub fn as_slice(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Detection> {
        self.detections.iter()
    }

    pub fn to_json(&self) -> String {
        json::to_string(self)
    }
}

impl<'a> IntoIterator for &'a DetectionSet {
    type Item = &'a Detection;
    type IntoIter = std::slice::Iter<'a, Detection>;

    fn into_iter(self) -> Self::IntoIter {
        self.detections.iter()
    }
}

pub fn load_detections(path: impl AsRef<Path>, dataset: &Dataset) -> Result<DetectionSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DetectionSet::from_json_str(&text, &path.display().to_string(), dataset)
}

pub fn save_detections(path: impl AsRef<Path>, detections: &DetectionSet) -> Result<()> {
    json::write(path, detections)
}

/// Even-odd fill of one polygon, sampling pixel centers.
fn fill_polygon(mask: &mut Mask, coords: &[f64]) -> Result<()> {
    if coords.len() < 6 || !coords.len().is_multiple_of(2) {
        return Err(Error::Decode(format!(
            "polygon needs an even number of at least 6 coordinates, got {}",
            coords.len()
        )));
    }
    let points: Vec<(f64, f64)> = coords.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    let mut crossings = Vec::new();
    for py in 0..mask.height() {
        let yc = py as f64 + 0.5;
        crossings.clear();
        for (i, &(x1, y1)) in points.iter().enumerate() {
            let (x2, y2) = points[(i + 1) % points.len()];
            if (y1 <= yc) != (y2 <= yc) {
                crossings.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let end = ((pair[1] - 0.5).ceil().max(0.0) as usize).min(mask.width());
            for px in start..end {
                mask.set(px, py, true);
            }
        }
    }
    Ok(())
}

/// Rasterizes an annotation's segmentation at the resolution of `image`.
pub fn decode_segmentation(annotation: &Annotation, image: &ImageRecord) -> Result<Mask> {
    let (w, h) = (image.width as usize, image.height as usize);
    match &annotation.segmentation {
        None => Err(Error::Decode(format!(
            "annotation {} has no segmentation",
            annotation.id
        ))),
        Some(Segmentation::Rle(rle)) => rle.decode(w, h),
        Some(Segmentation::Polygons(polys)) => {
            let mut mask = Mask::new(w, h);
            for poly in polys {
                let mut part = Mask::new(w, h);
                fill_polygon(&mut part, poly)?;
                for (x, y) in part.pixels() {
                    mask.set(x, y, true);
                }
            }
            Ok(mask)
        }
    }
}
