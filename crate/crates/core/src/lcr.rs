//! Local context representation: small-object labels get an enlarged twin so
//! the annotation covers some surrounding context.

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, CategoryKind, Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// COCO small-object bound, in square pixels.
pub const COCO_SMALL_AREA: f64 = 32.0 * 32.0;
/// SOD small-object bound, as a fraction of the image resolution.
pub const SOD_SMALL_RATIO: f64 = 0.0058;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelingStandard {
    /// Absolute area below 32×32 px.
    Coco,
    /// Area below 0.58% of the image.
    Sod,
}

impl std::str::FromStr for LabelingStandard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coco" => Ok(LabelingStandard::Coco),
            "sod" => Ok(LabelingStandard::Sod),
            other => Err(Error::config(
                "Labeling_standard",
                format!("expected coco or sod, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcrParams {
    #[serde(rename = "Labeling_standard")]
    pub labeling_standard: LabelingStandard,
    #[serde(rename = "Enlarge_percentage")]
    pub enlarge_percentage: f64,
}

impl LcrParams {
    pub fn new(labeling_standard: LabelingStandard, enlarge_percentage: f64) -> Result<Self> {
        let params = LcrParams {
            labeling_standard,
            enlarge_percentage,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.enlarge_percentage) {
            return Err(Error::config(
                "Enlarge_percentage",
                format!("must lie in [0, 1), got {}", self.enlarge_percentage),
            ));
        }
        Ok(())
    }
}

/// Whether `bbox` counts as a small object under the chosen standard.
pub fn qualifies(bbox: &BBox, image: &ImageRecord, params: &LcrParams) -> bool {
    match params.labeling_standard {
        LabelingStandard::Coco => bbox.area() < COCO_SMALL_AREA,
        LabelingStandard::Sod => bbox.area() / image.resolution() < SOD_SMALL_RATIO,
    }
}

/// Scales both sides by `1 + factor` about the center, then clips to the image.
pub fn enlarge(bbox: &BBox, factor: f64, image: &ImageRecord) -> BBox {
    let grown = bbox.scaled_about_center(1.0 + factor);
    grown.clip(image.width as f64, image.height as f64).unwrap_or(grown)
}

/// Appends an enlarged twin for every qualifying thing annotation.
///
/// Twins get fresh ids above the current maximum, in ascending source-id
/// order, and point back at their source through `lcr_source_id`. Twins and
/// annotations that already own a twin never spawn another one, so running
/// the transform twice changes nothing.
pub fn transform_dataset(dataset: &Dataset, params: &LcrParams) -> Result<Dataset> {
    params.validate()?;
    let has_twin: std::collections::HashSet<u64> =
        dataset.annotations().iter().filter_map(|a| a.lcr_source_id).collect();
    let mut sources: Vec<&Annotation> = dataset
        .annotations()
        .iter()
        .filter(|a| a.lcr_source_id.is_none() && !has_twin.contains(&a.id))
        .filter(|a| dataset.category(a.category_id).map(|c| c.kind) == Some(CategoryKind::Thing))
        .filter(|a| {
            let image = dataset.image(a.image_id).expect("validated reference");
            qualifies(&a.bbox, image, params)
        })
        .collect();
    sources.sort_by_key(|a| a.id);

    let first_id = dataset.annotations().iter().map(|a| a.id).max().map_or(1, |m| m + 1);
    let mut annotations = dataset.annotations().to_vec();
    for (src, id) in sources.into_iter().zip(first_id..) {
        let image = dataset.image(src.image_id).expect("validated reference");
        annotations.push(Annotation {
            id,
            image_id: src.image_id,
            category_id: src.category_id,
            bbox: enlarge(&src.bbox, params.enlarge_percentage, image),
            segmentation: None,
            visible_ratio: src.visible_ratio,
            ignore: src.ignore,
            lcr_source_id: Some(src.id),
        });
    }
    dataset.with_annotations(annotations)
}
