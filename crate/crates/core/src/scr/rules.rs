use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SubsetSpec;
use crate::geometry::BBox;
use crate::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Disjoint,
    Touch,
    Overlap,
    Within,
    Contains,
    Equal,
}

/// Where the object lies relative to the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Above,
    Under,
    LeftOf,
    RightOf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Occlusion {
    #[serde(alias = "Reasonable")]
    Reasonable,
    #[serde(alias = "Heavy")]
    Heavy,
}

impl Occlusion {
    pub fn subset(&self) -> SubsetSpec {
        match self {
            Occlusion::Reasonable => SubsetSpec::reasonable(),
            Occlusion::Heavy => SubsetSpec::heavy(),
        }
    }
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// `const + a·height_subject + b·width_subject + c·height_object + d·width_object`,
/// serialized as an object of the non-zero named coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimExpr {
    #[serde(rename = "const", skip_serializing_if = "is_zero")]
    pub constant: f64,
    #[serde(skip_serializing_if = "is_zero")]
    pub height_subject: f64,
    #[serde(skip_serializing_if = "is_zero")]
    pub width_subject: f64,
    #[serde(skip_serializing_if = "is_zero")]
    pub height_object: f64,
    #[serde(skip_serializing_if = "is_zero")]
    pub width_object: f64,
}

impl DimExpr {
    pub fn eval(&self, subject: &BBox, object: &BBox) -> f64 {
        self.constant
            + self.height_subject * subject.h
            + self.width_subject * subject.w
            + self.height_object * object.h
            + self.width_object * object.w
    }
}

/// One relation between a subject and an object category. Keys in rule files
/// use the user-parameter names `Subject`, `Object`, `pred`, `t`,
/// `Overlap_threshold`, `Search_height`, `Search_width` and `Occlusion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRule {
    #[serde(rename = "Subject")]
    pub subject: String,
    #[serde(rename = "Object")]
    pub object: String,
    #[serde(rename = "pred", default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<Predicate>,
    #[serde(rename = "t")]
    pub topology: Topology,
    #[serde(rename = "Overlap_threshold", default, skip_serializing_if = "Option::is_none")]
    pub overlap_threshold: Option<f64>,
    #[serde(rename = "Search_height", default, skip_serializing_if = "Option::is_none")]
    pub search_height: Option<DimExpr>,
    #[serde(rename = "Search_width", default, skip_serializing_if = "Option::is_none")]
    pub search_width: Option<DimExpr>,
    #[serde(rename = "Occlusion", default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<Occlusion>,
}

impl fmt::Display for RelationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.subject, self.object)
    }
}

impl RelationRule {
    pub fn new(subject: &str, object: &str, pred: Option<Predicate>, topology: Topology) -> Self {
        RelationRule {
            subject: subject.into(),
            object: object.into(),
            pred,
            topology,
            overlap_threshold: None,
            search_height: None,
            search_width: None,
            occlusion: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.overlap_threshold = Some(threshold);
        self
    }

    pub fn with_search(mut self, height: DimExpr, width: DimExpr) -> Self {
        self.search_height = Some(height);
        self.search_width = Some(width);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.overlap_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(
                    format!("{self}.Overlap_threshold"),
                    format!("{t} outside [0, 1]"),
                ));
            }
        }
        if self.search_height.is_some() != self.search_width.is_some() {
            return Err(Error::config(
                format!("{self}.Search_height"),
                "Search_height and Search_width must be given together",
            ));
        }
        Ok(())
    }

    pub fn has_search_area(&self) -> bool {
        self.search_height.is_some() && self.search_width.is_some()
    }
}

pub fn parse_rules(text: &str, origin: &str) -> Result<Vec<RelationRule>> {
    let rules: Vec<RelationRule> = json::from_str(text, origin)?;
    for r in &rules {
        r.validate()?;
    }
    Ok(rules)
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<RelationRule>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&text, &path.display().to_string())
}

pub fn save_rules(path: impl AsRef<Path>, rules: &[RelationRule]) -> Result<()> {
    json::write(path, &rules)
}

/// Shipped default rule sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Storefront accessibility: door, knob, stair.
    Sai,
    /// Pedestrians and riders with vehicles, bikes and road/sidewalk stuff.
    CityPersonsPlus,
    Coco,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Sai, Preset::CityPersonsPlus, Preset::Coco];

    pub fn source(&self) -> &'static str {
        match self {
            Preset::Sai => include_str!("../../rules/sai.json"),
            Preset::CityPersonsPlus => include_str!("../../rules/citypersons_plus.json"),
            Preset::Coco => include_str!("../../rules/coco.json"),
        }
    }

    pub fn rules(&self) -> Vec<RelationRule> {
        parse_rules(self.source(), &format!("{self:?} preset")).expect("shipped rule files are valid")
    }
}
