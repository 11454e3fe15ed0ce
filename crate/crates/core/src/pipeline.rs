//! User configuration and the fixed lcr → scf → scr → eval pipeline.
//!
//! The config is one JSON document with a section per stage. Keys follow the
//! user-parameter names (`Labeling_standard`, `Enlarge_percentage`,
//! `Categories`, `Relation_descriptor`, and the rule keys inside `SCR.Rules`).
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, DetectionSet};
use crate::error::{Error, Result};
use crate::eval::{self, EvalParams, EvalReport, Subset};
use crate::json;
use crate::lcr::{self, LcrParams};
use crate::scf::{self, Hyper, RegionFeatures, RelationDescriptor, TrainedModel};
use crate::scr::{self, ApplyParams, Preset, RelationRule, SceneContext};

pub const RUN_REPORT_SCHEMA_VERSION: u32 = 1;

pub const LCR_ARTIFACT: &str = "annotations.lcr.json";
pub const GRAPH_ARTIFACT: &str = "graph.json";
pub const WEIGHTS_ARTIFACT: &str = "weights.json";
pub const SCR_ARTIFACT: &str = "detections.scr.json";
pub const EVAL_ARTIFACT: &str = "eval_report.json";
pub const RUN_REPORT: &str = "run_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScfSection {
    #[serde(rename = "Categories")]
    pub categories: Vec<String>,
    #[serde(rename = "Relation_descriptor", default = "default_descriptor")]
    pub relation_descriptor: RelationDescriptor,
    /// Word-vector text file.
    #[serde(rename = "Embeddings")]
    pub embeddings: PathBuf,
    /// Labelled region features used for training.
    #[serde(rename = "Features")]
    pub features: PathBuf,
    #[serde(default)]
    pub hyper: Hyper,
}

fn default_descriptor() -> RelationDescriptor {
    RelationDescriptor::Conditional
}

/// Rules given inline, as a path to a rule file, or as `preset:<name>` for
/// one of the shipped sets (`sai`, `city_persons_plus`, `coco`).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RuleSource {
    Inline(Vec<RelationRule>),
    Path(String),
}

impl<'de> Deserialize<'de> for RuleSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) => Ok(RuleSource::Path(s)),
            v @ serde_json::Value::Array(_) => serde_path_to_error::deserialize(v)
                .map(RuleSource::Inline)
                .map_err(|e| D::Error::custom(format!("rule {}: {}", e.path(), e.inner()))),
            other => Err(D::Error::custom(format!("expected a rule list or a path, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrSection {
    #[serde(rename = "Rules")]
    pub rules: RuleSource,
    #[serde(rename = "Apply", default)]
    pub apply: ApplyParams,
    /// Percentile used when deriving missing overlap thresholds.
    #[serde(rename = "Percentile", default = "default_percentile")]
    pub percentile: f64,
}

fn default_percentile() -> f64 {
    scr::DEFAULT_PERCENTILE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_iou")]
    pub iou: f64,
    #[serde(default = "default_subsets")]
    pub subsets: Vec<Subset>,
    #[serde(default = "default_score_threshold")]
    pub score_threshold: f64,
}

fn default_iou() -> f64 {
    0.5
}

fn default_subsets() -> Vec<Subset> {
    vec![Subset::Reasonable, Subset::Heavy]
}

fn default_score_threshold() -> f64 {
    0.5
}

impl EvalSection {
    pub fn params(&self) -> EvalParams {
        EvalParams {
            iou: self.iou,
            score_threshold: self.score_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub annotations: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    /// Annotation file holding stuff segmentations, when they are kept apart
    /// from the ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "LCR", default, skip_serializing_if = "Option::is_none")]
    pub lcr: Option<LcrParams>,
    #[serde(rename = "SCF", default, skip_serializing_if = "Option::is_none")]
    pub scf: Option<ScfSection>,
    #[serde(rename = "SCR", default, skip_serializing_if = "Option::is_none")]
    pub scr: Option<ScrSection>,
    #[serde(rename = "EVAL", default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    pub io: Option<IoSection>,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// Parses and validates a config held in memory. Relative paths resolve
    /// against `base_dir`.
    pub fn from_json_str(text: &str, origin: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: PipelineConfig = json::from_str(text, origin).map_err(|e| match e {
            Error::Parse {
                path,
                location,
                message,
            } => Error::config(location, format!("{message} (in {path})")),
            e => e,
        })?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn stages(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.lcr.is_some() {
            out.push("lcr");
        }
        if self.scf.is_some() {
            out.push("scf");
        }
        if self.scr.is_some() {
            out.push("scr");
        }
        if self.eval.is_some() {
            out.push("eval");
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.stages().is_empty() {
            return Err(Error::config(
                "<root>",
                "no stage enabled; add at least one of LCR, SCF, SCR, EVAL",
            ));
        }
        let Some(io) = &self.io else {
            return Err(Error::config("io", "missing section; io.annotations is required"));
        };
        if let Some(l) = &self.lcr {
            l.validate()?;
        }
        if let Some(s) = &self.scf {
            if s.categories.is_empty() {
                return Err(Error::config("SCF.Categories", "must list at least one category"));
            }
            if let RelationDescriptor::Binary(t) = s.relation_descriptor {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::config(
                        "SCF.Relation_descriptor",
                        format!("binary threshold {t} outside [0, 1]"),
                    ));
                }
            }
        }
        if let Some(s) = &self.scr {
            s.apply.validate()?;
            if !(0.0..=1.0).contains(&s.percentile) {
                return Err(Error::config(
                    "SCR.Percentile",
                    format!("{} outside [0, 1]", s.percentile),
                ));
            }
            if let RuleSource::Inline(rules) = &s.rules {
                for r in rules {
                    r.validate()?;
                }
            }
        }
        if let Some(e) = &self.eval {
            e.params().validate()?;
        }
        if (self.scr.is_some() || self.eval.is_some()) && io.detections.is_none() {
            return Err(Error::config("io.detections", "required when SCR or EVAL is enabled"));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn io(&self) -> &IoSection {
        self.io.as_ref().expect("validated config has an io section")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.io().out_dir)
    }

    /// Every input path the enabled stages will read, with its config key.
    fn inputs(&self) -> Vec<(String, PathBuf)> {
        let io = self.io();
        let mut out = vec![("io.annotations".to_string(), self.resolve(&io.annotations))];
        if let Some(d) = &io.detections {
            out.push(("io.detections".into(), self.resolve(d)));
        }
        if let Some(m) = &io.masks {
            out.push(("io.masks".into(), self.resolve(m)));
        }
        if let Some(s) = &self.scf {
            out.push(("SCF.Embeddings".into(), self.resolve(&s.embeddings)));
            out.push(("SCF.Features".into(), self.resolve(&s.features)));
        }
        if let Some(ScrSection {
            rules: RuleSource::Path(p),
            ..
        }) = &self.scr
        {
            if !p.starts_with("preset:") {
                out.push(("SCR.Rules".into(), self.resolve(Path::new(p))));
            }
        }
        out
    }

    pub fn check_inputs(&self) -> Result<()> {
        for (key, path) in self.inputs() {
            if !path.is_file() {
                return Err(Error::config(key, format!("file not found: {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn load_rules(&self) -> Result<Vec<RelationRule>> {
        let Some(s) = &self.scr else {
            return Ok(Vec::new());
        };
        match &s.rules {
            RuleSource::Inline(rules) => Ok(rules.clone()),
            RuleSource::Path(p) => match p.strip_prefix("preset:") {
                Some(name) => {
                    let preset: Preset = serde_json::from_value(serde_json::Value::String(name.into()))
                        .map_err(|_| Error::config("SCR.Rules", format!("unknown preset `{name}`")))?;
                    Ok(preset.rules())
                }
                None => scr::load_rules(self.resolve(Path::new(p))),
            },
        }
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    PipelineConfig::from_json_str(&text, &path.display().to_string(), base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub stages: Vec<StageReport>,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Baseline against SCR-refined detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub baseline: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<EvalReport>,
    /// `refined.map − baseline.map`, when both are defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_delta: Option<f64>,
    pub promoted: usize,
}

struct Stage<'r> {
    report: &'r mut RunReport,
    name: &'static str,
    started: Instant,
    artifacts: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl<'r> Stage<'r> {
    fn start(report: &'r mut RunReport, name: &'static str) -> Self {
        log::info!("stage {name}");
        Stage {
            report,
            name,
            started: Instant::now(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn write<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        json::write(&path, value)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn finish(self) {
        log::info!("stage {} done in {:.3?}", self.name, self.started.elapsed());
        self.report.artifacts.extend(self.artifacts.iter().cloned());
        self.report.warnings.extend(self.warnings.iter().cloned());
        self.report.stages.push(StageReport {
            stage: self.name.into(),
            artifacts: self.artifacts,
            warnings: self.warnings,
        });
    }
}

fn in_stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name,
            source: Box::new(e),
        },
    })
}

fn scene_dataset(config: &PipelineConfig, annotations: &Dataset) -> Result<Dataset> {
    let Some(masks) = &config.io().masks else {
        return Ok(annotations.clone());
    };
    let (masks, _) = dataset::load_annotations(config.resolve(masks))?;
    if masks.categories() != annotations.categories() || masks.images() != annotations.images() {
        return Err(Error::config(
            "io.masks",
            "mask file must share categories and images with io.annotations",
        ));
    }
    Ok(masks)
}

/// Runs the enabled stages in order, writing artifacts under `io.out_dir`
/// and a run report next to them. Artifacts depend only on the inputs and
/// the seed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.check_inputs()?;
    let out = config.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut report = RunReport {
        schema_version: RUN_REPORT_SCHEMA_VERSION,
        seed: config.seed,
        stages: Vec::new(),
        artifacts: Vec::new(),
        warnings: Vec::new(),
    };

    let (mut annotations, load_warnings) = dataset::load_annotations(config.resolve(&config.io().annotations))?;
    report.warnings.extend(load_warnings.iter().map(ToString::to_string));

    if let Some(params) = &config.lcr {
        let mut stage = Stage::start(&mut report, "lcr");
        let before = annotations.annotations().len();
        annotations = in_stage("lcr", lcr::transform_dataset(&annotations, params))?;
        log::info!("lcr: {} twin labels", annotations.annotations().len() - before);
        in_stage("lcr", stage.write(out.join(LCR_ARTIFACT), &annotations))?;
        stage.finish();
    }

    if let Some(section) = &config.scf {
        let mut stage = Stage::start(&mut report, "scf");
        let result: Result<()> = (|| {
            let graph = scf::build_graph(&annotations, &section.categories, section.relation_descriptor)?;
            let embeddings = scf::load_embeddings(config.resolve(&section.embeddings), &section.categories)?;
            let features = RegionFeatures::load(config.resolve(&section.features))?;
            let hyper = Hyper {
                seed: config.seed,
                ..section.hyper.clone()
            };
            let fit = scf::fit(&graph, &embeddings, &features, &hyper)?;
            log::info!("scf: training accuracy {:.4}", fit.train_accuracy);
            stage.write(out.join(GRAPH_ARTIFACT), &graph)?;
            stage.write(
                out.join(WEIGHTS_ARTIFACT),
                &TrainedModel::new(&section.categories, &fit),
            )?;
            Ok(())
        })();
        in_stage("scf", result)?;
        stage.finish();
    }

    let detections = match &config.io().detections {
        Some(p) => Some(dataset::load_detections(config.resolve(p), &annotations)?),
        None => None,
    };

    let mut refined: Option<(DetectionSet, usize)> = None;
    if let Some(section) = &config.scr {
        let mut stage = Stage::start(&mut report, "scr");
        let detections = detections.as_ref().expect("validated config has detections");
        let result: Result<(DetectionSet, usize)> = (|| {
            let rules = config.load_rules()?;
            let rules = scr::derive_thresholds(&annotations, &rules, section.percentile)?;
            let scene_ds = scene_dataset(config, &annotations)?;
            let scene = SceneContext::new(&scene_ds)?;
            let output = scr::apply(detections, &rules, &scene, &section.apply)?;
            log::info!("scr: promoted {} detections", output.promoted.len());
            stage.write(out.join(SCR_ARTIFACT), &output.detections)?;
            Ok((output.detections, output.promoted.len()))
        })();
        refined = Some(in_stage("scr", result)?);
        stage.finish();
    }

    if let Some(section) = &config.eval {
        let mut stage = Stage::start(&mut report, "eval");
        let detections = detections.as_ref().expect("validated config has detections");
        let result: Result<()> = (|| {
            let params = section.params();
            let baseline = match &config.scr {
                Some(s) => detections.filtered(|d| s.apply.retains(d.score)),
                None => detections.clone(),
            };
            let base = eval::evaluate(&annotations, &baseline, &params, &section.subsets)?;
            let (refined_report, promoted) = match &refined {
                Some((dets, n)) => (Some(eval::evaluate(&annotations, dets, &params, &section.subsets)?), *n),
                None => (None, 0),
            };
            let map_delta = match (&refined_report, base.map) {
                (Some(r), Some(b)) => r.map.map(|m| m - b),
                _ => None,
            };
            let comparison = ComparisonReport {
                schema_version: eval::REPORT_SCHEMA_VERSION,
                baseline: base,
                refined: refined_report,
                map_delta,
                promoted,
            };
            stage.write(out.join(EVAL_ARTIFACT), &comparison)?;
            Ok(())
        })();
        in_stage("eval", result)?;
        stage.finish();
    }

    json::write(out.join(RUN_REPORT), &report)?;
    Ok(report)
}
