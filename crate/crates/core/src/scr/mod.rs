//! Spatial context reasoning.
//!
//! A rule `R[S, O] = pred[t(S, O)]` ties a subject category to an object
//! category through an optional directional predicate and a topological
//! relation measured with intersection over subject. After detection, every
//! confident subject looks for a suppressed object candidate that satisfies
//! its rules and promotes the best one back into the output.

mod apply;
mod derive;
mod relation;
mod rules;

pub use apply::{apply, ApplyParams, SceneContext, ScrOutput};
pub use derive::{collect_ios_samples, derive_thresholds, nearest_rank, DEFAULT_PERCENTILE};
pub use relation::{eval_pred, eval_topology, search_area, CONTAINMENT_TOLERANCE};
pub use rules::{load_rules, save_rules, DimExpr, Occlusion, Predicate, Preset, RelationRule, Topology};
