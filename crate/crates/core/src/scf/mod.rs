//! Semantic context fusion.
//!
//! Label word embeddings `H` (n × d) are propagated over the normalized
//! co-occurrence graph by a two-layer graph convolution,
//! `H' = σ(Â σ(Â H W1) W2)` with σ a leaky ReLU. Region features `f`
//! (D × N) are then scored against every label, `softmax(H' f)`, giving one
//! probability distribution over the n categories per region.

mod embedding;
mod gcn;
mod graph;
mod train;

pub use embedding::{embeddings_from_reader, load_embeddings, tokenize, LabelEmbedding};
pub use gcn::{gcn_forward, project, GcnWeights, RegionFeatures, RegionRow};
pub use graph::{build_graph, normalize, ContextGraph, RelationDescriptor};
pub use train::{cross_entropy_gradients, fit, FitResult, Gradients, Hyper, ProbabilityArtifact, TrainedModel};

use ndarray::Array2;

use crate::error::{Error, Result};

pub(crate) fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("{what}: non-finite entry")));
    }
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Dimension(format!("{what}: {e}")))
}
