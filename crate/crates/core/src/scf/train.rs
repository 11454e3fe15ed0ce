use ndarray::{Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gcn::{forward, GcnWeights, RegionFeatures};
use super::{normalize, project, to_rows, ContextGraph, LabelEmbedding};
use crate::error::{Error, Result};

/// Optimizer settings. Defaults: lr 0.005, momentum 0.95, weight decay 1e-4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub leaky_slope: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.005,
            momentum: 0.95,
            weight_decay: 1e-4,
            epochs: 200,
            seed: 0,
            hidden_dim: 512,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

fn slope_mask(z: &Array2<f64>, slope: f64) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { 1.0 } else { slope })
}

/// Mean cross-entropy of the projected distributions against `labels`, with
/// its gradient with respect to both weight matrices. Weight decay is not
/// part of this loss.
pub fn cross_entropy_gradients(
    a_hat: &Array2<f64>,
    embeddings: &Array2<f64>,
    weights: &GcnWeights,
    features: &Array2<f64>,
    labels: &[usize],
) -> Result<Gradients> {
    let fw = forward(a_hat, embeddings, weights)?;
    if fw.out.ncols() != features.nrows() {
        return Err(Error::Dimension(format!(
            "label space width {} does not match feature dim {}",
            fw.out.ncols(),
            features.nrows()
        )));
    }
    let n_regions = features.ncols();
    if labels.len() != n_regions {
        return Err(Error::Dimension(format!(
            "{} labels for {n_regions} regions",
            labels.len()
        )));
    }
    let n = embeddings.nrows();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::InvalidData(format!(
            "label {bad} out of range for {n} categories"
        )));
    }
    let logits = fw.out.dot(features);
    let mut loss = 0.0;
    for (col, &y) in logits.axis_iter(Axis(1)).zip(labels) {
        let max = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - col[y];
    }
    let scale = 1.0 / n_regions.max(1) as f64;
    loss *= scale;

    let mut d_logits = project(&fw.out, features)?;
    for (r, &y) in labels.iter().enumerate() {
        d_logits[[y, r]] -= 1.0;
    }
    d_logits.mapv_inplace(|v| v * scale);

    let d_out = d_logits.dot(&features.t());
    let d_z2 = d_out * slope_mask(&fw.z2, weights.leaky_slope);
    let g2 = fw.aa1.t().dot(&d_z2);
    let d_a1 = a_hat.t().dot(&d_z2.dot(&weights.w2.t()));
    let d_z1 = d_a1 * slope_mask(&fw.z1, weights.leaky_slope);
    let g1 = fw.ah.t().dot(&d_z1);
    Ok(Gradients { loss, w1: g1, w2: g2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: GcnWeights,
    /// Loss before each update; one entry per epoch.
    pub loss_trace: Vec<f64>,
    /// Accuracy of the trained weights on the training regions.
    pub train_accuracy: f64,
}

pub(crate) fn accuracy(probabilities: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = probabilities
        .axis_iter(Axis(1))
        .zip(labels)
        .filter(|(col, &y)| {
            let best = col
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                )
                .0;
            best == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

fn sgd_step(weights: &mut Array2<f64>, velocity: &mut Array2<f64>, grad: &Array2<f64>, hyper: &Hyper) {
    Zip::from(weights).and(velocity).and(grad).for_each(|w, v, &g| {
        let g = g + hyper.weight_decay * *w;
        *v = hyper.momentum * *v + g;
        *w -= hyper.lr * *v;
    });
}

/// Full-batch momentum SGD on the projection cross-entropy.
pub fn fit(
    graph: &ContextGraph,
    embeddings: &LabelEmbedding,
    regions: &RegionFeatures,
    hyper: &Hyper,
) -> Result<FitResult> {
    if graph.categories != embeddings.categories {
        return Err(Error::InvalidData("graph and embedding category orders differ".into()));
    }
    let labels: Vec<usize> = regions
        .labels
        .iter()
        .enumerate()
        .map(|(j, l)| l.ok_or_else(|| Error::InvalidData(format!("region {j} has no label"))))
        .collect::<Result<_>>()?;
    if labels.is_empty() {
        return Err(Error::InvalidData("no labeled regions to train on".into()));
    }
    let a_hat = normalize(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut weights = GcnWeights::init(
        embeddings.dim(),
        hyper.hidden_dim,
        regions.dim(),
        hyper.leaky_slope,
        &mut rng,
    );
    let mut v1 = Array2::zeros(weights.w1.dim());
    let mut v2 = Array2::zeros(weights.w2.dim());
    let mut loss_trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let g = cross_entropy_gradients(&a_hat, &embeddings.matrix, &weights, &regions.features, &labels)?;
        if !g.loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: g.loss });
        }
        loss_trace.push(g.loss);
        sgd_step(&mut weights.w1, &mut v1, &g.w1, hyper);
        sgd_step(&mut weights.w2, &mut v2, &g.w2, hyper);
    }
    let out = forward(&a_hat, &embeddings.matrix, &weights)?.out;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            epoch: hyper.epochs,
            loss: f64::NAN,
        });
    }
    let train_accuracy = accuracy(&project(&out, &regions.features)?, &labels);
    Ok(FitResult {
        weights,
        loss_trace,
        train_accuracy,
    })
}

/// Serialized training output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub categories: Vec<String>,
    pub leaky_slope: f64,
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
    #[serde(default)]
    pub loss_trace: Vec<f64>,
    #[serde(default)]
    pub train_accuracy: f64,
}

impl TrainedModel {
    pub fn new(categories: &[String], fit: &FitResult) -> Self {
        let (w1, w2) = fit.weights.to_parts();
        TrainedModel {
            categories: categories.to_vec(),
            leaky_slope: fit.weights.leaky_slope,
            w1,
            w2,
            loss_trace: fit.loss_trace.clone(),
            train_accuracy: fit.train_accuracy,
        }
    }

    pub fn weights(&self) -> Result<GcnWeights> {
        GcnWeights::from_parts(&self.w1, &self.w2, self.leaky_slope)
    }
}

/// `n × N` region probabilities, rows in category order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityArtifact {
    pub categories: Vec<String>,
    pub probabilities: Vec<Vec<f64>>,
}

impl ProbabilityArtifact {
    pub fn new(categories: &[String], probabilities: &Array2<f64>) -> Self {
        ProbabilityArtifact {
            categories: categories.to_vec(),
            probabilities: to_rows(probabilities),
        }
    }
}
