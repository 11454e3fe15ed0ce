use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{from_rows, to_rows};
use crate::error::{Error, Result};

/// Weights of the two graph-convolution layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnWeights {
    /// d × hidden
    pub w1: Array2<f64>,
    /// hidden × D
    pub w2: Array2<f64>,
    pub leaky_slope: f64,
}

impl GcnWeights {
    /// Uniform in `[-1/√fan_in, 1/√fan_in]`, where `fan_in` is the row count.
    pub fn init(embed_dim: usize, hidden_dim: usize, feature_dim: usize, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows.max(1) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
        };
        let w1 = uniform(embed_dim, hidden_dim);
        let w2 = uniform(hidden_dim, feature_dim);
        GcnWeights { w1, w2, leaky_slope }
    }

    pub fn feature_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub(crate) fn to_parts(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (to_rows(&self.w1), to_rows(&self.w2))
    }

    pub(crate) fn from_parts(w1: &[Vec<f64>], w2: &[Vec<f64>], leaky_slope: f64) -> Result<Self> {
        let w1 = from_rows(w1, "w1")?;
        let w2 = from_rows(w2, "w2")?;
        if w1.ncols() != w2.nrows() {
            return Err(Error::Dimension(format!(
                "w1 is {:?} but w2 is {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        Ok(GcnWeights { w1, w2, leaky_slope })
    }
}

pub(crate) fn leaky(z: &Array2<f64>, slope: f64) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Intermediate activations kept for back-propagation.
pub(crate) struct Forward {
    /// Â H
    pub ah: Array2<f64>,
    pub z1: Array2<f64>,
    /// Â σ(Z1)
    pub aa1: Array2<f64>,
    pub z2: Array2<f64>,
    pub out: Array2<f64>,
}

pub(crate) fn forward(a_hat: &Array2<f64>, h: &Array2<f64>, w: &GcnWeights) -> Result<Forward> {
    let n = h.nrows();
    if a_hat.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "normalized adjacency is {:?} for {n} labels",
            a_hat.dim()
        )));
    }
    if h.ncols() != w.w1.nrows() {
        return Err(Error::Dimension(format!(
            "embedding dim {} does not match w1 rows {}",
            h.ncols(),
            w.w1.nrows()
        )));
    }
    if w.w1.ncols() != w.w2.nrows() {
        return Err(Error::Dimension(format!(
            "w1 {:?} incompatible with w2 {:?}",
            w.w1.dim(),
            w.w2.dim()
        )));
    }
    let ah = a_hat.dot(h);
    let z1 = ah.dot(&w.w1);
    let a1 = leaky(&z1, w.leaky_slope);
    let aa1 = a_hat.dot(&a1);
    let z2 = aa1.dot(&w.w2);
    let out = leaky(&z2, w.leaky_slope);
    Ok(Forward { ah, z1, aa1, z2, out })
}

/// `σ(Â σ(Â H W1) W2)`, an n × D matrix.
pub fn gcn_forward(a_hat: &Array2<f64>, h: &Array2<f64>, weights: &GcnWeights) -> Result<Array2<f64>> {
    Ok(forward(a_hat, h, weights)?.out)
}

/// Column-wise softmax of `H' f`: one distribution over labels per region.
pub fn project(label_space: &Array2<f64>, regions: &Array2<f64>) -> Result<Array2<f64>> {
    if label_space.ncols() != regions.nrows() {
        return Err(Error::Dimension(format!(
            "label space is {:?} but region features are {:?}",
            label_space.dim(),
            regions.dim()
        )));
    }
    let mut logits = label_space.dot(regions);
    for mut col in logits.axis_iter_mut(Axis(1)) {
        let max = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
    Ok(logits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub features: Vec<f64>,
    /// Index into the category order of the graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionFile {
    dim: usize,
    rows: Vec<RegionRow>,
}

/// Region features stored column-wise (D × N) with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatures {
    pub features: Array2<f64>,
    pub labels: Vec<Option<usize>>,
}

impl RegionFeatures {
    pub fn from_rows(dim: usize, rows: &[RegionRow]) -> Result<Self> {
        let mut features = Array2::zeros((dim, rows.len()));
        for (j, row) in rows.iter().enumerate() {
            if row.features.len() != dim {
                return Err(Error::Dimension(format!(
                    "region {j} has {} features, expected {dim}",
                    row.features.len()
                )));
            }
            if row.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("region {j} has a non-finite feature")));
            }
            for (i, &v) in row.features.iter().enumerate() {
                features[[i, j]] = v;
            }
        }
        Ok(RegionFeatures {
            features,
            labels: rows.iter().map(|r| r.label).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<RegionRow> {
        self.features
            .columns()
            .into_iter()
            .zip(&self.labels)
            .map(|(c, &label)| RegionRow {
                features: c.to_vec(),
                label,
            })
            .collect()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file: RegionFile = crate::json::read(path)?;
        RegionFeatures::from_rows(file.dim, &file.rows)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::json::write(
            path,
            &RegionFile {
                dim: self.dim(),
                rows: self.rows(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_path() {
        let a = array![[1.0]];
        let h = array![[2.0]];
        let w = GcnWeights {
            w1: array![[1.0]],
            w2: array![[1.0]],
            leaky_slope: 0.01,
        };
        assert_eq!(gcn_forward(&a, &h, &w).unwrap(), array![[2.0]]);
        let neg = gcn_forward(&a, &array![[-1.0]], &w).unwrap();
        assert!((neg[[0, 0]] - -0.0001).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let w = GcnWeights {
            w1: Array2::zeros((3, 2)),
            w2: Array2::zeros((2, 4)),
            leaky_slope: 0.2,
        };
        assert!(matches!(
            gcn_forward(&Array2::eye(2), &Array2::zeros((2, 5)), &w),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            project(&Array2::zeros((2, 4)), &Array2::zeros((3, 1))),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn softmax_columns() {
        let uniform = project(&Array2::zeros((3, 2)), &array![[1.0], [2.0]]).unwrap();
        for v in uniform.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // logits [1, 0]
        let p = project(&array![[1.0], [0.0]], &array![[1.0]]).unwrap();
        assert!((p[[0, 0]] - 0.7311).abs() < 1e-4);
        assert!((p[[1, 0]] - 0.2689).abs() < 1e-4);
        let empty = project(&Array2::zeros((3, 4)), &Array2::zeros((4, 0))).unwrap();
        assert_eq!(empty.dim(), (3, 0));
    }

    #[test]
    fn region_rows_round_trip() {
        let rows = vec![
            RegionRow {
                features: vec![1.0, 2.0],
                label: Some(1),
            },
            RegionRow {
                features: vec![3.0, 4.0],
                label: None,
            },
        ];
        let f = RegionFeatures::from_rows(2, &rows).unwrap();
        assert_eq!(f.features, array![[1.0, 3.0], [2.0, 4.0]]);
        assert_eq!(f.rows(), rows);
        assert!(RegionFeatures::from_rows(3, &rows).is_err());
    }
}
