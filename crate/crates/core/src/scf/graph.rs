use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{from_rows, to_rows};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// How co-occurrence statistics become graph edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationDescriptor {
    /// `P(j present | i present)`.
    Conditional,
    /// 1 where the conditional probability reaches the threshold, else 0.
    Binary(f64),
}

/// Category-by-category adjacency. The diagonal is left at zero; self-loops
/// are added during normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGraph {
    pub categories: Vec<String>,
    pub descriptor: RelationDescriptor,
    pub adjacency: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    categories: Vec<String>,
    descriptor: RelationDescriptor,
    adjacency: Vec<Vec<f64>>,
}

impl Serialize for ContextGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphFile {
            categories: self.categories.clone(),
            descriptor: self.descriptor,
            adjacency: to_rows(&self.adjacency),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ContextGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = GraphFile::deserialize(d)?;
        let adjacency = from_rows(&file.adjacency, "adjacency").map_err(serde::de::Error::custom)?;
        let n = file.categories.len();
        if adjacency.dim() != (n, n) && !(n == 0 && adjacency.is_empty()) {
            return Err(serde::de::Error::custom(format!(
                "adjacency is {:?}, expected {n}x{n}",
                adjacency.dim()
            )));
        }
        Ok(ContextGraph {
            categories: file.categories,
            descriptor: file.descriptor,
            adjacency,
        })
    }
}

impl ContextGraph {
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// Counts label presence per image and turns it into conditional
/// co-occurrence probabilities `A[i][j] = co(i, j) / count(i)`.
pub fn build_graph(dataset: &Dataset, categories: &[String], descriptor: RelationDescriptor) -> Result<ContextGraph> {
    if let RelationDescriptor::Binary(tau) = descriptor {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config(
                "Relation_descriptor",
                format!("binary threshold {tau} outside [0, 1]"),
            ));
        }
    }
    let mut index_of = HashMap::new();
    for (i, name) in categories.iter().enumerate() {
        let cat = dataset
            .category_by_name(name)
            .ok_or_else(|| Error::config("Categories", format!("`{name}` is not a dataset category")))?;
        index_of.insert(cat.id, i);
    }

    let mut present: HashMap<u64, BTreeSet<usize>> = HashMap::new();
    for ann in dataset.annotations() {
        if let Some(&i) = index_of.get(&ann.category_id) {
            present.entry(ann.image_id).or_default().insert(i);
        }
    }

    let n = categories.len();
    let mut count = vec![0u64; n];
    let mut co = Array2::<f64>::zeros((n, n));
    for labels in present.values() {
        for &i in labels {
            count[i] += 1;
            for &j in labels {
                if i != j {
                    co[[i, j]] += 1.0;
                }
            }
        }
    }
    let mut adjacency = Array2::zeros((n, n));
    for i in 0..n {
        if count[i] == 0 {
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = co[[i, j]] / count[i] as f64;
            adjacency[[i, j]] = match descriptor {
                RelationDescriptor::Conditional => p,
                RelationDescriptor::Binary(tau) => f64::from(u8::from(p >= tau)),
            };
        }
    }
    Ok(ContextGraph {
        categories: categories.to_vec(),
        descriptor,
        adjacency,
    })
}

/// Symmetric normalization with self-loops: `D^{-1/2} (A + I) D^{-1/2}`,
/// where `D` holds the row sums of `A + I`.
pub fn normalize(graph: &ContextGraph) -> Array2<f64> {
    let n = graph.len();
    let a = &graph.adjacency + &Array2::<f64>::eye(n);
    let degree: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (degree[i] * degree[j]).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Annotation, Category, CategoryKind, ImageRecord};
    use crate::geometry::BBox;

    /// Images with the given label sets over categories A=1, B=2, C=3.
    fn dataset(label_sets: &[&[u64]]) -> Dataset {
        let cats = ["A", "B", "C"]
            .iter()
            .enumerate()
            .map(|(i, n)| Category {
                id: i as u64 + 1,
                name: n.to_string(),
                kind: CategoryKind::Thing,
                supercategory: None,
            })
            .collect();
        let mut images = Vec::new();
        let mut anns = Vec::new();
        for (i, labels) in label_sets.iter().enumerate() {
            let img = i as u64 + 1;
            images.push(ImageRecord {
                id: img,
                width: 10,
                height: 10,
                file_name: String::new(),
            });
            for &c in labels.iter() {
                let id = anns.len() as u64 + 1;
                anns.push(Annotation::new(id, img, c, BBox::new(1.0, 1.0, 2.0, 2.0)));
            }
        }
        Dataset::new(cats, images, anns).unwrap().0
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn conditional_counts() {
        // duplicate labels in one image count once
        let ds = dataset(&[&[1, 2], &[1], &[1, 2, 2]]);
        let g = build_graph(&ds, &names(&["A", "B"]), RelationDescriptor::Conditional).unwrap();
        assert_eq!(g.adjacency[[0, 1]], 2.0 / 3.0);
        assert_eq!(g.adjacency[[1, 0]], 1.0);
        assert_eq!(g.adjacency[[0, 0]], 0.0);

        let b = build_graph(&ds, &names(&["A", "B"]), RelationDescriptor::Binary(0.5)).unwrap();
        assert_eq!(b.adjacency[[0, 1]], 1.0);
        assert_eq!(b.adjacency[[1, 0]], 1.0);
    }

    #[test]
    fn never_co_occurring() {
        let ds = dataset(&[&[1], &[2], &[3]]);
        let g = build_graph(&ds, &names(&["A", "B", "C"]), RelationDescriptor::Conditional).unwrap();
        assert!(g.adjacency.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn absent_category_row_is_zero() {
        let ds = dataset(&[&[1, 2]]);
        let g = build_graph(&ds, &names(&["A", "B", "C"]), RelationDescriptor::Conditional).unwrap();
        assert_eq!(g.adjacency.row(2).sum(), 0.0);
        assert_eq!(g.adjacency[[0, 2]], 0.0);
    }

    #[test]
    fn unknown_category() {
        let ds = dataset(&[&[1]]);
        assert!(matches!(
            build_graph(&ds, &names(&["Z"]), RelationDescriptor::Conditional),
            Err(Error::Config { .. })
        ));
    }

    fn graph(adj: Array2<f64>) -> ContextGraph {
        ContextGraph {
            categories: (0..adj.nrows()).map(|i| i.to_string()).collect(),
            descriptor: RelationDescriptor::Conditional,
            adjacency: adj,
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize(&graph(Array2::zeros((2, 2)))), Array2::<f64>::eye(2));
        assert_eq!(
            normalize(&graph(Array2::from_elem((1, 1), 0.7))),
            Array2::from_elem((1, 1), 1.0)
        );
        let a = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(normalize(&graph(a)), Array2::from_elem((2, 2), 0.5));
    }

    #[test]
    fn json_round_trip() {
        let g = graph(ndarray::array![[0.0, 0.25], [1.0, 0.0]]);
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"conditional\""));
        let back: ContextGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let bin: RelationDescriptor = serde_json::from_str(r#"{"binary": 0.5}"#).unwrap();
        assert_eq!(bin, RelationDescriptor::Binary(0.5));
    }
}
