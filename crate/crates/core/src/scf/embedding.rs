use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One embedding row per category, in category order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbedding {
    pub categories: Vec<String>,
    pub matrix: Array2<f64>,
}

impl LabelEmbedding {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Vocabulary tokens of a category name: lowercase, split on whitespace and `_`.
pub fn tokenize(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || c == '_')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Reads `token f1 … fd` lines, keeping only the tokens the categories need.
/// Multi-word names embed as the unweighted mean of their token vectors.
pub fn embeddings_from_reader(reader: impl BufRead, categories: &[String], origin: &str) -> Result<LabelEmbedding> {
    let token_lists: Vec<Vec<String>> = categories.iter().map(|c| tokenize(c)).collect();
    for (name, tokens) in categories.iter().zip(&token_lists) {
        if tokens.is_empty() {
            return Err(Error::InvalidData(format!("category name `{name}` has no tokens")));
        }
    }
    let wanted: HashSet<&str> = token_lists.iter().flatten().map(String::as_str).collect();
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let mut dim = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        if !wanted.contains(token) || vectors.contains_key(token) {
            continue;
        }
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: origin.to_string(),
                location: format!("line {}", lineno + 1),
                message: format!("token `{token}`: {e}"),
            })?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Dimension(format!(
                    "token `{token}` at line {} has {} values, expected {d}",
                    lineno + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        vectors.insert(token.to_string(), values);
    }
    for tokens in &token_lists {
        if let Some(missing) = tokens.iter().find(|t| !vectors.contains_key(*t)) {
            return Err(Error::OutOfVocabulary(missing.clone()));
        }
    }
    let dim = dim.unwrap_or(0);
    let mut matrix = Array2::zeros((categories.len(), dim));
    for (i, tokens) in token_lists.iter().enumerate() {
        let mut row = matrix.row_mut(i);
        for t in tokens {
            for (slot, v) in row.iter_mut().zip(&vectors[t]) {
                *slot += v;
            }
        }
        row.mapv_inplace(|v| v / tokens.len() as f64);
    }
    Ok(LabelEmbedding {
        categories: categories.to_vec(),
        matrix,
    })
}

pub fn load_embeddings(path: impl AsRef<Path>, categories: &[String]) -> Result<LabelEmbedding> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    embeddings_from_reader(BufReader::new(file), categories, &path.display().to_string())
}
