//! Text featurization: frozen embedding sums or signed feature hashing.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use super::dataset::RawDataset;
use crate::error::{Error, Result};
use crate::rng::{fnv1a, splitmix64};

/// Lowercased whitespace tokens with leading/trailing punctuation stripped.
/// Tokens that are pure punctuation are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_pairs(dim: usize, pairs: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(pairs.len());
        let mut vectors = Vec::with_capacity(pairs.len() * dim);
        for (token, v) in pairs {
            if v.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "vector for `{token}` has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if index.insert(token.clone(), index.len()).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token `{token}`")));
            }
            vectors.extend(v);
        }
        Ok(EmbeddingTable { dim, index, vectors })
    }

    /// Word-vector text format: `token v1 ... vd` per line, with an optional
    /// `count dim` header line.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut dim: Option<usize> = None;
        let mut declared_count: Option<usize> = None;
        let mut index = HashMap::new();
        let mut vectors = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = i + 1;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if lineno == 1 && rest.len() == 1 {
                if let (Ok(c), Ok(d)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                    declared_count = Some(c);
                    dim = Some(d);
                    continue;
                }
            }
            let values = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(path, lineno, format!("bad number: {e}")))?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("expected {d} values, found {}", values.len()),
                    ))
                }
                _ => {}
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(path, lineno, "non-finite value"));
            }
            if index.insert(token.to_string(), index.len()).is_some() {
                return Err(Error::parse(path, lineno, format!("duplicate token `{token}`")));
            }
            vectors.extend(values);
        }
        let dim = dim.ok_or_else(|| Error::parse(path, 1, "empty embedding file"))?;
        if let Some(c) = declared_count {
            if c != index.len() {
                log::warn!(
                    "{}: header declares {c} vectors, found {}",
                    path.display(),
                    index.len()
                );
            }
        }
        Ok(EmbeddingTable { dim, index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: Array2<f64>,
    pub featurizer: String,
}

impl FeatureTable {
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Sum of the first `max_len` token embeddings; unknown tokens add nothing.
pub fn embed_text(text: &str, emb: &EmbeddingTable, max_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; emb.dim()];
    for token in tokenize(text).iter().take(max_len) {
        if let Some(v) = emb.get(token) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
    }
    out
}

pub fn featurize(raw: &RawDataset, emb: &EmbeddingTable, max_len: usize) -> FeatureTable {
    let dim = emb.dim();
    let mut features = Array2::zeros((raw.len(), dim));
    for (i, record) in raw.records.iter().enumerate() {
        if tokenize(&record.text).is_empty() {
            log::warn!("record `{}` has no tokens; using the zero vector", record.id);
        }
        let v = embed_text(&record.text, emb, max_len);
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
    }
    FeatureTable {
        features,
        featurizer: format!("embedding-sum(dim={dim},max_len={max_len})"),
    }
}

/// Signed hashing: each token adds ±1 at a hashed index, then the vector is
/// scaled by `1/sqrt(token count)`.
pub fn hash_text(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return out;
    }
    for token in &tokens {
        let h = splitmix64(fnv1a(token.as_bytes()) ^ seed);
        let idx = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        out[idx] += sign;
    }
    let scale = 1.0 / (tokens.len() as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

pub fn featurize_hashed(raw: &RawDataset, dim: usize, seed: u64) -> Result<FeatureTable> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "hash dimension must be at least 2, got {dim}"
        )));
    }
    let mut features = Array2::zeros((raw.len(), dim));
    for (i, record) in raw.records.iter().enumerate() {
        let v = hash_text(&record.text, dim, seed);
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(FeatureTable {
        features,
        featurizer: format!("hashed(dim={dim},seed={seed})"),
    })
}
