use crate::seed::keyed_rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

const UNK_KEY: &str = "\u{0}unk";

/// Token vectors keyed by surface string, with a shared vector for tokens
/// outside the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    unk: Vec<f64>,
}

/// `dim` draws from N(0, 1/√dim) keyed by `(seed, token)`.
fn hashed_vector(seed: u64, token: &str, dim: usize) -> Vec<f64> {
    let mut rng = keyed_rng(seed, &["embedding", token]);
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("positive std");
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

impl EmbeddingTable {
    /// Vectors depend only on `(seed, token)`, so the same token gets the same
    /// vector whatever else is in the vocabulary.
    pub fn seeded<'a>(dim: usize, seed: u64, vocab: impl IntoIterator<Item = &'a str>) -> Self {
        let vectors = vocab
            .into_iter()
            .map(|t| (t.to_string(), hashed_vector(seed, t, dim)))
            .collect();
        EmbeddingTable {
            dim,
            vectors,
            unk: hashed_vector(seed, UNK_KEY, dim),
        }
    }

    pub fn from_parts(
        dim: usize,
        vectors: BTreeMap<String, Vec<f64>>,
        unk: Vec<f64>,
    ) -> Result<Self, String> {
        if unk.len() != dim || vectors.values().any(|v| v.len() != dim) {
            return Err(format!("embedding vectors must have dimension {dim}"));
        }
        if unk
            .iter()
            .chain(vectors.values().flatten())
            .any(|v| !v.is_finite())
        {
            return Err("embedding vectors must be finite".into());
        }
        Ok(EmbeddingTable { dim, vectors, unk })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.vectors.get(token).unwrap_or(&self.unk)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn vectors(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.vectors
    }

    pub fn unk(&self) -> &[f64] {
        &self.unk
    }

    /// Overwrite (or add) one token's vector.
    pub fn set(&mut self, token: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim);
        self.vectors.insert(token.to_string(), vector);
    }
}
