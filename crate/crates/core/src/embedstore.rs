//! Word vectors aligned to vocabulary ids and exact cosine k-NN.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Embeddings indexed by node id. Words without a usable vector are absent;
/// they are never zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<Option<Vec<f64>>>,
    norms: Vec<f64>,
}

impl EmbeddingTable {
    /// Aligns `(word, vector)` entries to `vocab`. Words outside the
    /// vocabulary are skipped, zero-norm vectors are treated as absent, and a
    /// later duplicate of a word replaces the earlier one.
    pub fn from_entries<I>(vocab: &Vocabulary, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if vocab.is_empty() {
            return Err(Error::Config("cannot align embeddings to an empty vocabulary".into()));
        }
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut vectors: Vec<Option<Vec<f64>>> = (0..vocab.len()).map(|_| None).collect();
        for (word, v) in entries {
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "vector for `{word}` has {} entries, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("vector for `{word}` is not finite")));
            }
            if let Some(id) = vocab.id(&word) {
                vectors[id as usize] = Some(v);
            }
        }
        let mut norms = Vec::with_capacity(vectors.len());
        for slot in &mut vectors {
            let norm = slot
                .as_ref()
                .map_or(0.0, |v| libm::sqrt(v.iter().map(|x| x * x).sum()));
            if norm == 0.0 {
                *slot = None;
            }
            norms.push(norm);
        }
        let table = Self { dim, vectors, norms };
        if table.present_count() == 0 {
            return Err(Error::Config("no vocabulary word has an embedding".into()));
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_present(&self, node: u32) -> bool {
        self.vectors.get(node as usize).is_some_and(Option::is_some)
    }

    pub fn vector(&self, node: u32) -> Option<&[f64]> {
        self.vectors.get(node as usize)?.as_deref()
    }

    pub fn present_count(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_some()).count()
    }

    /// Fraction of vocabulary words with an embedding.
    pub fn coverage(&self) -> f64 {
        self.present_count() as f64 / self.len() as f64
    }

    /// Cosine similarity of two present nodes, clamped to `[-1, 1]`.
    pub fn cosine(&self, a: u32, b: u32) -> Option<f64> {
        let (u, v) = (self.vector(a)?, self.vector(b)?);
        let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
        let c = dot / (self.norms[a as usize] * self.norms[b as usize]);
        Some(c.clamp(-1.0, 1.0))
    }

    /// The `k` present nodes most cosine-similar to `node` (excluding
    /// itself), by descending similarity with ascending id on ties.
    pub fn knn(&self, node: u32, k: usize) -> Result<Vec<(u32, f64)>> {
        if !self.is_present(node) {
            return Err(Error::NotPresent(node));
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let mut scored: Vec<(u32, f64)> = (0..self.len() as u32)
            .filter(|&j| j != node)
            .filter_map(|j| self.cosine(node, j).map(|c| (j, c)))
            .collect();
        let by_rank = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored)
    }
}
