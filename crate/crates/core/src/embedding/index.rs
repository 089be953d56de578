//! Exact cosine top-k search over an immutable pool of reduced vectors.
//!
//! The pool sizes this toolkit targets make an exhaustive scan both fast
//! enough and, unlike approximate indexes, exactly reproducible: ranking is
//! by descending score with ties broken by ascending id.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cosine_slices, EmbeddingError, ReducedEmbedding, Space};

pub const INDEX_SCHEMA: &str = "rprm-index/1";

/// Immutable similarity index over one embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    space: Space,
    model_fingerprint: String,
    dim: usize,
}

/// Build an index from (id, reduced vector) pairs. All vectors must be
/// nonzero, share a dimension, and carry `model_fingerprint`; ids must be
/// unique. Entries are stored sorted by id, so insertion order never affects
/// query results.
pub fn build_index(
    entries: Vec<(String, ReducedEmbedding)>,
    space: Space,
    model_fingerprint: &str,
) -> Result<SimilarityIndex, EmbeddingError> {
    let mut sorted = entries;
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let dim = sorted.first().map(|(_, v)| v.dim()).unwrap_or(0);
    let mut ids = Vec::with_capacity(sorted.len());
    let mut vectors = Vec::with_capacity(sorted.len());
    for (id, v) in sorted {
        if let Some(prev) = ids.last() {
            if *prev == id {
                return Err(EmbeddingError::DuplicateId { id });
            }
        }
        if v.space != space {
            return Err(EmbeddingError::SpaceMismatch {
                expected: space,
                got: v.space,
            });
        }
        if v.model_fingerprint != model_fingerprint {
            return Err(EmbeddingError::FingerprintMismatch {
                expected: model_fingerprint.to_string(),
                got: v.model_fingerprint,
            });
        }
        if v.dim() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        if v.values.iter().map(|x| x * x).sum::<f64>() == 0.0 {
            return Err(EmbeddingError::ZeroVector { text: id });
        }
        ids.push(id);
        vectors.push(v.values);
    }

    Ok(SimilarityIndex {
        ids,
        vectors,
        space,
        model_fingerprint: model_fingerprint.to_string(),
        dim,
    })
}

impl SimilarityIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .is_ok()
    }

    /// Exact top-k by cosine similarity, excluding `exclude` ids. Returns
    /// min(k, available) hits in (descending score, ascending id) order.
    pub fn top_k(
        &self,
        query: &ReducedEmbedding,
        k: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<(String, f64)>, EmbeddingError> {
        if k == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if query.model_fingerprint != self.model_fingerprint {
            return Err(EmbeddingError::FingerprintMismatch {
                expected: self.model_fingerprint.clone(),
                got: query.model_fingerprint.clone(),
            });
        }
        let mut scored: Vec<(usize, f64)> = Vec::with_capacity(self.len());
        for (i, row) in self.vectors.iter().enumerate() {
            if exclude.contains(&self.ids[i]) {
                continue;
            }
            scored.push((i, cosine_slices(&query.values, row)?));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(self.ids[a.0].cmp(&self.ids[b.0])));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(i, score)| (self.ids[i].clone(), score))
            .collect())
    }

    pub fn to_jsonl(&self, config_hash: &str) -> String {
        let mut out = String::new();
        let header = IndexHeader {
            schema: INDEX_SCHEMA.to_string(),
            config_hash: config_hash.to_string(),
            space: self.space,
            model_fingerprint: self.model_fingerprint.clone(),
            dim: self.dim,
        };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for (id, vector) in self.ids.iter().zip(&self.vectors) {
            let row = IndexRow {
                id: id.clone(),
                vector: vector.clone(),
            };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<(), EmbeddingError> {
        fs::write(path, self.to_jsonl(config_hash)).map_err(|e| EmbeddingError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let content = fs::read_to_string(path).map_err(|e| EmbeddingError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let bad = |message: String| EmbeddingError::BadFile {
            path: path.display().to_string(),
            message,
        };
        let mut lines = content.lines().filter(|l| !l.trim().is_empty());
        let header: IndexHeader = lines
            .next()
            .ok_or_else(|| bad("empty index file".to_string()))
            .and_then(|l| serde_json::from_str(l).map_err(|e| bad(e.to_string())))?;
        if header.schema != INDEX_SCHEMA {
            return Err(bad(format!(
                "wrong schema {:?}, expected {INDEX_SCHEMA:?}",
                header.schema
            )));
        }
        let mut entries = Vec::new();
        for line in lines {
            let row: IndexRow = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            entries.push((
                row.id,
                ReducedEmbedding::new(row.vector, header.space, &header.model_fingerprint),
            ));
        }
        build_index(entries, header.space, &header.model_fingerprint)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    schema: String,
    config_hash: String,
    space: Space,
    model_fingerprint: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    id: String,
    vector: Vec<f64>,
}
