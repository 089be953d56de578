//! Semantic vectors: provider-backed embedding, PCA reduction, and exact
//! cosine top-k search over immutable indexes.

pub mod index;
pub mod io;
pub mod pca;
pub mod provider;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{build_index, SimilarityIndex};
pub use pca::{fit_pca, PcaModel};
pub use provider::{EmbedResult, Embedder, EmbeddingProvider, EmbeddingProviderSpec, ProviderKind};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no texts to embed")]
    NoTexts,
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { got: usize, expected: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned a zero vector for text {text:?}")]
    ZeroVector { text: String },
    #[error("non-finite value in vector for text {text:?}")]
    NonFinite { text: String },
    #[error("no precomputed vector for text {text:?}")]
    MissingPrecomputed { text: String },
    #[error("zero-norm operand in cosine similarity")]
    ZeroNorm,
    #[error("degenerate data: total variance is zero")]
    DegenerateData,
    #[error("target dimension {d} exceeds input dimension {input_dim}")]
    TargetDimTooLarge { d: usize, input_dim: usize },
    #[error("target dimension must be at least 1")]
    ZeroTargetDim,
    #[error("need at least {needed} samples for {d} components, got {got}")]
    TooFewSamples { needed: usize, d: usize, got: usize },
    #[error("duplicate id {id:?} in index")]
    DuplicateId { id: String },
    #[error("PCA model fingerprint mismatch: index has {expected}, vector has {got}")]
    FingerprintMismatch { expected: String, got: String },
    #[error("space mismatch: expected {expected}, got {got}")]
    SpaceMismatch { expected: Space, got: Space },
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("cache io: {0}")]
    CacheIo(String),
    #[error("file {path}: {message}")]
    BadFile { path: String, message: String },
}

/// Which embedding space a vector lives in. Question and step embeddings
/// use separate PCA models and separate indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Question,
    Step,
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Space::Question => f.write_str("question"),
            Space::Step => f.write_str("step"),
        }
    }
}

/// A provider-produced vector in the raw (un-reduced) embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEmbedding {
    pub values: Vec<f64>,
    pub space: Space,
}

impl RawEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A PCA-reduced vector, tagged with the fingerprint of the model that
/// produced it so indexes can reject mixed-model pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedEmbedding {
    pub values: Vec<f64>,
    pub space: Space,
    pub model_fingerprint: String,
}

impl ReducedEmbedding {
    pub fn new(values: Vec<f64>, space: Space, model_fingerprint: impl Into<String>) -> Self {
        Self {
            values,
            space,
            model_fingerprint: model_fingerprint.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Cosine similarity of two reduced vectors. Zero vectors are barred
/// upstream, so a zero-norm operand here is an error.
pub fn cosine_similarity(
    a: &ReducedEmbedding,
    b: &ReducedEmbedding,
) -> Result<f64, EmbeddingError> {
    cosine_slices(&a.values, &b.values)
}

/// Hex sha256 of a text, the cache and precomputed-file lookup key.
pub fn text_key(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}
