//! Pluggable embedding providers with a content-addressed cache.
//!
//! Two provider kinds exist: a precomputed-file lookup (vectors keyed by the
//! text itself or by its sha256) and an HTTP service speaking
//! `POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}`. Uncached
//! texts are embedded in batches with a bounded number of in-flight
//! requests; results are cached by content hash so identical text always
//! yields an identical vector.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use super::{io, text_key, EmbeddingError, RawEmbedding, Space};

pub const CACHE_SCHEMA: &str = "rprm-cache/1";

/// Where embeddings come from and how aggressively to fetch them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub kind: ProviderKind,
    /// File path for `precomputed-file`, base URL for `http-service`.
    pub location: String,
    pub batch_size: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    PrecomputedFile,
    HttpService,
}

impl EmbeddingProviderSpec {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.batch_size == 0 {
            return Err(EmbeddingError::ZeroBatchSize);
        }
        Ok(())
    }
}

/// Raw-embedding source. Implementations return one vector per input text,
/// in order.
#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Lookup provider over a vector file; keys are matched first against the
/// literal text, then against its sha256.
pub struct PrecomputedFileProvider {
    by_key: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedFileProvider {
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let entries = io::read_vector_file(path)?;
        let mut by_key = BTreeMap::new();
        for (id, vector) in entries {
            by_key.insert(id, vector);
        }
        Ok(Self { by_key })
    }
}

#[async_trait]
impl EmbeddingProvider for PrecomputedFileProvider {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|text| {
                self.by_key
                    .get(text)
                    .or_else(|| self.by_key.get(&text_key(text)))
                    .cloned()
                    .ok_or_else(|| EmbeddingError::MissingPrecomputed { text: text.clone() })
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for the `POST /embed` protocol.
pub struct HttpEmbeddingProvider {
    client: reqwest::Client,
    endpoint: String,
}

impl HttpEmbeddingProvider {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, EmbeddingError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbeddingError::ProviderUnreachable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
        })
    }
}

#[async_trait]
impl EmbeddingProvider for HttpEmbeddingProvider {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .await
            .map_err(|e| EmbeddingError::ProviderUnreachable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(EmbeddingError::ProviderUnreachable(format!(
                "{} returned {}",
                self.endpoint,
                response.status()
            )));
        }
        let body: EmbedResponse = response
            .json()
            .await
            .map_err(|e| EmbeddingError::ProviderUnreachable(e.to_string()))?;
        Ok(body.vectors)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    schema: String,
    vector: Vec<f64>,
}

/// File cache keyed by text sha256. Writes go through a temp file and a
/// rename, so concurrent writers of the same key converge on identical
/// bytes and distinct keys never interfere.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn new(dir: PathBuf) -> Result<Self, EmbeddingError> {
        std::fs::create_dir_all(&dir).map_err(|e| EmbeddingError::CacheIo(e.to_string()))?;
        Ok(Self { dir })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        let content = std::fs::read_to_string(self.path_for(key)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&content).ok()?;
        (entry.schema == CACHE_SCHEMA).then_some(entry.vector)
    }

    pub fn put(&self, key: &str, vector: &[f64]) -> Result<(), EmbeddingError> {
        let entry = CacheEntry {
            schema: CACHE_SCHEMA.to_string(),
            vector: vector.to_vec(),
        };
        let json = serde_json::to_string(&entry).expect("cache entry serializes");
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .map_err(|e| EmbeddingError::CacheIo(e.to_string()))?;
        std::fs::write(tmp.path(), json).map_err(|e| EmbeddingError::CacheIo(e.to_string()))?;
        tmp.persist(self.path_for(key))
            .map_err(|e| EmbeddingError::CacheIo(e.to_string()))?;
        Ok(())
    }
}

/// Result of an embed call, with cache accounting for reporting.
#[derive(Debug)]
pub struct EmbedResult {
    pub vectors: Vec<RawEmbedding>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Provider plus cache plus batching policy.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
    batch_size: usize,
    max_in_flight: usize,
}

impl Embedder {
    pub fn from_spec(spec: &EmbeddingProviderSpec) -> Result<Self, EmbeddingError> {
        spec.validate()?;
        let provider: Arc<dyn EmbeddingProvider> = match spec.kind {
            ProviderKind::PrecomputedFile => {
                Arc::new(PrecomputedFileProvider::load(Path::new(&spec.location))?)
            }
            ProviderKind::HttpService => Arc::new(HttpEmbeddingProvider::new(
                &spec.location,
                Duration::from_millis(spec.timeout_ms),
            )?),
        };
        let cache = spec
            .cache_dir
            .as_ref()
            .map(|dir| EmbeddingCache::new(dir.clone()))
            .transpose()?;
        Ok(Self {
            provider,
            cache,
            batch_size: spec.batch_size,
            max_in_flight: spec.max_in_flight.max(1),
        })
    }

    pub fn with_provider(provider: Arc<dyn EmbeddingProvider>, batch_size: usize) -> Self {
        Self::new(provider, None, batch_size, 1)
    }

    pub fn new(
        provider: Arc<dyn EmbeddingProvider>,
        cache: Option<EmbeddingCache>,
        batch_size: usize,
        max_in_flight: usize,
    ) -> Self {
        Self {
            provider,
            cache,
            batch_size: batch_size.max(1),
            max_in_flight: max_in_flight.max(1),
        }
    }

    pub fn cache(&self) -> Option<&EmbeddingCache> {
        self.cache.as_ref()
    }

    /// Embed `texts` in order, serving repeats and previously seen texts
    /// from the cache. Every returned vector is finite, nonzero, and of the
    /// same dimension.
    pub async fn embed_texts(
        &self,
        texts: &[String],
        space: Space,
    ) -> Result<EmbedResult, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::NoTexts);
        }

        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let text_by_key: BTreeMap<&str, &str> = keys
            .iter()
            .zip(texts)
            .map(|(k, t)| (k.as_str(), t.as_str()))
            .collect();
        let mut resolved: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut cache_hits = 0usize;

        if let Some(cache) = &self.cache {
            for (text, key) in texts.iter().zip(&keys) {
                if resolved.contains_key(key) {
                    continue;
                }
                if let Some(vector) = cache.get(key) {
                    validate_vector(text, &vector)?;
                    resolved.insert(key.clone(), vector);
                    cache_hits += 1;
                }
            }
        }

        // First occurrence of each still-unresolved text, in input order.
        let mut pending: Vec<(String, String)> = Vec::new();
        for (text, key) in texts.iter().zip(&keys) {
            if !resolved.contains_key(key) && !pending.iter().any(|(k, _)| k == key) {
                pending.push((key.clone(), text.clone()));
            }
        }
        let cache_misses = pending.len();

        let batches: Vec<Vec<(String, String)>> = pending
            .chunks(self.batch_size)
            .map(|c| c.to_vec())
            .collect();
        let provider = Arc::clone(&self.provider);
        let fetched: Vec<Vec<(String, Vec<f64>)>> =
            stream::iter(batches.into_iter().map(|batch| {
                let provider = Arc::clone(&provider);
                async move {
                    let texts: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
                    let vectors = provider.embed_batch(&texts).await?;
                    if vectors.len() != texts.len() {
                        return Err(EmbeddingError::CountMismatch {
                            got: vectors.len(),
                            expected: texts.len(),
                        });
                    }
                    Ok::<_, EmbeddingError>(
                        batch
                            .into_iter()
                            .map(|(key, _)| key)
                            .zip(vectors)
                            .collect::<Vec<_>>(),
                    )
                }
            }))
            .buffered(self.max_in_flight)
            .try_collect()
            .await?;

        for batch in fetched {
            for (key, vector) in batch {
                let text = text_by_key
                    .get(key.as_str())
                    .copied()
                    .unwrap_or("<unknown>");
                validate_vector(text, &vector)?;
                if let Some(cache) = &self.cache {
                    cache.put(&key, &vector)?;
                }
                resolved.insert(key, vector);
            }
        }

        let dim = resolved
            .values()
            .next()
            .map(Vec::len)
            .expect("texts is non-empty");
        for vector in resolved.values() {
            if vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: vector.len(),
                });
            }
        }

        let vectors = keys
            .iter()
            .map(|key| RawEmbedding {
                values: resolved[key].clone(),
                space,
            })
            .collect();
        Ok(EmbedResult {
            vectors,
            cache_hits,
            cache_misses,
        })
    }
}

fn validate_vector(text: &str, vector: &[f64]) -> Result<(), EmbeddingError> {
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite {
            text: text.to_string(),
        });
    }
    if vector.iter().map(|x| x * x).sum::<f64>() == 0.0 {
        return Err(EmbeddingError::ZeroVector {
            text: text.to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct CountingProvider {
        dim: usize,
        calls: std::sync::atomic::AtomicUsize,
    }

    #[async_trait]
    impl EmbeddingProvider for CountingProvider {
        async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| (0..self.dim).map(|i| (t.len() + i) as f64 + 0.5).collect())
                .collect())
        }
    }

    struct ZeroProvider;

    #[async_trait]
    impl EmbeddingProvider for ZeroProvider {
        async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            Ok(texts.iter().map(|_| vec![0.0, 0.0]).collect())
        }
    }

    struct RaggedProvider;

    #[async_trait]
    impl EmbeddingProvider for RaggedProvider {
        async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            Ok(texts
                .iter()
                .enumerate()
                .map(|(i, _)| vec![1.0; 2 + i])
                .collect())
        }
    }

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("rprm-prov-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[tokio::test]
    async fn identical_text_is_cache_served_and_byte_identical() {
        let dir = tmp_dir("cache");
        let provider = Arc::new(CountingProvider {
            dim: 3,
            calls: Default::default(),
        });
        let embedder = Embedder {
            provider: provider.clone(),
            cache: Some(EmbeddingCache::new(dir.clone()).unwrap()),
            batch_size: 8,
            max_in_flight: 2,
        };
        let texts = vec!["same text".to_string()];
        let first = embedder.embed_texts(&texts, Space::Question).await.unwrap();
        assert_eq!(first.cache_misses, 1);
        let second = embedder.embed_texts(&texts, Space::Question).await.unwrap();
        assert_eq!(second.cache_hits, 1);
        assert_eq!(second.cache_misses, 0);
        let a: Vec<u64> = first.vectors[0]
            .values
            .iter()
            .map(|x| x.to_bits())
            .collect();
        let b: Vec<u64> = second.vectors[0]
            .values
            .iter()
            .map(|x| x.to_bits())
            .collect();
        assert_eq!(a, b);
        assert_eq!(provider.calls.load(std::sync::atomic::Ordering::SeqCst), 1);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[tokio::test]
    async fn duplicate_texts_within_one_call_resolve_once() {
        let provider = Arc::new(CountingProvider {
            dim: 2,
            calls: Default::default(),
        });
        let embedder = Embedder::with_provider(provider, 8);
        let texts = vec!["x".to_string(), "x".to_string(), "y".to_string()];
        let result = embedder.embed_texts(&texts, Space::Step).await.unwrap();
        assert_eq!(result.vectors.len(), 3);
        assert_eq!(result.vectors[0], result.vectors[1]);
    }

    #[tokio::test]
    async fn precomputed_lookup_returns_stored_vectors() {
        let dir = tmp_dir("precomputed");
        let path = dir.join("vectors.jsonl");
        let entries = vec![
            ("alpha".to_string(), vec![1.0, 2.0]),
            ("beta".to_string(), vec![3.0, 4.0]),
            ("gamma".to_string(), vec![5.0, 6.0]),
        ];
        io::write_vector_file(&path, &entries, None).unwrap();
        let provider = PrecomputedFileProvider::load(&path).unwrap();
        let texts: Vec<String> = entries.iter().map(|(id, _)| id.clone()).collect();
        let got = provider.embed_batch(&texts).await.unwrap();
        for ((_, expected), vector) in entries.iter().zip(&got) {
            assert_eq!(vector, expected);
        }
        let missing = provider.embed_batch(&["nope".to_string()]).await;
        assert!(matches!(
            missing,
            Err(EmbeddingError::MissingPrecomputed { .. })
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[tokio::test]
    async fn precomputed_lookup_accepts_hash_keys() {
        let dir = tmp_dir("hashed");
        let path = dir.join("vectors.jsonl");
        let text = "some question text".to_string();
        io::write_vector_file(&path, &[(text_key(&text), vec![7.0, 8.0])], None).unwrap();
        let provider = PrecomputedFileProvider::load(&path).unwrap();
        let got = provider.embed_batch(&[text]).await.unwrap();
        assert_eq!(got[0], vec![7.0, 8.0]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[tokio::test]
    async fn zero_vector_rejected() {
        let embedder = Embedder::with_provider(Arc::new(ZeroProvider), 4);
        let err = embedder
            .embed_texts(&["t".to_string()], Space::Question)
            .await
            .unwrap_err();
        assert!(matches!(err, EmbeddingError::ZeroVector { .. }));
    }

    #[tokio::test]
    async fn ragged_dimensions_rejected() {
        let embedder = Embedder::with_provider(Arc::new(RaggedProvider), 4);
        let err = embedder
            .embed_texts(&["a".to_string(), "b".to_string()], Space::Question)
            .await
            .unwrap_err();
        assert!(matches!(err, EmbeddingError::DimensionMismatch { .. }));
    }

    #[tokio::test]
    async fn empty_input_rejected() {
        let embedder = Embedder::with_provider(Arc::new(ZeroProvider), 4);
        assert!(matches!(
            embedder.embed_texts(&[], Space::Question).await,
            Err(EmbeddingError::NoTexts)
        ));
    }

    #[test]
    fn zero_batch_size_rejected() {
        let spec = EmbeddingProviderSpec {
            kind: ProviderKind::PrecomputedFile,
            location: "x".to_string(),
            batch_size: 0,
            cache_dir: None,
            max_in_flight: 1,
            timeout_ms: 1000,
        };
        assert!(matches!(
            spec.validate(),
            Err(EmbeddingError::ZeroBatchSize)
        ));
    }
}
