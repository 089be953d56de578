//! Trust-boundary behavior of the file formats: header-line skipping,
//! corrupt-artifact rejection, and cache safety under concurrent writers.

use std::sync::Arc;

use async_trait::async_trait;

use rprm_core::corpus::load_corpus_str;
use rprm_core::embedding::provider::EmbeddingCache;
use rprm_core::embedding::{
    build_index, Embedder, EmbeddingError, EmbeddingProvider, ReducedEmbedding, SimilarityIndex,
    Space,
};
use rprm_core::prompting::PromptTemplate;
use rprm_core::retrieval::{retrieve_steps, StepPool, StepPoolEntry};

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("rprm-af-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn corpus_loader_skips_artifact_header() {
    let content = format!(
        "{}\n{}\n",
        serde_json::json!({"schema": "rprm-corpus/1", "config_hash": "abc"}),
        serde_json::json!({
            "schema": "rprm-corpus/1", "id": "q1", "dataset": "d", "question": "q",
            "solutions": [],
        }),
    );
    let store = load_corpus_str(&content, "d").unwrap();
    assert_eq!(store.question_count(), 1);
}

#[test]
fn corrupt_index_files_rejected() {
    let dir = tmp_dir("index");
    let path = dir.join("index.jsonl");

    // Wrong schema in the header.
    std::fs::write(
        &path,
        "{\"schema\":\"bogus/9\",\"config_hash\":\"x\",\"space\":\"question\",\"model_fingerprint\":\"fp\",\"dim\":2}\n",
    )
    .unwrap();
    assert!(SimilarityIndex::load(&path).is_err());

    // Header fine, row garbled.
    std::fs::write(
        &path,
        "{\"schema\":\"rprm-index/1\",\"config_hash\":\"x\",\"space\":\"question\",\"model_fingerprint\":\"fp\",\"dim\":2}\n{not json\n",
    )
    .unwrap();
    assert!(SimilarityIndex::load(&path).is_err());

    // Round trip of a healthy index still works.
    let index = build_index(
        vec![(
            "a".to_string(),
            ReducedEmbedding::new(vec![1.0, 0.5], Space::Question, "fp"),
        )],
        Space::Question,
        "fp",
    )
    .unwrap();
    index.save(&path, "hash").unwrap();
    assert_eq!(SimilarityIndex::load(&path).unwrap(), index);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn template_file_with_wrong_schema_rejected() {
    let dir = tmp_dir("template");
    let path = dir.join("template.toml");
    let body = PromptTemplate::default()
        .to_toml()
        .replace("rprm-template/1", "rprm-template/9");
    std::fs::write(&path, body).unwrap();
    assert!(PromptTemplate::load(&path).is_err());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn step_retrieval_truncates_to_pool_size() {
    let entries: Vec<StepPoolEntry> = (0..3)
        .map(|i| StepPoolEntry {
            question_id: format!("q{i}"),
            solution_id: "s".to_string(),
            step_index: 1,
            text: format!("t{i}"),
        })
        .collect();
    let vectors = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
    let pool = StepPool::from_parts(entries, vectors, "fp", "p").unwrap();
    let query = ReducedEmbedding::new(vec![1.0, 0.2], Space::Step, "fp");
    let hits = retrieve_steps(&pool, &query, 50, None).unwrap();
    assert_eq!(hits.len(), 3);
}

struct SlowHashProvider;

#[async_trait]
impl EmbeddingProvider for SlowHashProvider {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        tokio::time::sleep(std::time::Duration::from_millis(2)).await;
        Ok(texts
            .iter()
            .map(|t| vec![t.len() as f64 + 0.25, 1.0, -0.5])
            .collect())
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn cache_is_safe_under_concurrent_writers() {
    let dir = tmp_dir("concurrent-cache");
    // Several embedders share one cache directory and embed overlapping
    // text sets at the same time; every result must agree and the cache
    // must end up consistent.
    let texts: Vec<String> = (0..12).map(|i| format!("shared text {}", i % 5)).collect();
    let mut handles = Vec::new();
    for _ in 0..6 {
        let dir = dir.clone();
        let texts = texts.clone();
        handles.push(tokio::spawn(async move {
            let embedder = Embedder::new(
                Arc::new(SlowHashProvider),
                Some(EmbeddingCache::new(dir).unwrap()),
                4,
                3,
            );
            embedder.embed_texts(&texts, Space::Step).await.unwrap()
        }));
    }
    let mut all = Vec::new();
    for handle in handles {
        all.push(handle.await.unwrap());
    }
    let reference = &all[0].vectors;
    for result in &all {
        assert_eq!(&result.vectors, reference);
    }
    // A fresh embedder over the same cache serves everything as hits.
    let embedder = Embedder::new(
        Arc::new(SlowHashProvider),
        Some(EmbeddingCache::new(dir.clone()).unwrap()),
        4,
        3,
    );
    let result = embedder.embed_texts(&texts, Space::Step).await.unwrap();
    assert_eq!(result.cache_misses, 0);
    assert_eq!(&result.vectors, reference);
    std::fs::remove_dir_all(&dir).ok();
}
