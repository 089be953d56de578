//! `rprm embed`: embed every pool question and every pool step, write the
//! per-space vector files and their binary sidecars.

use rprm_core::embedding::io::{binary_sidecar_contents, vector_file_contents};
use rprm_core::embedding::{Embedder, Space};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let store = super::load_pool_store(config)?;
    if store.question_count() == 0 {
        return Err(CliError::validation(
            "no pool corpora configured; nothing to embed",
        ));
    }
    let embedder = Embedder::from_spec(&config.embedding)?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::validation(format!("mkdir {}: {e}", out.display())))?;
    let hash = config.snapshot_hash();

    let mut question_ids = Vec::new();
    let mut question_texts = Vec::new();
    for q in store.questions() {
        question_ids.push(q.id.clone());
        question_texts.push(q.text.clone());
    }
    let questions = embedder
        .embed_texts(&question_texts, Space::Question)
        .await?;

    let mut step_ids = Vec::new();
    let mut step_texts = Vec::new();
    for q in store.questions() {
        for solution in store.solutions(&q.id) {
            for (i, text) in solution.steps.iter().enumerate() {
                step_ids.push(super::step_vector_id(&q.id, &solution.solution_id, i + 1));
                step_texts.push(text.clone());
            }
        }
    }
    if step_texts.is_empty() {
        return Err(CliError::validation("pool corpora contain no steps"));
    }
    let steps = embedder.embed_texts(&step_texts, Space::Step).await?;

    // All outputs staged in memory first; nothing lands on error.
    let question_entries: Vec<(String, Vec<f64>)> = question_ids
        .into_iter()
        .zip(questions.vectors.iter().map(|v| v.values.clone()))
        .collect();
    let step_entries: Vec<(String, Vec<f64>)> = step_ids
        .into_iter()
        .zip(steps.vectors.iter().map(|v| v.values.clone()))
        .collect();

    let question_raw: Vec<Vec<f64>> = question_entries.iter().map(|(_, v)| v.clone()).collect();
    let step_raw: Vec<Vec<f64>> = step_entries.iter().map(|(_, v)| v.clone()).collect();
    artifacts::commit_all(vec![
        (
            artifacts::question_vectors(out),
            vector_file_contents(&question_entries, Some(&hash)).into_bytes(),
        ),
        (
            artifacts::question_vectors_bin(out),
            binary_sidecar_contents(&question_raw)?,
        ),
        (
            artifacts::step_vectors(out),
            vector_file_contents(&step_entries, Some(&hash)).into_bytes(),
        ),
        (
            artifacts::step_vectors_bin(out),
            binary_sidecar_contents(&step_raw)?,
        ),
    ])?;

    let hits = questions.cache_hits + steps.cache_hits;
    let misses = questions.cache_misses + steps.cache_misses;
    let total = hits + misses;
    let rate = if total == 0 {
        100.0
    } else {
        100.0 * hits as f64 / total as f64
    };
    println!(
        "embedded {} questions and {} steps (cache: {hits} hits, {misses} misses, {rate:.1}% hit rate)",
        question_entries.len(),
        step_entries.len(),
    );
    Ok(())
}
