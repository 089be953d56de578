//! `rprm project-2d`: fit a 2-component PCA on the pool's question
//! embeddings and export per-question coordinates tagged by dataset, for
//! plotting distribution shifts across corpora.

use std::collections::BTreeMap;

use rprm_core::embedding::io::read_vector_file;
use rprm_core::embedding::{fit_pca, RawEmbedding, Space};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let store = super::load_pool_store(config)?;
    let out = &config.output_dir;
    let entries = read_vector_file(&artifacts::question_vectors(out))?;
    if entries.is_empty() {
        return Err(CliError::validation("question vector file is empty"));
    }

    let raw: Vec<RawEmbedding> = entries
        .iter()
        .map(|(_, values)| RawEmbedding {
            values: values.clone(),
            space: Space::Question,
        })
        .collect();
    let model = fit_pca(&raw, 2)?;

    let datasets: BTreeMap<&str, &str> = store
        .questions()
        .iter()
        .map(|q| (q.id.as_str(), q.dataset.as_str()))
        .collect();

    let mut rows: Vec<(String, String, f64, f64)> = Vec::with_capacity(entries.len());
    for ((id, _), vector) in entries.iter().zip(&raw) {
        let reduced = model.transform(vector)?;
        let dataset = datasets.get(id.as_str()).copied().unwrap_or("unknown");
        rows.push((
            id.clone(),
            dataset.to_string(),
            reduced.values[0],
            reduced.values[1],
        ));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let mut csv = format!("# config_hash={}\nid,dataset,x,y\n", config.snapshot_hash());
    for (id, dataset, x, y) in &rows {
        csv.push_str(&format!("{id},{dataset},{x},{y}\n"));
    }
    artifacts::write_atomic(&artifacts::projection_csv(out), csv.as_bytes())?;
    println!("projected {} questions to 2-d", rows.len());
    Ok(())
}
