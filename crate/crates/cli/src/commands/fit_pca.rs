//! `rprm fit-pca`: fit one PCA model per space on the embedded pool.

use rprm_core::embedding::io::read_vector_file;
use rprm_core::embedding::{fit_pca, RawEmbedding, Space};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let out = &config.output_dir;
    let hash = config.snapshot_hash();

    let question_entries = read_vector_file(&artifacts::question_vectors(out))?;
    let question_raw: Vec<RawEmbedding> = question_entries
        .into_iter()
        .map(|(_, values)| RawEmbedding {
            values,
            space: Space::Question,
        })
        .collect();
    let question_model = fit_pca(&question_raw, config.retrieval.question_dim)?;

    let step_entries = read_vector_file(&artifacts::step_vectors(out))?;
    let step_raw: Vec<RawEmbedding> = step_entries
        .into_iter()
        .map(|(_, values)| RawEmbedding {
            values,
            space: Space::Step,
        })
        .collect();
    let step_model = fit_pca(&step_raw, config.retrieval.step_dim)?;

    artifacts::commit_all(vec![
        (
            artifacts::pca_model(out, Space::Question),
            question_model.to_json_with_hash(&hash).into_bytes(),
        ),
        (
            artifacts::pca_model(out, Space::Step),
            step_model.to_json_with_hash(&hash).into_bytes(),
        ),
    ])?;

    println!(
        "fitted PCA question {}→{} (fingerprint {}) and step {}→{} (fingerprint {})",
        question_model.input_dim(),
        question_model.output_dim(),
        &question_model.fingerprint()[..12],
        step_model.input_dim(),
        step_model.output_dim(),
        &step_model.fingerprint()[..12],
    );
    Ok(())
}
