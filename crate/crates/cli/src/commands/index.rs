//! `rprm index`: reduce the pool's question vectors with the fitted
//! question-space model and persist the exact-search index.

use rprm_core::embedding::io::read_vector_file;
use rprm_core::embedding::{build_index, PcaModel, RawEmbedding, Space};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let out = &config.output_dir;
    let hash = config.snapshot_hash();
    let model = PcaModel::load(&artifacts::pca_model(out, Space::Question))?;

    let entries = read_vector_file(&artifacts::question_vectors(out))?;
    let mut reduced = Vec::with_capacity(entries.len());
    for (id, values) in entries {
        let raw = RawEmbedding {
            values,
            space: Space::Question,
        };
        reduced.push((id, model.transform(&raw)?));
    }
    let count = reduced.len();
    let index = build_index(reduced, Space::Question, model.fingerprint())?;
    artifacts::write_atomic(
        &artifacts::question_index(out),
        index.to_jsonl(&hash).as_bytes(),
    )?;

    println!(
        "indexed {count} questions in {}-d space (model {})",
        model.output_dim(),
        &model.fingerprint()[..12]
    );
    Ok(())
}
