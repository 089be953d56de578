//! `rprm evaluate`: score every eval dataset, grade the predictions, and
//! write the metrics report (JSON and plain-text table).

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use rprm_core::evaluation::{build_report, score_predictions, MetricsReport};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

pub async fn compute_report(
    config: &RunConfig,
    retrieval_cfg: &rprm_core::retrieval::RetrievalConfig,
    k_suffix: Option<usize>,
) -> Result<MetricsReport, CliError> {
    let outcomes = super::score::run_scoring(config, retrieval_cfg, k_suffix).await?;
    let mut per_dataset = Vec::with_capacity(outcomes.len());
    let mut provenance = BTreeMap::new();
    for outcome in &outcomes {
        let accuracies = score_predictions(&outcome.samples, &outcome.predictions)?;
        per_dataset.push((outcome.dataset.clone(), accuracies));
        let bytes = std::fs::read(&outcome.trace_path)
            .map_err(|e| CliError::validation(format!("reading trace file: {e}")))?;
        provenance.insert(
            format!("trace:{}", outcome.dataset),
            hex::encode(Sha256::digest(&bytes)),
        );
    }
    Ok(build_report(
        per_dataset,
        &config.snapshot_hash(),
        provenance,
    )?)
}

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let report = compute_report(config, &config.retrieval, None).await?;
    let out = &config.output_dir;
    let table_file = format!(
        "# config_hash={}\n{}",
        report.config_hash,
        report.render_table()
    );
    artifacts::commit_all(vec![
        (artifacts::report_json(out), report.to_json().into_bytes()),
        (artifacts::report_table(out), table_file.into_bytes()),
    ])?;
    print!("{}", report.render_table());
    Ok(())
}
