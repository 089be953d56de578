//! `rprm sweep`: run the full retrieve→prompt→score→evaluate pipeline once
//! per configured k, everything else fixed, and emit the per-k table.

use rprm_core::evaluation::sweep_topk;
use rprm_core::retrieval::RetrievalConfig;

use crate::config::RunConfig;
use crate::{artifacts, CliError};

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    if config.sweep.ks.is_empty() {
        return Err(CliError::validation("config has no sweep.ks values"));
    }
    let out = &config.output_dir;
    let hash = config.snapshot_hash();

    let report = sweep_topk(&config.sweep.ks, config.retrieval.m, |k| {
        let retrieval = RetrievalConfig {
            k,
            ..config.retrieval.clone()
        };
        async move {
            super::evaluate::compute_report(config, &retrieval, Some(k))
                .await
                .map_err(|e| e.to_string())
        }
    })
    .await?;

    artifacts::commit_all(vec![
        (artifacts::sweep_csv(out), report.to_csv(&hash).into_bytes()),
        (
            artifacts::sweep_json(out),
            serde_json::to_string_pretty(&report)
                .expect("sweep serializes")
                .into_bytes(),
        ),
    ])?;

    for row in &report.rows {
        match (&row.report, &row.error) {
            (Some(r), _) => println!("k={}: Avg.F1 {:.1}", row.k, r.avg_f1),
            (None, Some(e)) => println!("k={}: failed: {e}", row.k),
            _ => {}
        }
    }
    Ok(())
}
