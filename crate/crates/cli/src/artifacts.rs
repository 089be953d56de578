//! Artifact paths and atomic writes. Every artifact is written to a temp
//! file in its target directory and renamed into place, so a failed command
//! never leaves a partial file.

use std::path::{Path, PathBuf};

use crate::CliError;

pub fn question_vectors(out: &Path) -> PathBuf {
    out.join("question_vectors.jsonl")
}

pub fn question_vectors_bin(out: &Path) -> PathBuf {
    out.join("question_vectors.bin")
}

pub fn step_vectors(out: &Path) -> PathBuf {
    out.join("step_vectors.jsonl")
}

pub fn step_vectors_bin(out: &Path) -> PathBuf {
    out.join("step_vectors.bin")
}

pub fn pca_model(out: &Path, space: rprm_core::Space) -> PathBuf {
    out.join(format!("pca_{space}.json"))
}

pub fn question_index(out: &Path) -> PathBuf {
    out.join("index_question.jsonl")
}

pub fn train_file(out: &Path) -> PathBuf {
    out.join("train.jsonl")
}

pub fn train_audit(out: &Path) -> PathBuf {
    out.join("train_audit.jsonl")
}

pub fn trace_file(out: &Path, dataset: &str, k_suffix: Option<usize>) -> PathBuf {
    let dir = out.join("traces");
    match k_suffix {
        Some(k) => dir.join(format!("{dataset}-k{k}.jsonl")),
        None => dir.join(format!("{dataset}.jsonl")),
    }
}

pub fn report_json(out: &Path) -> PathBuf {
    out.join("report.json")
}

pub fn report_table(out: &Path) -> PathBuf {
    out.join("report.txt")
}

pub fn sweep_csv(out: &Path) -> PathBuf {
    out.join("sweep.csv")
}

pub fn sweep_json(out: &Path) -> PathBuf {
    out.join("sweep.json")
}

pub fn projection_csv(out: &Path) -> PathBuf {
    out.join("projection_2d.csv")
}

/// Write bytes atomically: temp file in the destination directory, then
/// rename.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), CliError> {
    commit_all(vec![(path.to_path_buf(), content.to_vec())])
}

/// Write several artifacts as one commit: all contents go to temp files
/// first, then every temp is renamed into place. A failure before the
/// rename phase leaves no artifact behind.
pub fn commit_all(files: Vec<(PathBuf, Vec<u8>)>) -> Result<(), CliError> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, content) in files {
        let dir = path
            .parent()
            .ok_or_else(|| CliError::validation(format!("{} has no parent", path.display())))?;
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::validation(format!("mkdir {}: {e}", dir.display())))?;
        let tmp = tempfile::NamedTempFile::new_in(dir)
            .map_err(|e| CliError::validation(format!("temp file in {}: {e}", dir.display())))?;
        std::fs::write(tmp.path(), &content)
            .map_err(|e| CliError::validation(format!("write {}: {e}", path.display())))?;
        staged.push((path, tmp));
    }
    for (path, tmp) in staged {
        tmp.persist(&path)
            .map_err(|e| CliError::validation(format!("rename into {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Header line carried by JSONL artifacts.
pub fn header_line(schema: &str, config_hash: &str) -> String {
    serde_json::json!({"schema": schema, "config_hash": config_hash}).to_string()
}
