//! Shared fixtures for CLI integration tests: corpus/eval generators,
//! config writing, and binary invocation.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Output;

pub struct TestDir {
    pub root: tempfile::TempDir,
}

impl TestDir {
    pub fn new() -> Self {
        Self {
            root: tempfile::tempdir().expect("tempdir"),
        }
    }

    pub fn path(&self) -> &Path {
        self.root.path()
    }

    pub fn file(&self, name: &str, content: &str) -> PathBuf {
        let path = self.path().join(name);
        std::fs::write(&path, content).expect("write fixture");
        path
    }
}

/// Pool corpus: `n` questions, one labeled solution of three steps each.
/// Odd questions carry an error at step 3.
pub fn pool_corpus(n: usize, dataset_split: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        let dataset = if i < dataset_split {
            "prm800k"
        } else {
            "math-shepherd"
        };
        let steps: Vec<String> = (1..=3)
            .map(|j| format!("pool question {i} solution step {j} rearranges terms"))
            .collect();
        let labels = if i % 2 == 0 {
            vec![1, 1, 1]
        } else {
            vec![1, 1, 0]
        };
        out.push_str(
            &serde_json::json!({
                "schema": "rprm-corpus/1",
                "id": format!("q{i:03}"),
                "dataset": dataset,
                "question": format!("pool question {i}: combine {i} and {}", i + 1),
                "solutions": [{
                    "solution_id": format!("q{i:03}-s0"),
                    "steps": steps,
                    "step_labels": labels,
                }],
            })
            .to_string(),
        );
        out.push('\n');
    }
    out
}

/// Eval set with unique questions/steps; even samples are fully correct,
/// odd ones have their first error at `(i % 3) + 1`.
pub fn eval_set(n: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        let steps: Vec<String> = (1..=3)
            .map(|j| format!("eval sample {i} distinct step {j}"))
            .collect();
        let first_error = if i % 2 == 0 { -1 } else { (i % 3 + 1) as i64 };
        out.push_str(
            &serde_json::json!({
                "schema": "rprm-eval/1",
                "id": format!("e{i:03}"),
                "question": format!("eval question {i}: a one-off puzzle {i}"),
                "steps": steps,
                "first_error_index": first_error,
            })
            .to_string(),
        );
        out.push('\n');
    }
    out
}

pub struct ConfigSpec<'a> {
    pub pool: &'a [&'a str],
    pub train: Option<&'a str>,
    pub eval: &'a [(&'a str, &'a str)],
    pub embed_endpoint: String,
    pub scorer_endpoint: String,
    pub k: usize,
    pub m: usize,
    pub r: usize,
    pub dims: usize,
    pub sweep_ks: &'a [usize],
    pub template_path: Option<&'a str>,
    pub precomputed_file: Option<&'a str>,
}

impl Default for ConfigSpec<'_> {
    fn default() -> Self {
        Self {
            pool: &[],
            train: None,
            eval: &[],
            embed_endpoint: "http://127.0.0.1:1".to_string(),
            scorer_endpoint: "http://127.0.0.1:1".to_string(),
            k: 2,
            m: 5,
            r: 2,
            dims: 4,
            sweep_ks: &[],
            template_path: None,
            precomputed_file: None,
        }
    }
}

pub fn write_config(dir: &TestDir, name: &str, spec: &ConfigSpec) -> PathBuf {
    let mut body =
        String::from("schema = \"rprm-config/1\"\nseed = 7\noutput_dir = \"out\"\ntheta = 0.5\n");
    if let Some(t) = spec.template_path {
        body.push_str(&format!("template_path = {t:?}\n"));
    }
    body.push_str("\n[corpus]\n");
    if let Some(train) = spec.train {
        body.push_str(&format!("train = {train:?}\n"));
    }
    if !spec.pool.is_empty() {
        let listed: Vec<String> = spec.pool.iter().map(|p| format!("{p:?}")).collect();
        body.push_str(&format!("pool = [{}]\n", listed.join(", ")));
    }
    if !spec.eval.is_empty() {
        body.push_str("\n[corpus.eval]\n");
        for (dataset, file) in spec.eval {
            body.push_str(&format!("{dataset} = {file:?}\n"));
        }
    }
    match spec.precomputed_file {
        Some(path) => body.push_str(&format!(
            "\n[embedding]\nkind = \"precomputed-file\"\nlocation = {path:?}\nbatch_size = 8\nmax_in_flight = 2\n"
        )),
        None => body.push_str(&format!(
            "\n[embedding]\nkind = \"http-service\"\nlocation = {:?}\nbatch_size = 8\nmax_in_flight = 2\n",
            spec.embed_endpoint
        )),
    }
    body.push_str(&format!(
        "\n[scorer]\nendpoint = {:?}\nmodel = \"stub\"\nmax_in_flight = 4\n",
        spec.scorer_endpoint
    ));
    body.push_str(&format!(
        "\n[retrieval]\nk = {}\nm = {}\nr = {}\nquestion_dim = {}\nstep_dim = {}\n",
        spec.k, spec.m, spec.r, spec.dims, spec.dims
    ));
    if !spec.sweep_ks.is_empty() {
        let listed: Vec<String> = spec.sweep_ks.iter().map(|k| k.to_string()).collect();
        body.push_str(&format!("\n[sweep]\nks = [{}]\n", listed.join(", ")));
    }
    dir.file(name, &body)
}

pub fn endpoint(addr: SocketAddr) -> String {
    format!("http://{addr}")
}

/// Run an `rprm` subcommand against a config, returning the process
/// output. Async so in-process stub servers keep serving while the binary
/// runs.
pub async fn run_rprm(command: &str, config: &Path) -> Output {
    run_rprm_env(command, config, &[]).await
}

pub async fn run_rprm_env(command: &str, config: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = tokio::process::Command::new(env!("CARGO_BIN_EXE_rprm"));
    cmd.arg(command).arg("--config").arg(config);
    for (key, value) in env {
        cmd.env(key, value);
    }
    cmd.output().await.expect("rprm runs")
}

pub fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed: stdout={} stderr={}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// Recursively collect (relative path, bytes) of every file under `dir`.
#[allow(dead_code)]
pub fn snapshot_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    fn walk(base: &Path, dir: &Path, files: &mut Vec<(String, Vec<u8>)>) {
        let Ok(entries) = std::fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(base, &path, files);
            } else {
                let rel = path
                    .strip_prefix(base)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    walk(dir, dir, &mut files);
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}
