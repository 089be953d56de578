//! End-to-end command behavior against the in-repo stub servers: baseline
//! equivalence of the no-retrieval dataset build, checkpoint resume, the
//! 2-d projection contract, env-var endpoint overrides, and exit codes.

mod common;

use common::*;

use rprm_core::prompting::PromptTemplate;
use rprm_stubs::{EmbedBehavior, OracleConfig, ScoreBehavior};

async fn batch(dir: &TestDir, config: &std::path::Path, commands: &[&str]) {
    for command in commands {
        let output = run_rprm(command, config).await;
        assert_success(&output, &format!("{command} in {}", dir.path().display()));
    }
}

#[tokio::test]
async fn no_retrieval_build_matches_baseline_template_build() {
    let dir = TestDir::new();
    dir.file("pool.jsonl", &pool_corpus(6, 3));

    // Baseline template: same version, no retrieval extension.
    let mut baseline = PromptTemplate::default();
    baseline.retrieval_extension = String::new();
    dir.file("baseline.toml", &baseline.to_toml());

    let extension_config = write_config(
        &dir,
        "run_extension.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            train: Some("pool.jsonl"),
            k: 0,
            m: 0,
            r: 0,
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("build-dataset", &extension_config).await;
    assert_success(
        &output,
        "build-dataset (template with extension, retrieval off)",
    );
    let extension_records: Vec<String> =
        std::fs::read_to_string(dir.path().join("out/train.jsonl"))
            .unwrap()
            .lines()
            .skip(1)
            .map(String::from)
            .collect();

    std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    let baseline_config = write_config(
        &dir,
        "run_baseline.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            train: Some("pool.jsonl"),
            k: 0,
            m: 0,
            r: 0,
            template_path: Some("baseline.toml"),
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("build-dataset", &baseline_config).await;
    assert_success(&output, "build-dataset (baseline template)");
    let baseline_records: Vec<String> = std::fs::read_to_string(dir.path().join("out/train.jsonl"))
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();

    assert_eq!(extension_records, baseline_records);
    assert!(!extension_records.is_empty());
}

#[tokio::test]
async fn score_checkpoints_serve_a_scorerless_evaluate() {
    let dir = TestDir::new();
    let eval_content = eval_set(8);
    dir.file("eval.jsonl", &eval_content);
    let samples = rprm_core::corpus::load_eval_samples_str(&eval_content).unwrap();
    let oracle = OracleConfig::from_eval_samples(&samples, PromptTemplate::default());
    let (score_addr, _s) = rprm_stubs::spawn_score_stub(ScoreBehavior::Oracle(oracle), 0)
        .await
        .unwrap();

    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            eval: &[("alpha", "eval.jsonl")],
            scorer_endpoint: endpoint(score_addr),
            k: 0,
            m: 0,
            r: 0,
            ..ConfigSpec::default()
        },
    );

    // Live pass writes traces and a report.
    batch(&dir, &config, &["score", "evaluate"]).await;
    let first_report = std::fs::read(dir.path().join("out/report.json")).unwrap();

    // Dead scorer: resume must not need it.
    let dead_config = write_config(
        &dir,
        "run_dead.toml",
        &ConfigSpec {
            eval: &[("alpha", "eval.jsonl")],
            scorer_endpoint: endpoint(score_addr),
            k: 0,
            m: 0,
            r: 0,
            ..ConfigSpec::default()
        },
    );
    // Same effective config content, so the snapshot hash matches and the
    // traces are authoritative even though the server is gone.
    drop(_s);
    let output = run_rprm("evaluate", &dead_config).await;
    assert_success(&output, "evaluate resumed from checkpoints");
    let second_report = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert_eq!(first_report, second_report);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("100.0"), "{stdout}");
}

#[tokio::test]
async fn project_2d_centers_and_flattens_collinear_corpora() {
    let dir = TestDir::new();
    let n = 7;
    // Collinear raw embeddings: offset + i*direction, all entries exactly
    // f32-representable so the artifact narrowing keeps them collinear.
    let mut corpus = String::new();
    let mut vectors = String::new();
    for i in 0..n {
        let question = format!("collinear question {i}");
        let step = format!("collinear step {i}");
        corpus.push_str(
            &serde_json::json!({
                "id": format!("q{i}"),
                "dataset": if i < 4 { "a" } else { "b" },
                "question": question,
                "solutions": [{"solution_id": format!("q{i}-s0"), "steps": [step]}],
            })
            .to_string(),
        );
        corpus.push('\n');
        let x = i as f64;
        vectors.push_str(
            &serde_json::json!({"id": format!("collinear question {i}"),
                                "vector": [1.0 + 0.5 * x, 2.0 - 0.25 * x, -1.0 + 1.5 * x]})
            .to_string(),
        );
        vectors.push('\n');
        vectors.push_str(
            &serde_json::json!({"id": format!("collinear step {i}"),
                                "vector": [0.5 + x, 1.0, 0.25]})
            .to_string(),
        );
        vectors.push('\n');
    }
    dir.file("pool.jsonl", &corpus);
    dir.file("vectors.jsonl", &vectors);

    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            precomputed_file: Some("vectors.jsonl"),
            k: 0,
            m: 0,
            r: 0,
            dims: 2,
            ..ConfigSpec::default()
        },
    );
    batch(&dir, &config, &["embed", "project-2d"]).await;

    let csv = std::fs::read_to_string(dir.path().join("out/projection_2d.csv")).unwrap();
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("id,"))
        .collect();
    assert_eq!(rows.len(), n, "{csv}");

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert!(cols[1] == "a" || cols[1] == "b");
        xs.push(cols[2].parse::<f64>().unwrap());
        ys.push(cols[3].parse::<f64>().unwrap());
    }
    // Projection of the mean is the origin, so the column means vanish.
    let mean_x: f64 = xs.iter().sum::<f64>() / n as f64;
    let mean_y: f64 = ys.iter().sum::<f64>() / n as f64;
    assert!(mean_x.abs() < 1e-9, "{mean_x}");
    assert!(mean_y.abs() < 1e-9, "{mean_y}");
    // Collinear input: all variance on the first axis.
    let var_y: f64 = ys.iter().map(|y| y * y).sum::<f64>() / n as f64;
    assert!(var_y < 1e-9, "{var_y}");
}

#[tokio::test]
async fn env_var_overrides_scorer_endpoint() {
    let dir = TestDir::new();
    let eval_content = eval_set(4);
    dir.file("eval.jsonl", &eval_content);
    let samples = rprm_core::corpus::load_eval_samples_str(&eval_content).unwrap();
    let oracle = OracleConfig::from_eval_samples(&samples, PromptTemplate::default());
    let (score_addr, _s) = rprm_stubs::spawn_score_stub(ScoreBehavior::Oracle(oracle), 0)
        .await
        .unwrap();

    // Config points at a dead port; the env var must win.
    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            eval: &[("alpha", "eval.jsonl")],
            scorer_endpoint: "http://127.0.0.1:1".to_string(),
            k: 0,
            m: 0,
            r: 0,
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm_env(
        "evaluate",
        &config,
        &[("RPRM_SCORER_ENDPOINT", &endpoint(score_addr))],
    )
    .await;
    assert_success(&output, "evaluate with env override");
}

#[tokio::test]
async fn exit_codes_distinguish_validation_from_provider_failure() {
    let dir = TestDir::new();
    // Validation: config references a missing corpus file.
    let bad_config = write_config(
        &dir,
        "bad.toml",
        &ConfigSpec {
            pool: &["missing.jsonl"],
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("embed", &bad_config).await;
    assert_eq!(output.status.code(), Some(1), "validation exit code");

    // Provider failure: live config, dead embedding endpoint.
    dir.file("pool.jsonl", &pool_corpus(4, 2));
    let dead_provider = write_config(
        &dir,
        "dead.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            embed_endpoint: "http://127.0.0.1:1".to_string(),
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("embed", &dead_provider).await;
    assert_eq!(output.status.code(), Some(2), "provider exit code");

    // Invalid retrieval config (m == k) is rejected up front.
    let invalid = write_config(
        &dir,
        "mk.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            k: 5,
            m: 5,
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("embed", &invalid).await;
    assert_eq!(output.status.code(), Some(1), "m<=k exit code");
}

#[tokio::test]
async fn embed_counts_match_corpus_and_reruns_hit_cache() {
    let dir = TestDir::new();
    dir.file("pool.jsonl", &pool_corpus(9, 4));
    let (embed_addr, _e) =
        rprm_stubs::spawn_embed_stub(EmbedBehavior::Hashed { dim: 12, seed: 5 }, 0)
            .await
            .unwrap();
    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            embed_endpoint: endpoint(embed_addr),
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("embed", &config).await;
    assert_success(&output, "embed");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("embedded 9 questions and 27 steps"),
        "{stdout}"
    );

    // Row counts equal question/step counts; the sidecar aligns.
    let questions = std::fs::read_to_string(dir.path().join("out/question_vectors.jsonl")).unwrap();
    assert_eq!(questions.lines().count(), 1 + 9, "header + 9 rows");
    let steps = std::fs::read_to_string(dir.path().join("out/step_vectors.jsonl")).unwrap();
    assert_eq!(steps.lines().count(), 1 + 27);
    let sidecar = std::fs::read(dir.path().join("out/question_vectors.bin")).unwrap();
    assert_eq!(&sidecar[..8], b"RPRMVEC1");
    assert_eq!(u32::from_le_bytes(sidecar[8..12].try_into().unwrap()), 9);
    assert_eq!(u32::from_le_bytes(sidecar[12..16].try_into().unwrap()), 12);

    // Rerun serves everything from the cache.
    let output = run_rprm("embed", &config).await;
    assert_success(&output, "embed rerun");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("100.0% hit rate"), "{stdout}");
}

#[tokio::test]
async fn training_record_count_equals_step_sample_count() {
    let dir = TestDir::new();
    let corpus = pool_corpus(6, 3);
    dir.file("pool.jsonl", &corpus);
    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            train: Some("pool.jsonl"),
            k: 0,
            m: 0,
            r: 0,
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("build-dataset", &config).await;
    assert_success(&output, "build-dataset");

    let store = rprm_core::corpus::load_corpus_str(&corpus, "d").unwrap();
    let expected = rprm_core::corpus::enumerate_step_samples(&store)
        .unwrap()
        .len();
    let train = std::fs::read_to_string(dir.path().join("out/train.jsonl")).unwrap();
    assert_eq!(train.lines().count() - 1, expected);
    let audit = std::fs::read_to_string(dir.path().join("out/train_audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count() - 1, expected);
}

#[tokio::test]
async fn seeded_scorer_reproduces_reports_across_fresh_runs() {
    let dir = TestDir::new();
    dir.file("eval.jsonl", &eval_set(6));
    let (score_addr, _s) = rprm_stubs::spawn_score_stub(ScoreBehavior::Seeded { seed: 41 }, 0)
        .await
        .unwrap();
    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            eval: &[("alpha", "eval.jsonl")],
            scorer_endpoint: endpoint(score_addr),
            k: 0,
            m: 0,
            r: 0,
            ..ConfigSpec::default()
        },
    );
    let output = run_rprm("evaluate", &config).await;
    assert_success(&output, "first seeded evaluate");
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();

    std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    let output = run_rprm("evaluate", &config).await;
    assert_success(&output, "second seeded evaluate");
    let second = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert_eq!(first, second);
}

#[tokio::test]
async fn retrieval_presence_separates_sweep_points() {
    // Pool questions carry a marker that only reaches the prompt through
    // question-level retrieval; the scorer tells the truth only when it
    // sees the marker. F1 at k=2 must therefore beat F1 at k=0.
    let marker = "REFMARK";
    let dir = TestDir::new();
    let mut corpus = String::new();
    for i in 0..8 {
        let steps: Vec<String> = (1..=2).map(|j| format!("pool {i} step {j}")).collect();
        corpus.push_str(
            &serde_json::json!({
                "id": format!("q{i}"),
                "dataset": "d",
                "question": format!("{marker} pool question {i} about sums"),
                "solutions": [{"solution_id": format!("q{i}-s"), "steps": steps, "step_labels": [1, 1]}],
            })
            .to_string(),
        );
        corpus.push('\n');
    }
    dir.file("pool.jsonl", &corpus);
    let eval_content = eval_set(6);
    dir.file("eval.jsonl", &eval_content);
    let samples = rprm_core::corpus::load_eval_samples_str(&eval_content).unwrap();
    let oracle = OracleConfig::from_eval_samples(&samples, PromptTemplate::default());

    let (embed_addr, _e) =
        rprm_stubs::spawn_embed_stub(EmbedBehavior::Hashed { dim: 16, seed: 4 }, 0)
            .await
            .unwrap();
    let (score_addr, _s) = rprm_stubs::spawn_score_stub(
        ScoreBehavior::GatedOracle {
            oracle,
            marker: marker.to_string(),
        },
        0,
    )
    .await
    .unwrap();

    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            eval: &[("alpha", "eval.jsonl")],
            embed_endpoint: endpoint(embed_addr),
            scorer_endpoint: endpoint(score_addr),
            k: 2,
            m: 5,
            r: 0,
            sweep_ks: &[0, 2],
            ..ConfigSpec::default()
        },
    );
    batch(&dir, &config, &["embed", "fit-pca", "index", "sweep"]).await;

    let sweep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/sweep.json")).unwrap())
            .unwrap();
    let f1_at = |k: u64| -> f64 {
        sweep["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|row| row["k"] == k)
            .and_then(|row| row["report"]["avg_f1"].as_f64())
            .unwrap()
    };
    let without_retrieval = f1_at(0);
    let with_retrieval = f1_at(2);
    // Unmarked prompts are judged all-correct: the error subset scores 0.
    assert_eq!(without_retrieval, 0.0);
    assert_eq!(with_retrieval, 100.0);
    assert!(with_retrieval > without_retrieval);
}

#[tokio::test]
async fn sweep_emits_csv_per_k() {
    let dir = TestDir::new();
    dir.file("pool.jsonl", &pool_corpus(8, 4));
    let eval_content = eval_set(4);
    dir.file("eval.jsonl", &eval_content);
    let samples = rprm_core::corpus::load_eval_samples_str(&eval_content).unwrap();
    let oracle = OracleConfig::from_eval_samples(&samples, PromptTemplate::default());

    let (embed_addr, _e) =
        rprm_stubs::spawn_embed_stub(EmbedBehavior::Hashed { dim: 16, seed: 3 }, 0)
            .await
            .unwrap();
    let (score_addr, _s) = rprm_stubs::spawn_score_stub(ScoreBehavior::Oracle(oracle), 0)
        .await
        .unwrap();

    let config = write_config(
        &dir,
        "run.toml",
        &ConfigSpec {
            pool: &["pool.jsonl"],
            eval: &[("alpha", "eval.jsonl")],
            embed_endpoint: endpoint(embed_addr),
            scorer_endpoint: endpoint(score_addr),
            k: 2,
            m: 5,
            r: 2,
            sweep_ks: &[0, 1, 2],
            ..ConfigSpec::default()
        },
    );
    batch(&dir, &config, &["embed", "fit-pca", "index", "sweep"]).await;

    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    // The oracle ignores prompts, so every k scores a perfect 100.
    for k in [0, 1, 2] {
        assert!(csv.contains(&format!("{k},alpha,100")), "{csv}");
        assert!(csv.contains(&format!("{k},Avg.F1,100")), "{csv}");
    }
}
