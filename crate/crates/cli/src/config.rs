//! Run configuration. Everything that affects outputs lives in the config
//! file; command-line flags only pick the command and the config path.
//! Relative paths resolve against the config file's directory. Environment
//! variables may override provider endpoints only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rprm_core::embedding::{EmbeddingProviderSpec, ProviderKind};
use rprm_core::retrieval::RetrievalConfig;
use rprm_core::scoring::ScorerProviderSpec;

use crate::CliError;

pub const CONFIG_SCHEMA: &str = "rprm-config/1";

pub const ENV_EMBED_ENDPOINT: &str = "RPRM_EMBED_ENDPOINT";
pub const ENV_SCORER_ENDPOINT: &str = "RPRM_SCORER_ENDPOINT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub template_path: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub embedding: EmbeddingProviderSpec,
    pub scorer: ScorerProviderSpec,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_theta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Labeled corpus that build-dataset expands into training records.
    #[serde(default)]
    pub train: Option<PathBuf>,
    /// Retrieval-pool corpora; the union feeds embedding, the index, and
    /// both retrieval stages.
    #[serde(default)]
    pub pool: Vec<PathBuf>,
    #[serde(default = "default_dataset_tag")]
    pub default_dataset_tag: String,
    /// Evaluation files by dataset name.
    #[serde(default)]
    pub eval: BTreeMap<String, PathBuf>,
}

fn default_dataset_tag() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepConfig {
    /// k values for the retrieval-count sweep; each must be distinct and
    /// below retrieval.m.
    #[serde(default)]
    pub ks: Vec<usize>,
}

impl RunConfig {
    /// Load, resolve paths against the config directory, apply endpoint
    /// overrides from the environment, and validate.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let content = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: RunConfig = toml::from_str(&content)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        if config.schema != CONFIG_SCHEMA {
            return Err(CliError::validation(format!(
                "config schema {:?}, expected {CONFIG_SCHEMA:?}",
                config.schema
            )));
        }

        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);

        if let Ok(endpoint) = std::env::var(ENV_EMBED_ENDPOINT) {
            if config.embedding.kind == ProviderKind::HttpService {
                config.embedding.location = endpoint;
            }
        }
        if let Ok(endpoint) = std::env::var(ENV_SCORER_ENDPOINT) {
            config.scorer.endpoint = endpoint;
        }

        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_dir);
        if let Some(t) = &mut self.template_path {
            resolve(t);
        }
        if let Some(t) = &mut self.corpus.train {
            resolve(t);
        }
        for p in &mut self.corpus.pool {
            resolve(p);
        }
        for p in self.corpus.eval.values_mut() {
            resolve(p);
        }
        if self.embedding.kind == ProviderKind::PrecomputedFile {
            let mut p = PathBuf::from(&self.embedding.location);
            resolve(&mut p);
            self.embedding.location = p.to_string_lossy().into_owned();
        }
        match &mut self.embedding.cache_dir {
            Some(dir) => resolve(dir),
            None => self.embedding.cache_dir = Some(self.output_dir.join("cache")),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(CliError::validation(format!(
                "theta {} outside (0, 1)",
                self.theta
            )));
        }
        self.retrieval
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))?;
        self.embedding
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))?;
        self.scorer
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))?;

        let mut required: Vec<&PathBuf> = Vec::new();
        if let Some(t) = &self.corpus.train {
            required.push(t);
        }
        required.extend(self.corpus.pool.iter());
        required.extend(self.corpus.eval.values());
        if let Some(t) = &self.template_path {
            required.push(t);
        }
        if self.embedding.kind == ProviderKind::PrecomputedFile {
            let p = PathBuf::from(&self.embedding.location);
            if !p.exists() {
                return Err(CliError::validation(format!(
                    "embedding file {} does not exist",
                    p.display()
                )));
            }
        }
        for path in required {
            if !path.exists() {
                return Err(CliError::validation(format!(
                    "configured path {} does not exist",
                    path.display()
                )));
            }
        }
        for &k in &self.sweep.ks {
            if k >= self.retrieval.m && !(k == 0 && self.retrieval.m == 0) {
                return Err(CliError::validation(format!(
                    "sweep k {k} must be below m ({})",
                    self.retrieval.m
                )));
            }
        }
        Ok(())
    }

    /// Hex sha256 of the effective config; every artifact embeds it.
    pub fn snapshot_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
