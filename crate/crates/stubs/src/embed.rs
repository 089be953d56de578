//! Stub embedding server: `POST /embed {"texts": [...]}` returns
//! `{"vectors": [[...], ...]}`, either deterministic hash-derived vectors
//! or rows from a fixture file keyed by text.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rprm_core::embedding::io::read_vector_file;

/// Deterministic pseudo-embedding: each coordinate comes from
/// sha256(seed:text:i), mapped into [-1, 1). The same (seed, text) pair
/// always yields the same vector, on any platform.
pub fn hashed_vector(seed: u64, dim: usize, text: &str) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let digest = Sha256::digest(format!("{seed}:{text}:{i}").as_bytes());
            let raw = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            raw as f64 / u64::MAX as f64 * 2.0 - 1.0
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum EmbedBehavior {
    /// Hash-derived vectors of `dim` coordinates.
    Hashed { dim: usize, seed: u64 },
    /// Vectors served from a fixture file, keyed by the text itself.
    Fixture { by_text: BTreeMap<String, Vec<f64>> },
}

impl EmbedBehavior {
    pub fn fixture_from_file(path: &Path) -> anyhow::Result<Self> {
        let entries = read_vector_file(path)?;
        Ok(Self::Fixture {
            by_text: entries.into_iter().collect(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct EmbedRequest {
    texts: Vec<String>,
}

#[derive(Debug, Serialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ErrorResponse {
    error: String,
}

async fn handle_embed(
    State(behavior): State<Arc<EmbedBehavior>>,
    Json(request): Json<EmbedRequest>,
) -> Result<Json<EmbedResponse>, (StatusCode, Json<ErrorResponse>)> {
    let mut vectors = Vec::with_capacity(request.texts.len());
    for text in &request.texts {
        match behavior.as_ref() {
            EmbedBehavior::Hashed { dim, seed } => vectors.push(hashed_vector(*seed, *dim, text)),
            EmbedBehavior::Fixture { by_text } => match by_text.get(text) {
                Some(v) => vectors.push(v.clone()),
                None => {
                    return Err((
                        StatusCode::BAD_REQUEST,
                        Json(ErrorResponse {
                            error: format!("no fixture vector for text {text:?}"),
                        }),
                    ))
                }
            },
        }
    }
    Ok(Json(EmbedResponse { vectors }))
}

pub fn embed_router(behavior: EmbedBehavior) -> Router {
    Router::new()
        .route("/embed", post(handle_embed))
        .with_state(Arc::new(behavior))
}

/// Bind and serve on an ephemeral (or given) port; returns the bound
/// address and the server task.
pub async fn spawn_embed_stub(
    behavior: EmbedBehavior,
    port: u16,
) -> anyhow::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    let app = embed_router(behavior);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            eprintln!("embed stub exited: {e}");
        }
    });
    Ok((addr, handle))
}
