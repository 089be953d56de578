//! In-repo stub servers for the embedding and scorer HTTP protocols, used
//! by tests and demos. Both bind to an ephemeral port and report the bound
//! address, so suites can run many in parallel.

pub mod embed;
pub mod score;

pub use embed::{embed_router, hashed_vector, spawn_embed_stub, EmbedBehavior};
pub use score::{score_router, spawn_score_stub, OracleConfig, ScoreBehavior};
