//! `rprm-stub`: run the embedding or scorer stub server from the command
//! line.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use rprm_core::corpus::load_eval_samples;
use rprm_core::prompting::PromptTemplate;
use rprm_stubs::{EmbedBehavior, OracleConfig, ScoreBehavior};

#[derive(Parser)]
#[command(
    name = "rprm-stub",
    about = "Stub embedding/scorer servers for tests and demos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve POST /embed.
    Embed {
        /// Port to bind (0 picks an ephemeral port).
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Vector dimension for hashed mode.
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Seed for hashed mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Serve vectors from this fixture file instead of hashing.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Serve POST /score.
    Score {
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// One of: fixed, seeded, oracle, gated-oracle.
        #[arg(long, default_value = "fixed")]
        behavior: String,
        #[arg(long, default_value_t = 2.0)]
        l_plus: f64,
        #[arg(long, default_value_t = 0.0)]
        l_minus: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Eval file for the oracle behaviors.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Template file whose delimiters the oracle parses prompts with;
        /// defaults to the built-in template.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Marker string for gated-oracle.
        #[arg(long)]
        marker: Option<String>,
    },
}

fn load_template(path: &Option<PathBuf>) -> anyhow::Result<PromptTemplate> {
    match path {
        Some(p) => PromptTemplate::load(p).context("loading template"),
        None => Ok(PromptTemplate::default()),
    }
}

fn oracle_config(
    eval: &Option<PathBuf>,
    template: &Option<PathBuf>,
) -> anyhow::Result<OracleConfig> {
    let eval_path = eval
        .as_ref()
        .context("--eval is required for oracle behaviors")?;
    let samples = load_eval_samples(eval_path).context("loading eval file")?;
    Ok(OracleConfig::from_eval_samples(
        &samples,
        load_template(template)?,
    ))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Embed {
            port,
            dim,
            seed,
            fixture,
        } => {
            let behavior = match fixture {
                Some(path) => EmbedBehavior::fixture_from_file(&path)?,
                None => EmbedBehavior::Hashed { dim, seed },
            };
            let (addr, handle) = rprm_stubs::spawn_embed_stub(behavior, port).await?;
            println!("embed stub listening on http://{addr}");
            handle.await?;
        }
        Command::Score {
            port,
            behavior,
            l_plus,
            l_minus,
            seed,
            eval,
            template,
            marker,
        } => {
            let behavior = match behavior.as_str() {
                "fixed" => ScoreBehavior::Fixed { l_plus, l_minus },
                "seeded" => ScoreBehavior::Seeded { seed },
                "oracle" => ScoreBehavior::Oracle(oracle_config(&eval, &template)?),
                "gated-oracle" => ScoreBehavior::GatedOracle {
                    oracle: oracle_config(&eval, &template)?,
                    marker: marker.context("--marker is required for gated-oracle")?,
                },
                other => anyhow::bail!("unknown score behavior {other:?}"),
            };
            let (addr, handle) = rprm_stubs::spawn_score_stub(behavior, port).await?;
            println!("score stub listening on http://{addr}");
            handle.await?;
        }
    }
    Ok(())
}
