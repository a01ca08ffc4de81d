//! Pipeline driver for the wildfire risk modeling toolkit.
//!
//! Subcommands run one stage each, reading inputs from the configured
//! paths or from an earlier stage's artifacts under `--out`:
//!
//! ```text
//! gridfire synth      --config run.toml --out out   # synthetic corpus
//! gridfire ingest     --config run.toml --out out
//! gridfire featurize  --config run.toml --out out
//! gridfire train      --config run.toml --out out
//! gridfire evaluate   --config run.toml --out out
//! gridfire importance --config run.toml --out out
//! gridfire ablate     --config run.toml --out out
//! ```
//!
//! Every stage writes a manifest with the config hash, the seed, and
//! checksums of everything consumed and produced; identical (config, seed)
//! reruns are byte-identical at any `--threads` value.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Resolved;
use manifest::sha256_bytes;
use stages::StageContext;

#[derive(Parser)]
#[command(name = "gridfire", version, about = "circuit-day wildfire risk modeling pipeline")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; each stage writes under <out>/<stage>/.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the rayon worker count. Results are identical at any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known ground truth.
    Synth,
    /// Validate and canonicalize the raw input tables.
    Ingest,
    /// Assemble the circuit-day model matrix.
    Featurize,
    /// Tune hyperparameters by cross-validation and fit the final model.
    Train,
    /// Score the test window: AUC, ROC curve, confusion matrix.
    Evaluate,
    /// Feature-importance report for the trained model.
    Importance,
    /// Feature-group ablations, trailing-weather and cause-model variants.
    Ablate,
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure {threads} threads: {e}"))?;
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let resolved = Resolved::load(config_path, cli.seed)?;
    // The manifest hashes the resolved configuration (seed applied), not
    // the file bytes, so `--seed` changes are visible in it.
    let mut hashable = resolved.config.clone();
    hashable.seed = Some(resolved.seed);
    let config_sha256 = sha256_bytes(serde_json::to_string(&hashable)?.as_bytes());
    let ctx = StageContext {
        out: cli.out.clone(),
        resolved,
        config_sha256,
    };
    match cli.command {
        Command::Synth => stages::cmd_synth(&ctx),
        Command::Ingest => stages::cmd_ingest(&ctx),
        Command::Featurize => stages::cmd_featurize(&ctx),
        Command::Train => stages::cmd_train(&ctx),
        Command::Evaluate => stages::cmd_evaluate(&ctx),
        Command::Importance => stages::cmd_importance(&ctx),
        Command::Ablate => stages::cmd_ablate(&ctx),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', "; ");
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
