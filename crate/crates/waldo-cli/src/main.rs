//! Command-line harness around the dual-decoder outlier library: dataset
//! realization, training, detection, generation, results tables, toggle
//! ablations, convergence comparisons, and the transport-bound check. All
//! failures exit nonzero with a single machine-parsable line on stderr.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "waldo",
    version,
    about = "Dual-decoder Wasserstein autoencoder: detect and generate outliers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Realize the configured dataset and write it as sample snapshots.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one model per seed; writes history, checkpoints, final weights.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score the unlabeled pool with trained checkpoints (residual sign).
    Detect {
        #[arg(long)]
        config: PathBuf,
        /// Score this checkpoint instead of the per-seed final ones.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sample both decoders from trained checkpoints and score quality.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train and score the full (nu, contamination, method) grid.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Advantage x positive-only toggle study over independent seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Epochs-to-90%-AP comparison against the single-decoder baseline.
    Convergence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print decomposition coefficients and run the empirical bound check.
    TheoremCheck {
        /// Outlier fraction in (0,1).
        #[arg(long)]
        nu: f64,
        /// Lipschitz constant of the decoders.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Sample count for the empirical check (0 skips it, max 100).
        #[arg(long, default_value_t = 60)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Synth { config } => commands::cmd_synth(&config),
        Cmd::Train { config } => commands::cmd_train(&config),
        Cmd::Detect { config, checkpoint } => commands::cmd_detect(&config, checkpoint),
        Cmd::Generate { config } => commands::cmd_generate(&config),
        Cmd::Eval { config } => commands::cmd_eval(&config),
        Cmd::Ablate { config } => commands::cmd_ablate(&config),
        Cmd::Convergence { config } => commands::cmd_convergence(&config),
        Cmd::TheoremCheck {
            nu,
            gamma,
            points,
            seed,
        } => commands::cmd_theorem_check(nu, gamma, points, seed),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        // One line, `error: <context>: <cause>`, so scripts can match on it.
        let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
        let line = chain.join(": ").replace('\n', "; ");
        eprintln!("error: {line}");
        std::process::exit(1);
    }
}
