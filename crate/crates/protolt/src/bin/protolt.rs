//! Experiment CLI: dataset generation, the two training stages, ablation
//! sweeps, and metric evaluation. Log verbosity comes from `PROTOLT_LOG`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use protolt::commands::{self, EvalInputs, Overrides};
use protolt::pipeline::PrototypeInit;

#[derive(Parser)]
#[command(name = "protolt", version, about = "Prototype-guided long-tail representation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct OverrideArgs {
    /// Override the root seed from the config (data and training).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the fusion weight α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the prototype-loss weight λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Disable candidate-text filtering.
    #[arg(long)]
    no_filter: bool,
    /// Prototype initialization: anchored or random.
    #[arg(long, value_parser = parse_proto_init)]
    proto_init: Option<PrototypeInit>,
    /// k for the neighborhood-uniformity metric.
    #[arg(long)]
    k_uniformity: Option<usize>,
}

fn parse_proto_init(s: &str) -> Result<PrototypeInit, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl From<&OverrideArgs> for Overrides {
    fn from(args: &OverrideArgs) -> Self {
        Overrides {
            seed: args.seed,
            alpha: args.alpha,
            lambda: args.lambda,
            no_filter: args.no_filter,
            proto_init: args.proto_init,
            k_uniformity: args.k_uniformity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed paired-embedding dataset.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Stage 1: train the encoders and prototype bank on a dataset.
    Match {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory produced by `generate` (or compatible files).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Stage 2: train the linear head and evaluate all classifiers.
    Recognize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Stage-1 output directory (encoders and bank).
        #[arg(long = "match")]
        match_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Sweep one knob through the full two-stage pipeline.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// One of: lambda, alpha, filter, proto_init.
        #[arg(long)]
        axis: String,
        /// Comma-separated sweep values; defaults per axis.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Compute alignment, uniformity, and optional split accuracies for an
    /// embedding/label pair.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Dataset directory; supplies train counts for split accuracy.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Stage-1 output directory; supplies the bank for predictions.
        #[arg(long = "match")]
        match_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROTOLT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate {
            config,
            out,
            overrides,
        } => commands::cmd_generate(config, out, &overrides.into()),
        Command::Match {
            config,
            data,
            out,
            overrides,
        } => commands::cmd_match(config, data, out, &overrides.into()),
        Command::Recognize {
            config,
            data,
            match_dir,
            out,
            overrides,
        } => commands::cmd_recognize(config, data, match_dir, out, &overrides.into()),
        Command::Ablate {
            config,
            axis,
            values,
            out,
            overrides,
        } => commands::cmd_ablate(config, axis, values.as_deref(), out, &overrides.into()),
        Command::Eval {
            features,
            labels,
            data,
            match_dir,
            out,
            overrides,
        } => commands::cmd_eval(
            &EvalInputs {
                features,
                labels,
                data_dir: data.as_deref(),
                match_dir: match_dir.as_deref(),
            },
            out,
            &overrides.into(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("{}", error.to_json());
            ExitCode::from(error.kind.exit_code() as u8)
        }
    }
}
