use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use adnet::config::RunConfig;
use adnet::{commands, Error, Result};
use clap::{Parser, Subcommand};

/// Temporal anomaly detection over clip feature sequences.
#[derive(Parser)]
#[command(name = "adnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides paths.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; prints one JSON line per epoch.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from paths.checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Score feature files with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A feature file or a directory of them.
        #[arg(long)]
        features: PathBuf,
        /// Directory for the per-video score timelines.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Evaluate score timelines against annotation manifests.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// IoU thresholds in percent.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u32>>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let n = commands::synth(&cfg, out.as_deref())?;
            eprintln!("wrote {n} videos");
        }
        Command::Train { config, resume } => {
            let cfg = RunConfig::load(&config)?;
            let stdout = std::io::stdout();
            commands::train(&cfg, resume, &mut stdout.lock())?;
        }
        Command::Infer { checkpoint, features, out, threshold } => {
            let written = commands::infer(&checkpoint, &features, &out, threshold)?;
            eprintln!("wrote {} timelines", written.len());
        }
        Command::Eval { pred, gt, k } => {
            let doc = commands::eval(&pred, &gt, k.as_deref())?;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(doc.to_json().as_bytes())
                .map_err(|e| Error::Usage(format!("writing report: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
