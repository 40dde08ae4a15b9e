use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cortexkey::config::Config;
use cortexkey::pipeline::{self, TEST_WINDOWS};
use cortexkey::server::{self, AppState};
use cortexkey::{exit, exit_code};
use cortexkey_core::model::ModelKind;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "cortexkey", version, about = "EEG keystroke decoding pipeline and replay server")]
struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory for window sets, models and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Epoch sessions into train/test window sets.
    Ingest,
    /// Write per-channel, per-class ERP curves as CSV.
    Erp,
    /// Fit a model on the training windows.
    Train {
        #[arg(long)]
        model: ModelKind,
    },
    /// Score a model on the test windows.
    Evaluate {
        /// Model kind (resolved in the working directory) or model file.
        #[arg(long)]
        model: String,
    },
    /// Stratified k-fold cross-validation on the training windows.
    Crossval {
        #[arg(long)]
        model: ModelKind,
    },
    /// Serve models over HTTP and WebSocket.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Replay a window set through a model offline.
    Replay {
        #[arg(long)]
        model: String,
        /// Window file; defaults to the test set.
        #[arg(long)]
        windows: Option<PathBuf>,
        /// Windows per second; unpaced when omitted.
        #[arg(long)]
        speed: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cfg.seed(cli.seed);
    let out = cli.out.as_path();
    match cli.command {
        Command::Ingest => pipeline::ingest(&cfg, seed, out)?,
        Command::Erp => {
            let n = pipeline::erp(&cfg, out)?;
            println!("wrote {n} ERP curves to {}", out.display());
        }
        Command::Train { model } => {
            let path = pipeline::train(&cfg, seed, model, out)?;
            println!("{}", path.display());
        }
        Command::Evaluate { model } => {
            let r = pipeline::evaluate(&pipeline::resolve_model(out, &model), out)?;
            println!("{} accuracy {:.4} on {} windows", r.kind, r.report.accuracy, r.count);
        }
        Command::Crossval { model } => pipeline::crossval(&cfg, seed, model, out)?,
        Command::Replay { model, windows, speed } => {
            let windows = windows.unwrap_or_else(|| out.join(TEST_WINDOWS));
            let text = pipeline::replay(&pipeline::resolve_model(out, &model), &windows, speed, out)?;
            println!("{text}");
        }
        Command::Serve { port } => {
            let dir = out.is_dir().then_some(out);
            let models = pipeline::collect_models(&cfg, dir)?;
            let windows_dir = cfg.serve.windows_dir.clone().or_else(|| dir.map(Into::into));
            let port = port.unwrap_or(cfg.serve.port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
                    .await
                    .with_context(|| format!("binding port {port}"))?;
                server::serve(listener, AppState::new(models, windows_dir)).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
