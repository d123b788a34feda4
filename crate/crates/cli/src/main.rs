use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use layercomp::pipeline::{cmd_compose, cmd_eval, cmd_probe, Overrides, PipelineConfig};
use layercomp::Error;

#[derive(Parser)]
#[command(
    name = "layercomp",
    version,
    about = "Compose layered design elements onto a background"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compose a design into backing.png and manifest.json.
    Compose {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the canvas after every element.
        #[arg(long)]
        debug_intermediates: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write relevance scores, attention heatmaps and token selections for one element.
    Probe {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        element: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Identity metrics over a manifest of (foreground, composed, bbox) pairs.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        /// Report JSON path; the text table goes next to it as .txt.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn config(common: &Common, debug_intermediates: bool) -> Result<PipelineConfig, Error> {
    let overrides = Overrides {
        seed: common.seed,
        debug_intermediates,
    };
    PipelineConfig::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Compose {
            design,
            out,
            debug_intermediates,
            common,
        } => {
            let cfg = config(&common, debug_intermediates)?;
            let written = cmd_compose(&design, &cfg, &out)?;
            report(&written.backing_path);
            report(&written.manifest_path);
        }
        Command::Probe {
            design,
            element,
            out,
            common,
        } => {
            let cfg = config(&common, false)?;
            let written = cmd_probe(&design, &cfg, &element, &out)?;
            report(&written.csv_path);
            report(&written.selection_path);
            log::info!("{} heatmaps", written.heatmaps.len());
        }
        Command::Eval { pairs, out, common } => {
            let cfg = config(&common, false)?;
            let result = cmd_eval(&pairs, &cfg, &out)?;
            print!("{}", result.to_table());
        }
    }
    Ok(())
}

fn report(path: &Path) {
    log::info!("wrote {}", path.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are input errors; status 2 is reserved for the backend.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
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
