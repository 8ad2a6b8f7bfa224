use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use turnover_cli::pipeline::{load_csv, load_schema};
use turnover_cli::server::{self, ApiError, AppState};
use turnover_cli::{cmd_generate, cmd_simulate, cmd_train, CliError, ModelArtifact, RunConfig};

#[derive(Parser)]
#[command(name = "turnover", version, about = "Employee turnover prediction and retention what-if analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic population, its schema and a prediction set.
    Generate(Common),
    /// Select, refit and evaluate a model; write it with its reports.
    Train(Common),
    /// Run mass and targeted policy simulations on the prediction set.
    Simulate(Common),
    /// Serve the model and simulators over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(o) = &c.out {
        config.output_dir = o.clone();
    }
    Ok(config)
}

fn startup(config: &RunConfig) -> Result<AppState, CliError> {
    config.validate()?;
    let artifact = ModelArtifact::load(&config.model_path())?;
    let raw = load_csv(&config.prediction_path(), load_schema(&config.schema_path())?)?;
    AppState::new(artifact, &raw)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => {
            let report = cmd_generate(&load_config(&c)?)?;
            let r = &report.report;
            println!(
                "wrote {} rows ({} voluntary leavers) and a {}-row prediction set to {}",
                r.population.rows,
                r.population.terminated,
                r.prediction_set.rows,
                report.config.output_dir.display()
            );
        }
        Command::Train(c) => {
            let outcome = cmd_train(&load_config(&c)?)?;
            print!("{}", outcome.cv.to_table());
            let a = &outcome.artifact;
            println!(
                "selected {} under {}: test AUC {:.3} on {} rows",
                a.model.hyperparameters.describe(),
                a.selection.resampling.name(),
                a.test.auc,
                a.test.rows
            );
            print!("{}", a.importance.to_table());
        }
        Command::Simulate(c) => {
            let outcome = cmd_simulate(&load_config(&c)?)?;
            for w in &outcome.mass.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", turnover_core::policy::mass_table(&outcome.mass.reports));
            if let Some(t) = &outcome.targeted {
                print!("{}", t.to_table());
            }
        }
        Command::Serve { common, listen } => {
            let config = load_config(&common)?;
            let state = match startup(&config) {
                Ok(s) => Arc::new(s),
                Err(e) => {
                    let body = ApiError::from_startup(&e);
                    eprintln!("{} {}", body.status, serde_json::to_string(&body).unwrap_or_default());
                    return Err(e);
                }
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(listen)
                    .await
                    .map_err(|e| CliError::Config(format!("cannot listen on {listen}: {e}")))?;
                eprintln!("listening on http://{listen}");
                server::serve(state, listener)
                    .await
                    .map_err(|e| CliError::Config(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
