use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmd_core::bench::ModelId;
use dmd_core::commands::{self, BaselineOptions, CommandError};
use dmd_core::replay::ReplayMode;
use dmd_core::sindy::{LibraryVariant, StlsqConfig};

#[derive(Parser)]
#[command(name = "llm-dmd", version, about = "Dynamic model discovery from trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark model into train/test datasets.
    GenData {
        #[arg(long)]
        model: ModelId,
        /// TOML scenario set; the built-in set when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the DE loop, then the AE loop.
    Discover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the sparse-regression baseline.
    Baseline {
        #[arg(long)]
        variant: LibraryVariant,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        /// Variables dropped by the missing variant (repeatable).
        #[arg(long)]
        exclude: Vec<String>,
    },
    /// Replay a model on the test scenarios and score it.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::ClosedLoop)]
        mode: Mode,
    },
    /// Merge the reports of several run directories.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write the comparison JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    ClosedLoop,
    Recorded,
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::GenData { model, scenario, out } => {
            let set = commands::load_scenarios(scenario.as_deref())?;
            commands::gen_data(model, &set, &out)?;
        }
        Command::Discover { config, data, out } => {
            let cfg = commands::load_config(&config)?;
            let model = commands::discover_run(&cfg, &data, &out)?;
            if let dmd_core::model::ModelFile::Skeleton(m) = &model {
                println!("{}", m.de.skeleton);
                if let Some(ae) = &m.ae {
                    println!("{}", ae.skeleton);
                }
            }
        }
        Command::Baseline {
            variant,
            data,
            out,
            threshold,
            iterations,
            exclude,
        } => {
            let opts = BaselineOptions {
                variant,
                stlsq: StlsqConfig { threshold, iterations },
                exclude,
            };
            if let dmd_core::model::ModelFile::Sindy(m) = commands::baseline(&opts, &data, &out)? {
                for eq in m.equations() {
                    println!("{eq}");
                }
            }
        }
        Command::Evaluate { model, data, out, mode } => {
            let mode = match mode {
                Mode::ClosedLoop => ReplayMode::ClosedLoop,
                Mode::Recorded => ReplayMode::RecordedSignals,
            };
            let r = commands::evaluate(&model, &data, &out, mode)?;
            let pct = r.mape.map_or("n/a".into(), |m| format!("{m:.4}%"));
            let r2 = r.r2.map_or("n/a".into(), |v| format!("{v:.4}"));
            println!("MAPE {pct}  R² {r2}{}", if r.diverged { "  (diverged)" } else { "" });
        }
        Command::Report { runs, json } => {
            let c = commands::report(&runs)?;
            print!("{}", c.table());
            if let Some(path) = json {
                commands::write_comparison(&c, &path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
