//! The command-line pipeline: data generation, discovery, baseline,
//! evaluation and reporting. Each command reads and writes plain files.

use std::cell::RefCell;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{generate, BenchError, BenchmarkModel, ModelId, ScenarioSet, TrajectoryDataset};
use crate::engine::{discover, EngineError, GeneratorConfig, RunConfig, VarKind};
use crate::gateway::{GatewayError, Generator, HttpBackend, MockBackend};
use crate::metrics::{evaluate_model, Comparison, EvalReport};
use crate::model::{DiscoveredModel, FittedEquations, ModelFile};
use crate::replay::{ReplayError, ReplayMode};
use crate::sindy::{LibraryConfig, LibraryVariant, SindyError, SindyModel, StlsqConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const RUN_LOG_FILE: &str = "run_log.jsonl";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("io: {0}")]
    Io(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sindy(#[from] SindyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

impl CommandError {
    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Io(_) => "io",
            CommandError::Invalid(_) => "invalid_input",
            CommandError::Bench(_) => "bench",
            CommandError::Engine(e) => match e {
                EngineError::GenerationExhausted { .. } => "generation_exhausted",
                EngineError::BudgetExceeded { .. } => "budget_exceeded",
                EngineError::Config(_) => "config",
                _ => "engine",
            },
            CommandError::Gateway(_) => "gateway",
            CommandError::Sindy(_) => "sindy",
            CommandError::Replay(_) => "replay",
        }
    }

    /// `{"error": {"kind": ..., "message": ...}}`
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CommandError {
    CommandError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CommandError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CommandError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Index of a data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelId,
    pub train: String,
    pub tests: Vec<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest, CommandError> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn train(&self, dir: &Path) -> Result<TrajectoryDataset, CommandError> {
        Ok(TrajectoryDataset::import(dir, &self.train)?)
    }

    pub fn tests(&self, dir: &Path) -> Result<Vec<(String, TrajectoryDataset)>, CommandError> {
        self.tests
            .iter()
            .map(|s| Ok((s.clone(), TrajectoryDataset::import(dir, s)?)))
            .collect()
    }
}

pub fn load_scenarios(path: Option<&Path>) -> Result<ScenarioSet, CommandError> {
    let Some(path) = path else {
        return Ok(ScenarioSet::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let set: ScenarioSet = toml::from_str(&text).map_err(|e| CommandError::Invalid(format!("{}: {e}", path.display())))?;
    set.train.validate()?;
    for t in &set.test {
        t.validate()?;
    }
    Ok(set)
}

/// Simulates the training and test scenarios into `out`.
pub fn gen_data(model: ModelId, scenarios: &ScenarioSet, out: &Path) -> Result<Manifest, CommandError> {
    create_dir(out)?;
    let bench = BenchmarkModel::new(model);
    let train = generate(&bench, &scenarios.train)?;
    train.export(out, "train")?;
    let mut tests = Vec::new();
    for (i, scen) in scenarios.test.iter().enumerate() {
        let stem = format!("test_{i}");
        generate(&bench, scen)?.export(out, &stem)?;
        tests.push(stem);
    }
    let manifest = Manifest {
        model,
        train: "train".into(),
        tests,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    log::info!("wrote {} datasets to {}", manifest.tests.len() + 1, out.display());
    Ok(manifest)
}

pub fn make_generator(cfg: &GeneratorConfig) -> Result<Box<dyn Generator>, CommandError> {
    Ok(match cfg {
        GeneratorConfig::Mock { script } => Box::new(MockBackend::from_file(script)?),
        GeneratorConfig::Http(h) => Box::new(HttpBackend::new(h.clone())?),
    })
}

/// What `discover` leaves next to the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub de_status: String,
    pub de_score: f64,
    pub de_iterations: usize,
    pub ae_status: Option<String>,
    pub ae_score: Option<f64>,
    pub library: Vec<String>,
    pub note: Option<String>,
}

/// Runs the DE and AE loops on the training set of `data`.
pub fn discover_run(cfg: &RunConfig, data: &Path, out: &Path) -> Result<ModelFile, CommandError> {
    let manifest = Manifest::load(data)?;
    if let Some(b) = cfg.benchmark {
        if b != manifest.model {
            return Err(CommandError::Invalid(format!(
                "config names benchmark {b} but the data is {}",
                manifest.model
            )));
        }
    }
    let mut train = manifest.train(data)?;
    let mut gen = make_generator(&cfg.generator)?;
    create_dir(out)?;
    let log_path = out.join(RUN_LOG_FILE);
    let log_file = File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
    let writer = RefCell::new(BufWriter::new(log_file));
    let failure: RefCell<Option<CommandError>> = RefCell::new(None);
    let mut observer = |rec: &crate::engine::IterationRecord, archive: &crate::archive::Archive| {
        if failure.borrow().is_some() {
            return;
        }
        let line = serde_json::to_string(rec).expect("record serializes");
        if let Err(e) = writeln!(writer.borrow_mut(), "{line}") {
            *failure.borrow_mut() = Some(io_err(&log_path, e));
            return;
        }
        let cp = out.join(format!("checkpoint_{}.json", rec.loop_kind.to_string().to_lowercase()));
        if let Err(e) = write_json(&cp, &archive.checkpoint()) {
            *failure.borrow_mut() = Some(e);
        }
    };
    let result = discover(&mut train, gen.as_mut(), cfg, &mut observer);
    writer.borrow_mut().flush().map_err(|e| io_err(&log_path, e))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let outcome = result?;

    let states = train.states().to_vec();
    let de = FittedEquations::from_scored(&outcome.de.best, outcome.de.library.names());
    let ae = outcome
        .ae
        .as_ref()
        .map(|a| FittedEquations::from_scored(&a.best, a.library.names()));
    let model = ModelFile::Skeleton(DiscoveredModel {
        label: "discovered".into(),
        benchmark: Some(manifest.model),
        states,
        de,
        ae,
    });
    model.save(&out.join(MODEL_FILE)).map_err(|e| io_err(out, e))?;
    let summary = RunSummary {
        de_status: status_name(&outcome.de.status),
        de_score: outcome.de.best.score,
        de_iterations: outcome.de.history.len().saturating_sub(1),
        ae_status: outcome.ae.as_ref().map(|a| status_name(&a.status)),
        ae_score: outcome.ae.as_ref().map(|a| a.best.score),
        library: outcome.de.library.names(),
        note: outcome
            .ae
            .is_none()
            .then(|| "AE loop skipped: no algebraic targets or disabled".to_string()),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(model)
}

fn status_name<T: Serialize>(s: &T) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOptions {
    pub variant: LibraryVariant,
    pub stlsq: StlsqConfig,
    /// Variables left out by the missing variant; empty means every
    /// non-input catalog signal.
    pub exclude: Vec<String>,
}

/// Fits a sparse-regression model to the training derivatives.
///
/// The library spans the states plus the signals the true model uses; the
/// missing variant drops the algebraic ones unless `exclude` says otherwise.
pub fn baseline(opts: &BaselineOptions, data: &Path, out: &Path) -> Result<ModelFile, CommandError> {
    let manifest = Manifest::load(data)?;
    let mut train = manifest.train(data)?;
    let catalog = train.catalog();
    let signals = train.model().rhs_variables();
    train.reveal(&signals)?;
    let mut full: Vec<String> = train.states().to_vec();
    full.extend(signals.iter().cloned());
    let exclude = if opts.variant == LibraryVariant::Missing && opts.exclude.is_empty() {
        signals
            .iter()
            .filter(|s| catalog.get(s).is_some_and(|i| i.kind == VarKind::Algebraic))
            .cloned()
            .collect()
    } else {
        opts.exclude.clone()
    };
    let library = LibraryConfig::new(opts.variant, &full, &exclude)?;
    let model = SindyModel::fit(
        &format!("sindy-{}", opts.variant),
        Some(manifest.model),
        library,
        opts.stlsq,
        &train.batch(),
        train.states(),
        &train.derivative_columns(),
    )?;
    if model.ridge_fallback {
        log::warn!("library is ill-conditioned; ridge fallback used");
    }
    let model = ModelFile::Sindy(model);
    create_dir(out)?;
    model.save(&out.join(MODEL_FILE)).map_err(|e| io_err(out, e))?;
    Ok(model)
}

/// Replays `model` on every test scenario of `data` and writes the report.
pub fn evaluate(model_path: &Path, data: &Path, out: &Path, mode: ReplayMode) -> Result<EvalReport, CommandError> {
    let model = ModelFile::load(model_path).map_err(CommandError::Io)?;
    let manifest = Manifest::load(data)?;
    if let Some(b) = model.benchmark() {
        if b != manifest.model {
            return Err(CommandError::Invalid(format!("model is for {b} but the data is {}", manifest.model)));
        }
    }
    let tests = manifest.tests(data)?;
    if tests.is_empty() {
        return Err(CommandError::Invalid("data directory has no test scenarios".into()));
    }
    let report = evaluate_model(&model, &tests, mode)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(out, &report)?;
    Ok(report)
}

/// Reads `<run>/report.json` for every run directory.
pub fn report(runs: &[PathBuf]) -> Result<Comparison, CommandError> {
    let mut reports = Vec::new();
    for dir in runs {
        let r: EvalReport = read_json(&dir.join(REPORT_FILE))?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        reports.push((name, r));
    }
    Ok(Comparison::new(&reports))
}

pub fn write_comparison(c: &Comparison, path: &Path) -> Result<(), CommandError> {
    write_json(path, c)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CommandError> {
    Ok(RunConfig::load(path)?)
}
