use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::library::{SignalCatalog, VarKind, VariableInfo, VariableLibrary};
use super::trigger::{check_trigger, Trigger, TriggerConfig};
use super::EngineError;
use crate::archive::{linear_seed, Archive};
use crate::bench::TrajectoryDataset;
use crate::dsl::{parse, Skeleton, SymbolScope, TargetKind};
use crate::eval::SampleBatch;
use crate::fit::{fit_and_score, FitConfig, ScoredSkeleton};
use crate::gateway::{build_prompt, generate, GenerationRequest, Generator, PromptContract, Requirement};

/// Per-loop progress: best-score history plus the evolving library.
#[derive(Debug, Clone)]
pub struct LoopState {
    pub kind: TargetKind,
    /// `s*_0..s*_t`; `s*_0` is the seed's score.
    pub history: Vec<f64>,
    pub trigger: TriggerConfig,
    pub library: VariableLibrary,
    pub archive: Archive,
}

impl LoopState {
    pub fn t(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn check_trigger(&self) -> Trigger {
        check_trigger(&self.history, &self.trigger)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStatus {
    /// Best score stayed above `-γ` for the whole window.
    Terminated,
    /// `max_iterations` reached.
    BudgetExhausted,
    /// The generator failed `max_generator_failures` times in a row.
    GeneratorExhausted,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    #[serde(rename = "loop")]
    pub loop_kind: TargetKind,
    pub t: usize,
    pub island: Option<usize>,
    pub generated: usize,
    pub compiled: usize,
    /// Compilation errors of rejected completions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<String>,
    pub best_score: f64,
    pub trigger: Trigger,
    pub added_variables: Vec<String>,
    pub library: Vec<String>,
    pub best_skeleton: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub kind: TargetKind,
    pub targets: Vec<String>,
    pub best: ScoredSkeleton,
    pub library: VariableLibrary,
    pub status: LoopStatus,
    pub history: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub archive: Archive,
}

/// Receives every iteration record with the archive as it stands.
pub type Observer<'a> = dyn FnMut(&IterationRecord, &Archive) + 'a;

struct LoopSpec {
    kind: TargetKind,
    targets: Vec<String>,
    labels: Vec<String>,
    states: Vec<VariableInfo>,
    library: VariableLibrary,
    catalog: SignalCatalog,
    /// Names that may never enter the library.
    excluded: Vec<String>,
    stream: u64,
}

fn scope_for(states: &[VariableInfo], library: &VariableLibrary) -> Result<SymbolScope, EngineError> {
    SymbolScope::new(states.iter().map(|s| s.name.clone()), library.names()).map_err(EngineError::Dsl)
}

/// Admits variables requested by the top skeletons.
///
/// Requested names are resolved against `catalog`; unresolvable, excluded
/// or already admitted names are skipped. If nothing new was requested the
/// first unused catalog entry is admitted instead. Revealed columns are
/// copied into `data`.
pub fn extend_variables(
    top: &[&ScoredSkeleton],
    catalog: &SignalCatalog,
    library: &mut VariableLibrary,
    data: &mut TrajectoryDataset,
    excluded: &[String],
) -> Result<Vec<String>, EngineError> {
    let usable = |info: &VariableInfo, library: &VariableLibrary| {
        !library.contains(&info.name) && !excluded.contains(&info.name)
    };
    let mut picked: Vec<VariableInfo> = Vec::new();
    for s in top {
        for req in &s.requirements {
            match catalog.resolve(&req.name) {
                Some(info) if usable(info, library) && !picked.iter().any(|p| p.name == info.name) => {
                    picked.push(info.clone());
                }
                Some(_) => {}
                None => log::info!("requested variable `{}` is not in the signal catalog", req.name),
            }
        }
    }
    if picked.is_empty() {
        match catalog.signals.iter().find(|s| usable(s, library)) {
            Some(info) => picked.push(info.clone()),
            None => return Err(EngineError::CatalogExhausted),
        }
    }
    let names: Vec<String> = picked.iter().map(|p| p.name.clone()).collect();
    data.reveal(&names)?;
    for p in picked {
        library.admit(p);
    }
    Ok(names)
}

fn fit_seeded(s: &Skeleton, batch: &SampleBatch, labels: &[String], cfg: &FitConfig, seed: u64) -> Result<ScoredSkeleton, EngineError> {
    let cfg = FitConfig { seed, ..cfg.clone() };
    Ok(fit_and_score(s, batch, labels, &cfg)?)
}

fn run_loop(
    spec: LoopSpec,
    data: &mut TrajectoryDataset,
    gen: &mut dyn Generator,
    cfg: &RunConfig,
    started: Instant,
    observer: &mut Observer<'_>,
) -> Result<LoopOutcome, EngineError> {
    let LoopSpec {
        kind,
        targets,
        labels,
        states,
        mut library,
        catalog,
        excluded,
        stream,
    } = spec;
    data.reveal(&library.names())?;
    let mut scope = scope_for(&states, &library)?;
    let mut batch = data.batch();

    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    seed_rng.set_stream(stream);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(stream + 100);

    let seed_skeleton = linear_seed(kind, &scope, &targets);
    let seed = fit_seeded(&seed_skeleton, &batch, &labels, &cfg.fit, seed_rng.next_u64())?;
    let mut ls = LoopState {
        kind,
        history: vec![seed.score],
        trigger: cfg.trigger,
        library: library.clone(),
        archive: Archive::seeded(cfg.islands, seed.clone()),
    };
    let best_text = |a: &Archive| a.best().map(ScoredSkeleton::canonical_text).unwrap_or_else(|| seed.canonical_text());
    let mut iterations = Vec::new();
    let first = IterationRecord {
        loop_kind: kind,
        t: 0,
        island: None,
        generated: 0,
        compiled: 1,
        rejected: Vec::new(),
        best_score: seed.score,
        trigger: Trigger::Continue,
        added_variables: Vec::new(),
        library: library.names(),
        best_skeleton: seed.canonical_text(),
        note: Some("seed".into()),
    };
    observer(&first, &ls.archive);
    iterations.push(first);

    let mut status = LoopStatus::BudgetExhausted;
    let mut failures = 0;
    let mut generated_total = 0;
    for t in 1..=cfg.max_iterations {
        if let Some(limit) = cfg.time_budget_secs {
            let elapsed = started.elapsed().as_secs_f64();
            if elapsed > limit {
                return Err(EngineError::BudgetExceeded { elapsed_secs: elapsed });
            }
        }
        let (island, examples) = ls.archive.sample_examples(&cfg.sampler, &mut sample_rng);
        let contract = PromptContract::new(kind, &cfg.component, states.clone(), library.clone());
        let mut req = GenerationRequest::new(kind, build_prompt(&contract, &examples, &targets));
        req.n = cfg.candidates_per_iteration;
        req.temperature = cfg.temperature;
        let mut note = None;
        let completions = match generate(&req, gen) {
            Ok(c) => {
                failures = 0;
                c
            }
            Err(e) => {
                failures += 1;
                log::warn!("{kind} iteration {t}: {e}");
                note = Some(e.to_string());
                Vec::new()
            }
        };
        generated_total += completions.len();

        let mut rejected = Vec::new();
        let mut candidates: Vec<(Skeleton, Vec<Requirement>)> = Vec::new();
        for c in &completions {
            match parse(&c.skeleton_text, kind, &scope, &targets) {
                Ok(s) => candidates.push((s, c.requirements.clone())),
                Err(e) => rejected.push(e.to_string()),
            }
        }
        let seeds: Vec<u64> = candidates.iter().map(|_| seed_rng.next_u64()).collect();
        let fitted: Vec<Result<ScoredSkeleton, EngineError>> = candidates
            .par_iter()
            .zip(seeds.par_iter())
            .map(|((s, reqs), seed)| {
                let mut scored = fit_seeded(s, &batch, &labels, &cfg.fit, *seed)?;
                scored.requirements = reqs.clone();
                Ok(scored)
            })
            .collect();
        for f in fitted {
            ls.archive.register(island, f?);
        }

        let prev = *ls.history.last().expect("history holds the seed");
        let current = ls.archive.best().map_or(prev, |b| b.score.max(prev));
        ls.history.push(current);
        let trigger = ls.check_trigger();

        let mut added = Vec::new();
        if trigger == Trigger::ExtendVariables {
            let top = ls.archive.top_k(cfg.top_k);
            match extend_variables(&top, &catalog, &mut library, data, &excluded) {
                Ok(names) => {
                    log::info!("{kind} iteration {t}: admitted {names:?}");
                    added = names;
                    scope = scope_for(&states, &library)?;
                    batch = data.batch();
                    ls.library = library.clone();
                }
                Err(EngineError::CatalogExhausted) => {
                    note = Some("signal catalog exhausted; no variable added".into());
                }
                Err(e) => return Err(e),
            }
        }

        let rec = IterationRecord {
            loop_kind: kind,
            t,
            island: Some(island),
            generated: completions.len(),
            compiled: candidates.len(),
            rejected,
            best_score: current,
            trigger,
            added_variables: added,
            library: library.names(),
            best_skeleton: best_text(&ls.archive),
            note,
        };
        observer(&rec, &ls.archive);
        iterations.push(rec);

        if trigger == Trigger::Terminate {
            status = LoopStatus::Terminated;
            break;
        }
        if failures >= cfg.max_generator_failures {
            status = LoopStatus::GeneratorExhausted;
            break;
        }
    }
    if status == LoopStatus::GeneratorExhausted && generated_total == 0 {
        return Err(EngineError::GenerationExhausted {
            loop_kind: kind,
            failures,
        });
    }
    let best = ls.archive.best().cloned().unwrap_or(seed);
    Ok(LoopOutcome {
        kind,
        targets,
        best,
        library,
        status,
        history: ls.history,
        iterations,
        archive: ls.archive,
    })
}

fn initial_library(kind: TargetKind, names: &[String], catalog: &SignalCatalog, excluded: &[String]) -> Result<VariableLibrary, EngineError> {
    let mut lib = VariableLibrary::new(kind);
    for n in names {
        let info = catalog
            .resolve(n)
            .ok_or_else(|| EngineError::Config(format!("initial variable `{n}` is not in the signal catalog")))?;
        if !excluded.contains(&info.name) {
            lib.admit(info.clone());
        }
    }
    Ok(lib)
}

/// Discovers the state equations. `data` gains every admitted column.
pub fn run_de_loop(
    data: &mut TrajectoryDataset,
    gen: &mut dyn Generator,
    cfg: &RunConfig,
    observer: &mut Observer<'_>,
) -> Result<LoopOutcome, EngineError> {
    run_de_loop_at(data, gen, cfg, Instant::now(), observer)
}

pub(crate) fn run_de_loop_at(
    data: &mut TrajectoryDataset,
    gen: &mut dyn Generator,
    cfg: &RunConfig,
    started: Instant,
    observer: &mut Observer<'_>,
) -> Result<LoopOutcome, EngineError> {
    cfg.validate()?;
    let model = data.model();
    let catalog = data.catalog();
    let states = model.state_info();
    let targets: Vec<String> = data.states().to_vec();
    let spec = LoopSpec {
        kind: TargetKind::De,
        labels: data.derivative_columns(),
        library: initial_library(TargetKind::De, &cfg.initial_variables, &catalog, &[])?,
        targets,
        states,
        catalog,
        excluded: Vec::new(),
        stream: 1,
    };
    run_loop(spec, data, gen, cfg, started, observer)
}

/// Algebraic variables the AE loop must explain: those referenced by the DE
/// result, minus states and exogenous inputs, in catalog order.
pub fn ae_targets(de_best: &Skeleton, catalog: &SignalCatalog) -> Result<Vec<String>, EngineError> {
    let used = de_best.variables();
    let targets: Vec<String> = catalog
        .signals
        .iter()
        .filter(|s| s.kind == VarKind::Algebraic && used.contains(&s.name))
        .map(|s| s.name.clone())
        .collect();
    if targets.is_empty() {
        return Err(EngineError::NoAlgebraicTargets);
    }
    Ok(targets)
}

/// Discovers explicit maps for the algebraic variables the DE result uses,
/// with their recorded values as labels.
pub fn run_ae_loop(
    data: &mut TrajectoryDataset,
    de: &LoopOutcome,
    gen: &mut dyn Generator,
    cfg: &RunConfig,
    observer: &mut Observer<'_>,
) -> Result<LoopOutcome, EngineError> {
    run_ae_loop_at(data, de, gen, cfg, Instant::now(), observer)
}

pub(crate) fn run_ae_loop_at(
    data: &mut TrajectoryDataset,
    de: &LoopOutcome,
    gen: &mut dyn Generator,
    cfg: &RunConfig,
    started: Instant,
    observer: &mut Observer<'_>,
) -> Result<LoopOutcome, EngineError> {
    cfg.validate()?;
    let full = data.catalog();
    let targets = ae_targets(&de.best.skeleton, &full)?;
    data.reveal(&targets)?;
    let mut library = VariableLibrary::new(TargetKind::Ae);
    for e in de.library.entries() {
        if !targets.contains(&e.name) {
            library.admit(e.clone());
        }
    }
    let catalog = SignalCatalog {
        signals: full.signals.into_iter().filter(|s| !targets.contains(&s.name)).collect(),
    };
    let spec = LoopSpec {
        kind: TargetKind::Ae,
        labels: targets.clone(),
        excluded: targets.clone(),
        targets,
        states: data.model().state_info(),
        library,
        catalog,
        stream: 2,
    };
    run_loop(spec, data, gen, cfg, started, observer)
}

/// Result of a full discovery run.
#[derive(Debug, Clone)]
pub struct DiscoveryOutcome {
    pub de: LoopOutcome,
    /// `None` when the DE result references no algebraic variable.
    pub ae: Option<LoopOutcome>,
}

/// DE loop, then the AE loop when the DE result needs one.
pub fn discover(
    data: &mut TrajectoryDataset,
    gen: &mut dyn Generator,
    cfg: &RunConfig,
    observer: &mut Observer<'_>,
) -> Result<DiscoveryOutcome, EngineError> {
    let started = Instant::now();
    let de = run_de_loop_at(data, gen, cfg, started, observer)?;
    let ae = if cfg.run_ae {
        match run_ae_loop_at(data, &de, gen, cfg, started, observer) {
            Ok(ae) => Some(ae),
            Err(EngineError::NoAlgebraicTargets) => {
                log::info!("DE result uses no algebraic variables; AE loop skipped");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(DiscoveryOutcome { de, ae })
}
