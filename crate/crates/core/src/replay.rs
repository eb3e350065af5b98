//! Re-simulating identified models against a recorded test scenario.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{FullRecord, Rk4};
use crate::dsl::TargetKind;
use crate::engine::{SignalCatalog, VarKind};
use crate::eval::CompiledSkeleton;
use crate::model::ModelFile;
use crate::sindy::SindyModel;

/// States beyond this magnitude count as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("model states {model:?} do not match record states {record:?}")]
    StateMismatch { model: Vec<String>, record: Vec<String> },
    #[error("record has no signal `{0}`")]
    MissingSignal(String),
    #[error("invalid model: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Non-state variables come from the record.
    RecordedSignals,
    /// Algebraic variables the AE model explains are computed from it.
    ClosedLoop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub states: Vec<String>,
    /// `values[i][k]`: state `i` at `time[k]`. Finite prefix only.
    pub values: Vec<Vec<f64>>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
    pub reason: Option<String>,
}

/// Where a model input comes from during replay.
#[derive(Debug, Clone, PartialEq)]
enum Source {
    State(usize),
    Signal(usize),
    Algebraic(usize),
}

/// Recorded signal lookup: inputs are held over each step, algebraic
/// signals are interpolated linearly.
struct Signals<'a> {
    record: &'a FullRecord,
    names: Vec<String>,
    held: Vec<bool>,
}

impl<'a> Signals<'a> {
    fn new(record: &'a FullRecord, catalog: &SignalCatalog) -> Signals<'a> {
        let mut names: Vec<String> = record
            .columns
            .keys()
            .filter(|n| !record.states.contains(n))
            .cloned()
            .collect();
        names.sort();
        let held = names
            .iter()
            .map(|n| catalog.get(n).is_some_and(|s| s.kind == VarKind::Input))
            .collect();
        Signals { record, names, held }
    }

    fn index(&self, name: &str) -> Result<usize, ReplayError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ReplayError::MissingSignal(name.to_string()))
    }

    fn value(&self, j: usize, t: f64, step: usize) -> f64 {
        let col = &self.record.columns[&self.names[j]];
        if self.held[j] || col.len() < 2 {
            return col[step.min(col.len() - 1)];
        }
        let t0 = self.record.time[0];
        let dt = self.record.dt();
        let u = (t - t0) / dt;
        let i = (u.floor().max(0.0) as usize).min(col.len() - 2);
        let w = u - i as f64;
        col[i] * (1.0 - w) + col[i + 1] * w
    }
}

struct Equations {
    tape: CompiledSkeleton,
    params: Vec<f64>,
    sources: Vec<Source>,
}

impl Equations {
    fn eval(&self, x: &[f64], sig: &Signals<'_>, alg: &[f64], t: f64, step: usize, out: &mut [f64]) -> Result<(), String> {
        let row: Vec<f64> = self
            .sources
            .iter()
            .map(|s| match s {
                Source::State(i) => x[*i],
                Source::Signal(j) => sig.value(*j, t, step),
                Source::Algebraic(k) => alg[*k],
            })
            .collect();
        self.tape.eval_point(&self.params, &row, out)
    }
}

enum Prepared {
    Skeleton { de: Equations, ae: Option<Equations>, n_alg: usize },
    Sindy { model: SindyModel, sources: Vec<Source> },
}

fn resolve(
    names: &[String],
    states: &[String],
    sig: &Signals<'_>,
    alg_targets: &[String],
) -> Result<Vec<Source>, ReplayError> {
    names
        .iter()
        .map(|n| {
            if let Some(i) = states.iter().position(|s| s == n) {
                Ok(Source::State(i))
            } else if let Some(k) = alg_targets.iter().position(|a| a == n) {
                Ok(Source::Algebraic(k))
            } else {
                sig.index(n).map(Source::Signal)
            }
        })
        .collect()
}

fn prepare(model: &ModelFile, sig: &Signals<'_>, mode: ReplayMode) -> Result<Prepared, ReplayError> {
    let states = model.states();
    match model {
        ModelFile::Skeleton(m) => {
            let de_s = m.de.parse(TargetKind::De, states).map_err(|e| ReplayError::Model(e.to_string()))?;
            if de_s.targets != states {
                return Err(ReplayError::Model("DE targets must be the model states".into()));
            }
            let ae_s = match (&m.ae, mode) {
                (Some(ae), ReplayMode::ClosedLoop) => {
                    Some(ae.parse(TargetKind::Ae, states).map_err(|e| ReplayError::Model(e.to_string()))?)
                }
                _ => None,
            };
            let alg_targets: Vec<String> = ae_s.as_ref().map(|s| s.targets.clone()).unwrap_or_default();
            let ae = match ae_s {
                Some(s) => {
                    let tape = CompiledSkeleton::for_skeleton(&s);
                    let sources = resolve(tape.columns(), states, sig, &[])?;
                    Some(Equations {
                        tape,
                        params: m.ae.as_ref().expect("parsed above").params.clone(),
                        sources,
                    })
                }
                None => None,
            };
            let tape = CompiledSkeleton::for_skeleton(&de_s);
            let sources = resolve(tape.columns(), states, sig, &alg_targets)?;
            if m.de.params.len() != tape.n_params() {
                return Err(ReplayError::Model("parameter count does not match the skeleton".into()));
            }
            Ok(Prepared::Skeleton {
                de: Equations {
                    tape,
                    params: m.de.params.clone(),
                    sources,
                },
                ae,
                n_alg: alg_targets.len(),
            })
        }
        ModelFile::Sindy(s) => {
            let sources = resolve(&s.library.variables, states, sig, &[])?;
            Ok(Prepared::Sindy {
                model: s.clone(),
                sources,
            })
        }
    }
}

impl Prepared {
    fn rhs(&self, x: &[f64], sig: &Signals<'_>, t: f64, step: usize, dx: &mut [f64]) -> Result<(), String> {
        match self {
            Prepared::Skeleton { de, ae, n_alg } => {
                let mut alg = vec![0.0; *n_alg];
                if let Some(ae) = ae {
                    ae.eval(x, sig, &[], t, step, &mut alg)?;
                }
                de.eval(x, sig, &alg, t, step, dx)
            }
            Prepared::Sindy { model, sources } => {
                let vars: Vec<f64> = sources
                    .iter()
                    .map(|s| match s {
                        Source::State(i) => x[*i],
                        Source::Signal(j) => sig.value(*j, t, step),
                        Source::Algebraic(_) => unreachable!("sparse models have no algebraic part"),
                    })
                    .collect();
                model.rhs(&vars, dx);
                Ok(())
            }
        }
    }
}

/// Integrates `model` with RK4 on the record's grid from its initial state.
///
/// A non-finite or runaway state stops the replay with the divergence flag
/// set; the returned trajectory is the finite prefix.
pub fn simulate_identified(
    model: &ModelFile,
    record: &FullRecord,
    catalog: &SignalCatalog,
    mode: ReplayMode,
) -> Result<Trajectory, ReplayError> {
    if model.states() != record.states.as_slice() {
        return Err(ReplayError::StateMismatch {
            model: model.states().to_vec(),
            record: record.states.clone(),
        });
    }
    let sig = Signals::new(record, catalog);
    let prepared = prepare(model, &sig, mode)?;
    let n = record.states.len();
    let dt = record.dt();
    let mut x = record.state_at(0);
    let mut values: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    let mut time = vec![record.time[0]];
    let mut rk = Rk4::new(n);
    let mut diverged_at = None;
    let mut reason = None;
    for k in 0..record.n_samples().saturating_sub(1) {
        let t = record.time[k];
        let mut fault: Option<String> = None;
        let mut f = |ts: f64, xs: &[f64], dx: &mut [f64]| {
            if let Err(e) = prepared.rhs(xs, &sig, ts, k, dx) {
                fault.get_or_insert(e);
                dx.iter_mut().for_each(|d| *d = f64::NAN);
            }
        };
        rk.step(&mut f, t, &mut x, dt);
        let bad = x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT);
        if fault.is_some() || bad {
            diverged_at = Some(record.time[k + 1]);
            reason = Some(fault.unwrap_or_else(|| "state left the finite range".into()));
            break;
        }
        time.push(record.time[k + 1]);
        for i in 0..n {
            values[i].push(x[i]);
        }
    }
    Ok(Trajectory {
        time,
        states: record.states.clone(),
        values,
        diverged: diverged_at.is_some(),
        diverged_at,
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{simulate, BenchmarkModel, ModelId, ScenarioConfig};
    use crate::model::{DiscoveredModel, FittedEquations};

    fn swing_record() -> (FullRecord, SignalCatalog) {
        let m = BenchmarkModel::new(ModelId::Swing2);
        (simulate(&m, &ScenarioConfig::default()).unwrap(), m.catalog())
    }

    fn model(de: &str, params: Vec<f64>, vars: &[&str]) -> ModelFile {
        ModelFile::Skeleton(DiscoveredModel {
            label: "t".into(),
            benchmark: Some(ModelId::Swing2),
            states: vec!["delta".into(), "omega".into()],
            de: FittedEquations {
                skeleton: de.into(),
                targets: vec!["delta".into(), "omega".into()],
                params,
                score: 0.0,
                variables: vars.iter().map(|s| s.to_string()).collect(),
            },
            ae: None,
        })
    }

    #[test]
    fn true_model_reproduces_record() {
        let (rec, cat) = swing_record();
        let p = BenchmarkModel::new(ModelId::Swing2).params;
        let m = model(
            "ddelta/dt = p0*(omega - 1)\ndomega/dt = p1*(P_m - P_e) - p2*(omega - 1)",
            vec![p.omega_b, 1.0 / (2.0 * p.h), p.d / (2.0 * p.h)],
            &["P_m", "P_e"],
        );
        let tr = simulate_identified(&m, &rec, &cat, ReplayMode::RecordedSignals).unwrap();
        assert!(!tr.diverged);
        let err = tr.values[0]
            .iter()
            .zip(rec.column("delta").unwrap())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_model_stays_put() {
        let (rec, cat) = swing_record();
        let m = model("ddelta/dt = 0\ndomega/dt = 0", vec![], &[]);
        let tr = simulate_identified(&m, &rec, &cat, ReplayMode::RecordedSignals).unwrap();
        assert!(tr.values[0].iter().all(|v| *v == rec.column("delta").unwrap()[0]));
    }

    #[test]
    fn unstable_model_is_flagged() {
        let (rec, cat) = swing_record();
        let m = model("ddelta/dt = p0*delta\ndomega/dt = 0", vec![50.0], &[]);
        let tr = simulate_identified(&m, &rec, &cat, ReplayMode::RecordedSignals).unwrap();
        assert!(tr.diverged);
        assert!(tr.values[0].iter().all(|v| v.is_finite()));
        assert!(tr.time.len() < rec.n_samples());
    }

    #[test]
    fn domain_fault_is_a_divergence() {
        let (rec, cat) = swing_record();
        let m = model("ddelta/dt = p0/(omega - omega)\ndomega/dt = 0", vec![1.0], &[]);
        let tr = simulate_identified(&m, &rec, &cat, ReplayMode::RecordedSignals).unwrap();
        assert!(tr.diverged);
        assert!(tr.reason.unwrap().contains("denominator"));
    }
}
