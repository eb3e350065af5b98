use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::models::{BenchmarkModel, Inputs, ModelId};
use super::rk4::Rk4;
use super::{derivative_name, BenchError};

/// Time tolerance when comparing instants against a disturbance window.
const EVENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// Additive step of the mechanical input power.
    PmStep,
    /// Additive step of the line reactance (a line switching event).
    ReactanceStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub kind: DisturbanceKind,
    pub start: f64,
    /// Omitted: the step persists to the end of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub magnitude: f64,
}

impl Disturbance {
    pub fn end(&self) -> f64 {
        self.duration.map_or(f64::INFINITY, |d| self.start + d)
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start - EVENT_EPS && t < self.end() - EVENT_EPS
    }
}

/// What "amplitude" means for the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseAmplitude {
    /// max - min over the record.
    #[default]
    PeakToPeak,
    /// max |value| over the record.
    MaxAbs,
}

impl NoiseAmplitude {
    pub fn of(self, x: &[f64]) -> f64 {
        match self {
            NoiseAmplitude::PeakToPeak => {
                let (lo, hi) = x
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
                if hi >= lo {
                    hi - lo
                } else {
                    0.0
                }
            }
            NoiseAmplitude::MaxAbs => x.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub t_end: f64,
    pub dt: f64,
    /// Noise standard deviation as a fraction of each state's amplitude.
    pub noise: f64,
    pub noise_amplitude: NoiseAmplitude,
    pub seed: u64,
    /// Pre-disturbance mechanical power.
    pub p_m: f64,
    /// Field voltage; ignored by the classical model.
    pub v_f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Disturbance>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "train".into(),
            t_end: 10.0,
            dt: 0.01,
            noise: 0.01,
            noise_amplitude: NoiseAmplitude::PeakToPeak,
            seed: 0,
            p_m: 0.8,
            v_f: 2.6,
            disturbance: Some(Disturbance {
                kind: DisturbanceKind::PmStep,
                start: 1.0,
                duration: None,
                magnitude: 0.1,
            }),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidScenario(format!("{}: {m}", self.name)));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= self.dt) {
            return bad("t_end must be at least one step");
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be non-negative");
        }
        if let Some(d) = &self.disturbance {
            if !(d.start >= 0.0 && d.start <= self.t_end) {
                return bad("disturbance start outside [0, t_end]");
            }
            if let Some(dur) = d.duration {
                if !(dur > 0.0 && d.start + dur <= self.t_end + EVENT_EPS) {
                    return bad("disturbance window outside [0, t_end]");
                }
            }
            if !d.magnitude.is_finite() {
                return bad("disturbance magnitude must be finite");
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn base_inputs(&self) -> Inputs {
        Inputs {
            p_m: self.p_m,
            v_f: self.v_f,
            dx_e: 0.0,
        }
    }

    pub fn inputs_at(&self, t: f64) -> Inputs {
        let mut u = self.base_inputs();
        if let Some(d) = &self.disturbance {
            if d.is_active(t) {
                match d.kind {
                    DisturbanceKind::PmStep => u.p_m += d.magnitude,
                    DisturbanceKind::ReactanceStep => u.dx_e += d.magnitude,
                }
            }
        }
        u
    }

    /// Instants where the inputs switch.
    pub fn event_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(d) = &self.disturbance {
            out.push(d.start);
            if d.end().is_finite() {
                out.push(d.end());
            }
        }
        out
    }
}

/// Train scenario plus held-out test scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSet {
    pub train: ScenarioConfig,
    #[serde(default)]
    pub test: Vec<ScenarioConfig>,
}

impl Default for ScenarioSet {
    /// Tests share the training operating point; only the disturbance differs.
    fn default() -> Self {
        ScenarioSet {
            train: ScenarioConfig::default(),
            test: vec![
                ScenarioConfig {
                    name: "test_0".into(),
                    noise: 0.0,
                    seed: 1,
                    disturbance: Some(Disturbance {
                        kind: DisturbanceKind::PmStep,
                        start: 1.0,
                        duration: None,
                        magnitude: 0.15,
                    }),
                    ..Default::default()
                },
                ScenarioConfig {
                    name: "test_1".into(),
                    noise: 0.0,
                    seed: 2,
                    disturbance: Some(Disturbance {
                        kind: DisturbanceKind::ReactanceStep,
                        start: 1.0,
                        duration: Some(0.2),
                        magnitude: 0.2,
                    }),
                    ..Default::default()
                },
            ],
        }
    }
}

/// Damped Newton on `f(x) = 0` with a forward-difference Jacobian.
pub fn equilibrium(model: &BenchmarkModel, u: &Inputs) -> Result<Vec<f64>, BenchError> {
    const MAX_ITER: usize = 100;
    let n = model.n_states();
    let f = |x: &[f64]| {
        let mut dx = vec![0.0; n];
        model.rhs(x, u, &mut dx);
        DVector::from_vec(dx)
    };
    let mut x = model.nominal_state();
    let mut fx = f(&x);
    for _ in 0..MAX_ITER {
        if fx.amax() < 1e-13 {
            return Ok(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let col = (f(&xp) - &fx) / h;
            jac.set_column(j, &col);
        }
        let Some(step) = jac.lu().solve(&(-&fx)) else {
            break;
        };
        let norm0 = fx.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            let ft = f(&trial);
            if ft.iter().all(|v| v.is_finite()) && ft.norm() < norm0 {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fx.amax() < 1e-10 {
        Ok(x)
    } else {
        Err(BenchError::EquilibriumNotFound {
            iterations: MAX_ITER,
            residual: fx.amax(),
        })
    }
}

/// Noiseless simulation output: states, every catalog signal and the
/// analytic state derivatives at each grid instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRecord {
    pub model: ModelId,
    pub time: Vec<f64>,
    pub states: Vec<String>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl FullRecord {
    pub fn n_samples(&self) -> usize {
        self.time.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    /// State vector at sample `i`.
    pub fn state_at(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| self.columns[s][i]).collect()
    }

    pub fn dt(&self) -> f64 {
        if self.time.len() < 2 {
            return 0.0;
        }
        self.time[1] - self.time[0]
    }
}

/// Integrates from the pre-disturbance equilibrium with fixed-step RK4.
/// Inputs are held at their value at the start of each step.
pub fn simulate(model: &BenchmarkModel, scen: &ScenarioConfig) -> Result<FullRecord, BenchError> {
    scen.validate()?;
    let x0 = equilibrium(model, &scen.base_inputs())?;
    simulate_from(model, scen, &x0, scen.dt)
}

/// Integrates from `x0` with step `dt`, recording every `scen.dt`.
pub fn simulate_from(model: &BenchmarkModel, scen: &ScenarioConfig, x0: &[f64], dt: f64) -> Result<FullRecord, BenchError> {
    let n_out = scen.n_steps();
    let sub = (scen.dt / dt).round().max(1.0) as usize;
    let h = scen.dt / sub as f64;
    let states: Vec<String> = model.state_names().iter().map(|s| s.to_string()).collect();
    let catalog = model.catalog();
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for name in states.iter().chain(catalog.names().iter()) {
        columns.insert(name.clone(), Vec::with_capacity(n_out + 1));
    }
    for s in &states {
        columns.insert(derivative_name(s), Vec::with_capacity(n_out + 1));
    }
    let mut time = Vec::with_capacity(n_out + 1);
    let mut x = x0.to_vec();
    let mut dx = vec![0.0; x.len()];
    let mut rk = Rk4::new(x.len());
    let record = |t: f64, x: &[f64], dx: &mut [f64], columns: &mut BTreeMap<String, Vec<f64>>| {
        let u = scen.inputs_at(t);
        model.rhs(x, &u, dx);
        for (i, s) in states.iter().enumerate() {
            columns.get_mut(s).unwrap().push(x[i]);
            columns.get_mut(&derivative_name(s)).unwrap().push(dx[i]);
        }
        for name in catalog.names() {
            let v = model.signal_value(&name, x, &u).expect("catalog signal");
            columns.get_mut(&name).unwrap().push(v);
        }
    };
    for k in 0..=n_out {
        let t = k as f64 * scen.dt;
        time.push(t);
        record(t, &x, &mut dx, &mut columns);
        if k == n_out {
            break;
        }
        for j in 0..sub {
            let ts = t + j as f64 * h;
            let u = scen.inputs_at(ts);
            let mut f = |_t: f64, x: &[f64], d: &mut [f64]| model.rhs(x, &u, d);
            rk.step(&mut f, ts, &mut x, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BenchError::NonFiniteState { t: t + scen.dt });
        }
    }
    Ok(FullRecord {
        model: model.id,
        time,
        states: model.state_names().iter().map(|s| s.to_string()).collect(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibria_exist_for_all_models() {
        for id in ModelId::ALL {
            let m = BenchmarkModel::new(id);
            let scen = ScenarioConfig::default();
            let x = equilibrium(&m, &scen.base_inputs()).unwrap();
            assert!((x[1] - 1.0).abs() < 1e-12, "{id}");
            assert!(x[0] > 0.0 && x[0] < std::f64::consts::FRAC_PI_2, "{id}: {x:?}");
            let s = m.signals(&x, &scen.base_inputs());
            assert!((s.p_e - scen.p_m).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_loading_fails() {
        let m = BenchmarkModel::new(ModelId::Swing2);
        let u = Inputs {
            p_m: 5.0,
            v_f: 0.0,
            dx_e: 0.0,
        };
        assert!(matches!(equilibrium(&m, &u), Err(BenchError::EquilibriumNotFound { .. })));
    }

    #[test]
    fn disturbance_window() {
        let d = Disturbance {
            kind: DisturbanceKind::PmStep,
            start: 1.0,
            duration: Some(0.5),
            magnitude: 0.1,
        };
        assert!(!d.is_active(0.99));
        assert!(d.is_active(1.0));
        assert!(d.is_active(1.49));
        assert!(!d.is_active(1.5));
    }

    #[test]
    fn scenario_validation() {
        let mut s = ScenarioConfig::default();
        assert!(s.validate().is_ok());
        s.dt = 0.0;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.disturbance.as_mut().unwrap().start = 11.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn swing_step_settles() {
        let m = BenchmarkModel::new(ModelId::Swing2);
        let r = simulate(&m, &ScenarioConfig::default()).unwrap();
        let dd = r.column("ddelta_dt").unwrap();
        let early = dd[100..300].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let late = dd[800..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(early > 0.1);
        assert!(late < 0.1 * early, "{early} {late}");
    }
}
