use dmd_core::bench::{
    derivative_name, equilibrium, generate, simulate, simulate_from, BenchmarkModel, ModelId, ScenarioConfig,
};

fn quiet(noise: f64) -> ScenarioConfig {
    ScenarioConfig {
        noise,
        disturbance: None,
        ..Default::default()
    }
}

/// Max deviation of any state from its initial value.
pub fn drift(id: ModelId) -> f64 {
    let m = BenchmarkModel::new(id);
    let rec = simulate(&m, &quiet(0.0)).unwrap();
    let mut worst = 0.0f64;
    for s in &rec.states {
        let c = rec.column(s).unwrap();
        for v in c {
            worst = worst.max((v - c[0]).abs());
        }
    }
    worst
}

/// Order estimate from end-state errors at dt and dt/2 against dt/8.
pub fn rk4_order(id: ModelId) -> f64 {
    let m = BenchmarkModel::new(id);
    let scen = ScenarioConfig {
        noise: 0.0,
        ..Default::default()
    };
    let x0 = equilibrium(&m, &scen.base_inputs()).unwrap();
    let end = |dt: f64| {
        let r = simulate_from(&m, &scen, &x0, dt).unwrap();
        r.state_at(r.n_samples() - 1)
    };
    let reference = end(scen.dt / 8.0);
    let err = |x: Vec<f64>| {
        x.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let e1 = err(end(scen.dt));
    let e2 = err(end(scen.dt / 2.0));
    // With a dt/8 reference the dt/2 error is slightly underestimated; the
    // Richardson ratio (e1 - e8)/(e2 - e8) reduces to e1/e2 to first order.
    (e1 / e2).log2()
}

/// Max |numerical - analytic| / max |analytic| over all states, skipping the
/// samples next to an input switch.
pub fn derivative_error(id: ModelId, skip_events: bool) -> f64 {
    let m = BenchmarkModel::new(id);
    let scen = ScenarioConfig {
        noise: 0.0,
        ..Default::default()
    };
    let d = generate(&m, &scen).unwrap();
    let events = scen.event_times();
    let mut worst = 0.0f64;
    for s in d.states() {
        let name = derivative_name(s);
        let num = d.column(&name).unwrap();
        let exact = d.record().column(&name).unwrap();
        let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (i, t) in d.time.iter().enumerate() {
            if skip_events && events.iter().any(|e| (t - e).abs() <= scen.dt * 1.5) {
                continue;
            }
            worst = worst.max((num[i] - exact[i]).abs() / scale);
        }
    }
    worst
}
