//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines come out in order and
//! unabridged. Exits nonzero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use dmd_core::bench::{ModelId, ScenarioSet};
use dmd_core::commands::{self, BaselineOptions};
use dmd_core::dsl::{parse, serialize, SymbolScope, TargetKind};
use dmd_core::engine::{check_trigger, Trigger, TriggerConfig};
use dmd_core::eval::SampleBatch;
use dmd_core::fit::{cosine_lr, fit_and_score, FitConfig};
use dmd_core::gateway::parse_completion;
use dmd_core::model::{DiscoveredModel, FittedEquations, ModelFile};
use dmd_core::replay::{simulate_identified, ReplayMode};
use dmd_core::sindy::{stlsq, LibraryVariant, StlsqConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn read_log(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn de_records(log: &[Value]) -> Vec<&Value> {
    log.iter().filter(|r| r["loop"] == "de").collect()
}

fn canonical(text: &str, states: &[&str], vars: &[&str]) -> String {
    let scope = SymbolScope::new(states.iter().copied(), vars.iter().copied()).unwrap();
    let targets: Vec<String> = states.iter().map(|s| s.to_string()).collect();
    serialize(&parse(text, TargetKind::De, &scope, &targets).unwrap())
}

fn noiseless_swing2(dir: &Path) {
    let set = commands::load_scenarios(Some(&common::fixture("noiseless.toml"))).unwrap();
    commands::gen_data(ModelId::Swing2, &set, dir).unwrap();
}

fn criterion_1() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let started = Instant::now();
    noiseless_swing2(&data);
    let cfg = commands::load_config(&common::fixture("swing2_recovery.toml")).unwrap();
    let model = commands::discover_run(&cfg, &data, &run).map_err(|e| e.to_string())?;
    let closed = commands::evaluate(&run.join("model.json"), &data, &run.join("closed.json"), ReplayMode::ClosedLoop)
        .map_err(|e| e.to_string())?;
    let recorded = commands::evaluate(
        &run.join("model.json"),
        &data,
        &run.join("recorded.json"),
        ReplayMode::RecordedSignals,
    )
    .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();

    let log = read_log(&run.join("run_log.jsonl"));
    let de = de_records(&log);
    let last = de.last().unwrap();
    check(last["trigger"] == "terminate", format!("DE ended with trigger {}", last["trigger"]))?;
    let ModelFile::Skeleton(m) = &model else { unreachable!() };
    let want = canonical(
        "ddelta/dt = p0*314.159265*(omega - 1)\ndomega/dt = p1*(P_m - P_e) - p2*(omega - 1)",
        &["delta", "omega"],
        &["P_m", "P_e"],
    );
    check(m.de.skeleton == want, format!("selected {:?}", m.de.skeleton))?;

    // Closed loop on the P_m step test; the AE map cannot see a network
    // change, so the reactance test is gated in recorded mode.
    let t0 = &closed.scenarios[0];
    let (mape0, r20) = (t0.mape.unwrap(), t0.r2.unwrap());
    check(mape0 < 1.0 && r20 > 0.95, format!("closed-loop {}: MAPE {mape0:.3}% R² {r20:.4}", t0.name))?;
    for sc in &recorded.scenarios {
        let (mp, r2) = (sc.mape.unwrap(), sc.r2.unwrap());
        check(mp < 1.0 && r2 > 0.95, format!("recorded {}: MAPE {mp:.3}% R² {r2:.4}", sc.name))?;
    }
    check(secs < 120.0, format!("runtime {secs:.1} s"))?;
    Ok(format!(
        "terminated at t={}, true DE selected, closed-loop {} MAPE {mape0:.3}% R² {r20:.4}, recorded MAPE {:.3}% R² {:.4}, {secs:.1} s",
        last["t"],
        t0.name,
        recorded.mape.unwrap(),
        recorded.r2.unwrap()
    ))
}

fn criterion_2() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    noiseless_swing2(&data);
    let cfg = commands::load_config(&common::fixture("swing2_extension.toml")).unwrap();
    commands::discover_run(&cfg, &data, &run).map_err(|e| e.to_string())?;
    let log = read_log(&run.join("run_log.jsonl"));
    let de = de_records(&log);
    let tc = cfg.trigger;
    let history: Vec<f64> = de.iter().map(|r| r["best_score"].as_f64().unwrap()).collect();
    let mut fired = Vec::new();
    for (t, r) in de.iter().enumerate().skip(1) {
        let want = common::trigger_oracle(&history[..=t], tc.epsilon, tc.gamma, tc.window);
        let got: Trigger = serde_json::from_value(r["trigger"].clone()).unwrap();
        check(got == want, format!("t={t}: logged {got:?}, oracle {want:?}"))?;
        if got == Trigger::ExtendVariables {
            fired.push((t, r["added_variables"].clone()));
        }
    }
    check(!fired.is_empty(), "extension never fired")?;
    check(
        fired[0].1.as_array().unwrap().iter().any(|v| v == "P_e"),
        format!("extension at t={} added {}", fired[0].0, fired[0].1),
    )?;
    let lib = &de.last().unwrap()["library"];
    check(lib.as_array().unwrap().iter().any(|v| v == "P_e"), format!("final library {lib}"))?;

    let grid = [-1.5, -1.0, -0.015, -0.01, -0.005];
    let cfg = TriggerConfig::default();
    let (n, bad) = common::exhaustive_trigger_check(&grid, 6, &cfg, |h| check_trigger(h, &cfg));
    check(bad.is_empty(), format!("{} of {n} oracle mismatches, first {:?}", bad.len(), bad.first()))?;
    Ok(format!(
        "extension at t={} added {}, {} logged triggers match, {n} oracle histories match",
        fired[0].0,
        fired[0].1,
        de.len() - 1
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_sigma: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let taus = [0.1, 0.2, 0.35, 0.5, 1.0, 2.0];
    for (i, tau) in taus.iter().enumerate() {
        let archive = common::random_archive(&mut rng, 2 + i);
        let fit = common::sampler_fit(&archive, *tau, 100_000, &mut rng);
        check(fit.chi2_ok, format!("config {i} (tau_c {tau}): chi² {:?}", fit.worst_chi2))?;
        check(fit.island_sigmas <= 3.0, format!("config {i}: island marginal {:.2} sigma", fit.island_sigmas))?;
        worst_sigma = worst_sigma.max(fit.island_sigmas);
        worst_ratio = worst_ratio.max(fit.worst_chi2.0 / fit.worst_chi2.1);
    }
    Ok(format!(
        "{} archives x 1e5 draws, worst chi²/critical {worst_ratio:.3}, worst island deviation {worst_sigma:.2} sigma",
        taus.len()
    ))
}

fn criterion_4() -> Outcome {
    let (n, worst) = common::worst_gradient_error(4, 250);
    check(worst < 1e-5, format!("max relative error {worst:e}"))?;
    Ok(format!("{n} skeletons, max relative error {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let scope = SymbolScope::new(["x"], Vec::<String>::new()).unwrap();
    let s = parse("dx/dt = p0*x", TargetKind::De, &scope, &["x".to_string()]).unwrap();
    let xs: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 / 49.0).collect();
    let dx: Vec<f64> = xs.iter().map(|x| -1.7 * x).collect();
    let batch = SampleBatch::from_pairs([("x", xs), ("dx_dt", dx)]).unwrap();
    let labels = ["dx_dt".to_string()];
    let a = fit_and_score(&s, &batch, &labels, &FitConfig::default()).unwrap();
    check((a.params[0] + 1.7).abs() < 1e-3, format!("coefficient {}", a.params[0]))?;
    let b = fit_and_score(&s, &batch, &labels, &FitConfig::default()).unwrap();
    check(a.score.to_bits() == b.score.to_bits(), "repeated fits differ")?;
    check(a.params[0].to_bits() == b.params[0].to_bits(), "repeated parameters differ")?;
    check(cosine_lr(0.05, 0, 2000) == 0.05, "lr at step 0")?;
    check(cosine_lr(0.05, 2000, 2000) == 0.0, "lr at the last step")?;
    check(cosine_lr(0.05, 1000, 2000) == 0.025, "lr at the midpoint")?;
    Ok(format!("p0 = {:.6} (true -1.7), schedule endpoints exact, repeated fits bit-identical", a.params[0]))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ols_err: f64 = 0.0;
    for _ in 0..20 {
        let theta = DMatrix::from_fn(200, 6, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(200, 2, |_, _| rng.random_range(-2.0..2.0));
        let fit = stlsq(&theta, &y, &StlsqConfig { threshold: 0.0, iterations: 1 });
        let want = common::svd_least_squares(&theta, &y).transpose();
        ols_err = ols_err.max((&fit.coefficients - &want).abs().max());
    }
    check(ols_err < 1e-9, format!("OLS deviation {ols_err:e}"))?;

    let lambda = 0.1;
    for case in 0..25 {
        let theta = DMatrix::from_fn(400, 8, |_, _| rng.random_range(-1.0..1.0));
        let mut xi = DMatrix::zeros(8, 2);
        for t in 0..2 {
            for _ in 0..3 {
                let mag: f64 = rng.random_range(2.0 * lambda..2.0);
                xi[(rng.random_range(0..8), t)] = if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
        let fit = stlsq(&theta, &(&theta * &xi), &StlsqConfig { threshold: lambda, iterations: 10 });
        for t in 0..2 {
            for j in 0..8 {
                check(fit.active[t][j] == (xi[(j, t)] != 0.0), format!("support mismatch, case {case}"))?;
            }
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    commands::gen_data(ModelId::Oneaxis3, &ScenarioSet::default(), &data).unwrap();
    let mape = |variant: LibraryVariant| -> Result<f64, String> {
        let dir = tmp.path().join(variant.to_string());
        let opts = BaselineOptions { variant, stlsq: StlsqConfig::default(), exclude: Vec::new() };
        commands::baseline(&opts, &data, &dir).map_err(|e| e.to_string())?;
        let r = commands::evaluate(&dir.join("model.json"), &data, &dir.join("report.json"), ReplayMode::ClosedLoop)
            .map_err(|e| e.to_string())?;
        Ok(if r.diverged { f64::INFINITY } else { r.mape.unwrap_or(f64::INFINITY) })
    };
    let accurate = mape(LibraryVariant::Accurate)?;
    let missing = mape(LibraryVariant::Missing)?;
    check(
        missing > accurate,
        format!(
            "OLS and support recovery pass, but oneaxis3 ordering fails: missing {missing:.3}% <= accurate {accurate:.3}%"
        ),
    )?;
    Ok(format!(
        "OLS deviation {ols_err:.1e}, 25 supports recovered, oneaxis3 missing {missing:.3}% > accurate {accurate:.3}%"
    ))
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    for id in ModelId::ALL {
        let d = common::bench::drift(id);
        let p = common::bench::rk4_order(id);
        check(d <= 1e-8, format!("{id}: drift {d:e}"))?;
        check(p >= 3.8, format!("{id}: order {p:.3}"))?;
        parts.push(format!("{id} drift {d:.0e} order {p:.2}"));
    }
    // The 1e-3 bound is stated for the swing2 scenario; the others are shown.
    let e = common::bench::derivative_error(ModelId::Swing2, true);
    check(e < 1e-3, format!("swing2 derivative error {e:e}"))?;
    let others: Vec<String> = [ModelId::Oneaxis3, ModelId::Type1order5]
        .iter()
        .map(|id| format!("{id} {:.1e}", common::bench::derivative_error(*id, true)))
        .collect();
    Ok(format!(
        "{}; swing2 derivative error {e:.1e} (info: {})",
        parts.join(", "),
        others.join(", ")
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphabet: Vec<char> = "`abc skeleton requirements json{}[]\":,=*/()\n\t\u{e9}\u{1F600}".chars().collect();
    for _ in 0..20_000 {
        let len = rng.random_range(0..200);
        let raw: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let c = parse_completion(&raw);
        check(c.raw == raw, "completion lost its raw text")?;
    }

    // A non-compiling completion in the first batch is rejected, and the
    // iteration still fits the rest.
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    noiseless_swing2(&data);
    let mut cfg = commands::load_config(&common::fixture("swing2_recovery.toml")).unwrap();
    cfg.max_iterations = 1;
    cfg.run_ae = false;
    let run = tmp.path().join("run");
    commands::discover_run(&cfg, &data, &run).map_err(|e| e.to_string())?;
    let log = read_log(&run.join("run_log.jsonl"));
    let first = de_records(&log)[1];
    let rejected = first["rejected"].as_array().map_or(0, Vec::len);
    check(rejected >= 1, "no completion was rejected")?;
    check(first["compiled"].as_u64().unwrap() >= 1, "nothing compiled")?;

    let train = common::swing2_training();
    let unstable = ModelFile::Skeleton(DiscoveredModel {
        label: "unstable".into(),
        benchmark: Some(ModelId::Swing2),
        states: vec!["delta".into(), "omega".into()],
        de: FittedEquations {
            skeleton: "ddelta/dt = p0*delta\ndomega/dt = p1*omega".into(),
            targets: vec!["delta".into(), "omega".into()],
            params: vec![50.0, 50.0],
            score: 0.0,
            variables: Vec::new(),
        },
        ae: None,
    });
    let tr = simulate_identified(&unstable, train.record(), &train.catalog(), ReplayMode::ClosedLoop)
        .map_err(|e| e.to_string())?;
    check(tr.diverged, "unstable model was not flagged")?;
    Ok(format!(
        "20000 fuzzed completions parsed, {rejected} rejected completion(s) skipped, divergence flagged at t={:.2} s",
        tr.diverged_at.unwrap()
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL ({detail})");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
