//! Shared helpers for the integration suites and the acceptance runner.
#![allow(dead_code)]

pub mod bench;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use dmd_core::archive::Archive;
use dmd_core::dsl::{parse, BinOp, Expr, Func, Skeleton, SymbolScope, TargetKind};
use dmd_core::eval::{evaluate, gradient_check, SampleBatch};
use dmd_core::engine::{Trigger, TriggerConfig};
use dmd_core::fit::ScoredSkeleton;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Straight transcription of the trigger rule over an explicit history.
pub fn trigger_oracle(h: &[f64], eps: f64, gamma: f64, r: usize) -> Trigger {
    let t = h.len() - 1;
    if t >= r {
        let mut stagnant = true;
        for j in (t + 1 - r)..=t {
            if h[j] - h[j - 1] > eps {
                stagnant = false;
            }
        }
        if stagnant && h[t] <= -gamma {
            return Trigger::ExtendVariables;
        }
    }
    if h.len() >= r {
        let mut above = true;
        for v in &h[h.len() - r..] {
            if *v <= -gamma {
                above = false;
            }
        }
        if above {
            return Trigger::Terminate;
        }
    }
    Trigger::Continue
}

/// Every history of length 1..=max_len over `grid`, with the oracle's
/// verdict compared to `check`. Returns (histories, mismatches).
pub fn exhaustive_trigger_check(
    grid: &[f64],
    max_len: usize,
    cfg: &TriggerConfig,
    check: impl Fn(&[f64]) -> Trigger,
) -> (usize, Vec<(Vec<f64>, Trigger, Trigger)>) {
    let mut count = 0;
    let mut bad = Vec::new();
    for len in 1..=max_len {
        let total = grid.len().pow(len as u32);
        for mut code in 0..total {
            let mut h = Vec::with_capacity(len);
            for _ in 0..len {
                h.push(grid[code % grid.len()]);
                code /= grid.len();
            }
            let want = trigger_oracle(&h, cfg.epsilon, cfg.gamma, cfg.window);
            let got = check(&h);
            count += 1;
            if got != want {
                bad.push((h, want, got));
            }
        }
    }
    (count, bad)
}

fn skeleton_with_const(c: usize) -> Skeleton {
    let scope = SymbolScope::new(["x"], Vec::<String>::new()).unwrap();
    let text = format!("dx/dt = p0*x + {c}{}", "*x".repeat(c % 3));
    parse(&text, TargetKind::De, &scope, &["x".to_string()]).unwrap()
}

/// Distinct one-target skeleton `c` with a fixed score.
pub fn scored(c: usize, score: f64) -> ScoredSkeleton {
    ScoredSkeleton {
        skeleton: skeleton_with_const(c),
        params: vec![0.0],
        score,
        loss_trace: None,
        requirements: Vec::new(),
        fault: None,
    }
}

/// Archive with `m` islands and random clusters on each.
pub fn random_archive(rng: &mut ChaCha8Rng, m: usize) -> Archive {
    let mut a = Archive::seeded(m, scored(0, -1.0));
    let mut next = 1;
    for k in 0..m {
        let n = rng.random_range(1..6);
        for _ in 0..n {
            // Few distinct score levels, so clusters get several members.
            let score = -(rng.random_range(0..12) as f64) * 0.125;
            a.register(k, scored(next, score));
            next += 1;
        }
    }
    a
}

#[derive(Debug)]
pub struct SamplerFit {
    pub draws: usize,
    /// Worst island: (chi², critical value, dof).
    pub worst_chi2: (f64, f64, usize),
    pub chi2_ok: bool,
    /// Largest island-frequency deviation in binomial sigmas.
    pub island_sigmas: f64,
}

/// Cluster frequencies per island vs the analytic softmax of cluster means.
pub fn sampler_fit(archive: &Archive, tau_c: f64, draws: usize, rng: &mut ChaCha8Rng) -> SamplerFit {
    let m = archive.islands().len();
    let mut island_counts = vec![0usize; m];
    let mut counts: Vec<BTreeMap<i64, usize>> = vec![BTreeMap::new(); m];
    for _ in 0..draws {
        let (k, key) = archive.sample_cluster(tau_c, rng);
        island_counts[k] += 1;
        *counts[k].entry(key).or_default() += 1;
    }
    let mut worst = (0.0, f64::INFINITY, 0);
    let mut worst_ratio = 0.0f64;
    let mut ok = true;
    for (k, island) in archive.islands().iter().enumerate() {
        let clusters: Vec<_> = island.clusters().collect();
        if clusters.len() < 2 {
            continue;
        }
        let z: Vec<f64> = clusters.iter().map(|c| c.mean_score() / tau_c).collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
        let total: f64 = e.iter().sum();
        let n = island_counts[k] as f64;
        // Pool cells with expected count < 5 into one.
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let mut pool = (0.0, 0.0);
        for (c, w) in clusters.iter().zip(&e) {
            let exp = n * w / total;
            let obs = *counts[k].get(&c.key).unwrap_or(&0) as f64;
            if exp < 5.0 {
                pool.0 += exp;
                pool.1 += obs;
            } else {
                cells.push((exp, obs));
            }
        }
        if pool.0 > 0.0 {
            cells.push(pool);
        }
        if cells.len() < 2 {
            continue;
        }
        let chi2: f64 = cells.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
        let dof = cells.len() - 1;
        let crit = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99);
        if chi2 > crit {
            ok = false;
        }
        if chi2 / crit > worst_ratio {
            worst_ratio = chi2 / crit;
            worst = (chi2, crit, dof);
        }
    }
    let p = 1.0 / m as f64;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    let island_sigmas = island_counts
        .iter()
        .map(|c| (*c as f64 - draws as f64 * p).abs() / sd)
        .fold(0.0, f64::max);
    SamplerFit {
        draws,
        worst_chi2: worst,
        chi2_ok: ok,
        island_sigmas,
    }
}

/// Random expression over `vars` with at most `depth` levels.
pub fn random_expr(rng: &mut ChaCha8Rng, vars: &[&str], depth: usize, next_param: &mut usize) -> Expr {
    let leaf = depth == 0 || rng.random_bool(0.25);
    if leaf {
        return match rng.random_range(0..3) {
            0 => {
                let p = Expr::param(*next_param);
                *next_param += 1;
                p
            }
            1 => Expr::var(vars[rng.random_range(0..vars.len())]),
            _ => Expr::constant(rng.random_range(1..8) as f64 * 0.5),
        };
    }
    let sub = |rng: &mut ChaCha8Rng, next: &mut usize| random_expr(rng, vars, depth - 1, next);
    match rng.random_range(0..10) {
        0..=3 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][rng.random_range(0..4)];
            let l = sub(rng, next_param);
            let r = sub(rng, next_param);
            Expr::binary(op, l, r)
        }
        4 => Expr::neg(sub(rng, next_param)),
        5 => Expr::pow(sub(rng, next_param), rng.random_range(-3..=3)),
        _ => {
            let f = Func::ALL[rng.random_range(0..Func::ALL.len())];
            Expr::call(f, sub(rng, next_param))
        }
    }
}

/// Draws skeletons until `want` of them evaluate cleanly on `batch`, and
/// returns the worst AD-vs-FD discrepancy seen.
pub fn worst_gradient_error(seed: u64, want: usize) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Irrational-looking offsets keep samples off the kinks of abs().
    let batch = SampleBatch::from_pairs(vec![
        ("x", (0..24).map(|i| 0.5127 + 0.0613 * i as f64).collect::<Vec<_>>()),
        ("y", (0..24).map(|i| 1.6931 - 0.0519 * i as f64).collect::<Vec<_>>()),
    ])
    .unwrap();
    let targets = vec!["x".to_string(), "y".to_string()];
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < want {
        let mut next = 0;
        let a = random_expr(&mut rng, &["x", "y"], 4, &mut next);
        let b = random_expr(&mut rng, &["x", "y"], 4, &mut next);
        let s = Skeleton::from_parts(TargetKind::De, targets.clone(), vec![a, b]);
        if s.n_params == 0 {
            continue;
        }
        let params: Vec<f64> = (0..s.n_params).map(|k| 0.3141 + 0.1732 * k as f64).collect();
        let r = evaluate(&s, &params, &batch).unwrap();
        let tame = r.outputs.iter().flatten().all(|v| v.abs() < 1e4);
        if r.domain_fault.is_some() || !tame {
            continue;
        }
        match gradient_check(&s, &params, &batch) {
            Ok(e) => {
                        worst = worst.max(e);
                checked += 1;
            }
            // A finite-difference probe stepped into a fault.
            Err(_) => continue,
        }
    }
    (checked, worst)
}

/// Least squares through the SVD, independent of the normal equations.
pub fn svd_least_squares(theta: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    theta.clone().svd(true, true).solve(y, 1e-14).unwrap()
}

/// Noiseless swing-equation training data with a P_m step 0.6 → 0.9.
pub fn swing2_training() -> dmd_core::bench::TrajectoryDataset {
    use dmd_core::bench::{generate, BenchmarkModel, Disturbance, DisturbanceKind, ModelId, ScenarioConfig};
    let scen = ScenarioConfig {
        noise: 0.0,
        p_m: 0.6,
        disturbance: Some(Disturbance {
            kind: DisturbanceKind::PmStep,
            start: 1.0,
            duration: None,
            magnitude: 0.3,
        }),
        ..Default::default()
    };
    generate(&BenchmarkModel::new(ModelId::Swing2), &scen).unwrap()
}

/// Wraps equations the way a generator would.
pub fn fenced(skeleton: &str) -> String {
    format!("Proposed structure:\n```skeleton\n{skeleton}\n```\n")
}
