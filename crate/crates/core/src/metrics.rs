//! Trajectory error metrics and the comparison report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::TrajectoryDataset;
use crate::model::ModelFile;
use crate::replay::{simulate_identified, ReplayError, ReplayMode, Trajectory};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Truth values below this magnitude are left out of MAPE.
pub const MAPE_ZERO_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// Percent; `None` when every sample was excluded.
    pub value: Option<f64>,
    pub excluded: usize,
}

/// Mean absolute percentage error, skipping near-zero truth samples.
pub fn mape(truth: &[f64], pred: &[f64]) -> Mape {
    assert_eq!(truth.len(), pred.len(), "mape needs equal lengths");
    let mut sum = 0.0;
    let mut used = 0usize;
    for (t, p) in truth.iter().zip(pred) {
        if t.abs() < MAPE_ZERO_GUARD {
            continue;
        }
        sum += ((p - t) / t).abs();
        used += 1;
    }
    Mape {
        value: (used > 0).then(|| 100.0 * sum / used as f64),
        excluded: truth.len() - used,
    }
}

/// Coefficient of determination; `None` when the truth has no variance.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Option<f64> {
    assert_eq!(truth.len(), pred.len(), "r_squared needs equal lengths");
    if truth.is_empty() {
        return None;
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub samples: usize,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
    pub states: BTreeMap<String, StateMetrics>,
    /// Mean of the per-state values.
    pub mape: Option<f64>,
    pub r2: Option<f64>,
    /// MAPE over all states' samples pooled together.
    pub stacked_mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub label: String,
    pub model_kind: String,
    pub benchmark: Option<String>,
    pub mode: ReplayMode,
    pub scenarios: Vec<ScenarioReport>,
    /// Per state, averaged over scenarios.
    pub per_state: BTreeMap<String, StateMetrics>,
    /// Mean over states and scenarios.
    pub mape: Option<f64>,
    pub r2: Option<f64>,
    pub stacked_mape: Option<f64>,
    pub diverged: bool,
}

/// Compares a replayed trajectory with the noiseless record of `test`.
pub fn score_trajectory(name: &str, test: &TrajectoryDataset, tr: &Trajectory) -> ScenarioReport {
    let n = tr.time.len();
    let mut states = BTreeMap::new();
    let mut pooled_t = Vec::new();
    let mut pooled_p = Vec::new();
    for (i, s) in tr.states.iter().enumerate() {
        let truth = &test.record().column(s).expect("record holds every state")[..n];
        let pred = &tr.values[i][..n];
        let m = mape(truth, pred);
        states.insert(
            s.clone(),
            StateMetrics {
                mape: m.value,
                mape_excluded: m.excluded,
                r2: r_squared(truth, pred),
            },
        );
        pooled_t.extend_from_slice(truth);
        pooled_p.extend_from_slice(pred);
    }
    ScenarioReport {
        name: name.to_string(),
        samples: n,
        diverged: tr.diverged,
        diverged_at: tr.diverged_at,
        mape: mean(states.values().filter_map(|m| m.mape)),
        r2: mean(states.values().filter_map(|m| m.r2)),
        stacked_mape: mape(&pooled_t, &pooled_p).value,
        states,
    }
}

/// Replays `model` on every test dataset and aggregates the metrics.
pub fn evaluate_model(
    model: &ModelFile,
    tests: &[(String, TrajectoryDataset)],
    mode: ReplayMode,
) -> Result<EvalReport, ReplayError> {
    let mut scenarios = Vec::new();
    for (name, test) in tests {
        let tr = simulate_identified(model, test.record(), &test.catalog(), mode)?;
        scenarios.push(score_trajectory(name, test, &tr));
    }
    let mut per_state = BTreeMap::new();
    for s in model.states() {
        let rows: Vec<&StateMetrics> = scenarios.iter().filter_map(|sc| sc.states.get(s)).collect();
        per_state.insert(
            s.clone(),
            StateMetrics {
                mape: mean(rows.iter().filter_map(|m| m.mape)),
                mape_excluded: rows.iter().map(|m| m.mape_excluded).sum(),
                r2: mean(rows.iter().filter_map(|m| m.r2)),
            },
        );
    }
    let all = || scenarios.iter().flat_map(|sc| sc.states.values());
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: model.label().to_string(),
        model_kind: model.kind_name().to_string(),
        benchmark: model.benchmark().map(|b| b.to_string()),
        mode,
        mape: mean(all().filter_map(|m| m.mape)),
        r2: mean(all().filter_map(|m| m.r2)),
        stacked_mape: mean(scenarios.iter().filter_map(|sc| sc.stacked_mape)),
        diverged: scenarios.iter().any(|sc| sc.diverged),
        per_state,
        scenarios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub label: String,
    pub benchmark: Option<String>,
    pub mape: Option<f64>,
    pub r2: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn new(reports: &[(String, EvalReport)]) -> Comparison {
        Comparison {
            schema_version: REPORT_SCHEMA_VERSION,
            rows: reports
                .iter()
                .map(|(run, r)| ComparisonRow {
                    run: run.clone(),
                    label: r.label.clone(),
                    benchmark: r.benchmark.clone(),
                    mape: r.mape,
                    r2: r.r2,
                    diverged: r.diverged,
                })
                .collect(),
        }
    }

    /// Fixed-width text table with Model, MAPE and R² columns.
    pub fn table(&self) -> String {
        let fmt_opt = |v: Option<f64>, pct: bool| match v {
            Some(x) if pct => format!("{x:.2}%"),
            Some(x) => format!("{x:.2}"),
            None => "n/a".to_string(),
        };
        let rows: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| {
                let name = if r.diverged { format!("{} (diverged)", r.label) } else { r.label.clone() };
                [name, fmt_opt(r.mape, true), fmt_opt(r.r2, false)]
            })
            .collect();
        let head = ["Model".to_string(), "MAPE".to_string(), "R²".to_string()];
        let mut w = [0usize; 3];
        for r in rows.iter().chain(std::iter::once(&head)) {
            for (i, c) in r.iter().enumerate() {
                w[i] = w[i].max(c.chars().count());
            }
        }
        let line = |r: &[String; 3]| {
            let pad = |s: &str, n: usize| format!("{s}{}", " ".repeat(n - s.chars().count()));
            format!("{}  {}  {}", pad(&r[0], w[0]), pad(&r[1], w[1]), pad(&r[2], w[2]))
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", line(&head));
        let _ = writeln!(out, "{}", "-".repeat(w[0] + w[1] + w[2] + 4));
        for r in &rows {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).value, Some(0.0));
        let m = mape(&[1.0, 2.0, 4.0], &[1.1, 2.2, 4.4]).value.unwrap();
        assert!((m - 10.0).abs() < 1e-12);
        let z = mape(&[0.0, 2.0], &[5.0, 2.2]);
        assert_eq!(z.excluded, 1);
        assert!((z.value.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[0.0], &[1.0]).value, None);
    }

    #[test]
    fn r_squared_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(&t, &t), Some(1.0));
        assert_eq!(r_squared(&t, &[2.5; 4]), Some(0.0));
        assert!(r_squared(&t, &[4.0, 3.0, 2.0, 1.0]).unwrap() < 0.0);
        assert_eq!(r_squared(&[1.0; 3], &[1.0; 3]), None);
    }

    #[test]
    fn table_has_one_row_per_run() {
        let rows = (0..4)
            .map(|i| ComparisonRow {
                run: format!("r{i}"),
                label: format!("model {i}"),
                benchmark: None,
                mape: Some(i as f64),
                r2: Some(0.5),
                diverged: i == 3,
            })
            .collect();
        let c = Comparison {
            schema_version: 1,
            rows,
        };
        let t = c.table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[0].contains("MAPE") && lines[0].contains("R²"));
        assert!(lines[5].contains("(diverged)"));
    }
}
