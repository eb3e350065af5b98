//! Sparse regression baseline (sequentially thresholded least squares).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::ModelId;
use crate::eval::SampleBatch;

/// Ridge penalty used when an active set is ill-conditioned.
pub const RIDGE_PENALTY: f64 = 1e-8;
/// Condition estimate of the normal matrix above which ridge is used.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SindyError {
    #[error("library variable `{0}` has no data column")]
    MissingColumn(String),
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryVariant {
    Accurate,
    Overcomplete,
    Missing,
}

impl FromStr for LibraryVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "accurate" => Ok(LibraryVariant::Accurate),
            "overcomplete" => Ok(LibraryVariant::Overcomplete),
            "missing" => Ok(LibraryVariant::Missing),
            _ => Err(format!("unknown library variant `{s}`")),
        }
    }
}

impl fmt::Display for LibraryVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LibraryVariant::Accurate => "accurate",
            LibraryVariant::Overcomplete => "overcomplete",
            LibraryVariant::Missing => "missing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryConfig {
    pub variant: LibraryVariant,
    pub degree: u32,
    /// Candidate variables after exclusion, in declaration order.
    pub variables: Vec<String>,
    pub excluded: Vec<String>,
    pub include_constant: bool,
}

impl LibraryConfig {
    /// `full` is the complete variable set; `excluded` only applies to the
    /// missing variant.
    pub fn new(variant: LibraryVariant, full: &[String], excluded: &[String]) -> Result<LibraryConfig, SindyError> {
        let (degree, excluded) = match variant {
            LibraryVariant::Accurate => (1, Vec::new()),
            LibraryVariant::Overcomplete => (2, Vec::new()),
            LibraryVariant::Missing => {
                if excluded.is_empty() {
                    return Err(SindyError::InvalidLibrary("missing variant needs excluded variables".into()));
                }
                (1, excluded.to_vec())
            }
        };
        if let Some(x) = excluded.iter().find(|x| !full.contains(x)) {
            return Err(SindyError::InvalidLibrary(format!("excluded `{x}` is not a library variable")));
        }
        Ok(LibraryConfig {
            variant,
            degree,
            variables: full.iter().filter(|v| !excluded.contains(v)).cloned().collect(),
            excluded,
            include_constant: true,
        })
    }

    /// Each term as indices into `variables`; the empty list is the constant.
    pub fn terms(&self) -> Vec<Vec<usize>> {
        let n = self.variables.len();
        let mut out = Vec::new();
        if self.include_constant {
            out.push(Vec::new());
        }
        for a in 0..n {
            out.push(vec![a]);
        }
        if self.degree >= 2 {
            for a in 0..n {
                for b in a..n {
                    out.push(vec![a, b]);
                }
            }
        }
        out
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms().iter().map(|t| term_name(t, &self.variables)).collect()
    }
}

fn term_name(factors: &[usize], vars: &[String]) -> String {
    match factors {
        [] => "1".into(),
        [a] => vars[*a].clone(),
        [a, b] if a == b => format!("{}^2", vars[*a]),
        _ => factors.iter().map(|i| vars[*i].as_str()).collect::<Vec<_>>().join("*"),
    }
}

fn term_value(factors: &[usize], x: &[f64]) -> f64 {
    factors.iter().map(|i| x[*i]).product()
}

/// Feature matrix (samples × terms) and the term names.
pub fn build_library(cfg: &LibraryConfig, batch: &SampleBatch) -> Result<(DMatrix<f64>, Vec<String>), SindyError> {
    let cols: Vec<&[f64]> = cfg
        .variables
        .iter()
        .map(|v| batch.column(v).ok_or_else(|| SindyError::MissingColumn(v.clone())))
        .collect::<Result<_, _>>()?;
    let terms = cfg.terms();
    let n = batch.n_samples();
    let mut row = vec![0.0; cols.len()];
    let mut theta = DMatrix::zeros(n, terms.len());
    for i in 0..n {
        for (j, c) in cols.iter().enumerate() {
            row[j] = c[i];
        }
        for (k, t) in terms.iter().enumerate() {
            theta[(i, k)] = term_value(t, &row);
        }
    }
    Ok((theta, cfg.term_names()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlsqConfig {
    pub threshold: f64,
    pub iterations: usize,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        StlsqConfig {
            threshold: 0.05,
            iterations: 10,
        }
    }
}

/// Coefficients per target (rows) and term (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct StlsqFit {
    pub coefficients: DMatrix<f64>,
    pub active: Vec<Vec<bool>>,
    /// Targets whose every term was thresholded away.
    pub degenerate: Vec<bool>,
    /// Whether any solve fell back to ridge.
    pub ridge_fallback: bool,
}

/// Least squares on the columns of `theta` marked active, via the normal
/// equations. Returns the solution and whether ridge was needed.
fn solve_active(theta: &DMatrix<f64>, y: &DVector<f64>, active: &[bool]) -> (Vec<f64>, bool) {
    let idx: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
    let mut out = vec![0.0; active.len()];
    if idx.is_empty() {
        return (out, false);
    }
    let sub = theta.select_columns(&idx);
    let gram = sub.transpose() * &sub;
    let rhs = sub.transpose() * y;
    let well_conditioned = |g: &DMatrix<f64>| {
        g.clone().cholesky().filter(|c| {
            let d = c.l_dirty().diagonal();
            let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
            lo > 0.0 && (hi / lo).powi(2) < MAX_CONDITION
        })
    };
    let (sol, ridge) = match well_conditioned(&gram) {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let n = idx.len();
            let reg = &gram + DMatrix::identity(n, n) * RIDGE_PENALTY;
            match reg.clone().cholesky() {
                Some(ch) => (ch.solve(&rhs), true),
                None => (reg.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(n)), true),
            }
        }
    };
    for (k, j) in idx.iter().enumerate() {
        out[*j] = sol[k];
    }
    (out, ridge)
}

/// Alternates least squares with hard thresholding `|ξ| < λ → 0` until the
/// support stops changing or `iterations` rounds have run.
pub fn stlsq(theta: &DMatrix<f64>, targets: &DMatrix<f64>, cfg: &StlsqConfig) -> StlsqFit {
    let n_terms = theta.ncols();
    let n_targets = targets.ncols();
    let mut coefficients = DMatrix::zeros(n_targets, n_terms);
    let mut actives = Vec::with_capacity(n_targets);
    let mut degenerate = Vec::with_capacity(n_targets);
    let mut ridge_any = false;
    for t in 0..n_targets {
        let y = targets.column(t).into_owned();
        let mut active = vec![true; n_terms];
        let (mut xi, ridge) = solve_active(theta, &y, &active);
        ridge_any |= ridge;
        for _ in 0..cfg.iterations {
            let next: Vec<bool> = (0..n_terms).map(|j| active[j] && xi[j].abs() >= cfg.threshold).collect();
            if next == active {
                break;
            }
            active = next;
            let (sol, ridge) = solve_active(theta, &y, &active);
            ridge_any |= ridge;
            xi = sol;
        }
        for j in 0..n_terms {
            coefficients[(t, j)] = if active[j] { xi[j] } else { 0.0 };
        }
        degenerate.push(!active.iter().any(|a| *a) || xi.iter().all(|v| *v == 0.0));
        actives.push(active);
    }
    StlsqFit {
        coefficients,
        active: actives,
        degenerate,
        ridge_fallback: ridge_any,
    }
}

/// A fitted sparse model, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyModel {
    pub label: String,
    pub benchmark: Option<ModelId>,
    pub library: LibraryConfig,
    pub stlsq: StlsqConfig,
    pub states: Vec<String>,
    pub terms: Vec<String>,
    /// `coefficients[i][k]`: weight of term `k` in `d<states[i]>/dt`.
    pub coefficients: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
    pub ridge_fallback: bool,
    /// Mean squared residual per target on the training data.
    pub residual_mse: Vec<f64>,
}

impl SindyModel {
    /// Fits `states`' derivatives (columns `labels`) over the library.
    pub fn fit(
        label: &str,
        benchmark: Option<ModelId>,
        library: LibraryConfig,
        stlsq_cfg: StlsqConfig,
        batch: &SampleBatch,
        states: &[String],
        labels: &[String],
    ) -> Result<SindyModel, SindyError> {
        let (theta, terms) = build_library(&library, batch)?;
        let n = batch.n_samples();
        let mut y = DMatrix::zeros(n, labels.len());
        for (j, l) in labels.iter().enumerate() {
            let col = batch.column(l).ok_or_else(|| SindyError::MissingColumn(l.clone()))?;
            for i in 0..n {
                y[(i, j)] = col[i];
            }
        }
        let fit = stlsq(&theta, &y, &stlsq_cfg);
        let pred = &theta * fit.coefficients.transpose();
        let residual_mse = (0..labels.len())
            .map(|j| (pred.column(j) - y.column(j)).norm_squared() / n.max(1) as f64)
            .collect();
        Ok(SindyModel {
            label: label.to_string(),
            benchmark,
            library,
            stlsq: stlsq_cfg,
            states: states.to_vec(),
            terms,
            coefficients: fit.coefficients.row_iter().map(|r| r.iter().copied().collect()).collect(),
            degenerate: fit.degenerate,
            ridge_fallback: fit.ridge_fallback,
            residual_mse,
        })
    }

    pub fn n_active(&self) -> usize {
        self.coefficients.iter().flatten().filter(|c| **c != 0.0).count()
    }

    /// State derivatives given the library variables' values, in
    /// `library.variables` order.
    pub fn rhs(&self, vars: &[f64], dx: &mut [f64]) {
        let terms = self.library.terms();
        let theta: Vec<f64> = terms.iter().map(|t| term_value(t, vars)).collect();
        for (i, row) in self.coefficients.iter().enumerate() {
            dx[i] = row.iter().zip(&theta).map(|(c, v)| c * v).sum();
        }
    }

    /// Human-readable equations, zero terms omitted.
    pub fn equations(&self) -> Vec<String> {
        self.states
            .iter()
            .zip(&self.coefficients)
            .map(|(s, row)| {
                let terms: Vec<String> = row
                    .iter()
                    .zip(&self.terms)
                    .filter(|(c, _)| **c != 0.0)
                    .map(|(c, t)| if t == "1" { format!("{c:.6}") } else { format!("{c:.6}*{t}") })
                    .collect();
                let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
                format!("d{s}/dt = {rhs}")
            })
            .collect()
    }
}
