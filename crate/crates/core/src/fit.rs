//! Parameter estimation and scoring of candidate skeletons.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{code_length, serialize, Skeleton};
use crate::eval::{CompiledSkeleton, EvalError, SampleBatch};
use crate::gateway::Requirement;

/// Score assigned to candidates whose fit faulted or produced a non-finite loss.
pub const WORST_SCORE: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub restarts: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
    /// Keep the per-step loss of the winning restart.
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            steps: 2000,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            restarts: 3,
            init_low: -1.0,
            init_high: 1.0,
            seed: 0,
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps < 1 {
            return Err("fit.steps must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("fit.learning_rate must be positive".into());
        }
        if self.restarts < 1 {
            return Err("fit.restarts must be at least 1".into());
        }
        if !(self.init_low < self.init_high) {
            return Err("fit.init_low must be below fit.init_high".into());
        }
        Ok(())
    }
}

/// Cosine-annealed learning rate: `lr0 · (1 + cos(π·t/steps)) / 2`.
pub fn cosine_lr(lr0: f64, step: usize, steps: usize) -> f64 {
    if step >= steps {
        return 0.0;
    }
    lr0 * 0.5 * (1.0 + (PI * step as f64 / steps as f64).cos())
}

/// `-loss`, or [`WORST_SCORE`] when the loss is unusable.
pub fn score_of(loss: f64) -> f64 {
    if loss.is_finite() && loss >= 0.0 {
        -loss
    } else {
        WORST_SCORE
    }
}

/// A skeleton with its fitted parameters, score and declared variable needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSkeleton {
    pub skeleton: Skeleton,
    pub params: Vec<f64>,
    pub score: f64,
    pub loss_trace: Option<Vec<f64>>,
    pub requirements: Vec<Requirement>,
    /// Reason the fit was rejected, when the score is the sentinel.
    pub fault: Option<String>,
}

impl ScoredSkeleton {
    pub fn canonical_text(&self) -> String {
        serialize(&self.skeleton)
    }

    pub fn code_length(&self) -> usize {
        code_length(&self.skeleton)
    }

    pub fn is_worst(&self) -> bool {
        self.score <= WORST_SCORE
    }

    pub fn loss(&self) -> f64 {
        -self.score
    }
}

/// Result of one Adam run.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    pub trace: Vec<f64>,
}

/// Mean squared residual over targets and samples, with its gradient.
struct Objective<'a> {
    tape: CompiledSkeleton,
    data: Vec<&'a [f64]>,
    labels: Vec<&'a [f64]>,
    n_samples: usize,
}

impl<'a> Objective<'a> {
    fn new(s: &Skeleton, batch: &'a SampleBatch, targets: &[String]) -> Result<Self, EvalError> {
        if targets.len() != s.targets.len() {
            return Err(EvalError::MissingColumn(format!(
                "expected {} target columns, got {}",
                s.targets.len(),
                targets.len()
            )));
        }
        let tape = CompiledSkeleton::for_skeleton(s);
        let data = tape.bind(batch)?;
        let labels = targets
            .iter()
            .map(|t| batch.column(t).ok_or_else(|| EvalError::MissingColumn(t.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Objective {
            tape,
            data,
            labels,
            n_samples: batch.n_samples(),
        })
    }

    /// Loss and gradient, or the fault reason.
    fn eval(&self, params: &[f64], grad: &mut [f64]) -> Result<f64, String> {
        let r = self.tape.evaluate_bound(params, &self.data, self.n_samples);
        if let Some(f) = r.domain_fault {
            return Err(f.to_string());
        }
        grad.fill(0.0);
        let n = (r.n_targets * self.n_samples).max(1) as f64;
        let mut loss = 0.0;
        for t in 0..r.n_targets {
            for i in 0..self.n_samples {
                let resid = r.outputs[t][i] - self.labels[t][i];
                loss += resid * resid;
                for (g, d) in grad.iter_mut().zip(r.gradient(t, i)) {
                    *g += 2.0 * resid * d;
                }
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        let loss = loss / n;
        if !loss.is_finite() {
            return Err("non-finite loss".to_string());
        }
        Ok(loss)
    }
}

fn adam_run(obj: &Objective, init: Vec<f64>, cfg: &FitConfig) -> Result<RestartOutcome, String> {
    let n_p = init.len();
    let mut p = init;
    let mut grad = vec![0.0; n_p];
    let mut trace = Vec::new();
    if n_p == 0 {
        let loss = obj.eval(&p, &mut grad)?;
        return Ok(RestartOutcome {
            params: p,
            loss,
            trace: vec![loss],
        });
    }
    let mut m = vec![0.0; n_p];
    let mut v = vec![0.0; n_p];
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for step in 0..cfg.steps {
        let loss = obj.eval(&p, &mut grad)?;
        if cfg.record_trace {
            trace.push(loss);
        }
        let lr = cosine_lr(cfg.learning_rate, step, cfg.steps);
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for k in 0..n_p {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            let m_hat = m[k] / (1.0 - b1t);
            let v_hat = v[k] / (1.0 - b2t);
            p[k] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err("non-finite parameters".to_string());
        }
    }
    let loss = obj.eval(&p, &mut grad)?;
    if cfg.record_trace {
        trace.push(loss);
    }
    Ok(RestartOutcome {
        params: p,
        loss,
        trace,
    })
}

/// Runs every restart and returns each outcome (`Err` for faulted runs).
pub fn fit_restarts(
    s: &Skeleton,
    batch: &SampleBatch,
    targets: &[String],
    cfg: &FitConfig,
) -> Result<Vec<Result<RestartOutcome, String>>, EvalError> {
    let obj = Objective::new(s, batch, targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let restarts = if s.n_params == 0 { 1 } else { cfg.restarts };
    let mut out = Vec::with_capacity(restarts);
    for _ in 0..restarts {
        let init: Vec<f64> = (0..s.n_params)
            .map(|_| rng.random_range(cfg.init_low..cfg.init_high))
            .collect();
        out.push(adam_run(&obj, init, cfg));
    }
    Ok(out)
}

/// Fits `s` to the `targets` columns of `batch` and scores it by `-MSE`.
///
/// A restart that hits a domain fault is abandoned; the candidate gets the
/// sentinel score only when no restart completes.
pub fn fit_and_score(
    s: &Skeleton,
    batch: &SampleBatch,
    targets: &[String],
    cfg: &FitConfig,
) -> Result<ScoredSkeleton, EvalError> {
    let runs = fit_restarts(s, batch, targets, cfg)?;
    let mut best: Option<RestartOutcome> = None;
    let mut last_fault = None;
    for run in runs {
        match run {
            Ok(r) if r.loss.is_finite() => {
                if best.as_ref().is_none_or(|b| r.loss < b.loss) {
                    best = Some(r);
                }
            }
            Ok(_) => last_fault = Some("non-finite loss".to_string()),
            Err(reason) => last_fault = Some(reason),
        }
    }
    Ok(match best {
        Some(b) => ScoredSkeleton {
            skeleton: s.clone(),
            score: score_of(b.loss),
            params: b.params,
            loss_trace: cfg.record_trace.then_some(b.trace),
            requirements: Vec::new(),
            fault: None,
        },
        None => ScoredSkeleton {
            skeleton: s.clone(),
            params: vec![0.0; s.n_params],
            score: WORST_SCORE,
            loss_trace: None,
            requirements: Vec::new(),
            fault: last_fault,
        },
    })
}
