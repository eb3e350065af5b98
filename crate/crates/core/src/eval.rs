//! Skeleton evaluation with exact parameter gradients.
//!
//! Each skeleton is flattened into a post-order tape. A forward sweep fills
//! node values for one sample, then one reverse sweep per target accumulates
//! adjoints into the parameter slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{BinOp, Expr, Func, Skeleton};

/// Denominators smaller than this in magnitude are treated as singular.
pub const DIVISION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("batch has no column `{0}`")]
    MissingColumn(String),
    #[error("column `{name}` has {found} samples, expected {expected}")]
    RaggedColumn {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{name}` has a non-finite value at sample {sample}")]
    NonFiniteData { name: String, sample: usize },
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error(transparent)]
    Domain(#[from] DomainFault),
}

/// Named, equal-length data columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    n_samples: usize,
    columns: BTreeMap<String, Vec<f64>>,
}

impl SampleBatch {
    pub fn new(columns: BTreeMap<String, Vec<f64>>) -> Result<SampleBatch, EvalError> {
        let n = columns.values().next().map_or(0, Vec::len);
        for (name, col) in &columns {
            if col.len() != n {
                return Err(EvalError::RaggedColumn {
                    name: name.clone(),
                    expected: n,
                    found: col.len(),
                });
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(EvalError::NonFiniteData {
                    name: name.clone(),
                    sample: i,
                });
            }
        }
        Ok(SampleBatch {
            n_samples: n,
            columns,
        })
    }

    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<SampleBatch, EvalError> {
        SampleBatch::new(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    pub fn columns(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.columns
    }

    /// Appends the samples of `other`, which must carry the same columns.
    pub fn concat(&self, other: &SampleBatch) -> Result<SampleBatch, EvalError> {
        let mut columns = self.columns.clone();
        for (name, col) in columns.iter_mut() {
            let tail = other
                .column(name)
                .ok_or_else(|| EvalError::MissingColumn(name.clone()))?;
            col.extend_from_slice(tail);
        }
        SampleBatch::new(columns)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain fault at sample {sample}: {reason}")]
pub struct DomainFault {
    pub sample: usize,
    pub reason: String,
}

/// Outputs (`n_targets × n_samples`) and gradients
/// (`n_targets × n_samples × n_params`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub n_targets: usize,
    pub n_samples: usize,
    pub n_params: usize,
    pub outputs: Vec<Vec<f64>>,
    gradients: Vec<f64>,
    pub domain_fault: Option<DomainFault>,
}

impl EvalResult {
    pub fn gradient(&self, target: usize, sample: usize) -> &[f64] {
        let start = (target * self.n_samples + sample) * self.n_params;
        &self.gradients[start..start + self.n_params]
    }

    pub fn gradients(&self) -> &[f64] {
        &self.gradients
    }

    pub fn is_ok(&self) -> bool {
        self.domain_fault.is_none()
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Const(f64),
    Param(usize),
    Var(usize),
    Neg(usize),
    Bin(BinOp, usize, usize),
    Pow(usize, i32),
    Call(Func, usize),
}

/// A skeleton lowered to a tape whose variable slots index into a fixed
/// column order.
#[derive(Debug, Clone)]
pub struct CompiledSkeleton {
    nodes: Vec<Node>,
    /// Per target: first and last (root) tape index of its subtree.
    segments: Vec<(usize, usize)>,
    n_params: usize,
    columns: Vec<String>,
}

impl CompiledSkeleton {
    /// Lowers `s`; variables are resolved against `columns` by name.
    pub fn new(s: &Skeleton, columns: &[String]) -> Result<CompiledSkeleton, EvalError> {
        let mut nodes = Vec::new();
        let mut segments = Vec::with_capacity(s.exprs.len());
        for e in &s.exprs {
            let start = nodes.len();
            let root = lower(e, columns, &mut nodes)?;
            segments.push((start, root));
        }
        Ok(CompiledSkeleton {
            nodes,
            segments,
            n_params: s.n_params,
            columns: columns.to_vec(),
        })
    }

    /// Lowers `s` against the variables it references, in sorted order.
    pub fn for_skeleton(s: &Skeleton) -> CompiledSkeleton {
        let cols: Vec<String> = s.variables().into_iter().collect();
        CompiledSkeleton::new(s, &cols).expect("every referenced variable is a column")
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_targets(&self) -> usize {
        self.segments.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Values of every target at one point; `row[j]` is the value of
    /// `columns()[j]`.
    pub fn eval_point(&self, params: &[f64], row: &[f64], out: &mut [f64]) -> Result<(), String> {
        let mut vals = vec![0.0; self.nodes.len()];
        self.forward(params, |j| row[j], &mut vals)?;
        for (t, &(_, root)) in self.segments.iter().enumerate() {
            out[t] = vals[root];
        }
        Ok(())
    }

    fn forward(&self, params: &[f64], var: impl Fn(usize) -> f64, vals: &mut [f64]) -> Result<(), String> {
        for (j, node) in self.nodes.iter().enumerate() {
            let v = match *node {
                Node::Const(c) => c,
                Node::Param(k) => params[k],
                Node::Var(c) => var(c),
                Node::Neg(a) => -vals[a],
                Node::Bin(op, a, b) => {
                    let (x, y) = (vals[a], vals[b]);
                    match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => {
                            if y.abs() < DIVISION_GUARD {
                                return Err(format!("division by near-zero denominator {y:e}"));
                            }
                            x / y
                        }
                    }
                }
                Node::Pow(a, n) => vals[a].powi(n),
                Node::Call(f, a) => {
                    let x = vals[a];
                    match f {
                        Func::Sin => x.sin(),
                        Func::Cos => x.cos(),
                        Func::Tan => x.tan(),
                        Func::Exp => x.exp(),
                        Func::Log => {
                            if x <= 0.0 {
                                return Err(format!("log of non-positive value {x:e}"));
                            }
                            x.ln()
                        }
                        Func::Sqrt => {
                            if x < 0.0 {
                                return Err(format!("sqrt of negative value {x:e}"));
                            }
                            x.sqrt()
                        }
                        Func::Tanh => x.tanh(),
                        Func::Abs => x.abs(),
                    }
                }
            };
            if !v.is_finite() {
                return Err("non-finite intermediate value".to_string());
            }
            vals[j] = v;
        }
        Ok(())
    }

    fn backward(&self, segment: (usize, usize), vals: &[f64], adj: &mut [f64], grad: &mut [f64]) {
        let (start, root) = segment;
        adj[start..=root].fill(0.0);
        adj[root] = 1.0;
        for j in (start..=root).rev() {
            let g = adj[j];
            if g == 0.0 {
                continue;
            }
            match self.nodes[j] {
                Node::Const(_) | Node::Var(_) => {}
                Node::Param(k) => grad[k] += g,
                Node::Neg(a) => adj[a] -= g,
                Node::Bin(op, a, b) => match op {
                    BinOp::Add => {
                        adj[a] += g;
                        adj[b] += g;
                    }
                    BinOp::Sub => {
                        adj[a] += g;
                        adj[b] -= g;
                    }
                    BinOp::Mul => {
                        adj[a] += g * vals[b];
                        adj[b] += g * vals[a];
                    }
                    BinOp::Div => {
                        let y = vals[b];
                        adj[a] += g / y;
                        adj[b] -= g * vals[a] / (y * y);
                    }
                },
                Node::Pow(a, n) => {
                    if n != 0 {
                        adj[a] += g * n as f64 * vals[a].powi(n - 1);
                    }
                }
                Node::Call(f, a) => {
                    let x = vals[a];
                    let d = match f {
                        Func::Sin => x.cos(),
                        Func::Cos => -x.sin(),
                        Func::Tan => 1.0 + vals[j] * vals[j],
                        Func::Exp => vals[j],
                        Func::Log => 1.0 / x,
                        Func::Sqrt => 0.5 / vals[j],
                        Func::Tanh => 1.0 - vals[j] * vals[j],
                        Func::Abs => {
                            if x > 0.0 {
                                1.0
                            } else if x < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    adj[a] += g * d;
                }
            }
        }
    }

    /// Evaluates over a batch whose columns were bound by [`Self::bind`].
    pub fn evaluate_bound(&self, params: &[f64], data: &[&[f64]], n_samples: usize) -> EvalResult {
        let n_t = self.segments.len();
        let n_p = self.n_params;
        let mut res = EvalResult {
            n_targets: n_t,
            n_samples,
            n_params: n_p,
            outputs: vec![vec![0.0; n_samples]; n_t],
            gradients: vec![0.0; n_t * n_samples * n_p],
            domain_fault: None,
        };
        let mut vals = vec![0.0; self.nodes.len()];
        let mut adj = vec![0.0; self.nodes.len()];
        for i in 0..n_samples {
            if let Err(reason) = self.forward(params, |c| data[c][i], &mut vals) {
                res.domain_fault = Some(DomainFault { sample: i, reason });
                return res;
            }
            for (t, &seg) in self.segments.iter().enumerate() {
                res.outputs[t][i] = vals[seg.1];
                let start = (t * n_samples + i) * n_p;
                let grad = &mut res.gradients[start..start + n_p];
                self.backward(seg, &vals, &mut adj, grad);
                if grad.iter().any(|g| !g.is_finite()) {
                    res.domain_fault = Some(DomainFault {
                        sample: i,
                        reason: "non-finite gradient".to_string(),
                    });
                    return res;
                }
            }
        }
        res
    }

    /// Resolves this tape's columns in `batch`.
    pub fn bind<'b>(&self, batch: &'b SampleBatch) -> Result<Vec<&'b [f64]>, EvalError> {
        self.columns
            .iter()
            .map(|c| {
                batch
                    .column(c)
                    .ok_or_else(|| EvalError::MissingColumn(c.clone()))
            })
            .collect()
    }
}

fn lower(e: &Expr, columns: &[String], nodes: &mut Vec<Node>) -> Result<usize, EvalError> {
    let node = match e {
        Expr::Const(c) => Node::Const(*c),
        Expr::Param(k) => Node::Param(*k),
        Expr::Var(name) => Node::Var(
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| EvalError::MissingColumn(name.clone()))?,
        ),
        Expr::Neg(a) => Node::Neg(lower(a, columns, nodes)?),
        Expr::Binary(op, a, b) => {
            let a = lower(a, columns, nodes)?;
            let b = lower(b, columns, nodes)?;
            Node::Bin(*op, a, b)
        }
        Expr::Pow(a, n) => Node::Pow(lower(a, columns, nodes)?, *n),
        Expr::Call(f, a) => Node::Call(*f, lower(a, columns, nodes)?),
    };
    nodes.push(node);
    Ok(nodes.len() - 1)
}

/// Evaluates `s` at `params` on every sample of `batch`.
///
/// Domain violations are reported through [`EvalResult::domain_fault`];
/// only a missing column is an error.
pub fn evaluate(s: &Skeleton, params: &[f64], batch: &SampleBatch) -> Result<EvalResult, EvalError> {
    if params.len() != s.n_params {
        return Err(EvalError::ParamCount {
            expected: s.n_params,
            found: params.len(),
        });
    }
    let compiled = CompiledSkeleton::for_skeleton(s);
    let data = compiled.bind(batch)?;
    Ok(compiled.evaluate_bound(params, &data, batch.n_samples()))
}

/// Largest relative discrepancy between the reverse-mode gradient and central
/// finite differences with step `1e-6 * max(1, |p_k|)`.
///
/// The discrepancy is `|ad - fd| / max(1, |ad|, |fd|)`.
pub fn gradient_check(s: &Skeleton, params: &[f64], batch: &SampleBatch) -> Result<f64, EvalError> {
    let base = evaluate(s, params, batch)?;
    if let Some(f) = base.domain_fault {
        return Err(f.into());
    }
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for k in 0..s.n_params {
        let h = 1e-6 * params[k].abs().max(1.0);
        p[k] = params[k] + h;
        let plus = evaluate(s, &p, batch)?;
        p[k] = params[k] - h;
        let minus = evaluate(s, &p, batch)?;
        p[k] = params[k];
        for r in [&plus, &minus] {
            if let Some(f) = &r.domain_fault {
                return Err(f.clone().into());
            }
        }
        for t in 0..base.n_targets {
            for i in 0..base.n_samples {
                let fd = (plus.outputs[t][i] - minus.outputs[t][i]) / (2.0 * h);
                let ad = base.gradient(t, i)[k];
                let rel = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
