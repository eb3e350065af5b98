use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The closed set of unary functions a skeleton may call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Tanh,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    pub(crate) fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Smallest and largest exponent accepted by `^`.
pub const MIN_EXPONENT: i32 = -4;
pub const MAX_EXPONENT: i32 = 4;

/// Expression node of a skeleton right-hand side.
///
/// Exponents are restricted to integer literals, so `Pow` carries the
/// exponent inline rather than as a child expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(usize),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn param(k: usize) -> Expr {
        Expr::Param(k)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Add, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Sub, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Mul, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Div, lhs, rhs)
    }

    pub fn pow(base: Expr, exponent: i32) -> Expr {
        Expr::Pow(Box::new(base), exponent)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    /// Binding strength used by the canonical printer.
    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Pow(_, _) => 4,
            Expr::Const(_) | Expr::Param(_) | Expr::Var(_) | Expr::Call(_, _) => 5,
        }
    }

    pub fn for_each<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.for_each(f),
            Expr::Binary(_, a, b) => {
                a.for_each(f);
                b.for_each(f);
            }
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.for_each(&mut |e| {
            if let Expr::Var(name) = e {
                out.insert(name.clone());
            }
        });
        out
    }

    pub fn param_indices(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.for_each(&mut |e| {
            if let Expr::Param(k) = e {
                out.insert(*k);
            }
        });
        out
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.for_each(&mut |_| n += 1);
        n
    }

    pub(crate) fn remap_params(&mut self, map: &impl Fn(usize) -> usize) {
        match self {
            Expr::Param(k) => *k = map(*k),
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.remap_params(map),
            Expr::Binary(_, a, b) => {
                a.remap_params(map);
                b.remap_params(map);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print::expr_to_string(self))
    }
}

/// Which loop a skeleton belongs to: state derivatives or explicit algebraic maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    De,
    Ae,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::De => f.write_str("DE"),
            TargetKind::Ae => f.write_str("AE"),
        }
    }
}

/// A parsed, scope-checked equation system with trainable parameter slots.
///
/// `exprs[i]` is the right-hand side for `targets[i]`. Parameter slots are
/// shared across targets and numbered `0..n_params`.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub kind: TargetKind,
    pub targets: Vec<String>,
    pub exprs: Vec<Expr>,
    pub n_params: usize,
    pub source: String,
}

impl Skeleton {
    /// Builds a skeleton from already-validated parts, re-indexing the
    /// parameter slots contiguously.
    pub fn from_parts(kind: TargetKind, targets: Vec<String>, mut exprs: Vec<Expr>) -> Skeleton {
        assert_eq!(targets.len(), exprs.len(), "one expression per target");
        let used: Vec<usize> = exprs
            .iter()
            .flat_map(|e| e.param_indices())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let rank = |k: usize| used.binary_search(&k).expect("slot was collected");
        for e in &mut exprs {
            e.remap_params(&rank);
        }
        let mut skel = Skeleton {
            kind,
            targets,
            exprs,
            n_params: used.len(),
            source: String::new(),
        };
        skel.source = skel.canonical_text();
        skel
    }

    pub fn canonical_text(&self) -> String {
        super::print::serialize(self)
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.exprs.iter().flat_map(|e| e.variables()).collect()
    }

    /// Left-hand side as written in the DSL (`d<name>/dt` or `<name>`).
    pub fn lhs(&self, i: usize) -> String {
        match self.kind {
            TargetKind::De => format!("d{}/dt", self.targets[i]),
            TargetKind::Ae => self.targets[i].clone(),
        }
    }
}

/// Structural equality; the raw source text is ignored.
impl PartialEq for Skeleton {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.targets == other.targets
            && self.exprs == other.exprs
            && self.n_params == other.n_params
    }
}
