//! Skeleton expression language.
//!
//! A skeleton is one equation per target, written either as
//! `d<state>/dt = <expr>` (differential) or `<name> = <expr>` (algebraic).
//! Expressions use `+ - * /`, unary `-`, integer powers `^n` with
//! `n ∈ [-4, 4]`, calls to `sin cos tan exp log sqrt tanh abs`, numeric
//! literals, scope identifiers and parameter placeholders `p0, p1, ...`.
//!
//! ```text
//! line     = lhs "=" expr
//! lhs      = "d" ident "/dt" | ident
//! expr     = term { ("+" | "-") term }
//! term     = unary { ("*" | "/") unary }
//! unary    = "-" unary | power
//! power    = primary [ "^" exponent ]
//! exponent = ["-"] integer | "(" ["-"] integer ")"
//! primary  = number | param | ident | func "(" expr ")" | "(" expr ")"
//! param    = "p" digit { digit }
//! ```

mod ast;
mod lexer;
mod parser;
mod print;
mod scope;

pub use ast::{BinOp, Expr, Func, Skeleton, TargetKind, MAX_EXPONENT, MIN_EXPONENT};
pub use parser::parse;
pub use print::{code_length, expr_to_string, serialize};
pub use scope::{is_identifier, is_param_name, SymbolScope};


use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown identifier `{name}` (line {line}, column {col})")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("`{func}` takes {expected} argument(s), found {found} (line {line})")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("no equation for target `{0}`")]
    MissingTarget(String),
    #[error("target `{0}` defined more than once")]
    DuplicateTarget(String),
    #[error("invalid scope name `{0}`")]
    InvalidScopeName(String),
}

impl ParseError {
    pub(crate) fn shift_col(self, offset: usize) -> ParseError {
        match self {
            ParseError::UnknownIdentifier { name, line, col } => ParseError::UnknownIdentifier {
                name,
                line,
                col: col + offset,
            },
            ParseError::Syntax { line, col, message } => ParseError::Syntax {
                line,
                col: col + offset,
                message,
            },
            other => other,
        }
    }
}
