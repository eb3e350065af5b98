use super::ast::{Expr, Skeleton};

/// Canonical text: one `lhs = rhs` line per target, newline separated.
pub fn serialize(s: &Skeleton) -> String {
    (0..s.targets.len())
        .map(|i| format!("{} = {}", s.lhs(i), expr_to_string(&s.exprs[i])))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Character count of the canonical serialization.
pub fn code_length(s: &Skeleton) -> usize {
    serialize(s).chars().count()
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

pub(crate) fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn write_wrapped(e: &Expr, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Const(v) if *v < 0.0 => {
            // Only reachable for hand-built trees; parsed constants are non-negative.
            out.push_str("(-");
            out.push_str(&format_number(-v));
            out.push(')');
        }
        Expr::Const(v) => out.push_str(&format_number(*v)),
        Expr::Param(k) => {
            out.push('p');
            out.push_str(&k.to_string());
        }
        Expr::Var(name) => out.push_str(name),
        Expr::Neg(a) => {
            out.push('-');
            write_wrapped(a, a.precedence() < 3, out);
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            write_wrapped(a, a.precedence() < p, out);
            out.push_str(op.symbol());
            // The parser is left-associative, so an equal-precedence right
            // operand must keep its parentheses to round-trip.
            write_wrapped(b, b.precedence() <= p, out);
        }
        Expr::Pow(a, n) => {
            write_wrapped(a, a.precedence() <= 4, out);
            out.push('^');
            out.push_str(&n.to_string());
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(a, out);
            out.push(')');
        }
    }
}
