use super::ast::{BinOp, Expr, Func, Skeleton, TargetKind, MAX_EXPONENT, MIN_EXPONENT};
use super::lexer::{tokenize, Tok, Token};
use super::scope::{is_param_name, SymbolScope};
use super::ParseError;

const NEG_PRECEDENCE: u8 = 3;
const POW_PRECEDENCE: u8 = 4;

/// Parses skeleton source text into a validated [`Skeleton`].
///
/// Success is exactly the compilation filter: a candidate is admitted iff
/// this returns `Ok`.
pub fn parse(
    text: &str,
    kind: TargetKind,
    scope: &SymbolScope,
    targets: &[String],
) -> Result<Skeleton, ParseError> {
    let mut exprs: Vec<Option<Expr>> = vec![None; targets.len()];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ParseError::Syntax {
                line: line_no,
                col: 1,
                message: "expected `<lhs> = <expression>`".into(),
            });
        };
        let name = parse_lhs(&line[..eq], kind, line_no)?;
        let slot = targets
            .iter()
            .position(|t| *t == name)
            .ok_or_else(|| ParseError::UnknownIdentifier {
                name: name.clone(),
                line: line_no,
                col: 1,
            })?;
        if exprs[slot].is_some() {
            return Err(ParseError::DuplicateTarget(name));
        }
        let rhs_offset = line[..=eq].chars().count();
        let tokens = tokenize(&line[eq + 1..], line_no).map_err(|e| e.shift_col(rhs_offset))?;
        let mut p = Parser {
            tokens,
            pos: 0,
            line: line_no,
            scope,
        };
        let expr = p.parse_line().map_err(|e| e.shift_col(rhs_offset))?;
        exprs[slot] = Some(expr);
    }
    let mut out = Vec::with_capacity(targets.len());
    for (t, e) in targets.iter().zip(exprs) {
        out.push(e.ok_or_else(|| ParseError::MissingTarget(t.clone()))?);
    }
    let mut skel = Skeleton::from_parts(kind, targets.to_vec(), out);
    skel.source = text.to_string();
    Ok(skel)
}

fn parse_lhs(lhs: &str, kind: TargetKind, line: usize) -> Result<String, ParseError> {
    let tokens = tokenize(lhs, line)?;
    let toks: Vec<&Tok> = tokens.iter().map(|t| &t.tok).collect();
    let bad = |message: &str| ParseError::Syntax {
        line,
        col: 1,
        message: message.to_string(),
    };
    match kind {
        TargetKind::De => match toks.as_slice() {
            [Tok::Ident(d), Tok::Slash, Tok::Ident(dt), Tok::Eof]
                if d.len() > 1 && d.starts_with('d') && dt == "dt" =>
            {
                Ok(d[1..].to_string())
            }
            _ => Err(bad("differential equation must start with `d<state>/dt =`")),
        },
        TargetKind::Ae => match toks.as_slice() {
            [Tok::Ident(name), Tok::Eof] => Ok(name.clone()),
            _ => Err(bad("algebraic equation must start with `<variable> =`")),
        },
    }
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
    scope: &'a SymbolScope,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn col(&self) -> usize {
        self.tokens[self.pos].col
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col(),
            message: message.into(),
        }
    }

    fn unexpected(&self) -> ParseError {
        self.syntax(format!("unexpected {}", self.peek().describe()))
    }

    fn parse_line(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Eof {
            return Err(self.syntax("missing right-hand side"));
        }
        let e = self.parse_expr(1)?;
        if *self.peek() != Tok::Eof {
            return Err(self.unexpected());
        }
        Ok(e)
    }

    fn binary_op(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Plus => Some(BinOp::Add),
            Tok::Minus => Some(BinOp::Sub),
            Tok::Star => Some(BinOp::Mul),
            Tok::Slash => Some(BinOp::Div),
            _ => None,
        }
    }

    /// Precedence climbing over `+ -` (1), `* /` (2), prefix `-` (3), `^` (4).
    fn parse_expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            if *self.peek() == Tok::Caret {
                if POW_PRECEDENCE < min_prec {
                    break;
                }
                self.bump();
                let n = self.parse_exponent()?;
                lhs = Expr::pow(lhs, n);
                if *self.peek() == Tok::Caret {
                    return Err(self.syntax("chained `^`; parenthesize the base"));
                }
                continue;
            }
            let Some(op) = self.binary_op() else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.parse_expr(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let operand = self.parse_expr(NEG_PRECEDENCE)?;
            return Ok(Expr::neg(operand));
        }
        self.parse_primary()
    }

    fn parse_exponent(&mut self) -> Result<i32, ParseError> {
        let parenthesized = *self.peek() == Tok::LParen;
        if parenthesized {
            self.bump();
        }
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        let value = match self.peek() {
            Tok::Num(v) => *v,
            _ => {
                return Err(self.syntax(format!(
                    "exponent must be an integer literal in [{MIN_EXPONENT}, {MAX_EXPONENT}]"
                )))
            }
        };
        let signed = if negative { -value } else { value };
        if signed.fract() != 0.0 || signed < MIN_EXPONENT as f64 || signed > MAX_EXPONENT as f64 {
            return Err(self.syntax(format!(
                "exponent {signed} outside integer range [{MIN_EXPONENT}, {MAX_EXPONENT}]"
            )));
        }
        self.bump();
        if parenthesized {
            if *self.peek() != Tok::RParen {
                return Err(self.unexpected());
            }
            self.bump();
        }
        Ok(signed as i32)
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let col = self.col();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.parse_expr(1)?;
                if *self.peek() != Tok::RParen {
                    return Err(self.syntax(format!(
                        "expected `)` but found {}",
                        self.peek().describe()
                    )));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    return self.parse_call(name, col);
                }
                if let Some(f) = Func::from_name(&name) {
                    return Err(ParseError::Arity {
                        func: f.name().to_string(),
                        expected: 1,
                        found: 0,
                        line: self.line,
                    });
                }
                if is_param_name(&name) {
                    let k: usize = name[1..].parse().map_err(|_| ParseError::Syntax {
                        line: self.line,
                        col,
                        message: format!("parameter index too large in `{name}`"),
                    })?;
                    return Ok(Expr::Param(k));
                }
                if !self.scope.contains(&name) {
                    return Err(ParseError::UnknownIdentifier {
                        name,
                        line: self.line,
                        col,
                    });
                }
                Ok(Expr::Var(name))
            }
            Tok::Eof => Err(ParseError::Syntax {
                line: self.line,
                col,
                message: "unexpected end of line".into(),
            }),
            other => Err(ParseError::Syntax {
                line: self.line,
                col,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn parse_call(&mut self, name: String, col: usize) -> Result<Expr, ParseError> {
        let Some(func) = Func::from_name(&name) else {
            return Err(ParseError::UnknownIdentifier {
                name,
                line: self.line,
                col,
            });
        };
        self.bump(); // (
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.parse_expr(1)?);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RParen => break,
                    _ => return Err(self.unexpected()),
                }
            }
        }
        self.bump(); // )
        if args.len() != 1 {
            return Err(ParseError::Arity {
                func: name,
                expected: 1,
                found: args.len(),
                line: self.line,
            });
        }
        Ok(Expr::call(func, args.pop().expect("one argument")))
    }
}
