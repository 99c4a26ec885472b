//! Reader and writer for the line-oriented `.bpop` format.
//!
//! ```text
//! # comment
//! vars x 1 y 1
//! upper.obj (x1 - 1.5)^2 + y1^2
//! upper.ineq 2 - x1
//! lower.obj (z1 - x1)^2
//! lower.ineq z1 - 1
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::{BilevelProblem, LowerRow, RowKind};
use crate::poly::{LowerName, Polynomial, RationalFn, VarSpace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("lower constraint {index} (line {line}) is not affine in the lower variables")]
    NonlinearInLower { index: usize, line: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(char, usize),
    Op(char),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src: src.as_bytes(), pos: 0, line, col0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next()? {
            out.push(t);
        }
        Ok(out)
    }

    fn err(&self, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col: self.col0 + col + 1, msg: msg.into() }
    }

    fn next(&mut self) -> Result<Option<(Tok, usize)>, ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos] as char;
        if c.is_ascii_digit() || c == '.' {
            while self.pos < self.src.len() {
                let d = self.src[self.pos] as char;
                let exp_sign = (d == '+' || d == '-')
                    && self.pos > start
                    && matches!(self.src[self.pos - 1] as char, 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let v: f64 = s.parse().map_err(|_| self.err(start, format!("bad number `{s}`")))?;
            return Ok(Some((Tok::Num(v), start)));
        }
        if matches!(c, 'x' | 'y' | 'z') {
            self.pos += 1;
            let ds = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if ds == self.pos {
                return Err(self.err(start, format!("variable `{c}` needs an index")));
            }
            let idx: usize = std::str::from_utf8(&self.src[ds..self.pos]).unwrap().parse().unwrap();
            return Ok(Some((Tok::Var(c, idx), start)));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok(Some((Tok::Op(c), start)));
        }
        Err(self.err(start, format!("unexpected character `{c}`")))
    }
}

struct ExprParser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    space: VarSpace,
    line: usize,
    col0: usize,
    end_col: usize,
    _src: &'a str,
}

impl ExprParser<'_> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        let col = self.toks.get(self.pos).map_or(self.end_col, |t| t.1);
        ParseError::Syntax { line: self.line, col: self.col0 + col + 1, msg: msg.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn eat_op(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<RationalFn, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat_op('+') {
                let t = self.term()?;
                acc = acc.try_add(&t).unwrap();
            } else if self.eat_op('-') {
                let t = self.term()?;
                acc = acc.try_sub(&t).unwrap();
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<RationalFn, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat_op('*') {
                let t = self.unary()?;
                acc = acc.try_mul(&t).unwrap();
            } else if self.eat_op('/') {
                let t = self.unary()?;
                if t.num().is_zero() {
                    return Err(self.err("division by zero"));
                }
                acc = acc.try_div(&t).unwrap();
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<RationalFn, ParseError> {
        if self.eat_op('-') {
            return Ok(self.unary()?.scale(-1.0));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<RationalFn, ParseError> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let neg = self.eat_op('-');
            match self.peek().cloned() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 0.0 && v <= 64.0 => {
                    self.pos += 1;
                    let e = v as u32;
                    let p = base.pow(e);
                    if neg {
                        let one = RationalFn::from_poly(Polynomial::constant(self.space, 1.0));
                        if p.num().is_zero() {
                            return Err(self.err("negative power of zero"));
                        }
                        return Ok(one.try_div(&p).unwrap());
                    }
                    Ok(p)
                }
                _ => Err(self.err("exponent must be a small nonnegative integer")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<RationalFn, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(RationalFn::from_poly(Polynomial::constant(self.space, v)))
            }
            Some(Tok::Var(c, i)) => {
                let (limit, offset) = match c {
                    'x' => (self.space.n_upper, 0),
                    _ => (self.space.n_lower, self.space.n_upper),
                };
                if i == 0 || i > limit {
                    return Err(self.err(format!("variable {c}{i} out of range (1..={limit})")));
                }
                self.pos += 1;
                Ok(RationalFn::from_poly(Polynomial::var(self.space, offset + i - 1)))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(t) => Err(self.err(format!("unexpected token {t:?}"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parse one expression over `space`. `line` and `col0` locate it for errors.
pub fn parse_expr(src: &str, space: VarSpace, line: usize, col0: usize) -> Result<RationalFn, ParseError> {
    let toks = Lexer::tokens(src, line, col0)?;
    let mut p = ExprParser { toks, pos: 0, space, line, col0, end_col: src.len(), _src: src };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

fn polynomial_only(r: RationalFn, line: usize, what: &str) -> Result<Polynomial, ParseError> {
    r.as_polynomial()
        .ok_or_else(|| ParseError::Syntax { line, col: 1, msg: format!("{what} must be a polynomial") })
}

/// Parse a complete `.bpop` document.
pub fn parse_problem(text: &str) -> Result<BilevelProblem, ParseError> {
    let mut space: Option<VarSpace> = None;
    let mut upper_obj = None;
    let mut lower_obj = None;
    let mut upper_eq = Vec::new();
    let mut upper_ineq = Vec::new();
    let mut lower: Vec<(Polynomial, RowKind, usize)> = Vec::new();
    for (ln0, raw) in text.lines().enumerate() {
        let line = ln0 + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim_start();
        if trimmed.trim().is_empty() {
            continue;
        }
        let indent = content.len() - trimmed.len();
        let (key, rest) = match trimmed.find(char::is_whitespace) {
            Some(i) => (&trimmed[..i], &trimmed[i..]),
            None => (trimmed, ""),
        };
        let col0 = indent + key.len();
        if key == "vars" {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let bad = || ParseError::Syntax { line, col: 1, msg: "expected `vars x <n> y <p>`".into() };
            if parts.len() != 4 || parts[0] != "x" || !(parts[2] == "y" || parts[2] == "z") {
                return Err(bad());
            }
            let n: usize = parts[1].parse().map_err(|_| bad())?;
            let p: usize = parts[3].parse().map_err(|_| bad())?;
            if p == 0 {
                return Err(ParseError::Syntax { line, col: 1, msg: "at least one lower variable is required".into() });
            }
            space = Some(VarSpace::new(n, p));
            continue;
        }
        let sp = space.ok_or(ParseError::Syntax { line, col: 1, msg: "`vars` must come first".into() })?;
        let e = parse_expr(rest, sp, line, col0)?;
        match key {
            "upper.obj" => upper_obj = Some(polynomial_only(e, line, "upper objective")?),
            "upper.eq" => upper_eq.push(polynomial_only(e, line, "upper constraint")?),
            "upper.ineq" => upper_ineq.push(polynomial_only(e, line, "upper constraint")?),
            "lower.obj" => lower_obj = Some(e),
            "lower.eq" => lower.push((polynomial_only(e, line, "lower constraint")?, RowKind::Eq, line)),
            "lower.ineq" => lower.push((polynomial_only(e, line, "lower constraint")?, RowKind::Ineq, line)),
            other => {
                return Err(ParseError::Syntax { line, col: indent + 1, msg: format!("unknown section `{other}`") })
            }
        }
    }
    let space = space.ok_or(ParseError::Invalid("missing `vars` line".into()))?;
    let upper_obj = upper_obj.ok_or(ParseError::Invalid("missing `upper.obj`".into()))?;
    let lower_obj = lower_obj.ok_or(ParseError::Invalid("missing `lower.obj`".into()))?;
    if lower.is_empty() {
        return Err(ParseError::Invalid("at least one lower constraint is required".into()));
    }
    let mut rows = Vec::new();
    for (idx, (g, kind, line)) in lower.into_iter().enumerate() {
        let row = LowerRow::from_affine(&g, kind, idx + 1)
            .ok_or(ParseError::NonlinearInLower { index: idx + 1, line })?;
        rows.push(row);
    }
    Ok(BilevelProblem { space, upper_obj, upper_eq, upper_ineq, lower_obj, lower_rows: rows })
}

/// Render a problem in `.bpop` syntax; `parse_problem` reads it back
/// coefficient-identically.
pub fn print_problem(p: &BilevelProblem) -> String {
    let mut s = String::new();
    writeln!(s, "vars x {} y {}", p.space.n_upper, p.space.n_lower).unwrap();
    writeln!(s, "upper.obj {}", p.upper_obj).unwrap();
    for h in &p.upper_eq {
        writeln!(s, "upper.eq {h}").unwrap();
    }
    for h in &p.upper_ineq {
        writeln!(s, "upper.ineq {h}").unwrap();
    }
    let num = p.lower_obj.num().display_with(LowerName::Z);
    if p.lower_obj.is_polynomial() && p.lower_obj.den().constant_value() == Some(1.0) {
        writeln!(s, "lower.obj {num}").unwrap();
    } else {
        writeln!(s, "lower.obj ({num}) / ({})", p.lower_obj.den().display_with(LowerName::Z)).unwrap();
    }
    for row in &p.lower_rows {
        let key = match row.kind {
            RowKind::Eq => "lower.eq",
            RowKind::Ineq => "lower.ineq",
        };
        writeln!(s, "{key} {}", p.g(row).display_with(LowerName::Z)).unwrap();
    }
    s
}
