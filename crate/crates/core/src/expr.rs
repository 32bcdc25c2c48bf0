//! The expression language shared by cross-tree constraints, annotation
//! directives and parametric slot assignments.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or      := and ( "||" and )*
//! and     := cmp ( "&&" cmp )*
//! cmp     := unary ( ("==" | "!=" | "<" | "<=" | ">" | ">=") unary )*
//! unary   := "!" unary | primary
//! primary := literal | ident | "(" or ")"
//! ident   := name ( "." name )?
//! ```
//!
//! Evaluation is strict: both operands of every binary operator are
//! evaluated, so type errors do not depend on the configuration.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::value::{Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(Value),
    Ident(String),
    Not(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad expression at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("type mismatch: `{op}` cannot combine {left}{}", right.map(|r| format!(" and {r}")).unwrap_or_default())]
    TypeMismatch {
        op: &'static str,
        left: ValueType,
        right: Option<ValueType>,
    },
    #[error("condition evaluated to a {0}, expected a boolean")]
    NonBooleanCondition(ValueType),
}

/// Symbol resolution for evaluation.
pub trait Scope {
    fn lookup(&self, name: &str) -> Option<Value>;
}

impl<F> Scope for F
where
    F: Fn(&str) -> Option<Value>,
{
    fn lookup(&self, name: &str) -> Option<Value> {
        self(name)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, len: src.len() };
        let e = p.or()?;
        match p.peek() {
            None => Ok(e),
            Some((off, tok)) => Err(ParseError {
                offset: off,
                message: format!("unexpected {}", tok.describe()),
            }),
        }
    }

    pub fn eval(&self, scope: &dyn Scope) -> Result<Value, EvalError> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Ident(name) => scope
                .lookup(name)
                .ok_or_else(|| EvalError::UnknownSymbol(name.clone())),
            Expr::Not(inner) => match inner.eval(scope)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(EvalError::TypeMismatch {
                    op: "!",
                    left: other.value_type(),
                    right: None,
                }),
            },
            Expr::Binary { op, lhs, rhs } => {
                let l = lhs.eval(scope)?;
                let r = rhs.eval(scope)?;
                apply(*op, l, r)
            }
        }
    }

    /// Evaluates and requires a boolean result.
    pub fn eval_condition(&self, scope: &dyn Scope) -> Result<bool, EvalError> {
        match self.eval(scope)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::NonBooleanCondition(other.value_type())),
        }
    }

    /// Every identifier referenced, sorted.
    pub fn symbols(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Ident(n) => {
                out.insert(n);
            }
            Expr::Not(e) => e.collect_symbols(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_symbols(out);
                rhs.collect_symbols(out);
            }
        }
    }
}

pub(crate) fn apply(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    let mismatch = |l: &Value, r: &Value| EvalError::TypeMismatch {
        op: op.symbol(),
        left: l.value_type(),
        right: Some(r.value_type()),
    };
    use std::cmp::Ordering;
    let ordering = |l: &Value, r: &Value| -> Result<Ordering, EvalError> {
        match (l, r) {
            (Value::Int(a), Value::Int(b)) => Ok(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Ok(a.cmp(b)),
            _ => Err(mismatch(l, r)),
        }
    };
    let b = match op {
        BinOp::Or | BinOp::And => match (&l, &r) {
            (Value::Bool(a), Value::Bool(b)) => {
                if op == BinOp::Or {
                    *a || *b
                } else {
                    *a && *b
                }
            }
            _ => return Err(mismatch(&l, &r)),
        },
        BinOp::Eq | BinOp::Ne => {
            if l.value_type() != r.value_type() {
                return Err(mismatch(&l, &r));
            }
            (l == r) == (op == BinOp::Eq)
        }
        BinOp::Lt => ordering(&l, &r)? == Ordering::Less,
        BinOp::Le => ordering(&l, &r)? != Ordering::Greater,
        BinOp::Gt => ordering(&l, &r)? == Ordering::Greater,
        BinOp::Ge => ordering(&l, &r)? != Ordering::Less,
    };
    Ok(Value::Bool(b))
}

/// Fully parenthesised rendering that re-parses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Str(s)) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Ident(n) => f.write_str(n),
            Expr::Not(e) => write!(f, "!{e}"),
            Expr::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    True,
    False,
    Not,
    Op(BinOp),
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(n) => format!("identifier `{n}`"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Str(_) => "string literal".into(),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
            Tok::Not => "`!`".into(),
            Tok::Op(op) => format!("`{}`", op.symbol()),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset: usize, message: String| ParseError { offset, message };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                out.push((start, Tok::Op(BinOp::Ne)));
                i += 2;
            }
            b'!' => {
                out.push((start, Tok::Not));
                i += 1;
            }
            b'&' | b'|' | b'=' => {
                if bytes.get(i + 1) != Some(&c) {
                    return Err(err(start, format!("expected `{0}{0}`", c as char)));
                }
                let op = match c {
                    b'&' => BinOp::And,
                    b'|' => BinOp::Or,
                    _ => BinOp::Eq,
                };
                out.push((start, Tok::Op(op)));
                i += 2;
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => BinOp::Lt,
                    (b'<', true) => BinOp::Le,
                    (_, false) => BinOp::Gt,
                    (_, true) => BinOp::Ge,
                };
                out.push((start, Tok::Op(op)));
                i += if eq { 2 } else { 1 };
            }
            b'"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(&b) = bytes.get(i) else {
                        return Err(err(start, "unterminated string literal".into()));
                    };
                    match b {
                        b'"' => {
                            i += 1;
                            break;
                        }
                        b'\\' => match bytes.get(i + 1) {
                            Some(b'"') => {
                                s.push('"');
                                i += 2;
                            }
                            Some(b'\\') => {
                                s.push('\\');
                                i += 2;
                            }
                            _ => return Err(err(i, "invalid escape in string literal".into())),
                        },
                        _ => {
                            // copy one UTF-8 scalar
                            let ch = src[i..].chars().next().expect("in bounds");
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push((start, Tok::Str(s)));
            }
            b'-' | b'0'..=b'9' => {
                let digits_start = if c == b'-' { i + 1 } else { i };
                let mut j = digits_start;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j == digits_start {
                    return Err(err(start, "expected digits after `-`".into()));
                }
                if j < bytes.len() && (bytes[j].is_ascii_alphabetic() || bytes[j] == b'_') {
                    return Err(err(start, "identifiers may not start with a digit".into()));
                }
                let n: i64 = src[start..j]
                    .parse()
                    .map_err(|_| err(start, "integer literal out of range".into()))?;
                out.push((start, Tok::Int(n)));
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                let mut dots = 0;
                while j < bytes.len() {
                    let b = bytes[j];
                    if b.is_ascii_alphanumeric() || b == b'_' {
                        j += 1;
                    } else if b == b'.'
                        && dots == 0
                        && bytes
                            .get(j + 1)
                            .is_some_and(|n| n.is_ascii_alphabetic() || *n == b'_')
                    {
                        dots += 1;
                        j += 1;
                    } else {
                        break;
                    }
                }
                let word = &src[i..j];
                out.push((
                    start,
                    match word {
                        "true" => Tok::True,
                        "false" => Tok::False,
                        _ => Tok::Ident(word.to_owned()),
                    },
                ));
                i = j;
            }
            _ => {
                let ch = src[i..].chars().next().expect("in bounds");
                return Err(err(start, format!("unexpected character `{ch}`")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Tok)> {
        self.tokens.get(self.pos).map(|(o, t)| (*o, t))
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn binary_level(
        &mut self,
        ops: &[BinOp],
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        while let Some((_, Tok::Op(op))) = self.peek() {
            let op = *op;
            if !ops.contains(&op) {
                break;
            }
            self.pos += 1;
            let rhs = next(self)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[BinOp::Or], Self::and)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[BinOp::And], Self::cmp)
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            &[BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge],
            Self::unary,
        )
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some((_, Tok::Not)) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let len = self.len;
        match self.bump() {
            None => Err(ParseError {
                offset: len,
                message: "unexpected end of expression".into(),
            }),
            Some((_, Tok::Ident(n))) => Ok(Expr::Ident(n)),
            Some((_, Tok::Int(i))) => Ok(Expr::Lit(Value::Int(i))),
            Some((_, Tok::Str(s))) => Ok(Expr::Lit(Value::Str(s))),
            Some((_, Tok::True)) => Ok(Expr::Lit(Value::Bool(true))),
            Some((_, Tok::False)) => Ok(Expr::Lit(Value::Bool(false))),
            Some((open, Tok::LParen)) => {
                let e = self.or()?;
                match self.bump() {
                    Some((_, Tok::RParen)) => Ok(e),
                    _ => Err(ParseError {
                        offset: open,
                        message: "unclosed `(`".into(),
                    }),
                }
            }
            Some((off, tok)) => Err(ParseError {
                offset: off,
                message: format!("unexpected {}", tok.describe()),
            }),
        }
    }
}
