//! Coefficient expression language.
//!
//! Expressions over the variables `x` (space), `t` (time) and `u` (solution
//! value), real literals, the constant `pi`, the operators `+ - * / ^` and the
//! functions `sin cos exp sqrt abs tanh min max`. Precedence from loosest to
//! tightest: `+ -`, `* /`, unary `-`, `^` (right-associative), so `-x^2` is
//! `-(x^2)`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X,
    T,
    U,
}

impl Var {
    pub fn name(self) -> char {
        match self {
            Var::X => 'x',
            Var::T => 't',
            Var::U => 'u',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    #[inline]
    fn apply1(self, a: f64) -> f64 {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Exp => a.exp(),
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Tanh => a.tanh(),
            Func::Min | Func::Max => unreachable!("binary function applied to one argument"),
        }
    }

    #[inline]
    fn apply2(self, a: f64, b: f64) -> f64 {
        match self {
            Func::Min => a.min(b),
            Func::Max => a.max(b),
            _ => unreachable!("unary function applied to two arguments"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => power(a, b),
        }
    }
}

/// Real power: repeated multiplication for integer exponents up to 8 in
/// magnitude, `exp(b ln a)` otherwise.
#[inline]
pub fn power(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 8.0 {
        let k = exponent.abs() as u32;
        let mut acc = 1.0;
        for _ in 0..k {
            acc *= base;
        }
        if exponent < 0.0 {
            1.0 / acc
        } else {
            acc
        }
    } else {
        (exponent * base.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax { expected: Vec<&'static str>, found: String },
    UnknownIdentifier(String),
    NumberOutOfRange,
    TooDeep,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => write!(
                f,
                "syntax error at offset {}: expected {}, found {found}",
                self.offset,
                expected.join(" or ")
            ),
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier `{name}` at offset {}", self.offset)
            }
            ParseErrorKind::NumberOutOfRange => {
                write!(f, "number out of range at offset {}", self.offset)
            }
            ParseErrorKind::TooDeep => {
                write!(f, "expression nested too deeply at offset {}", self.offset)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> std::result::Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let value: f64 = src[start..i].parse().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::NumberOutOfRange,
            })?;
            if !value.is_finite() {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::NumberOutOfRange,
                });
            }
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^(),".contains(&c) {
            out.push((start, Tok::Sym(c as char)));
            i += 1;
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::Syntax {
                    expected: vec!["expression"],
                    found: format!("character `{}`", ch.escape_debug()),
                },
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

type PResult<T> = std::result::Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::Syntax {
                expected,
                found: self.peek().describe(),
            },
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError {
                offset: self.offset(),
                kind: ParseErrorKind::TooDeep,
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                break;
            };
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                break;
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = if self.eat('-') {
            Expr::Neg(Box::new(self.unary()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(e)
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.primary()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(vec!["`)`"]));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "t" => return Ok(Expr::Var(Var::T)),
                    "u" => return Ok(Expr::Var(Var::U)),
                    "pi" => return Ok(Expr::Pi),
                    _ => {}
                }
                let func = Func::from_name(&name).ok_or(ParseError {
                    offset,
                    kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                })?;
                if !self.eat('(') {
                    return Err(self.error(vec!["`(`"]));
                }
                let mut args = vec![self.expr()?];
                while args.len() < func.arity() {
                    if !self.eat(',') {
                        return Err(self.error(vec!["`,`"]));
                    }
                    args.push(self.expr()?);
                }
                if !self.eat(')') {
                    let expected = if args.len() < func.arity() {
                        vec!["`,`"]
                    } else {
                        vec!["`)`"]
                    };
                    return Err(self.error(expected));
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.error(vec!["number", "variable", "function", "`(`", "`-`"])),
        }
    }
}

/// Parses a coefficient expression.
pub fn parse(source: &str) -> std::result::Result<Expr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(vec!["operator", "end of input"]));
    }
    Ok(e)
}

impl TryFrom<String> for Expr {
    type Error = ParseError;

    fn try_from(s: String) -> std::result::Result<Self, ParseError> {
        parse(&s)
    }
}

impl From<Expr> for String {
    fn from(e: Expr) -> String {
        e.to_string()
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, ParseError> {
        parse(s)
    }
}

/// Variable bindings for [`Expr::eval_with`]; unset variables are unbound.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings {
    pub x: Option<f64>,
    pub t: Option<f64>,
    pub u: Option<f64>,
}

impl Expr {
    /// Tree-walking evaluation with every variable bound.
    pub fn eval(&self, x: f64, t: f64, u: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::U) => u,
            Expr::Neg(a) => -a.eval(x, t, u),
            Expr::Binary(op, a, b) => op.apply(a.eval(x, t, u), b.eval(x, t, u)),
            Expr::Call(f, args) => match args.as_slice() {
                [a] => f.apply1(a.eval(x, t, u)),
                [a, b] => f.apply2(a.eval(x, t, u), b.eval(x, t, u)),
                _ => unreachable!("arity checked by the parser"),
            },
        }
    }

    /// Evaluation that fails if a free variable is unbound.
    pub fn eval_with(&self, b: &Bindings) -> Result<f64> {
        for v in self.variables() {
            let bound = match v {
                Var::X => b.x,
                Var::T => b.t,
                Var::U => b.u,
            };
            if bound.is_none() {
                return Err(Error::UnboundVariable(v.name()));
            }
        }
        Ok(self.eval(
            b.x.unwrap_or(0.0),
            b.t.unwrap_or(0.0),
            b.u.unwrap_or(0.0),
        ))
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::Num(_) | Expr::Pi => {}
        }
    }

    pub fn compile(&self) -> Compiled {
        let mut ops = Vec::new();
        self.emit(&mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Push(_) | Op::Load(_) => depth += 1,
                Op::Neg | Op::Call1(_) => {}
                Op::Bin(_) | Op::Call2(_) => depth -= 1,
            }
            max_depth = max_depth.max(depth);
        }
        Compiled {
            ops,
            max_depth,
            tree: self.clone(),
        }
    }

    fn emit(&self, ops: &mut Vec<Op>) {
        match self {
            Expr::Num(v) => ops.push(Op::Push(*v)),
            Expr::Pi => ops.push(Op::Push(std::f64::consts::PI)),
            Expr::Var(v) => ops.push(Op::Load(*v)),
            Expr::Neg(a) => {
                a.emit(ops);
                ops.push(Op::Neg);
            }
            Expr::Binary(op, a, b) => {
                a.emit(ops);
                b.emit(ops);
                ops.push(Op::Bin(*op));
            }
            Expr::Call(f, args) => {
                for a in args {
                    a.emit(ops);
                }
                ops.push(if args.len() == 1 {
                    Op::Call1(*f)
                } else {
                    Op::Call2(*f)
                });
            }
        }
    }
}

/// Fully parenthesised canonical form; reparsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Push(f64),
    Load(Var),
    Neg,
    Bin(BinOp),
    Call1(Func),
    Call2(Func),
}

const STACK: usize = 32;

/// Postfix form of an [`Expr`] evaluated on a fixed-size stack; used in the
/// per-node inner loops.
#[derive(Debug, Clone)]
pub struct Compiled {
    ops: Vec<Op>,
    max_depth: usize,
    tree: Expr,
}

impl Compiled {
    pub fn expr(&self) -> &Expr {
        &self.tree
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64, u: f64) -> f64 {
        if self.max_depth > STACK {
            return self.tree.eval(x, t, u);
        }
        let mut stack = [0.0f64; STACK];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Push(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Load(var) => {
                    stack[sp] = match var {
                        Var::X => x,
                        Var::T => t,
                        Var::U => u,
                    };
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Bin(b) => {
                    sp -= 1;
                    stack[sp - 1] = b.apply(stack[sp - 1], stack[sp]);
                }
                Op::Call1(f) => stack[sp - 1] = f.apply1(stack[sp - 1]),
                Op::Call2(f) => {
                    sp -= 1;
                    stack[sp - 1] = f.apply2(stack[sp - 1], stack[sp]);
                }
            }
        }
        stack[0]
    }
}
