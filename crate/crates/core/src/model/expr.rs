//! Closed-form coefficient expressions.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := number | "pi" | var | func "(" expr ")" | functional "(" slot ")" | "(" expr ")"
//! var   := "x" | "y" | "u" | "v"
//! func  := "atan" | "arctan" | "exp" | "tanh" | "sin" | "cos" | "sqrt" | "abs" | "log"
//! functional := "mean" | "int_abs"
//! slot  := "m" | "mk"
//! ```
//!
//! In a jump kernel `x` is the sender state, `y` the receiver state, `u` the
//! sender mark and `v` the receiver mark. `m` is the sender-side measure and
//! `mk` the receiver population measure (they coincide for one population).

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Sender,
    Receiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Mean,
    IntAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Atan,
    Exp,
    Tanh,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Log,
}

impl Func {
    fn apply(self, a: f64) -> f64 {
        match self {
            Func::Atan => a.atan(),
            Func::Exp => a.exp(),
            Func::Tanh => a.tanh(),
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Log => a.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Measure(Functional, Slot),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Evaluation point of an expression.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub m: &'a EmpiricalMeasure1D,
    pub mk: &'a EmpiricalMeasure1D,
}

impl<'a> Env<'a> {
    /// Point for a one-state coefficient `c(x, m)`.
    pub fn state(x: f64, m: &'a EmpiricalMeasure1D) -> Self {
        Self { x, y: 0.0, u: 0.0, v: 0.0, m, mk: m }
    }
}

/// A parsed expression together with its source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let mut p = Parser { src: source.as_bytes(), pos: 0 };
        let node = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self { source: source.to_string(), root: fold(node) })
    }

    pub fn constant(c: f64) -> Self {
        Self { source: format_number(c), root: Node::Const(c) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn eval(&self, env: &Env<'_>) -> f64 {
        eval(&self.root, env)
    }

    /// Value of a one-state coefficient `c(x, m)`.
    #[inline]
    pub fn eval_state(&self, x: f64, m: &EmpiricalMeasure1D) -> f64 {
        eval(&self.root, &Env::state(x, m))
    }

    pub fn uses_var(&self, var: Var) -> bool {
        any_node(&self.root, &|n| matches!(n, Node::Var(v) if *v == var))
    }

    pub fn uses_slot(&self, slot: Slot) -> bool {
        any_node(&self.root, &|n| matches!(n, Node::Measure(_, s) if *s == slot))
    }

    pub fn uses_measure(&self) -> bool {
        any_node(&self.root, &|n| matches!(n, Node::Measure(..)))
    }

    /// The value when the expression has no free variable or functional.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Errors when the expression refers to a variable outside `allowed`.
    pub fn check_vars(&self, allowed: &[Var], what: &str) -> Result<()> {
        for var in [Var::X, Var::Y, Var::U, Var::V] {
            if self.uses_var(var) && !allowed.contains(&var) {
                return Err(Error::Config(format!(
                    "{what} may not depend on variable {}",
                    var_name(var)
                )));
            }
        }
        Ok(())
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(Expr::constant(c)),
            Raw::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

fn var_name(v: Var) -> &'static str {
    match v {
        Var::X => "x",
        Var::Y => "y",
        Var::U => "u",
        Var::V => "v",
    }
}

fn format_number(c: f64) -> String {
    let s = format!("{c}");
    if c < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

fn eval(node: &Node, env: &Env<'_>) -> f64 {
    match node {
        Node::Const(c) => *c,
        Node::Var(Var::X) => env.x,
        Node::Var(Var::Y) => env.y,
        Node::Var(Var::U) => env.u,
        Node::Var(Var::V) => env.v,
        Node::Measure(func, slot) => {
            let m = match slot {
                Slot::Sender => env.m,
                Slot::Receiver => env.mk,
            };
            match func {
                Functional::Mean => m.mean(),
                Functional::IntAbs => m.mean_abs(),
            }
        }
        Node::Neg(a) => -eval(a, env),
        Node::Add(a, b) => eval(a, env) + eval(b, env),
        Node::Sub(a, b) => eval(a, env) - eval(b, env),
        Node::Mul(a, b) => eval(a, env) * eval(b, env),
        Node::Div(a, b) => eval(a, env) / eval(b, env),
        Node::Pow(a, b) => {
            let base = eval(a, env);
            match **b {
                Node::Const(e) if e == 2.0 => base * base,
                _ => base.powf(eval(b, env)),
            }
        }
        Node::Call(f, a) => f.apply(eval(a, env)),
    }
}

fn any_node(node: &Node, pred: &dyn Fn(&Node) -> bool) -> bool {
    if pred(node) {
        return true;
    }
    match node {
        Node::Neg(a) | Node::Call(_, a) => any_node(a, pred),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            any_node(a, pred) || any_node(b, pred)
        }
        _ => false,
    }
}

/// Folds constant subtrees.
fn fold(node: Node) -> Node {
    use Node::*;
    let bin = |a: Node, b: Node, mk: fn(Box<Node>, Box<Node>) -> Node, op: fn(f64, f64) -> f64| {
        let (a, b) = (fold(a), fold(b));
        match (&a, &b) {
            (Const(x), Const(y)) => Const(op(*x, *y)),
            _ => mk(Box::new(a), Box::new(b)),
        }
    };
    match node {
        Neg(a) => match fold(*a) {
            Const(c) => Const(-c),
            a => Neg(Box::new(a)),
        },
        Call(f, a) => match fold(*a) {
            Const(c) => Const(f.apply(c)),
            a => Call(f, Box::new(a)),
        },
        Add(a, b) => bin(*a, *b, Add, |x, y| x + y),
        Sub(a, b) => bin(*a, *b, Sub, |x, y| x - y),
        Mul(a, b) => bin(*a, *b, Mul, |x, y| x * y),
        Div(a, b) => bin(*a, *b, Div, |x, y| x / y),
        Pow(a, b) => bin(*a, *b, Pow, f64::powf),
        other => other,
    }
}

struct Parser<'s> {
    src: &'s [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expr { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.err(&format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| Error::Expr { pos: start, msg: format!("bad number '{text}'") })
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "x" => return Ok(Node::Var(Var::X)),
            "y" => return Ok(Node::Var(Var::Y)),
            "u" => return Ok(Node::Var(Var::U)),
            "v" => return Ok(Node::Var(Var::V)),
            "pi" => return Ok(Node::Const(std::f64::consts::PI)),
            "mean" | "int_abs" => {
                let functional =
                    if name == "mean" { Functional::Mean } else { Functional::IntAbs };
                self.expect(b'(')?;
                self.skip_ws();
                let s0 = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let slot = match &self.src[s0..self.pos] {
                    b"m" => Slot::Sender,
                    b"mk" => Slot::Receiver,
                    _ => return Err(Error::Expr { pos: s0, msg: "expected measure 'm' or 'mk'".into() }),
                };
                self.expect(b')')?;
                return Ok(Node::Measure(functional, slot));
            }
            "atan" | "arctan" => Func::Atan,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "log" | "ln" => Func::Log,
            _ => return Err(Error::Expr { pos: start, msg: format!("unknown identifier '{name}'") }),
        };
        self.expect(b'(')?;
        let arg = self.expr()?;
        self.expect(b')')?;
        Ok(Node::Call(func, Box::new(arg)))
    }
}
