//! Concrete syntax: lexer and recursive-descent parser for program and
//! litmus files.
//!
//! ```text
//! test NAME
//! arch arm-nmca                      // optional default architecture
//! init { x = 0; tasks[0] = -1; }
//! process 1 locals { r1 = 0; } {
//!   x := 1;
//!   r1 := y;
//! }
//! exists (1:r1 = 0 && x = 1)
//! expect tso observable              // per-architecture expectations
//! ```
//!
//! Statements: `x := e`, `[e]x := e`, `n.next := e`, `n.value := e`,
//! `n := new Node(e)`, `guard(e)`, `fence`, `fence.st`, `cfence`,
//! `storegate`, `loadgate`, `eieio`, `lwfence`, `skip`,
//! `atomic { ... }`, `if e { ... } else { ... }`, `if cas(x, r, e) { ... }`,
//! `while e { ... }`, `cas(x, r, e)`, `choice { { ... } or { ... } }`.
//!
//! `if` desugars to guarded choice, `while` to a budgeted loop term,
//! `cas(x, r, e)` to the fenced compare-and-swap
//! `atomic { guard(x = r); x := e; fence; } [] guard(x != r)`, `lwfence` to
//! `storegate; loadgate`, and `n := new Node(e)` to the atomic heap
//! allocation block over `heap[maxh]` with a trailing full fence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::action::{Action, FenceKind, Target};
use crate::arch::ArchKind;
use crate::command::Command;
use crate::expr::{BinOp, Expr, Field, UnaryOp};
use crate::system::{Process, System};
use crate::value::{Pid, Value, VarName};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    Observable,
    NotObservable,
    Unknown,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Observable => write!(f, "observable"),
            Expectation::NotObservable => write!(f, "not-observable"),
            Expectation::Unknown => write!(f, "unknown"),
        }
    }
}

/// exists(p): is some final state satisfying p reachable; forbidden(p):
/// the test passes when no final state satisfies p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionMode {
    Exists,
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub mode: ConditionMode,
    pub predicate: Expr,
}

/// A named litmus test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LitmusTest {
    pub name: String,
    pub system: System,
    pub condition: Condition,
    pub expectations: BTreeMap<ArchKind, Expectation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

type PResult<T> = Result<T, ParseError>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Colon,
    Dot,
    Assign, // :=
    Eq,     // =
    Ne,     // !=
    Lt,
    Le,
    Plus,
    Minus,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Assign => write!(f, "`:=`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn tokenize(mut self) -> PResult<Vec<(Tok, usize, usize)>> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_ascii_whitespace() {
                    self.bump();
                } else if c == b'/' && self.peek2() == Some(b'/') || c == b'#' {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                b'{' => {
                    self.bump();
                    Tok::LBrace
                }
                b'}' => {
                    self.bump();
                    Tok::RBrace
                }
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'[' => {
                    self.bump();
                    Tok::LBracket
                }
                b']' => {
                    self.bump();
                    Tok::RBracket
                }
                b';' => {
                    self.bump();
                    Tok::Semi
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'.' => {
                    self.bump();
                    Tok::Dot
                }
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b'-' => {
                    self.bump();
                    Tok::Minus
                }
                b':' => {
                    self.bump();
                    if self.peek() == Some(b'=') {
                        self.bump();
                        Tok::Assign
                    } else {
                        Tok::Colon
                    }
                }
                b'=' => {
                    self.bump();
                    Tok::Eq
                }
                b'!' => {
                    self.bump();
                    if self.peek() == Some(b'=') {
                        self.bump();
                        Tok::Ne
                    } else {
                        Tok::Bang
                    }
                }
                b'<' => {
                    self.bump();
                    if self.peek() == Some(b'=') {
                        self.bump();
                        Tok::Le
                    } else {
                        Tok::Lt
                    }
                }
                b'&' => {
                    self.bump();
                    if self.peek() == Some(b'&') {
                        self.bump();
                        Tok::AndAnd
                    } else {
                        return Err(self.error("expected `&&`"));
                    }
                }
                b'|' => {
                    self.bump();
                    if self.peek() == Some(b'|') {
                        self.bump();
                        Tok::OrOr
                    } else {
                        return Err(self.error("expected `||`"));
                    }
                }
                b'0'..=b'9' => {
                    let mut n: i64 = 0;
                    while let Some(d) = self.peek() {
                        if d.is_ascii_digit() {
                            n = n * 10 + i64::from(d - b'0');
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Int(n)
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while let Some(d) = self.peek() {
                        if d.is_ascii_alphanumeric() || d == b'_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let s = std::str::from_utf8(&self.src[start..self.pos])
                        .expect("ascii idents")
                        .to_string();
                    Tok::Ident(s)
                }
                other => {
                    return Err(self.error(format!(
                        "unexpected character `{}`",
                        other as char
                    )))
                }
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    /// pid-qualified locals (`1:r`) are admitted only in conditions
    in_condition: bool,
}

/// Statement forms, folded into a command back-to-front so `if`, `while`,
/// `choice` and `cas` can splice their continuations.
#[derive(Debug, Clone)]
enum Stmt {
    Act(Action),
    If { cond: IfCond, then_b: Vec<Stmt>, else_b: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    Choice(Vec<Vec<Stmt>>),
    Cas(CasCall),
}

#[derive(Debug, Clone)]
enum IfCond {
    Plain(Expr),
    Cas(CasCall),
    NotCas(CasCall),
}

#[derive(Debug, Clone)]
struct CasCall {
    target: VarName,
    expected: Expr,
    new: Expr,
}

impl CasCall {
    fn success_atomic(&self) -> Action {
        Action::Atomic(vec![
            Action::Guard(Expr::bin(
                BinOp::Eq,
                Expr::Var(self.target.clone()),
                self.expected.clone(),
            )),
            Action::Update(Target::Var(self.target.clone()), self.new.clone()),
            Action::Fence(FenceKind::Full),
        ])
    }

    fn failure_guard(&self) -> Action {
        Action::Guard(Expr::bin(
            BinOp::Ne,
            Expr::Var(self.target.clone()),
            self.expected.clone(),
        ))
    }
}

impl Parser {
    fn new(src: &str) -> PResult<Parser> {
        Ok(Parser {
            toks: Lexer::new(src).tokenize()?,
            pos: 0,
            in_condition: false,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos.min(self.toks.len() - 1)].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = self.toks[self.pos.min(self.toks.len() - 1)];
        (l, c)
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, msg: msg.into() }
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> PResult<()> {
        if self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {t}, found {}", self.peek())))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => Err(self.error(format!("expected `{kw}`, found {other}"))),
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> PResult<String> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            other => Err(self.error(format!("expected identifier, found {other}"))),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match self.bump() {
            Tok::Int(n) => Ok(n),
            other => Err(self.error(format!("expected integer, found {other}"))),
        }
    }

    // ---- values -----------------------------------------------------

    fn literal(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                Ok(Value::Int(-self.int()?))
            }
            Tok::Int(_) => Ok(Value::Int(self.int()?)),
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    Ok(Value::Bool(true))
                }
                "false" => {
                    self.bump();
                    Ok(Value::Bool(false))
                }
                "null" => {
                    self.bump();
                    Ok(Value::Null)
                }
                "node" => {
                    self.bump();
                    self.eat(&Tok::LParen)?;
                    let v = self.literal()?;
                    self.eat(&Tok::Comma)?;
                    let p = self.literal()?;
                    self.eat(&Tok::RParen)?;
                    Ok(Value::Node(Box::new(v), Box::new(p)))
                }
                other => Err(self.error(format!("expected literal, found `{other}`"))),
            },
            other => Err(self.error(format!("expected literal, found {other}"))),
        }
    }

    // ---- expressions -------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        self.expr_bp(0)
    }

    fn expr_bp(&mut self, min_bp: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::OrOr => BinOp::Or,
                Tok::AndAnd => BinOp::And,
                Tok::Eq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Ident(s) if s == "xor" => BinOp::Xor,
                Tok::Ident(s) if s == "mod" => BinOp::Mod,
                _ => break,
            };
            let bp = op.precedence();
            if bp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr_bp(bp + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)))
            }
            Tok::Minus => {
                self.bump();
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.peek() == &Tok::Dot {
            self.bump();
            let f = self.ident()?;
            let field = match f.as_str() {
                "value" => Field::Value,
                "next" => Field::Next,
                other => return Err(self.error(format!("unknown field `.{other}`"))),
            };
            e = Expr::Field(Box::new(e), field);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                if self.in_condition && self.peek() == &Tok::Colon {
                    // pid-qualified local
                    self.bump();
                    let name = self.ident()?;
                    return Ok(Expr::Var(VarName::plain(format!("{n}:{name}"))));
                }
                Ok(Expr::int(n))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.eat(&Tok::RParen)?;
                Ok(e)
            }
            Tok::LBracket => {
                // address shift [e]x
                self.bump();
                let amount = self.expr()?;
                self.eat(&Tok::RBracket)?;
                let base = self.var_name()?;
                Ok(Expr::Shift(Box::new(amount), base))
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" | "null" => Ok(Expr::Lit(self.literal()?)),
                "node" => {
                    self.bump();
                    self.eat(&Tok::LParen)?;
                    let v = self.expr()?;
                    self.eat(&Tok::Comma)?;
                    let p = self.expr()?;
                    self.eat(&Tok::RParen)?;
                    Ok(Expr::Node(Box::new(v), Box::new(p)))
                }
                _ => Ok(Expr::Var(self.var_name()?)),
            },
            other => Err(self.error(format!("expected expression, found {other}"))),
        }
    }

    /// A variable: `name`, `name[e]`, or `name(e)`.
    fn var_name(&mut self) -> PResult<VarName> {
        let base = self.ident()?;
        match self.peek() {
            Tok::LBracket => {
                self.bump();
                let ix = self.expr()?;
                self.eat(&Tok::RBracket)?;
                Ok(VarName::indexed(base, ix))
            }
            Tok::LParen => {
                self.bump();
                let ix = self.expr()?;
                self.eat(&Tok::RParen)?;
                Ok(VarName::indexed(base, ix))
            }
            _ => Ok(VarName::plain(base)),
        }
    }

    // ---- statements ---------------------------------------------------

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.eat(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while self.peek() != &Tok::RBrace {
            if let Some(s) = self.stmt()? {
                stmts.push(s);
            }
        }
        self.eat(&Tok::RBrace)?;
        Ok(stmts)
    }

    /// One statement; `skip;` yields none.
    fn stmt(&mut self) -> PResult<Option<Stmt>> {
        match self.peek().clone() {
            Tok::Ident(kw) => match kw.as_str() {
                "skip" => {
                    self.bump();
                    self.eat(&Tok::Semi)?;
                    Ok(None)
                }
                "guard" => {
                    self.bump();
                    self.eat(&Tok::LParen)?;
                    let e = self.expr()?;
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Act(Action::Guard(e))))
                }
                "fence" => {
                    self.bump();
                    let kind = if self.peek() == &Tok::Dot {
                        self.bump();
                        self.eat_kw("st")?;
                        FenceKind::Store
                    } else {
                        FenceKind::Full
                    };
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Act(Action::Fence(kind))))
                }
                "cfence" => {
                    self.bump();
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Act(Action::Fence(FenceKind::Ctrl))))
                }
                "storegate" => {
                    self.bump();
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Act(Action::Fence(FenceKind::StoreGate))))
                }
                "loadgate" => {
                    self.bump();
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Act(Action::Fence(FenceKind::LoadGate))))
                }
                "eieio" => {
                    self.bump();
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Act(Action::Fence(FenceKind::Eieio))))
                }
                "lwfence" => {
                    self.bump();
                    self.eat(&Tok::Semi)?;
                    // storegate then loadgate; two statements, returned as
                    // a one-element choice to keep the single-return shape
                    Ok(Some(Stmt::Choice(vec![vec![
                        Stmt::Act(Action::Fence(FenceKind::StoreGate)),
                        Stmt::Act(Action::Fence(FenceKind::LoadGate)),
                    ]])))
                }
                "atomic" => {
                    self.bump();
                    let body = self.atomic_block()?;
                    Ok(Some(Stmt::Act(Action::Atomic(body))))
                }
                "if" => {
                    self.bump();
                    let cond = if self.at_kw("cas") {
                        IfCond::Cas(self.cas_call()?)
                    } else if self.peek() == &Tok::Bang && matches!(self.peek2(), Tok::Ident(s) if s == "cas")
                    {
                        self.bump();
                        IfCond::NotCas(self.cas_call()?)
                    } else {
                        IfCond::Plain(self.expr()?)
                    };
                    let then_b = self.block()?;
                    let else_b = if self.at_kw("else") {
                        self.bump();
                        self.block()?
                    } else {
                        Vec::new()
                    };
                    Ok(Some(Stmt::If { cond, then_b, else_b }))
                }
                "while" => {
                    self.bump();
                    let cond = self.expr()?;
                    let body = self.block()?;
                    Ok(Some(Stmt::While { cond, body }))
                }
                "cas" => {
                    let call = self.cas_call()?;
                    self.eat(&Tok::Semi)?;
                    Ok(Some(Stmt::Cas(call)))
                }
                "choice" => {
                    self.bump();
                    self.eat(&Tok::LBrace)?;
                    let mut branches = vec![self.block()?];
                    while self.at_kw("or") {
                        self.bump();
                        branches.push(self.block()?);
                    }
                    self.eat(&Tok::RBrace)?;
                    Ok(Some(Stmt::Choice(branches)))
                }
                _ => self.assignment().map(Some),
            },
            Tok::LBracket => self.assignment().map(Some),
            other => Err(self.error(format!("expected statement, found {other}"))),
        }
    }

    fn cas_call(&mut self) -> PResult<CasCall> {
        self.eat_kw("cas")?;
        self.eat(&Tok::LParen)?;
        let target = self.var_name()?;
        self.eat(&Tok::Comma)?;
        let expected = self.expr()?;
        self.eat(&Tok::Comma)?;
        let new = self.expr()?;
        self.eat(&Tok::RParen)?;
        Ok(CasCall { target, expected, new })
    }

    /// Assignment statements, including the shifted/node-field forms and
    /// `new Node` allocation.
    fn assignment(&mut self) -> PResult<Stmt> {
        if self.peek() == &Tok::LBracket {
            self.bump();
            let amount = self.expr()?;
            self.eat(&Tok::RBracket)?;
            let base = self.var_name()?;
            self.eat(&Tok::Assign)?;
            let rhs = self.expr()?;
            self.eat(&Tok::Semi)?;
            return Ok(Stmt::Act(Action::Update(Target::Shifted(amount, base), rhs)));
        }
        let name = self.var_name()?;
        // node-field update sugar: n.next := e rewrites the heap cell
        if self.peek() == &Tok::Dot {
            self.bump();
            let field = self.ident()?;
            self.eat(&Tok::Assign)?;
            let rhs = self.expr()?;
            self.eat(&Tok::Semi)?;
            let cell = VarName::indexed("heap", Expr::Var(name));
            let old = |f| Expr::Field(Box::new(Expr::Var(cell.clone())), f);
            let node = match field.as_str() {
                "next" => Expr::Node(Box::new(old(Field::Value)), Box::new(rhs)),
                "value" => Expr::Node(Box::new(rhs), Box::new(old(Field::Next))),
                other => return Err(self.error(format!("unknown field `.{other}`"))),
            };
            return Ok(Stmt::Act(Action::Update(Target::Var(cell), node)));
        }
        self.eat(&Tok::Assign)?;
        // allocation sugar
        if self.at_kw("new") {
            self.bump();
            self.eat_kw("Node")?;
            self.eat(&Tok::LParen)?;
            let v = self.expr()?;
            self.eat(&Tok::RParen)?;
            self.eat(&Tok::Semi)?;
            let maxh = VarName::plain("maxh");
            let cell = VarName::indexed("heap", Expr::Var(maxh.clone()));
            return Ok(Stmt::Act(Action::Atomic(vec![
                Action::Update(
                    Target::Var(cell),
                    Expr::Node(Box::new(v), Box::new(Expr::Lit(Value::Null))),
                ),
                Action::Update(Target::Var(name), Expr::Var(maxh.clone())),
                Action::Update(
                    Target::Var(maxh.clone()),
                    Expr::bin(BinOp::Add, Expr::Var(maxh), Expr::int(1)),
                ),
                Action::Fence(FenceKind::Full),
            ])));
        }
        let rhs = self.expr()?;
        self.eat(&Tok::Semi)?;
        Ok(Stmt::Act(Action::Update(Target::Var(name), rhs)))
    }

    /// Atomic bodies allow only updates, guards and fences; nesting and
    /// control flow are rejected.
    fn atomic_block(&mut self) -> PResult<Vec<Action>> {
        let (line, col) = self.here();
        let stmts = self.block()?;
        if stmts.is_empty() {
            return Err(ParseError {
                line,
                col,
                msg: "atomic block must be nonempty".into(),
            });
        }
        let mut out = Vec::new();
        for s in stmts {
            match s {
                Stmt::Act(Action::Atomic(_)) => {
                    return Err(ParseError {
                        line,
                        col,
                        msg: "atomic blocks cannot nest".into(),
                    })
                }
                Stmt::Act(a) => out.push(a),
                _ => {
                    return Err(ParseError {
                        line,
                        col,
                        msg: "atomic blocks allow only updates, guards and fences".into(),
                    })
                }
            }
        }
        Ok(out)
    }

    // ---- top level -----------------------------------------------------

    fn init_block(&mut self) -> PResult<BTreeMap<VarName, Value>> {
        let mut globals = BTreeMap::new();
        self.eat_kw("init")?;
        self.eat(&Tok::LBrace)?;
        while self.peek() != &Tok::RBrace {
            let name = self.var_name()?;
            if !name.is_concrete() {
                return Err(self.error("init locations must have literal indices"));
            }
            self.eat(&Tok::Eq)?;
            let v = self.literal()?;
            self.eat(&Tok::Semi)?;
            if globals.insert(name.clone(), v).is_some() {
                return Err(self.error(format!("duplicate init for `{name}`")));
            }
        }
        self.eat(&Tok::RBrace)?;
        Ok(globals)
    }

    fn process_decl(&mut self) -> PResult<Process> {
        self.eat_kw("process")?;
        let pid = Pid(u32::try_from(self.int()?).map_err(|_| self.error("pid out of range"))?);
        let mut locals = BTreeMap::new();
        if self.at_kw("locals") {
            self.bump();
            self.eat(&Tok::LBrace)?;
            while self.peek() != &Tok::RBrace {
                let name = self.ident()?;
                self.eat(&Tok::Eq)?;
                let v = self.literal()?;
                self.eat(&Tok::Semi)?;
                if locals.insert(VarName::plain(name.clone()), v).is_some() {
                    return Err(self.error(format!("duplicate local `{name}`")));
                }
            }
            self.eat(&Tok::RBrace)?;
        }
        let stmts = self.block()?;
        Ok(Process { pid, locals, code: fold_stmts(&stmts, Command::Skip) })
    }

    fn arch_line(&mut self) -> PResult<Option<ArchKind>> {
        if self.at_kw("arch") {
            self.bump();
            let mut name = self.ident()?;
            // architecture names may contain hyphens
            while self.peek() == &Tok::Minus {
                self.bump();
                name.push('-');
                name.push_str(&self.ident()?);
            }
            let kind = name.parse::<ArchKind>().map_err(|e| self.error(e))?;
            Ok(Some(kind))
        } else {
            Ok(None)
        }
    }

    fn system_body(&mut self) -> PResult<System> {
        let arch_hint = self.arch_line()?;
        let globals = if self.at_kw("init") {
            self.init_block()?
        } else {
            BTreeMap::new()
        };
        let mut processes = Vec::new();
        while self.at_kw("process") {
            processes.push(self.process_decl()?);
        }
        if processes.is_empty() {
            return Err(self.error("a system needs at least one process"));
        }
        let system = System { arch_hint, globals, processes };
        validate_system(&system).map_err(|msg| self.error(msg))?;
        Ok(system)
    }

    fn litmus(&mut self) -> PResult<LitmusTest> {
        self.eat_kw("test")?;
        let mut name = self.ident()?;
        while self.peek() == &Tok::Minus {
            self.bump();
            name.push('-');
            name.push_str(&self.test_name_part()?);
        }
        let system = self.system_body()?;
        let mode = if self.at_kw("exists") {
            self.bump();
            ConditionMode::Exists
        } else if self.at_kw("forbidden") {
            self.bump();
            ConditionMode::Forbidden
        } else {
            return Err(self.error("expected `exists (..)` or `forbidden (..)`"));
        };
        self.eat(&Tok::LParen)?;
        self.in_condition = true;
        let predicate = self.expr()?;
        self.in_condition = false;
        self.eat(&Tok::RParen)?;
        let mut expectations = BTreeMap::new();
        while self.at_kw("expect") {
            self.bump();
            let mut arch_name = self.ident()?;
            while self.peek() == &Tok::Minus {
                self.bump();
                arch_name.push('-');
                arch_name.push_str(&self.ident()?);
            }
            let arch = arch_name.parse::<ArchKind>().map_err(|e| self.error(e))?;
            let mut word = self.ident()?;
            while self.peek() == &Tok::Minus {
                self.bump();
                word.push('-');
                word.push_str(&self.ident()?);
            }
            let exp = match word.as_str() {
                "observable" => Expectation::Observable,
                "not-observable" => Expectation::NotObservable,
                "unknown" => Expectation::Unknown,
                other => {
                    return Err(self.error(format!(
                        "expected observable, not-observable or unknown, found `{other}`"
                    )))
                }
            };
            expectations.insert(arch, exp);
        }
        self.eat(&Tok::Eof)?;
        let test = LitmusTest { name, system, condition: Condition { mode, predicate }, expectations };
        validate_condition(&test).map_err(|msg| self.error(msg))?;
        Ok(test)
    }

    fn test_name_part(&mut self) -> PResult<String> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            Tok::Int(n) => Ok(n.to_string()),
            other => Err(self.error(format!("expected name part, found {other}"))),
        }
    }
}

fn fold_stmts(stmts: &[Stmt], cont: Command) -> Command {
    let Some((s, rest)) = stmts.split_first() else {
        return cont;
    };
    let rest_c = fold_stmts(rest, cont);
    match s {
        Stmt::Act(a) => Command::prefix(a.clone(), rest_c),
        Stmt::If { cond, then_b, else_b } => {
            let then_c = fold_stmts(then_b, rest_c.clone());
            let else_c = fold_stmts(else_b, rest_c);
            match cond {
                IfCond::Plain(b) => Command::choice(
                    Command::prefix(Action::Guard(b.clone()), then_c),
                    Command::prefix(
                        Action::Guard(Expr::Unary(UnaryOp::Not, Box::new(b.clone()))),
                        else_c,
                    ),
                ),
                IfCond::Cas(call) => Command::choice(
                    Command::prefix(call.success_atomic(), then_c),
                    Command::prefix(call.failure_guard(), else_c),
                ),
                IfCond::NotCas(call) => Command::choice(
                    Command::prefix(call.failure_guard(), then_c),
                    Command::prefix(call.success_atomic(), else_c),
                ),
            }
        }
        Stmt::While { cond, body } => Command::While {
            cond: cond.clone(),
            body: Box::new(fold_stmts(body, Command::Skip)),
            budget: 0,
            cont: Box::new(rest_c),
        },
        Stmt::Choice(branches) => {
            let mut cs: Vec<Command> = branches
                .iter()
                .map(|b| fold_stmts(b, rest_c.clone()))
                .collect();
            let mut out = cs.pop().expect("choice has at least one branch");
            while let Some(c) = cs.pop() {
                out = Command::choice(c, out);
            }
            out
        }
        Stmt::Cas(call) => Command::choice(
            Command::prefix(call.success_atomic(), rest_c.clone()),
            Command::prefix(call.failure_guard(), rest_c),
        ),
    }
}

/// Structural checks: unique pids, local/global name disjointness, and
/// every referenced variable being either a declared local or a declared
/// global family.
fn validate_system(system: &System) -> Result<(), String> {
    let mut pids = BTreeSet::new();
    let global_bases = system.global_bases();
    for p in &system.processes {
        if !pids.insert(p.pid) {
            return Err(format!("duplicate pid {}", p.pid));
        }
        for local in p.locals.keys() {
            if global_bases.contains(&local.base) {
                return Err(format!(
                    "local `{local}` of process {} clashes with a global",
                    p.pid
                ));
            }
        }
        let scope = p.scope();
        let mut names = BTreeSet::new();
        collect_command_vars(&p.code, &mut names);
        for v in names {
            if scope.contains(&v.base) || global_bases.contains(&v.base) {
                continue;
            }
            return Err(format!(
                "process {} references `{}` which is neither a declared local nor an initialised global",
                p.pid, v.base
            ));
        }
    }
    Ok(())
}

fn collect_command_vars(c: &Command, out: &mut BTreeSet<VarName>) {
    match c {
        Command::Skip => {}
        Command::Prefix(a, rest) | Command::TruePrefix(a, rest) => {
            collect_action_vars(a, out);
            collect_command_vars(rest, out);
        }
        Command::Choice(l, r) => {
            collect_command_vars(l, out);
            collect_command_vars(r, out);
        }
        Command::While { cond, body, cont, .. } => {
            out.extend(cond.free_vars());
            collect_command_vars(body, out);
            collect_command_vars(cont, out);
        }
    }
}

fn collect_action_vars(a: &Action, out: &mut BTreeSet<VarName>) {
    match a {
        Action::Update(t, e) => {
            out.extend(t.vars());
            out.extend(e.free_vars());
        }
        Action::Guard(e) => out.extend(e.free_vars()),
        Action::Fence(_) => {}
        Action::Atomic(body) => {
            for el in body {
                collect_action_vars(el, out);
            }
        }
    }
}

/// Condition variables must resolve against the system: `N:r` against the
/// locals of process N, a bare name against the globals.
fn validate_condition(test: &LitmusTest) -> Result<(), String> {
    let global_bases = test.system.global_bases();
    for v in test.condition.predicate.free_vars() {
        if let Some((pid_s, local)) = v.base.split_once(':') {
            let pid = Pid(pid_s.parse::<u32>().map_err(|_| format!("bad pid in `{v}`"))?);
            let Some(p) = test.system.process(pid) else {
                return Err(format!("condition references unknown process {pid}"));
            };
            if !p.scope().contains(local) {
                return Err(format!(
                    "condition references `{v}` but process {pid} has no local `{local}`"
                ));
            }
        } else if !global_bases.contains(&v.base) {
            return Err(format!("condition references unknown global `{}`", v.base));
        }
    }
    Ok(())
}

/// Parse a litmus test file.
pub fn parse_litmus(text: &str) -> PResult<LitmusTest> {
    Parser::new(text)?.litmus()
}

/// Parse a bare system: optional `arch`, optional `init`, processes. Also
/// accepts a full litmus file, ignoring its condition.
pub fn parse_system(text: &str) -> PResult<System> {
    let mut p = Parser::new(text)?;
    if p.at_kw("test") {
        return Ok(p.litmus()?.system);
    }
    if p.at_kw("system") {
        p.bump();
        // optional name
        if matches!(p.peek(), Tok::Ident(s) if s != "init" && s != "process" && s != "arch") {
            p.bump();
        }
    }
    let system = p.system_body()?;
    p.eat(&Tok::Eof)?;
    Ok(system)
}
