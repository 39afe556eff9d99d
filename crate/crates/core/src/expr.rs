//! Expressions: syntax, variable classification, substitution and
//! (partial) evaluation.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::value::{Value, VarName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Xor,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Xor => "xor",
            BinOp::Mod => "mod",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength for parsing and printing. Higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le => 3,
            BinOp::Add | BinOp::Sub | BinOp::Xor => 4,
            BinOp::Mod => 5,
        }
    }
}

/// Node field projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Value,
    Next,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Value => write!(f, "value"),
            Field::Next => write!(f, "next"),
        }
    }
}

/// The expression language. `Shift(e, x)` is the address shift `[e]x`:
/// the location `x` shifted by the amount `e`. Only a shift amount of 0 is
/// given meaning; `[0]x` evaluates to `x` itself.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Lit(Value),
    Var(VarName),
    Shift(Box<Expr>, VarName),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Node(Box<Expr>, Box<Expr>),
    Field(Box<Expr>, Field),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("address shift by nonzero amount {0} is not supported")]
    NonzeroShift(i64),
    #[error("projection .{field} applied to non-node value {value}")]
    BadProjection { field: Field, value: Value },
    #[error("type error evaluating `{0}`")]
    Type(String),
}

/// Local-state valuation used for substitution during evaluation.
pub type Valuation = BTreeMap<VarName, Value>;

/// Set of local variable base names; everything outside it is shared.
pub type Scope = BTreeSet<String>;

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Lit(Value::Int(n))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Lit(Value::Bool(b))
    }

    pub fn var(v: VarName) -> Expr {
        Expr::Var(v)
    }

    pub fn name(s: &str) -> Expr {
        Expr::Var(VarName::plain(s))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnaryOp::Not, Box::new(e))
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Expr::Lit(v) => Some(v),
            _ => None,
        }
    }

    /// All variables syntactically occurring in the expression, including
    /// shift amounts, index expressions, and the shifted base itself.
    pub fn free_vars(&self) -> BTreeSet<VarName> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VarName>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                if let Some(ix) = &v.index {
                    ix.collect_vars(out);
                }
                out.insert(v.clone());
            }
            Expr::Shift(amount, base) => {
                amount.collect_vars(out);
                if let Some(ix) = &base.index {
                    ix.collect_vars(out);
                }
                out.insert(base.clone());
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Node(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Field(e, _) => e.collect_vars(out),
        }
    }

    /// Whether variable `x` occurs free (by base-name aliasing for indexed
    /// families: touching `heap[r]` counts as touching every `heap[_]`).
    pub fn mentions(&self, x: &VarName) -> bool {
        self.free_vars().iter().any(|v| v.may_alias(x))
    }

    pub fn shared_vars(&self, locals: &Scope) -> BTreeSet<VarName> {
        self.free_vars()
            .into_iter()
            .filter(|v| !locals.contains(&v.base))
            .collect()
    }

    pub fn has_shared_vars(&self, locals: &Scope) -> bool {
        self.free_vars().iter().any(|v| !locals.contains(&v.base))
    }
}

/// Free and shared variable sets of `e`. Shared is free restricted to the
/// names outside the local scope.
pub fn variable_sets(e: &Expr, locals: &Scope) -> (BTreeSet<VarName>, BTreeSet<VarName>) {
    let free = e.free_vars();
    let shared = free
        .iter()
        .filter(|v| !locals.contains(&v.base))
        .cloned()
        .collect();
    (free, shared)
}

/// Syntactic replacement of `x` by `f` in `e`, including inside shift
/// amounts and index expressions. The base of an address shift (or of an
/// indexed name) is renamed only when `f` is itself a plain variable;
/// otherwise the base stays untouched (addresses are names, not values).
pub fn substitute(e: &Expr, x: &VarName, f: &Expr) -> Expr {
    match e {
        Expr::Lit(_) => e.clone(),
        Expr::Var(v) => {
            let v2 = substitute_name(v, x, f);
            if v2 == *x && v2.index.is_none() {
                // exact occurrence in value position
                f.clone()
            } else if v == x {
                f.clone()
            } else {
                Expr::Var(v2)
            }
        }
        Expr::Shift(amount, base) => {
            let amount = substitute(amount, x, f);
            let base = substitute_base(base, x, f);
            Expr::Shift(Box::new(amount), base)
        }
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(substitute(a, x, f))),
        Expr::Binary(op, a, b) => Expr::Binary(
            *op,
            Box::new(substitute(a, x, f)),
            Box::new(substitute(b, x, f)),
        ),
        Expr::Node(a, b) => Expr::Node(
            Box::new(substitute(a, x, f)),
            Box::new(substitute(b, x, f)),
        ),
        Expr::Field(a, fld) => Expr::Field(Box::new(substitute(a, x, f)), *fld),
    }
}

fn substitute_name(v: &VarName, x: &VarName, f: &Expr) -> VarName {
    match &v.index {
        None => v.clone(),
        Some(ix) => VarName {
            base: v.base.clone(),
            index: Some(Box::new(substitute(ix, x, f))),
        },
    }
}

fn substitute_base(base: &VarName, x: &VarName, f: &Expr) -> VarName {
    let base = substitute_name(base, x, f);
    if base.base == x.base && x.index.is_none() && base.index.is_none() {
        if let Expr::Var(y) = f {
            return y.clone();
        }
    }
    base
}

/// Partially evaluate `e` under valuation `v`: substitute the bindings,
/// fold every all-literal subterm, and rewrite an address shift whose
/// amount folds to 0 into its base variable. Returns a literal when the
/// result is closed. A fully evaluated nonzero shift amount and an
/// ill-typed closed subterm are errors.
pub fn evaluate(e: &Expr, v: &Valuation) -> Result<Expr, EvalError> {
    match e {
        Expr::Lit(_) => Ok(e.clone()),
        Expr::Var(name) => {
            let name = eval_varname(name, v)?;
            if let Some(val) = v.get(&name) {
                Ok(Expr::Lit(val.clone()))
            } else {
                Ok(Expr::Var(name))
            }
        }
        Expr::Shift(amount, base) => {
            let amount = evaluate(amount, v)?;
            let base = eval_varname(base, v)?;
            match amount.as_value() {
                Some(Value::Int(0)) => evaluate(&Expr::Var(base), v),
                Some(Value::Int(n)) => Err(EvalError::NonzeroShift(*n)),
                Some(other) => Err(EvalError::Type(format!("[{other}]{base}"))),
                None => Ok(Expr::Shift(Box::new(amount), base)),
            }
        }
        Expr::Unary(op, a) => {
            let a = evaluate(a, v)?;
            match (op, a.as_value()) {
                (UnaryOp::Neg, Some(Value::Int(n))) => Ok(Expr::int(-n)),
                (UnaryOp::Not, Some(Value::Bool(b))) => Ok(Expr::bool(!b)),
                (_, Some(other)) => Err(EvalError::Type(format!("{op:?} {other}"))),
                (_, None) => Ok(Expr::Unary(*op, Box::new(a))),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = evaluate(a, v)?;
            // conjunction and disjunction are left-biased: a decided left
            // side absorbs the right without evaluating it
            match (op, a.as_value()) {
                (BinOp::And, Some(Value::Bool(false))) => return Ok(Expr::bool(false)),
                (BinOp::And, Some(Value::Bool(true))) => return evaluate(b, v),
                (BinOp::Or, Some(Value::Bool(true))) => return Ok(Expr::bool(true)),
                (BinOp::Or, Some(Value::Bool(false))) => return evaluate(b, v),
                _ => {}
            }
            let b = evaluate(b, v)?;
            match (a.as_value(), b.as_value()) {
                (Some(x), Some(y)) => fold_binary(*op, x, y).map(Expr::Lit),
                _ => Ok(Expr::Binary(*op, Box::new(a), Box::new(b))),
            }
        }
        Expr::Node(a, b) => {
            let a = evaluate(a, v)?;
            let b = evaluate(b, v)?;
            match (a.as_value(), b.as_value()) {
                (Some(x), Some(y)) => Ok(Expr::Lit(Value::Node(
                    Box::new(x.clone()),
                    Box::new(y.clone()),
                ))),
                _ => Ok(Expr::Node(Box::new(a), Box::new(b))),
            }
        }
        Expr::Field(a, fld) => {
            let a = evaluate(a, v)?;
            match a.as_value() {
                Some(Value::Node(val, next)) => Ok(Expr::Lit(match fld {
                    Field::Value => (**val).clone(),
                    Field::Next => (**next).clone(),
                })),
                Some(other) => Err(EvalError::BadProjection {
                    field: *fld,
                    value: other.clone(),
                }),
                None => Ok(Expr::Field(Box::new(a), *fld)),
            }
        }
    }
}

pub(crate) fn eval_varname(name: &VarName, v: &Valuation) -> Result<VarName, EvalError> {
    match &name.index {
        None => Ok(name.clone()),
        Some(ix) => Ok(VarName {
            base: name.base.clone(),
            index: Some(Box::new(evaluate(ix, v)?)),
        }),
    }
}

fn fold_binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, EvalError> {
    use BinOp::*;
    use Value::*;
    let type_err = || EvalError::Type(format!("{a} {} {b}", op.symbol()));
    Ok(match (op, a, b) {
        (Add, Int(x), Int(y)) => Int(x + y),
        (Sub, Int(x), Int(y)) => Int(x - y),
        (Xor, Int(x), Int(y)) => Int(x ^ y),
        (Mod, Int(x), Int(y)) => {
            if *y == 0 {
                return Err(type_err());
            }
            Int(x.rem_euclid(*y))
        }
        (Eq, x, y) => Bool(x == y),
        (Ne, x, y) => Bool(x != y),
        (Lt, Int(x), Int(y)) => Bool(x < y),
        (Le, Int(x), Int(y)) => Bool(x <= y),
        (And, Bool(x), Bool(y)) => Bool(*x && *y),
        (Or, Bool(x), Bool(y)) => Bool(*x || *y),
        _ => return Err(type_err()),
    })
}

/// Constant folding with no valuation, tolerating subterms that cannot be
/// folded or that would be evaluation errors (e.g. an unresolved or nonzero
/// shift). Used to normalise actions after forwarding, where a shift whose
/// amount folds to 0 must lose its shift and change its reordering
/// behaviour.
pub fn simplify(e: &Expr) -> Expr {
    evaluate_tolerant(e)
}

fn evaluate_tolerant(e: &Expr) -> Expr {
    match e {
        Expr::Lit(_) | Expr::Var(_) => match e {
            Expr::Var(v) => Expr::Var(simplify_name(v)),
            _ => e.clone(),
        },
        Expr::Shift(amount, base) => {
            let amount = evaluate_tolerant(amount);
            let base = simplify_name(base);
            match amount.as_value() {
                Some(Value::Int(0)) => Expr::Var(base),
                _ => Expr::Shift(Box::new(amount), base),
            }
        }
        Expr::Unary(op, a) => {
            let a = evaluate_tolerant(a);
            match (op, a.as_value()) {
                (UnaryOp::Neg, Some(Value::Int(n))) => Expr::int(-n),
                (UnaryOp::Not, Some(Value::Bool(b))) => Expr::bool(!b),
                _ => Expr::Unary(*op, Box::new(a)),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = evaluate_tolerant(a);
            match (op, a.as_value()) {
                (BinOp::And, Some(Value::Bool(false))) => return Expr::bool(false),
                (BinOp::And, Some(Value::Bool(true))) => return evaluate_tolerant(b),
                (BinOp::Or, Some(Value::Bool(true))) => return Expr::bool(true),
                (BinOp::Or, Some(Value::Bool(false))) => return evaluate_tolerant(b),
                _ => {}
            }
            let b = evaluate_tolerant(b);
            match (a.as_value(), b.as_value()) {
                (Some(x), Some(y)) => match fold_binary(*op, x, y) {
                    Ok(v) => Expr::Lit(v),
                    Err(_) => Expr::Binary(*op, Box::new(a), Box::new(b)),
                },
                _ => Expr::Binary(*op, Box::new(a), Box::new(b)),
            }
        }
        Expr::Node(a, b) => {
            let a = evaluate_tolerant(a);
            let b = evaluate_tolerant(b);
            match (a.as_value(), b.as_value()) {
                (Some(x), Some(y)) => Expr::Lit(Value::Node(
                    Box::new(x.clone()),
                    Box::new(y.clone()),
                )),
                _ => Expr::Node(Box::new(a), Box::new(b)),
            }
        }
        Expr::Field(a, fld) => {
            let a = evaluate_tolerant(a);
            match a.as_value() {
                Some(Value::Node(val, next)) => Expr::Lit(match fld {
                    Field::Value => (**val).clone(),
                    Field::Next => (**next).clone(),
                }),
                _ => Expr::Field(Box::new(a), *fld),
            }
        }
    }
}

pub(crate) fn simplify_name(v: &VarName) -> VarName {
    match &v.index {
        None => v.clone(),
        Some(ix) => VarName {
            base: v.base.clone(),
            index: Some(Box::new(evaluate_tolerant(ix))),
        },
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Expr {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Shift(amount, base) => write!(f, "[{amount}]{base}"),
            Expr::Unary(op, a) => {
                let sym = match op {
                    UnaryOp::Neg => "-",
                    UnaryOp::Not => "!",
                };
                write!(f, "{sym}")?;
                a.fmt_prec(f, 6)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                if p < min {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                // left-associative: right child needs one level more
                b.fmt_prec(f, p + 1)?;
                if p < min {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Node(a, b) => write!(f, "node({a}, {b})"),
            Expr::Field(a, fld) => {
                a.fmt_prec(f, 7)?;
                write!(f, ".{fld}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope(names: &[&str]) -> Scope {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Brute-force recursive variable collector used as an oracle for the
    /// structured walk in `free_vars`.
    fn collect_oracle(e: &Expr, out: &mut Vec<VarName>) {
        match e {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                if let Some(ix) = &v.index {
                    collect_oracle(ix, out);
                }
                out.push(v.clone());
            }
            Expr::Shift(a, base) => {
                collect_oracle(a, out);
                out.push(base.clone());
            }
            Expr::Unary(_, a) | Expr::Field(a, _) => collect_oracle(a, out),
            Expr::Binary(_, a, b) | Expr::Node(a, b) => {
                collect_oracle(a, out);
                collect_oracle(b, out);
            }
        }
    }

    #[test]
    fn variable_sets_xor_trick() {
        // r1 xor r1 with r1 local
        let e = Expr::bin(BinOp::Xor, Expr::name("r1"), Expr::name("r1"));
        let (free, shared) = variable_sets(&e, &scope(&["r1"]));
        assert_eq!(free, [VarName::plain("r1")].into_iter().collect());
        assert!(shared.is_empty());
    }

    #[test]
    fn variable_sets_literal() {
        let (free, shared) = variable_sets(&Expr::int(5), &scope(&[]));
        assert!(free.is_empty());
        assert!(shared.is_empty());
    }

    #[test]
    fn variable_sets_shifted_load() {
        // [r0 xor r0]z : free {r0, z}, shared {z}
        let e = Expr::Shift(
            Box::new(Expr::bin(BinOp::Xor, Expr::name("r0"), Expr::name("r0"))),
            VarName::plain("z"),
        );
        let (free, shared) = variable_sets(&e, &scope(&["r0"]));
        let mut oracle = Vec::new();
        collect_oracle(&e, &mut oracle);
        let oracle: BTreeSet<_> = oracle.into_iter().collect();
        assert_eq!(free, oracle);
        assert_eq!(
            free,
            [VarName::plain("r0"), VarName::plain("z")].into_iter().collect()
        );
        assert_eq!(shared, [VarName::plain("z")].into_iter().collect());
    }

    #[test]
    fn substitute_direct() {
        // (x+1)[x\2] = 2+1
        let e = Expr::bin(BinOp::Add, Expr::name("x"), Expr::int(1));
        let got = substitute(&e, &VarName::plain("x"), &Expr::int(2));
        assert_eq!(got, Expr::bin(BinOp::Add, Expr::int(2), Expr::int(1)));
    }

    #[test]
    fn substitute_absent() {
        let e = Expr::bin(BinOp::Add, Expr::name("y"), Expr::int(1));
        let got = substitute(&e, &VarName::plain("x"), &Expr::int(7));
        assert_eq!(got, e);
    }

    #[test]
    fn substitute_inside_shift_amount_not_base() {
        // [r0 xor r0]z [r0\1] = [1 xor 1]z ; fold happens at evaluation
        let e = Expr::Shift(
            Box::new(Expr::bin(BinOp::Xor, Expr::name("r0"), Expr::name("r0"))),
            VarName::plain("z"),
        );
        let got = substitute(&e, &VarName::plain("r0"), &Expr::int(1));
        assert_eq!(
            got,
            Expr::Shift(
                Box::new(Expr::bin(BinOp::Xor, Expr::int(1), Expr::int(1))),
                VarName::plain("z"),
            )
        );
        // base is renamed only when the replacement is a plain variable
        let renamed = substitute(&e, &VarName::plain("z"), &Expr::name("w"));
        assert_eq!(
            renamed,
            Expr::Shift(
                Box::new(Expr::bin(BinOp::Xor, Expr::name("r0"), Expr::name("r0"))),
                VarName::plain("w"),
            )
        );
        // ... and left untouched otherwise
        let kept = substitute(&e, &VarName::plain("z"), &Expr::int(3));
        assert_eq!(kept, e);
    }

    #[test]
    fn evaluate_closed_boolean() {
        let e = Expr::bin(BinOp::Eq, Expr::name("x"), Expr::int(1));
        let mut v = Valuation::new();
        v.insert(VarName::plain("x"), Value::Int(1));
        assert_eq!(evaluate(&e, &v).unwrap(), Expr::bool(true));
    }

    #[test]
    fn evaluate_zero_shift_is_base() {
        let e = Expr::Shift(Box::new(Expr::int(0)), VarName::plain("x"));
        assert_eq!(evaluate(&e, &Valuation::new()).unwrap(), Expr::name("x"));
    }

    #[test]
    fn evaluate_xor_folds() {
        let e = Expr::bin(BinOp::Xor, Expr::name("r1"), Expr::name("r1"));
        let mut v = Valuation::new();
        v.insert(VarName::plain("r1"), Value::Int(1));
        // oracle: 1 ^ 1 == 0
        assert_eq!(1i64 ^ 1i64, 0);
        assert_eq!(evaluate(&e, &v).unwrap(), Expr::int(0));
    }

    #[test]
    fn evaluate_nonzero_shift_errors() {
        let e = Expr::Shift(Box::new(Expr::int(2)), VarName::plain("x"));
        assert_eq!(
            evaluate(&e, &Valuation::new()),
            Err(EvalError::NonzeroShift(2))
        );
    }

    #[test]
    fn evaluate_projection_type_error() {
        let e = Expr::Field(Box::new(Expr::int(3)), Field::Next);
        assert!(matches!(
            evaluate(&e, &Valuation::new()),
            Err(EvalError::BadProjection { .. })
        ));
    }

    #[test]
    fn evaluate_idempotent_on_output() {
        let mut v = Valuation::new();
        v.insert(VarName::plain("r"), Value::Int(3));
        let e = Expr::bin(
            BinOp::Add,
            Expr::name("r"),
            Expr::bin(BinOp::Add, Expr::name("x"), Expr::int(1)),
        );
        let once = evaluate(&e, &v).unwrap();
        let twice = evaluate(&once, &v).unwrap();
        assert_eq!(once, twice);
    }
}
