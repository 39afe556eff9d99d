//! Runtime values and variable names.

use serde::Serialize;
use std::fmt;

use crate::expr::Expr;

/// Process identifier. Pid 0 is reserved for the writes that carry the
/// initial values of the shared state.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize,
)]
pub struct Pid(pub u32);

impl Pid {
    pub const INIT: Pid = Pid(0);
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A closed value: integers, booleans, the null marker, and heap node
/// tuples `node(value, next)`. Equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Null,
    Node(Box<Value>, Box<Value>),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_truthy(&self) -> bool {
        matches!(self, Value::Bool(true))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Null => write!(f, "null"),
            Value::Node(v, p) => write!(f, "node({v}, {p})"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(n) => s.serialize_i64(*n),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Null => s.serialize_unit(),
            Value::Node(..) => s.serialize_str(&self.to_string()),
        }
    }
}

/// A variable name: a base identifier plus an optional index expression.
///
/// An indexed name such as `heap[1]` or `tasks[t mod 2]` denotes one
/// location of a family of global locations; two concrete locations are
/// equal iff their base names and fully evaluated indices are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarName {
    pub base: String,
    pub index: Option<Box<Expr>>,
}

impl VarName {
    pub fn plain(base: impl Into<String>) -> Self {
        VarName { base: base.into(), index: None }
    }

    pub fn indexed(base: impl Into<String>, index: Expr) -> Self {
        VarName { base: base.into(), index: Some(Box::new(index)) }
    }

    /// A name is concrete when its index (if any) is a literal, i.e. it
    /// denotes exactly one location.
    pub fn is_concrete(&self) -> bool {
        match &self.index {
            None => true,
            Some(e) => matches!(**e, Expr::Lit(_)),
        }
    }

    /// Whether two names can denote the same location. Distinct bases never
    /// alias; equal bases with two concrete indices alias iff the indices are
    /// equal; an unresolved index is treated as touching the whole family.
    pub fn may_alias(&self, other: &VarName) -> bool {
        if self.base != other.base {
            return false;
        }
        match (&self.index, &other.index) {
            (None, None) => true,
            (Some(a), Some(b)) => match (&**a, &**b) {
                (Expr::Lit(x), Expr::Lit(y)) => x == y,
                _ => true,
            },
            // A plain name and an indexed name share a base only if the
            // program mixes both forms; treat conservatively.
            _ => true,
        }
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.index {
            None => write!(f, "{}", self.base),
            Some(e) => write!(f, "{}[{}]", self.base, e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_equality_is_structural() {
        let a = Value::Node(Box::new(Value::Int(1)), Box::new(Value::Null));
        let b = Value::Node(Box::new(Value::Int(1)), Box::new(Value::Null));
        assert_eq!(a, b);
        assert_ne!(a, Value::Node(Box::new(Value::Int(2)), Box::new(Value::Null)));
    }

    #[test]
    fn alias_rules() {
        let h1 = VarName::indexed("heap", Expr::int(1));
        let h2 = VarName::indexed("heap", Expr::int(2));
        let hx = VarName::indexed("heap", Expr::var(VarName::plain("r")));
        assert!(!h1.may_alias(&h2));
        assert!(h1.may_alias(&h1.clone()));
        // unresolved index conservatively touches the whole family
        assert!(h1.may_alias(&hx));
        assert!(!h1.may_alias(&VarName::plain("tasks")));
    }
}
