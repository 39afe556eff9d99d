//! Actions (the instruction alphabet) and trace labels.

use std::fmt;

use crate::expr::{simplify, simplify_name, substitute, Expr, Scope};
use crate::value::{Pid, Value, VarName};

/// Fence flavours. `Full` blocks everything; `Store` orders shared stores
/// only; `Ctrl` stops later loads from passing an earlier branch point.
/// `StoreGate`, `LoadGate` and `Eieio` are the lightweight-fence family
/// (`lwfence` is the pair storegate;loadgate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FenceKind {
    Full,
    Store,
    Ctrl,
    StoreGate,
    LoadGate,
    Eieio,
}

impl FenceKind {
    pub fn keyword(self) -> &'static str {
        match self {
            FenceKind::Full => "fence",
            FenceKind::Store => "fence.st",
            FenceKind::Ctrl => "cfence",
            FenceKind::StoreGate => "storegate",
            FenceKind::LoadGate => "loadgate",
            FenceKind::Eieio => "eieio",
        }
    }

    pub fn is_gate(self) -> bool {
        matches!(self, FenceKind::StoreGate | FenceKind::LoadGate | FenceKind::Eieio)
    }
}

impl fmt::Display for FenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.keyword())
    }
}

/// Assignment target: a named location, or an address shift `[e]x`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Var(VarName),
    Shifted(Expr, VarName),
}

impl Target {
    pub fn base(&self) -> &VarName {
        match self {
            Target::Var(v) => v,
            Target::Shifted(_, v) => v,
        }
    }

    /// Variables an instruction's target mentions: the base plus everything
    /// in the shift amount or index expression.
    pub fn vars(&self) -> std::collections::BTreeSet<VarName> {
        match self {
            Target::Var(v) => {
                let mut s = match &v.index {
                    Some(ix) => ix.free_vars(),
                    None => Default::default(),
                };
                s.insert(v.clone());
                s
            }
            Target::Shifted(amount, base) => {
                let mut s = amount.free_vars();
                s.insert(base.clone());
                s
            }
        }
    }

    pub fn may_alias(&self, other: &Target) -> bool {
        match (self, other) {
            (Target::Var(a), Target::Var(b)) => a.may_alias(b),
            // an unresolved shift touches its whole base family
            _ => self.base().base == other.base().base,
        }
    }

    pub fn is_shifted(&self) -> bool {
        matches!(self, Target::Shifted(..))
    }

    pub fn is_local(&self, locals: &Scope) -> bool {
        locals.contains(&self.base().base)
    }

    fn simplify(&self) -> Target {
        match self {
            Target::Var(v) => Target::Var(simplify_name(v)),
            Target::Shifted(amount, base) => {
                let amount = simplify(amount);
                if let Some(Value::Int(0)) = amount.as_value() {
                    Target::Var(simplify_name(base))
                } else {
                    Target::Shifted(amount, simplify_name(base))
                }
            }
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Var(v) => write!(f, "{v}"),
            Target::Shifted(amount, base) => write!(f, "[{amount}]{base}"),
        }
    }
}

/// An instruction: an update, a guard, a fence, or an atomic sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Update(Target, Expr),
    Guard(Expr),
    Fence(FenceKind),
    Atomic(Vec<Action>),
}

impl Action {
    pub fn update(name: &str, e: Expr) -> Action {
        Action::Update(Target::Var(VarName::plain(name)), e)
    }

    pub fn guard(e: Expr) -> Action {
        Action::Guard(e)
    }

    /// Fold literal subterms in the action's expressions, dropping
    /// zero-resolved address shifts. Applied after forwarding so the
    /// reordering rules see the resolved instruction shape.
    pub fn simplify(&self) -> Action {
        match self {
            Action::Update(t, e) => Action::Update(t.simplify(), simplify(e)),
            Action::Guard(e) => Action::Guard(simplify(e)),
            Action::Fence(k) => Action::Fence(*k),
            Action::Atomic(body) => {
                Action::Atomic(body.iter().map(Action::simplify).collect())
            }
        }
    }

    /// Substitute `x := f` into the action's expression positions (update
    /// right-hand sides and guard conditions, including shift amounts and
    /// indices there). Targets of updates are never rewritten.
    pub fn subst_into_exprs(&self, x: &VarName, f: &Expr) -> Action {
        match self {
            Action::Update(t, e) => Action::Update(t.clone(), substitute(e, x, f)),
            Action::Guard(e) => Action::Guard(substitute(e, x, f)),
            Action::Fence(k) => Action::Fence(*k),
            Action::Atomic(body) => {
                // stop substituting past an element that reassigns x
                let mut out = Vec::with_capacity(body.len());
                let mut live = true;
                for a in body {
                    if live {
                        out.push(a.subst_into_exprs(x, f));
                        if let Action::Update(t, _) = a {
                            if t.base() == x {
                                live = false;
                            }
                        }
                    } else {
                        out.push(a.clone());
                    }
                }
                Action::Atomic(out)
            }
        }
    }

    pub fn is_fence(&self, kind: FenceKind) -> bool {
        matches!(self, Action::Fence(k) if *k == kind)
    }

    pub fn gate_fences(&self) -> bool {
        match self {
            Action::Fence(k) => k.is_gate(),
            Action::Atomic(body) => body.iter().any(Action::gate_fences),
            _ => false,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Update(t, e) => write!(f, "{t} := {e}"),
            Action::Guard(e) => write!(f, "guard({e})"),
            Action::Fence(k) => write!(f, "{k}"),
            Action::Atomic(body) => {
                write!(f, "atomic {{ ")?;
                for a in body {
                    write!(f, "{a}; ")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Observable content of a transition after the local state has been
/// substituted away. Store expressions may still mention globals; those are
/// resolved at the storage boundary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Payload {
    Store(VarName, Expr),
    Read(VarName, Value),
    Guard(Expr),
    Fence(FenceKind),
    Atomic(Vec<Payload>),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Store(x, e) => write!(f, "{x} := {e}"),
            Payload::Read(x, v) => write!(f, "r({x}, {v})"),
            Payload::Guard(e) => write!(f, "guard({e})"),
            Payload::Fence(k) => write!(f, "{k}"),
            Payload::Atomic(ps) => {
                write!(f, "<")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ">")
            }
        }
    }
}

/// Trace label: a silent step, or a pid-tagged payload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Tau,
    Tagged(Pid, Payload),
}

impl Label {
    pub fn is_tau(&self) -> bool {
        matches!(self, Label::Tau)
    }

    /// Fence observations carry no storage-visible content of their own.
    pub fn is_fence_obs(&self) -> bool {
        matches!(self, Label::Tagged(_, Payload::Fence(_)))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Tau => write!(f, "tau"),
            Label::Tagged(pid, p) => write!(f, "{pid}: {p}"),
        }
    }
}
