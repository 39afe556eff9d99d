//! The pair-wise reordering relation and forwarding (bypassing).
//!
//! `reorderable(arch, a, b)` decides whether instruction `b` may be
//! reordered before instruction `a`; `forward(a, b)` substitutes the effect
//! of an earlier assignment into `b` before that decision is made. Both are
//! pure syntactic functions on actions; locality of a variable is supplied
//! by the enclosing scope.

use std::collections::BTreeSet;

use crate::action::{Action, FenceKind, Target};
use crate::arch::{ArchKind, Architecture};
use crate::expr::{Expr, Scope};
use crate::value::VarName;

/// Forwarding. If `alpha` is an update `y := f` whose right-hand side has
/// no shared variables, replaces `y` by `f` throughout `beta`'s expressions
/// (update right-hand sides, guard conditions, shift amounts and indices)
/// and folds constants, so a shift amount resolved to 0 drops its shift.
/// Forwarding from an atomic sequence applies its elements so that the
/// latest assignment to a variable wins. Everything else forwards
/// unchanged.
pub fn forward(alpha: &Action, beta: &Action, locals: &Scope) -> Action {
    match alpha {
        Action::Update(Target::Var(y), f) if !f.has_shared_vars(locals) => {
            beta.subst_into_exprs(y, f).simplify()
        }
        Action::Atomic(body) => {
            let mut out = beta.clone();
            for a in body.iter().rev() {
                out = forward(a, &out, locals);
            }
            out
        }
        _ => beta.clone(),
    }
}

/// Whether `beta` may be reordered before `alpha` under `arch`.
pub fn reorderable(arch: &Architecture, alpha: &Action, beta: &Action, locals: &Scope) -> bool {
    match arch.kind {
        ArchKind::Sc => false,
        ArchKind::Tso => reorderable_seq(alpha, beta, locals, tso_pair),
        ArchKind::ArmMca | ArchKind::ArmNmca => {
            reorderable_seq(alpha, beta, locals, arm_pair)
        }
        ArchKind::Power => reorderable_seq(alpha, beta, locals, power_pair),
    }
}

/// Rule (9b)'s side condition in one step: forward `alpha` into `beta`,
/// then ask whether the result may be reordered before `alpha`. Returns the
/// forwarded action when it may.
pub fn may_promote(
    arch: &Architecture,
    alpha: &Action,
    beta: &Action,
    locals: &Scope,
) -> Option<Action> {
    let fwd = forward(alpha, beta, locals);
    if reorderable(arch, alpha, &fwd, locals) {
        Some(fwd)
    } else {
        None
    }
}

/// Atomic sequences reorder recursively: a sequence passes an instruction
/// iff every element does, in both directions.
fn reorderable_seq(
    alpha: &Action,
    beta: &Action,
    locals: &Scope,
    pair: fn(&Action, &Action, &Scope) -> bool,
) -> bool {
    match (alpha, beta) {
        (Action::Atomic(body), _) => body.iter().all(|a| reorderable_seq(a, beta, locals, pair)),
        (_, Action::Atomic(body)) => body.iter().all(|b| reorderable_seq(alpha, b, locals, pair)),
        _ => pair(alpha, beta, locals),
    }
}

fn target_vars(t: &Target) -> BTreeSet<VarName> {
    t.vars()
}

fn vars_disjoint(a: &BTreeSet<VarName>, b: &BTreeSet<VarName>) -> bool {
    a.iter().all(|x| b.iter().all(|y| !x.may_alias(y)))
}

/// Shared variables read by an instruction: the shared variables of its
/// expression plus those of its target's shift amount or index.
fn shared_reads(a: &Action, locals: &Scope) -> BTreeSet<VarName> {
    match a {
        Action::Update(t, e) => {
            let mut s = e.shared_vars(locals);
            // shift amounts and index expressions of the target are reads
            for v in target_vars(t) {
                if !locals.contains(&v.base) && v != *t.base() {
                    s.insert(v);
                }
            }
            s
        }
        Action::Guard(e) => e.shared_vars(locals),
        _ => BTreeSet::new(),
    }
}

fn shared_reads_disjoint(a: &Action, b: &Action, locals: &Scope) -> bool {
    vars_disjoint(&shared_reads(a, locals), &shared_reads(b, locals))
}

/// The update/update provisos shared by every non-SC architecture:
/// (i) distinct targets, (ii) the earlier target is not free in the later
/// expression, (iii) the later target is not free in the earlier
/// expression, (iv) the shared reads are disjoint (coherence per location).
/// Targets contribute their base together with any shift or index
/// variables.
fn update_update(t1: &Target, e1: &Expr, t2: &Target, e2: &Expr, locals: &Scope) -> bool {
    let v1 = target_vars(t1);
    let v2 = target_vars(t2);
    if t1.may_alias(t2) {
        return false;
    }
    // target variables of one side must not be free in the other side's expression
    if e2.free_vars().iter().any(|v| v1.iter().any(|t| t.may_alias(v))) {
        return false;
    }
    if e1.free_vars().iter().any(|v| v2.iter().any(|t| t.may_alias(v))) {
        return false;
    }
    let a1 = Action::Update(t1.clone(), e1.clone());
    let a2 = Action::Update(t2.clone(), e2.clone());
    shared_reads_disjoint(&a1, &a2, locals)
}

/// TSO: loads (and register operations) may come before independent
/// stores; fences and guards block everything in both directions.
fn tso_pair(alpha: &Action, beta: &Action, locals: &Scope) -> bool {
    use Action::*;
    match (alpha, beta) {
        (Fence(_), _) | (_, Fence(_)) => false,
        (Guard(_), _) | (_, Guard(_)) => false,
        (Update(t1, e1), Update(t2, e2)) => {
            t2.is_local(locals)
                && !t1.may_alias(t2)
                && update_update(t1, e1, t2, e2, locals)
                && !e1.has_shared_vars(locals)
                // target index reads count as loads too
                && shared_reads(alpha, locals).is_empty()
        }
        // atomic sequences were unfolded by the caller
        _ => false,
    }
}

/// A store for gate classification: an update to a shared location.
fn is_store(a: &Action, locals: &Scope) -> bool {
    matches!(a, Action::Update(t, _) if !t.is_local(locals))
}

/// A load for gate classification: an update of a local whose expression
/// mentions a shared variable.
fn is_load(a: &Action, locals: &Scope) -> bool {
    match a {
        Action::Update(t, e) => t.is_local(locals) && e.has_shared_vars(locals),
        _ => false,
    }
}

/// ARM: everything reorders unless a listed rule forbids it.
fn arm_pair(alpha: &Action, beta: &Action, locals: &Scope) -> bool {
    use Action::*;
    match (alpha, beta) {
        // full fences block both directions
        (Fence(FenceKind::Full), _) | (_, Fence(FenceKind::Full)) => false,
        // store fences keep shared stores ordered, in both directions
        (Update(t, _), Fence(FenceKind::Store)) if !t.is_local(locals) => false,
        (Fence(FenceKind::Store), Update(t, _)) if !t.is_local(locals) => false,
        // a control fence stays after branch points...
        (Guard(_), Fence(FenceKind::Ctrl)) => false,
        // ...and later local-target updates (loads) stay after it
        (Fence(FenceKind::Ctrl), Update(t, _)) if t.is_local(locals) => false,
        // guards reorder when their shared reads are disjoint
        (Guard(b1), Guard(b2)) => {
            vars_disjoint(&b1.shared_vars(locals), &b2.shared_vars(locals))
        }
        // speculation must not modify the shared state
        (Guard(_), Update(t, _)) if !t.is_local(locals) => false,
        // a local update passes a guard it does not influence
        (Guard(b), Update(t, e)) => {
            debug_assert!(t.is_local(locals));
            !target_vars(t).iter().any(|v| b.mentions(v))
                && vars_disjoint(&e.shared_vars(locals), &b.shared_vars(locals))
        }
        // a guard passes an update that does not influence it
        (Update(t, e), Guard(b)) => {
            !target_vars(t).iter().any(|v| b.mentions(v))
                && vars_disjoint(&e.shared_vars(locals), &b.shared_vars(locals))
        }
        (Update(t1, e1), Update(t2, e2)) => {
            // an address-shifted store never lets a later shared store pass
            if t1.is_shifted() && !t1.is_local(locals) && !t2.is_local(locals) {
                return false;
            }
            update_update(t1, e1, t2, e2, locals)
        }
        _ => true,
    }
}

/// POWER: the ARM rules plus the gate instructions and eieio. Gates allow
/// exactly two movements (a storegate passes earlier stores, a load
/// passes an earlier loadgate) and every other pair involving a gate
/// stays in order. Eieio is a two-sided barrier on stores only.
fn power_pair(alpha: &Action, beta: &Action, locals: &Scope) -> bool {
    use Action::*;
    use FenceKind::*;
    match (alpha, beta) {
        // full fence dominates, as on ARM
        (Fence(Full), _) | (_, Fence(Full)) => false,
        (_, Fence(StoreGate)) => is_store(alpha, locals),
        (Fence(LoadGate), _) => is_load(beta, locals),
        (Fence(StoreGate), _) | (_, Fence(LoadGate)) => false,
        (Fence(Eieio), b) if is_store(b, locals) => false,
        (a, Fence(Eieio)) if is_store(a, locals) => false,
        (Fence(Eieio), Fence(Eieio)) => false,
        _ => arm_pair(alpha, beta, locals),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::BinOp;

    fn scope(names: &[&str]) -> Scope {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn upd(name: &str, e: Expr) -> Action {
        Action::update(name, e)
    }

    #[test]
    fn forward_register_into_store() {
        // forward(r := 1, x := r) = x := 1
        let s = scope(&["r"]);
        let got = forward(&upd("r", Expr::int(1)), &upd("x", Expr::name("r")), &s);
        assert_eq!(got, upd("x", Expr::int(1)));
    }

    #[test]
    fn forward_store_into_load() {
        // forward(x := 1, r := x) = r := 1 : the load becomes a register write
        let s = scope(&["r"]);
        let got = forward(&upd("x", Expr::int(1)), &upd("r", Expr::name("x")), &s);
        assert_eq!(got, upd("r", Expr::int(1)));
    }

    #[test]
    fn forward_blocked_by_shared_rhs() {
        // z shared: forwarding would introduce another load of z
        let s = scope(&["r", "r2"]);
        let alpha = upd("r", Expr::name("z"));
        let beta = upd("r2", Expr::name("r"));
        assert_eq!(forward(&alpha, &beta, &s), beta);
    }

    #[test]
    fn forward_resolves_shift_amount() {
        // forward(r0 := 0, r2 := [r0 xor r0]z) folds the shift away
        let s = scope(&["r0", "r2"]);
        let alpha = upd("r0", Expr::int(0));
        let beta = Action::Update(
            Target::Var(VarName::plain("r2")),
            Expr::Shift(
                Box::new(Expr::bin(BinOp::Xor, Expr::name("r0"), Expr::name("r0"))),
                VarName::plain("z"),
            ),
        );
        assert_eq!(forward(&alpha, &beta, &s), upd("r2", Expr::name("z")));
    }

    #[test]
    fn forward_from_atomic_latest_assignment_wins() {
        let s = scope(&["r"]);
        let alpha = Action::Atomic(vec![
            upd("r", Expr::int(1)),
            upd("x", Expr::name("r")),
        ]);
        let beta = upd("r2", Expr::name("x"));
        // x := r forwards first (giving r2 := r), then r := 1 resolves it
        assert_eq!(forward(&alpha, &beta, &scope(&["r", "r2"])), upd("r2", Expr::int(1)));
        let _ = s;
    }

    #[test]
    fn sc_reorders_nothing() {
        let s = scope(&["r"]);
        let arch = Architecture::sc();
        let a = upd("x", Expr::int(1));
        let b = upd("r", Expr::name("y"));
        assert!(!reorderable(&arch, &a, &b, &s));
        assert!(!reorderable(&arch, &b, &a, &s));
    }

    #[test]
    fn tso_load_passes_store() {
        let s = scope(&["r"]);
        assert!(reorderable(
            &Architecture::tso(),
            &upd("x", Expr::int(1)),
            &upd("r", Expr::name("y")),
            &s
        ));
    }

    #[test]
    fn tso_blocks_everything_else() {
        let s = scope(&["r", "r2"]);
        let tso = Architecture::tso();
        // store does not pass store
        assert!(!reorderable(&tso, &upd("x", Expr::int(1)), &upd("y", Expr::int(1)), &s));
        // load does not pass load
        assert!(!reorderable(&tso, &upd("r", Expr::name("x")), &upd("r2", Expr::name("y")), &s));
        // same-register updates stay ordered
        assert!(!reorderable(&tso, &upd("r", Expr::int(1)), &upd("r", Expr::int(2)), &s));
        // guards block both ways
        let g = Action::guard(Expr::bin(BinOp::Eq, Expr::name("r"), Expr::int(0)));
        assert!(!reorderable(&tso, &g, &upd("r2", Expr::int(1)), &s));
        assert!(!reorderable(&tso, &upd("r2", Expr::int(1)), &g, &s));
        // fences block both ways
        let f = Action::Fence(FenceKind::Full);
        assert!(!reorderable(&tso, &f, &upd("r", Expr::int(1)), &s));
        assert!(!reorderable(&tso, &upd("r", Expr::int(1)), &f, &s));
    }

    #[test]
    fn arm_same_location_loads_stay_ordered() {
        let s = scope(&["r1", "r2"]);
        assert!(!reorderable(
            &Architecture::arm_nmca(),
            &upd("r1", Expr::name("x")),
            &upd("r2", Expr::name("x")),
            &s
        ));
    }

    #[test]
    fn arm_guard_rules() {
        let s = scope(&["r", "r2"]);
        let arm = Architecture::arm_nmca();
        let g = Action::guard(Expr::bin(BinOp::Eq, Expr::name("r"), Expr::int(0)));
        // shared store never passes a guard
        assert!(!reorderable(&arm, &g, &upd("x", Expr::int(1)), &s));
        // independent local update does
        assert!(reorderable(&arm, &g, &upd("r2", Expr::name("y")), &s));
        // but not one feeding the guard
        assert!(!reorderable(&arm, &g, &upd("r", Expr::int(1)), &s));
        // guard passes an update that does not influence it
        assert!(reorderable(&arm, &upd("x", Expr::int(1)), &g, &s));
        assert!(!reorderable(&arm, &upd("r", Expr::int(1)), &g, &s));
        // guards with shared reads of the same variable stay ordered
        let g1 = Action::guard(Expr::bin(BinOp::Eq, Expr::name("x"), Expr::int(0)));
        let g2 = Action::guard(Expr::bin(BinOp::Eq, Expr::name("x"), Expr::int(1)));
        let g3 = Action::guard(Expr::bin(BinOp::Eq, Expr::name("y"), Expr::int(1)));
        assert!(!reorderable(&arm, &g1, &g2, &s));
        assert!(reorderable(&arm, &g1, &g3, &s));
    }

    #[test]
    fn arm_cfence_blocks_loads_only() {
        let s = scope(&["r"]);
        let arm = Architecture::arm_nmca();
        let cf = Action::Fence(FenceKind::Ctrl);
        let g = Action::guard(Expr::bin(BinOp::Eq, Expr::name("r"), Expr::int(0)));
        assert!(!reorderable(&arm, &g, &cf, &s));
        assert!(!reorderable(&arm, &cf, &upd("r", Expr::name("x")), &s));
        // stores pass a control fence
        assert!(reorderable(&arm, &cf, &upd("x", Expr::int(1)), &s));
        // and a control fence passes earlier stores and loads
        assert!(reorderable(&arm, &upd("x", Expr::int(1)), &cf, &s));
        assert!(reorderable(&arm, &upd("r", Expr::name("x")), &cf, &s));
    }

    #[test]
    fn arm_store_fence_orders_stores() {
        let s = scope(&["r"]);
        let arm = Architecture::arm_nmca();
        let sf = Action::Fence(FenceKind::Store);
        assert!(!reorderable(&arm, &upd("x", Expr::int(1)), &sf, &s));
        assert!(!reorderable(&arm, &sf, &upd("x", Expr::int(1)), &s));
        // loads pass it freely
        assert!(reorderable(&arm, &sf, &upd("r", Expr::name("x")), &s));
        assert!(reorderable(&arm, &upd("r", Expr::name("x")), &sf, &s));
    }

    #[test]
    fn arm_shifted_store_blocks_later_shared_stores() {
        let s = scope(&["r"]);
        let arm = Architecture::arm_nmca();
        let shifted = Action::Update(
            Target::Shifted(Expr::name("r"), VarName::plain("x")),
            Expr::int(1),
        );
        assert!(!reorderable(&arm, &shifted, &upd("y", Expr::int(2)), &s));
        // local updates still pass
        assert!(reorderable(&arm, &shifted, &upd("r2", Expr::int(2)), &scope(&["r", "r2"])));
    }

    #[test]
    fn power_gates() {
        let s = scope(&["r1", "r2"]);
        let power = Architecture::power();
        let sg = Action::Fence(FenceKind::StoreGate);
        let lg = Action::Fence(FenceKind::LoadGate);
        let store = upd("y", Expr::int(1));
        let load = upd("r1", Expr::name("x"));
        // a storegate passes earlier stores
        assert!(reorderable(&power, &store, &sg, &s));
        // loads pass an earlier loadgate
        assert!(reorderable(&power, &lg, &load, &s));
        // everything else involving a gate stays in order
        assert!(!reorderable(&power, &sg, &load, &s));
        assert!(!reorderable(&power, &sg, &store, &s));
        assert!(!reorderable(&power, &load, &sg, &s));
        assert!(!reorderable(&power, &lg, &store, &s));
        assert!(!reorderable(&power, &store, &lg, &s));
        assert!(!reorderable(&power, &load, &lg, &s));
        assert!(!reorderable(&power, &sg, &lg, &s));
        assert!(!reorderable(&power, &lg, &sg, &s));
    }

    #[test]
    fn power_eieio_blocks_stores_only() {
        let s = scope(&["r"]);
        let power = Architecture::power();
        let e = Action::Fence(FenceKind::Eieio);
        let store = upd("x", Expr::int(1));
        let load = upd("r", Expr::name("x"));
        assert!(!reorderable(&power, &e, &store, &s));
        assert!(!reorderable(&power, &store, &e, &s));
        assert!(reorderable(&power, &e, &load, &s));
        assert!(reorderable(&power, &load, &e, &s));
    }

    #[test]
    fn may_promote_tso_forwarding() {
        let s = scope(&["r"]);
        let got = may_promote(
            &Architecture::tso(),
            &upd("x", Expr::int(1)),
            &upd("r", Expr::name("x")),
            &s,
        );
        assert_eq!(got, Some(upd("r", Expr::int(1))));
    }

    #[test]
    fn may_promote_fence_blocks() {
        let s = scope(&["r"]);
        for arch in [Architecture::tso(), Architecture::arm_nmca(), Architecture::power()] {
            let f = Action::Fence(FenceKind::Full);
            assert_eq!(may_promote(&arch, &f, &upd("r", Expr::int(1)), &s), None);
            assert_eq!(may_promote(&arch, &upd("r", Expr::int(1)), &f, &s), None);
        }
    }

    #[test]
    fn may_promote_arm_forwarded_load() {
        let s = scope(&["r4"]);
        let got = may_promote(
            &Architecture::arm_nmca(),
            &upd("z", Expr::int(1)),
            &upd("r4", Expr::name("z")),
            &s,
        );
        assert_eq!(got, Some(upd("r4", Expr::int(1))));
    }

    #[test]
    fn atomic_sequence_recursion() {
        let s = scope(&["r", "head"]);
        let arm = Architecture::arm_nmca();
        // a fenced CAS blocks everything in both directions
        let cas = Action::Atomic(vec![
            Action::guard(Expr::bin(BinOp::Eq, Expr::name("Head"), Expr::name("head"))),
            upd("Head", Expr::name("n")),
            Action::Fence(FenceKind::Full),
        ]);
        assert!(!reorderable(&arm, &cas, &upd("r", Expr::int(1)), &s));
        assert!(!reorderable(&arm, &upd("r", Expr::int(1)), &cas, &s));
        // an unfenced atomic reorders when every element does
        let atomic = Action::Atomic(vec![upd("r", Expr::int(1))]);
        assert!(reorderable(&arm, &upd("x", Expr::int(2)), &atomic, &s));
    }
}
