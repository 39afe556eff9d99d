//! Thread-local small-step semantics: prefixing with reordering, choice,
//! bounded loop unfolding, the locals rules, and the specialised write
//! elimination and load-load speculation rules.

use thiserror::Error;

use crate::action::{Action, FenceKind, Target};
use crate::arch::Architecture;
use crate::command::{seq_compose, Command};
use crate::expr::{evaluate, EvalError, Expr, Scope, UnaryOp, Valuation};
use crate::reorder::may_promote;
use crate::system::Process;
use crate::value::{Value, VarName};

/// Which rule produced a step; kept on steps so witness traces can say how
/// an instruction came to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleTag {
    PrefixExec,
    PrefixPromote,
    TruePrefixExec,
    ChoiceLeft,
    ChoiceRight,
    LoopUnfold,
    LoopExit,
    WriteElim,
    LoadSpec,
}

impl RuleTag {
    pub fn name(self) -> &'static str {
        match self {
            RuleTag::PrefixExec => "exec",
            RuleTag::PrefixPromote => "promote",
            RuleTag::TruePrefixExec => "exec",
            RuleTag::ChoiceLeft => "choice-left",
            RuleTag::ChoiceRight => "choice-right",
            RuleTag::LoopUnfold => "loop-unfold",
            RuleTag::LoopExit => "loop-exit",
            RuleTag::WriteElim => "write-elim",
            RuleTag::LoadSpec => "load-spec",
        }
    }
}

/// A command-level step: an action label (or a silent step) and the
/// residual command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdStep {
    pub label: Option<Action>,
    pub next: Command,
    pub rule: RuleTag,
    pub bound_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Every step derivable from `c` by one rule application.
pub fn command_steps(arch: &Architecture, c: &Command, locals: &Scope) -> Vec<CmdStep> {
    let mut out = Vec::new();
    collect_steps(arch, c, locals, &mut out);
    out
}

fn collect_steps(arch: &Architecture, c: &Command, locals: &Scope, out: &mut Vec<CmdStep>) {
    match c {
        Command::Skip => {}
        Command::TruePrefix(alpha, rest) => {
            out.push(CmdStep {
                label: Some(alpha.clone()),
                next: (**rest).clone(),
                rule: RuleTag::TruePrefixExec,
                bound_hit: false,
            });
        }
        Command::Prefix(alpha, rest) => {
            out.push(CmdStep {
                label: Some(alpha.clone()),
                next: (**rest).clone(),
                rule: RuleTag::PrefixExec,
                bound_hit: false,
            });
            let inner = command_steps(arch, rest, locals);
            for step in &inner {
                match &step.label {
                    None => {
                        if arch.tau_promotes() {
                            out.push(CmdStep {
                                label: None,
                                next: Command::Prefix(
                                    alpha.clone(),
                                    Box::new(step.next.clone()),
                                ),
                                rule: step.rule,
                                bound_hit: step.bound_hit,
                            });
                        }
                    }
                    Some(beta) => {
                        if let Some(promoted) = may_promote(arch, alpha, beta, locals) {
                            out.push(CmdStep {
                                label: Some(promoted),
                                next: Command::Prefix(
                                    alpha.clone(),
                                    Box::new(step.next.clone()),
                                ),
                                rule: RuleTag::PrefixPromote,
                                bound_hit: step.bound_hit,
                            });
                        }
                    }
                }
            }
            if arch.write_elimination {
                write_elimination(alpha, &inner, locals, out);
            }
            if arch.load_speculation {
                load_speculation(alpha, &inner, locals, out);
            }
        }
        Command::Choice(l, r) => {
            out.push(CmdStep {
                label: None,
                next: (**l).clone(),
                rule: RuleTag::ChoiceLeft,
                bound_hit: false,
            });
            out.push(CmdStep {
                label: None,
                next: (**r).clone(),
                rule: RuleTag::ChoiceRight,
                bound_hit: false,
            });
        }
        Command::While { cond, body, budget, cont } => {
            if *budget > 0 {
                let again = Command::While {
                    cond: cond.clone(),
                    body: body.clone(),
                    budget: budget - 1,
                    cont: cont.clone(),
                };
                let enter = Command::prefix(
                    Action::Guard(cond.clone()),
                    seq_compose(body, &again),
                );
                let exit = Command::prefix(
                    Action::Guard(Expr::Unary(UnaryOp::Not, Box::new(cond.clone()))),
                    (**cont).clone(),
                );
                out.push(CmdStep {
                    label: None,
                    next: Command::choice(enter, exit),
                    rule: RuleTag::LoopUnfold,
                    bound_hit: false,
                });
            } else {
                out.push(CmdStep {
                    label: None,
                    next: Command::prefix(
                        Action::Guard(Expr::Unary(UnaryOp::Not, Box::new(cond.clone()))),
                        (**cont).clone(),
                    ),
                    rule: RuleTag::LoopExit,
                    bound_hit: true,
                });
            }
        }
    }
}

/// A later store to the same location may execute in place of the head
/// store, dropping it: locally only the second write is seen, and globally
/// it is as if the second occurred immediately after the first.
fn write_elimination(
    alpha: &Action,
    inner: &[CmdStep],
    locals: &Scope,
    out: &mut Vec<CmdStep>,
) {
    let Action::Update(t1, _) = alpha else { return };
    if t1.is_local(locals) {
        return;
    }
    for step in inner {
        let Some(Action::Update(t2, e2)) = &step.label else { continue };
        if t2.is_local(locals) {
            continue;
        }
        // the locations must be definitely equal and the later value must
        // not depend on the earlier one
        if !definitely_same_location(t1, t2) {
            continue;
        }
        if e2.free_vars().iter().any(|v| v.may_alias(t1.base())) {
            continue;
        }
        out.push(CmdStep {
            label: step.label.clone(),
            next: step.next.clone(),
            rule: RuleTag::WriteElim,
            bound_hit: step.bound_hit,
        });
    }
}

fn definitely_same_location(a: &Target, b: &Target) -> bool {
    match (a, b) {
        (Target::Var(x), Target::Var(y)) => x.is_concrete() && y.is_concrete() && x == y,
        _ => false,
    }
}

/// A later load of `x` may be issued before a pending address-shifted load
/// of `x`, with an equality guard inserted after the pending load so the
/// speculation is discarded if the earlier value would then be read.
fn load_speculation(
    alpha: &Action,
    inner: &[CmdStep],
    locals: &Scope,
    out: &mut Vec<CmdStep>,
) {
    let Action::Update(Target::Var(r1), Expr::Shift(_, x)) = alpha else { return };
    if !locals.contains(&r1.base) || locals.contains(&x.base) {
        return;
    }
    for step in inner {
        let Some(Action::Update(Target::Var(r2), Expr::Var(x2))) = &step.label else {
            continue;
        };
        if !locals.contains(&r2.base) || x2 != x || r2 == r1 {
            continue;
        }
        let check = Action::Guard(Expr::bin(
            crate::expr::BinOp::Eq,
            Expr::Var(r1.clone()),
            Expr::Var(r2.clone()),
        ));
        out.push(CmdStep {
            label: step.label.clone(),
            next: Command::prefix(
                alpha.clone(),
                Command::prefix(check, step.next.clone()),
            ),
            rule: RuleTag::LoadSpec,
            bound_hit: step.bound_hit,
        });
    }
}

/// The observable content of a process-level step, before read values are
/// instantiated against the storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcAction {
    /// Silent: choice resolution, loop unfolding, or a promoted silent step.
    Silent,
    /// A pure-local update, promoted silently with the local store updated.
    Local { dest: VarName, value: Value },
    /// A store to a shared location; the expression (and a still-open
    /// target index) may mention globals, resolved at the storage boundary.
    Store { target: Target, expr: Expr },
    /// An update of a local from an expression over globals. The read
    /// values are free parameters at this level.
    Load { dest: VarName, expr: Expr },
    /// A guard, partially evaluated with respect to the local state.
    Guard { cond: Expr },
    Fence { kind: FenceKind },
    /// An atomic sequence; elements have the outer locals substituted but
    /// may bind and use locals internally.
    Atomic { body: Vec<Action> },
}

/// A process-level step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcStep {
    pub action: ProcAction,
    pub next: Command,
    pub rule: RuleTag,
    pub bound_hit: bool,
    /// Rendering of the command-level action, for witness traces.
    pub note: String,
}

/// Lift the command steps of a process through its local state.
pub fn process_steps(arch: &Architecture, p: &Process) -> Result<Vec<ProcStep>, StepError> {
    let scope = p.scope();
    let mut out = Vec::new();
    for step in command_steps(arch, &p.code, &scope) {
        let note = match &step.label {
            None => format!("{}", step.rule.name()),
            Some(a) => format!("{a}"),
        };
        let action = match &step.label {
            None => ProcAction::Silent,
            Some(a) => match classify(a, &p.locals, &scope)? {
                Some(pa) => pa,
                // a guard that is already false has no step
                None => continue,
            },
        };
        out.push(ProcStep {
            action,
            next: step.next,
            rule: step.rule,
            bound_hit: step.bound_hit,
            note,
        });
    }
    Ok(out)
}

/// Substitute the local state into one action and classify it. Returns
/// `None` for a guard that evaluates to false (no step).
fn classify(
    a: &Action,
    locals: &Valuation,
    scope: &Scope,
) -> Result<Option<ProcAction>, StepError> {
    Ok(match a {
        Action::Update(t, e) => {
            let e = evaluate(e, locals)?;
            let t = subst_target(t, locals)?;
            if t.is_local(scope) {
                let Target::Var(dest) = t else { unreachable!("local targets are plain") };
                match e.as_value() {
                    Some(v) => Some(ProcAction::Local { dest, value: v.clone() }),
                    None => Some(ProcAction::Load { dest, expr: e }),
                }
            } else {
                Some(ProcAction::Store { target: t, expr: e })
            }
        }
        Action::Guard(cond) => {
            let cond = evaluate(cond, locals)?;
            match cond.as_value() {
                Some(Value::Bool(false)) => None,
                _ => Some(ProcAction::Guard { cond }),
            }
        }
        Action::Fence(k) => Some(ProcAction::Fence { kind: *k }),
        Action::Atomic(body) => {
            // substitute the outer locals, but not past an element that
            // rebinds the variable inside the body
            let mut shadowed: Scope = Scope::new();
            let mut subst_body = Vec::with_capacity(body.len());
            for el in body {
                let visible: Valuation = locals
                    .iter()
                    .filter(|(k, _)| !shadowed.contains(&k.base))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                let el2 = subst_action(el, &visible)?;
                if let Action::Update(t, _) = el {
                    if t.is_local(scope) {
                        shadowed.insert(t.base().base.clone());
                    }
                }
                subst_body.push(el2);
            }
            Some(ProcAction::Atomic { body: subst_body })
        }
    })
}

fn subst_action(a: &Action, locals: &Valuation) -> Result<Action, StepError> {
    Ok(match a {
        Action::Update(t, e) => {
            Action::Update(subst_target(t, locals)?, evaluate(e, locals)?)
        }
        Action::Guard(e) => Action::Guard(evaluate(e, locals)?),
        Action::Fence(k) => Action::Fence(*k),
        Action::Atomic(body) => Action::Atomic(
            body.iter()
                .map(|el| subst_action(el, locals))
                .collect::<Result<_, _>>()?,
        ),
    })
}

fn subst_target(t: &Target, locals: &Valuation) -> Result<Target, StepError> {
    match t {
        Target::Var(v) => Ok(Target::Var(crate::expr::eval_varname(v, locals)?)),
        Target::Shifted(amount, base) => {
            let amount = evaluate(amount, locals)?;
            let base = crate::expr::eval_varname(base, locals)?;
            match amount.as_value() {
                Some(Value::Int(0)) => Ok(Target::Var(base)),
                Some(Value::Int(n)) => Err(EvalError::NonzeroShift(*n).into()),
                Some(v) => Err(EvalError::Type(format!("[{v}]{base}")).into()),
                None => Ok(Target::Shifted(amount, base)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::BinOp;
    use crate::value::Pid;

    fn scope(names: &[&str]) -> Scope {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn upd(name: &str, e: Expr) -> Action {
        Action::update(name, e)
    }

    #[test]
    fn prefix_program_order_step_always_present() {
        let c = Command::seq([upd("x", Expr::int(1)), upd("r", Expr::name("y"))]);
        for arch in [Architecture::sc(), Architecture::tso(), Architecture::arm_nmca()] {
            let steps = command_steps(&arch, &c, &scope(&["r"]));
            assert!(steps
                .iter()
                .any(|s| s.label == Some(upd("x", Expr::int(1)))));
        }
    }

    #[test]
    fn sc_prefix_has_exactly_the_program_order_step() {
        let c = Command::prefix(
            upd("x", Expr::int(1)),
            Command::choice(
                Command::seq([upd("r", Expr::name("y"))]),
                Command::Skip,
            ),
        );
        let steps = command_steps(&Architecture::sc(), &c, &scope(&["r"]));
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].rule, RuleTag::PrefixExec);
    }

    #[test]
    fn forwarded_store_step() {
        // (r := 1; x := r; skip) has a step labelled x := 1
        let c = Command::seq([upd("r", Expr::int(1)), upd("x", Expr::name("r"))]);
        let steps = command_steps(&Architecture::arm_nmca(), &c, &scope(&["r"]));
        let labels: Vec<_> = steps.iter().filter_map(|s| s.label.clone()).collect();
        assert!(labels.contains(&upd("x", Expr::int(1))));
        // TSO lets only local-target updates pass a pending instruction, so
        // the store stays behind the register write there
        let steps = command_steps(&Architecture::tso(), &c, &scope(&["r"]));
        let labels: Vec<_> = steps.iter().filter_map(|s| s.label.clone()).collect();
        assert!(!labels.contains(&upd("x", Expr::int(1))));
    }

    #[test]
    fn true_prefix_single_step() {
        let c = Command::true_prefix(
            upd("x", Expr::int(1)),
            Command::seq([upd("r", Expr::name("y"))]),
        );
        let steps = command_steps(&Architecture::arm_nmca(), &c, &scope(&["r"]));
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].label, Some(upd("x", Expr::int(1))));
    }

    #[test]
    fn write_elimination_step() {
        // (x := w; x := v; c) steps with x := v directly to c
        let c = Command::seq([upd("x", Expr::int(7)), upd("x", Expr::int(9))]);
        let steps = command_steps(&Architecture::arm_nmca(), &c, &scope(&[]));
        let elim: Vec<_> = steps.iter().filter(|s| s.rule == RuleTag::WriteElim).collect();
        assert_eq!(elim.len(), 1);
        assert_eq!(elim[0].label, Some(upd("x", Expr::int(9))));
        assert_eq!(elim[0].next, Command::Skip);
        // not under TSO
        let steps = command_steps(&Architecture::tso(), &c, &scope(&[]));
        assert!(steps.iter().all(|s| s.rule != RuleTag::WriteElim));
    }

    #[test]
    fn exhausted_loop_offers_only_exit() {
        let w = Command::While {
            cond: Expr::bin(BinOp::Eq, Expr::name("r"), Expr::int(0)),
            body: Box::new(Command::seq([upd("r", Expr::int(1))])),
            budget: 0,
            cont: Box::new(Command::Skip),
        };
        let steps = command_steps(&Architecture::arm_nmca(), &w, &scope(&["r"]));
        assert_eq!(steps.len(), 1);
        assert!(steps[0].bound_hit);
        match &steps[0].next {
            Command::Prefix(Action::Guard(e), rest) => {
                assert_eq!(
                    *e,
                    Expr::Unary(
                        UnaryOp::Not,
                        Box::new(Expr::bin(BinOp::Eq, Expr::name("r"), Expr::int(0)))
                    )
                );
                assert!(rest.is_skip());
            }
            other => panic!("unexpected exit {other:?}"),
        }
    }

    #[test]
    fn load_speculation_inserts_equality_guard() {
        // r1 := [n]x ; r2 := x speculates the second load
        let head = Action::Update(
            Target::Var(VarName::plain("r1")),
            Expr::Shift(Box::new(Expr::name("n")), VarName::plain("x")),
        );
        let c = Command::seq([head.clone(), upd("r2", Expr::name("x"))]);
        let steps = command_steps(&Architecture::arm_nmca(), &c, &scope(&["r1", "r2", "n"]));
        let spec: Vec<_> = steps.iter().filter(|s| s.rule == RuleTag::LoadSpec).collect();
        assert_eq!(spec.len(), 1);
        assert_eq!(spec[0].label, Some(upd("r2", Expr::name("x"))));
        match &spec[0].next {
            Command::Prefix(a, rest) => {
                assert_eq!(a, &head);
                match &**rest {
                    Command::Prefix(Action::Guard(g), _) => {
                        assert_eq!(
                            *g,
                            Expr::bin(BinOp::Eq, Expr::name("r1"), Expr::name("r2"))
                        );
                    }
                    other => panic!("missing guard: {other:?}"),
                }
            }
            other => panic!("unexpected next {other:?}"),
        }
    }

    fn proc(locals: &[(&str, Value)], code: Command) -> Process {
        Process {
            pid: Pid(1),
            locals: locals
                .iter()
                .map(|(k, v)| (VarName::plain(*k), v.clone()))
                .collect(),
            code,
        }
    }

    #[test]
    fn locals_store_substitutes() {
        let p = proc(
            &[("r", Value::Int(1))],
            Command::seq([upd("x", Expr::name("r"))]),
        );
        let steps = process_steps(&Architecture::tso(), &p).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(
            steps[0].action,
            ProcAction::Store {
                target: Target::Var(VarName::plain("x")),
                expr: Expr::int(1)
            }
        );
    }

    #[test]
    fn locals_guard_closed_true_and_false() {
        let t = proc(
            &[("r", Value::Int(0))],
            Command::seq([Action::guard(Expr::bin(
                BinOp::Eq,
                Expr::name("r"),
                Expr::int(0),
            ))]),
        );
        let steps = process_steps(&Architecture::tso(), &t).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(
            steps[0].action,
            ProcAction::Guard { cond: Expr::bool(true) }
        );

        let f = proc(
            &[("r", Value::Int(1))],
            Command::seq([Action::guard(Expr::bin(
                BinOp::Eq,
                Expr::name("r"),
                Expr::int(0),
            ))]),
        );
        assert!(process_steps(&Architecture::tso(), &f).unwrap().is_empty());
    }

    #[test]
    fn locals_load_is_symbolic() {
        let p = proc(&[("r", Value::Int(0))], Command::seq([upd("r", Expr::name("x"))]));
        let steps = process_steps(&Architecture::tso(), &p).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(
            steps[0].action,
            ProcAction::Load { dest: VarName::plain("r"), expr: Expr::name("x") }
        );
    }

    #[test]
    fn locals_register_update_is_silent() {
        let p = proc(&[("r", Value::Int(0))], Command::seq([upd("r", Expr::int(1))]));
        let steps = process_steps(&Architecture::tso(), &p).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(
            steps[0].action,
            ProcAction::Local { dest: VarName::plain("r"), value: Value::Int(1) }
        );
    }

    #[test]
    fn atomic_substitution_respects_internal_binding() {
        // atomic { n := 1; x := n } with outer n = 0 must keep x := n
        // pointing at the inner binding
        let p = proc(
            &[("n", Value::Int(0))],
            Command::seq([Action::Atomic(vec![
                upd("n", Expr::int(1)),
                upd("x", Expr::name("n")),
            ])]),
        );
        let steps = process_steps(&Architecture::arm_nmca(), &p).unwrap();
        assert_eq!(steps.len(), 1);
        match &steps[0].action {
            ProcAction::Atomic { body } => {
                assert_eq!(body[0], upd("n", Expr::int(1)));
                assert_eq!(body[1], upd("x", Expr::name("n")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
