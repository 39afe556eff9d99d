//! Trace-inclusion refinement: `c` is refined by `d` iff every completed
//! trace of `d` is a trace of `c`.
//!
//! At the command level traces are sequences of actions with silent steps
//! erased and constants folded. At the system level traces are the visible
//! labels of completed executions, with silent steps and fence observations
//! erased (a fence has no storage-visible content of its own; its influence
//! is already reflected in the read and store labels around it).

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::action::{Action, Label};
use crate::arch::Architecture;
use crate::command::Command;
use crate::explore::{system_steps, Configuration, ExploreError, ExploreOptions};
use crate::expr::Scope;
use crate::system::System;
use crate::thread::command_steps;

type CmdTraces = Rc<BTreeSet<Vec<Action>>>;

/// Completed action traces of a command.
pub fn command_traces(arch: &Architecture, c: &Command, locals: &Scope) -> BTreeSet<Vec<Action>> {
    let mut memo: HashMap<Command, CmdTraces> = HashMap::new();
    (*cmd_traces_memo(arch, c, locals, &mut memo)).clone()
}

fn cmd_traces_memo(
    arch: &Architecture,
    c: &Command,
    locals: &Scope,
    memo: &mut HashMap<Command, CmdTraces>,
) -> CmdTraces {
    if let Some(t) = memo.get(c) {
        return t.clone();
    }
    let mut set = BTreeSet::new();
    if c.is_skip() {
        set.insert(Vec::new());
    }
    for step in command_steps(arch, c, locals) {
        let tails = cmd_traces_memo(arch, &step.next, locals, memo);
        for tail in tails.iter() {
            let mut trace = Vec::with_capacity(tail.len() + 1);
            if let Some(a) = &step.label {
                trace.push(a.simplify());
            }
            trace.extend(tail.iter().cloned());
            set.insert(trace);
        }
    }
    let rc = Rc::new(set);
    memo.insert(c.clone(), rc.clone());
    rc
}

/// Completed interleaved traces of commands running in parallel.
pub fn par_traces(arch: &Architecture, cs: &[Command], locals: &Scope) -> BTreeSet<Vec<Action>> {
    let mut memo: HashMap<Vec<Command>, CmdTraces> = HashMap::new();
    (*par_traces_memo(arch, cs.to_vec(), locals, &mut memo)).clone()
}

fn par_traces_memo(
    arch: &Architecture,
    cs: Vec<Command>,
    locals: &Scope,
    memo: &mut HashMap<Vec<Command>, CmdTraces>,
) -> CmdTraces {
    if let Some(t) = memo.get(&cs) {
        return t.clone();
    }
    let mut set = BTreeSet::new();
    if cs.iter().all(Command::is_skip) {
        set.insert(Vec::new());
    }
    for (i, c) in cs.iter().enumerate() {
        for step in command_steps(arch, c, locals) {
            let mut next = cs.clone();
            next[i] = step.next;
            let tails = par_traces_memo(arch, next, locals, memo);
            for tail in tails.iter() {
                let mut trace = Vec::with_capacity(tail.len() + 1);
                if let Some(a) = &step.label {
                    trace.push(a.simplify());
                }
                trace.extend(tail.iter().cloned());
                set.insert(trace);
            }
        }
    }
    let rc = Rc::new(set);
    memo.insert(cs, rc.clone());
    rc
}

/// Command-level refinement: every completed trace of `refined` is a trace
/// of `spec`.
pub fn refines_commands(
    arch: &Architecture,
    spec: &Command,
    refined: &Command,
    locals: &Scope,
) -> bool {
    let spec_traces = command_traces(arch, spec, locals);
    command_traces(arch, refined, locals).is_subset(&spec_traces)
}

/// Refinement of parallel compositions at the command level.
pub fn refines_par(
    arch: &Architecture,
    spec: &[Command],
    refined: &[Command],
    locals: &Scope,
) -> bool {
    let spec_traces = par_traces(arch, spec, locals);
    par_traces(arch, refined, locals).is_subset(&spec_traces)
}

type SysTraces = Rc<BTreeSet<Vec<Label>>>;

/// Completed visible-label traces of a whole system.
pub fn system_traces(
    system: &System,
    arch: &Architecture,
    opts: &ExploreOptions,
) -> Result<BTreeSet<Vec<Label>>, ExploreError> {
    let initial = Configuration::initial(system, arch, opts);
    let mut memo: HashMap<Configuration, SysTraces> = HashMap::new();
    let t = sys_traces_memo(arch, initial, opts, &mut memo)?;
    Ok((*t).clone())
}

fn sys_traces_memo(
    arch: &Architecture,
    cfg: Configuration,
    opts: &ExploreOptions,
    memo: &mut HashMap<Configuration, SysTraces>,
) -> Result<SysTraces, ExploreError> {
    if let Some(t) = memo.get(&cfg) {
        return Ok(t.clone());
    }
    if memo.len() >= opts.max_configs {
        return Err(ExploreError::Condition(
            "trace enumeration exceeded the configuration cap".to_string(),
        ));
    }
    let mut set = BTreeSet::new();
    if cfg.is_terminal() {
        set.insert(Vec::new());
    }
    for step in system_steps(arch, &cfg)? {
        let tails = sys_traces_memo(arch, step.next, opts, memo)?;
        let visible = !step.label.is_tau() && !step.label.is_fence_obs();
        for tail in tails.iter() {
            let mut trace = Vec::with_capacity(tail.len() + 1);
            if visible {
                trace.push(step.label.clone());
            }
            trace.extend(tail.iter().cloned());
            set.insert(trace);
        }
    }
    let rc = Rc::new(set);
    memo.insert(cfg, rc.clone());
    Ok(rc)
}

/// System-level refinement: every completed visible trace of `refined` is a
/// visible trace of `spec`.
pub fn refines_systems(
    spec: &System,
    refined: &System,
    arch: &Architecture,
    opts: &ExploreOptions,
) -> Result<bool, ExploreError> {
    let spec_traces = system_traces(spec, arch, opts)?;
    Ok(system_traces(refined, arch, opts)?.is_subset(&spec_traces))
}

/// Trace-set equality in both directions.
pub fn trace_equivalent_systems(
    a: &System,
    b: &System,
    arch: &Architecture,
    opts: &ExploreOptions,
) -> Result<bool, ExploreError> {
    let ta = system_traces(a, arch, opts)?;
    let tb = system_traces(b, arch, opts)?;
    Ok(ta == tb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::FenceKind;
    use crate::expr::Expr;
    use crate::reorder::{forward, may_promote};

    fn scope(names: &[&str]) -> Scope {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn upd(name: &str, e: Expr) -> Action {
        Action::update(name, e)
    }

    #[test]
    fn prefix_refines_true_prefix() {
        // a; c is refined by a . c
        let arch = Architecture::arm_nmca();
        let s = scope(&["r"]);
        let c = Command::seq([upd("r", Expr::name("y"))]);
        let lhs = Command::prefix(upd("x", Expr::int(1)), c.clone());
        let rhs = Command::true_prefix(upd("x", Expr::int(1)), c);
        assert!(refines_commands(&arch, &lhs, &rhs, &s));
        assert!(!refines_commands(&arch, &rhs, &lhs, &s));
    }

    #[test]
    fn swap_order_law_instance() {
        // x := 1; (r := x . skip) is refined by r := 1 . x := 1 under TSO
        let arch = Architecture::tso();
        let s = scope(&["r"]);
        let alpha = upd("x", Expr::int(1));
        let beta = upd("r", Expr::name("x"));
        let fwd = forward(&alpha, &beta, &s);
        assert!(may_promote(&arch, &alpha, &beta, &s).is_some());
        let lhs = Command::prefix(
            alpha.clone(),
            Command::true_prefix(beta, Command::Skip),
        );
        let rhs = Command::true_prefix(fwd, Command::prefix(alpha, Command::Skip));
        assert!(refines_commands(&arch, &lhs, &rhs, &s));
    }

    #[test]
    fn write_elimination_law() {
        // x := w; x := v; c is refined by x := v; c on ARM
        let arch = Architecture::arm_nmca();
        let s = scope(&[]);
        let lhs = Command::seq([upd("x", Expr::int(1)), upd("x", Expr::int(2))]);
        let rhs = Command::seq([upd("x", Expr::int(2))]);
        assert!(refines_commands(&arch, &lhs, &rhs, &s));
        // but not under TSO, where the first store cannot be dropped
        assert!(!refines_commands(&Architecture::tso(), &lhs, &rhs, &s));
    }

    #[test]
    fn interleaving_law_instance() {
        // (a . c) || d is refined by a . (c || d)
        let arch = Architecture::arm_nmca();
        let s = scope(&["r"]);
        let a = upd("x", Expr::int(1));
        let c = Command::seq([upd("r", Expr::name("y"))]);
        let d = Command::seq([upd("y", Expr::int(2))]);
        let lhs = vec![Command::true_prefix(a.clone(), c.clone()), d.clone()];
        let rhs = vec![
            Command::true_prefix(a, crate::command::seq_compose(&c, &Command::Skip)),
            d,
        ];
        // right side sequentialises the tail after a: its traces interleave
        // c and d only after a, which the left also allows
        let lhs_traces = par_traces(&arch, &lhs, &s);
        let rhs_traces = par_traces(&arch, &rhs, &s);
        assert!(rhs_traces.is_subset(&lhs_traces));
    }

    #[test]
    fn gate_example_traces() {
        // l1; s1; storegate; loadgate; l2; s2 admits the shape where the
        // later load precedes the earlier store, and never violates
        // load-load, load-store or store-store order
        let arch = Architecture::power();
        let s = scope(&["r1", "r2"]);
        let l1 = upd("r1", Expr::name("a"));
        let s1 = upd("b", Expr::int(1));
        let l2 = upd("r2", Expr::name("c"));
        let s2 = upd("d", Expr::int(1));
        let prog = Command::seq([
            l1.clone(),
            s1.clone(),
            Action::Fence(FenceKind::StoreGate),
            Action::Fence(FenceKind::LoadGate),
            l2.clone(),
            s2.clone(),
        ]);
        let traces = command_traces(&arch, &prog, &s);
        let pos = |t: &Vec<Action>, a: &Action| t.iter().position(|x| x == a).unwrap();
        let mut saw_l2_before_s1 = false;
        for t in &traces {
            assert!(pos(t, &l1) < pos(t, &l2), "load-load broken in {t:?}");
            assert!(pos(t, &l1) < pos(t, &s2), "load-store broken in {t:?}");
            assert!(pos(t, &s1) < pos(t, &s2), "store-store broken in {t:?}");
            if pos(t, &l2) < pos(t, &s1) {
                saw_l2_before_s1 = true;
            }
        }
        assert!(saw_l2_before_s1, "the later load never passed the earlier store");
        // the exact listed shape appears, gates included
        let shape = vec![
            l1,
            Action::Fence(FenceKind::StoreGate),
            l2,
            s1,
            Action::Fence(FenceKind::LoadGate),
            s2,
        ];
        assert!(traces.contains(&shape));
    }
}
