//! Exhaustive bounded exploration of system configurations.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::action::{Action, FenceKind, Label, Payload, Target};
use crate::arch::Architecture;
use crate::command::Command;
use crate::expr::{evaluate, Expr, Valuation};
use crate::storage::{
    nmca_flush, nmca_lwflush, nmca_store, resolve_expr, Storage, StorageError, StorageKind,
    Write,
};
use crate::system::{Process, System};
use crate::thread::{process_steps, ProcAction, RuleTag, StepError};
use crate::value::{Pid, Value, VarName};

/// One process slot of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcState {
    pub pid: Pid,
    pub locals: Valuation,
    pub code: Command,
}

/// A node of the exploration graph: the per-process residual programs and
/// local stores, plus the storage state. Processes are kept in pid order so
/// equal configurations collide under keying.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub procs: Vec<ProcState>,
    pub storage: Storage,
}

impl Configuration {
    pub fn initial(system: &System, arch: &Architecture, opts: &ExploreOptions) -> Configuration {
        let pids = system.pids();
        let kind = opts.storage.unwrap_or(if arch.kind.multicopy_atomic() {
            StorageKind::Mca
        } else {
            StorageKind::WriteList
        });
        let mut procs: Vec<ProcState> = system
            .processes
            .iter()
            .map(|p| ProcState {
                pid: p.pid,
                locals: p.locals.clone(),
                code: p.code.with_loop_budget(opts.unroll),
            })
            .collect();
        procs.sort_by_key(|p| p.pid);
        Configuration {
            procs,
            storage: Storage::init(kind, &system.globals, &pids),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.procs.iter().all(|p| p.code.is_skip())
    }

    pub fn pids(&self) -> Vec<Pid> {
        self.procs.iter().map(|p| p.pid).collect()
    }

    fn key(&self) -> u128 {
        let mut h1 = DefaultHasher::new();
        self.hash(&mut h1);
        let mut h2 = DefaultHasher::new();
        0xa5a5_5a5au32.hash(&mut h2);
        self.hash(&mut h2);
        ((h1.finish() as u128) << 64) | h2.finish() as u128
    }
}

/// A system-level transition.
#[derive(Debug, Clone)]
pub struct SysStep {
    pub pid: Pid,
    pub label: Label,
    pub rule: RuleTag,
    /// Thread-level rendering of the instruction, for witnesses.
    pub note: String,
    pub bound_hit: bool,
    pub next: Configuration,
}

impl SysStep {
    pub fn describe(&self) -> String {
        match &self.label {
            Label::Tau => format!("{}: {} [{}]", self.pid, self.note, self.rule.name()),
            Label::Tagged(_, _) => format!("{} [{}]", self.label, self.rule.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub unroll: u32,
    pub max_configs: usize,
    pub witnesses: bool,
    /// Force a storage subsystem instead of the architecture's default.
    pub storage: Option<StorageKind>,
    /// Visited-set deduplication; disabling it never changes the final-state
    /// set on loop-free programs, only the statistics.
    pub dedup: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            unroll: 2,
            max_configs: 10_000_000,
            witnesses: true,
            storage: None,
            dedup: true,
        }
    }
}

/// A terminal observation: the local stores by pid and the final memory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FinalState {
    pub locals: BTreeMap<Pid, Valuation>,
    pub memory: BTreeMap<VarName, Value>,
}

impl FinalState {
    fn of(cfg: &Configuration) -> FinalState {
        FinalState {
            locals: cfg
                .procs
                .iter()
                .map(|p| (p.pid, p.locals.clone()))
                .collect(),
            memory: cfg.storage.final_memory(),
        }
    }
}

/// One entry of a witness trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessStep {
    pub pid: Pid,
    pub label: Label,
    pub desc: String,
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub configs_visited: usize,
    pub steps_expanded: usize,
    pub bound_hit: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExplorationResult {
    pub finals: BTreeSet<FinalState>,
    pub witnesses: BTreeMap<FinalState, Vec<WitnessStep>>,
    pub stats: Stats,
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("configuration cap exceeded after {} configurations", .partial.stats.configs_visited)]
    CapExceeded { partial: Box<ExplorationResult> },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("condition error: {0}")]
    Condition(String),
}

fn lw_aware(arch: &Architecture) -> bool {
    arch.kind.lightweight_fences()
}

/// All transitions of a configuration: each process's steps instantiated
/// against the storage, siblings left unchanged. Children are generated in
/// (pid, rule, candidate) order so exploration is reproducible.
pub fn system_steps(
    arch: &Architecture,
    cfg: &Configuration,
) -> Result<Vec<SysStep>, ExploreError> {
    let mut out = Vec::new();
    for (i, proc_state) in cfg.procs.iter().enumerate() {
        let process = Process {
            pid: proc_state.pid,
            locals: proc_state.locals.clone(),
            code: proc_state.code.clone(),
        };
        for step in process_steps(arch, &process)? {
            instantiate(arch, cfg, i, &step, &mut out)?;
        }
    }
    Ok(out)
}

fn with_proc(
    cfg: &Configuration,
    i: usize,
    code: Command,
    locals: Valuation,
    storage: Storage,
) -> Configuration {
    let mut next = cfg.clone();
    next.procs[i].code = code;
    next.procs[i].locals = locals;
    next.storage = storage;
    next
}

fn instantiate(
    arch: &Architecture,
    cfg: &Configuration,
    i: usize,
    step: &crate::thread::ProcStep,
    out: &mut Vec<SysStep>,
) -> Result<(), ExploreError> {
    let pid = cfg.procs[i].pid;
    let locals = &cfg.procs[i].locals;
    let lw = lw_aware(arch);
    let push = |out: &mut Vec<SysStep>, label: Label, locals: Valuation, storage: Storage| {
        out.push(SysStep {
            pid,
            label,
            rule: step.rule,
            note: step.note.clone(),
            bound_hit: step.bound_hit,
            next: with_proc(cfg, i, step.next.clone(), locals, storage),
        });
    };
    match &step.action {
        ProcAction::Silent => {
            push(out, Label::Tau, locals.clone(), cfg.storage.clone());
        }
        ProcAction::Local { dest, value } => {
            let mut locals2 = locals.clone();
            locals2.insert(dest.clone(), value.clone());
            push(out, Label::Tau, locals2, cfg.storage.clone());
        }
        ProcAction::Load { dest, expr } => {
            for res in resolve_expr(&cfg.storage, pid, expr, lw)? {
                let Some(v) = res.expr.as_value() else {
                    return Err(StorageError::NotClosed(res.expr.to_string()).into());
                };
                let mut locals2 = locals.clone();
                locals2.insert(dest.clone(), v.clone());
                push(out, Label::Tagged(pid, reads_payload(&res.reads)), locals2, res.storage);
            }
        }
        ProcAction::Store { target, expr } => {
            for (storage, loc, v, reads) in
                store_outcomes(&cfg.storage, pid, target, expr, lw)?
            {
                let store = Payload::Store(loc, Expr::Lit(v));
                let payload = if reads.is_empty() {
                    store
                } else {
                    let mut ps: Vec<Payload> = reads
                        .iter()
                        .map(|(x, v)| Payload::Read(x.clone(), v.clone()))
                        .collect();
                    ps.push(store);
                    Payload::Atomic(ps)
                };
                push(out, Label::Tagged(pid, payload), locals.clone(), storage);
            }
        }
        ProcAction::Guard { cond } => {
            for res in resolve_expr(&cfg.storage, pid, cond, lw)? {
                match res.expr.as_value() {
                    Some(Value::Bool(true)) => {
                        push(
                            out,
                            Label::Tagged(pid, Payload::Guard(cond.clone())),
                            locals.clone(),
                            res.storage,
                        );
                    }
                    Some(Value::Bool(false)) => {
                        // a false guard contributes no transition and no
                        // seen-set side effects
                    }
                    _ => {
                        return Err(ExploreError::Condition(format!(
                            "guard `{cond}` did not evaluate to a boolean"
                        )))
                    }
                }
            }
        }
        ProcAction::Fence { kind } => {
            let storage = apply_fence(&cfg.storage, pid, *kind, &cfg.pids());
            push(out, Label::Tagged(pid, Payload::Fence(*kind)), locals.clone(), storage);
        }
        ProcAction::Atomic { body } => {
            for (storage, delta, payloads) in
                run_atomic(&cfg.storage, pid, body, lw, &cfg.pids())?
            {
                let mut locals2 = locals.clone();
                locals2.extend(delta);
                push(out, Label::Tagged(pid, Payload::Atomic(payloads)), locals2, storage);
            }
        }
    }
    Ok(())
}

fn reads_payload(reads: &[(VarName, Value)]) -> Payload {
    if reads.len() == 1 {
        Payload::Read(reads[0].0.clone(), reads[0].1.clone())
    } else {
        Payload::Atomic(
            reads
                .iter()
                .map(|(x, v)| Payload::Read(x.clone(), v.clone()))
                .collect(),
        )
    }
}

/// Resolve a store's target and expression and produce every storage
/// outcome: (storage after, concrete location, stored value, reads made).
#[allow(clippy::type_complexity)]
fn store_outcomes(
    storage: &Storage,
    pid: Pid,
    target: &Target,
    expr: &Expr,
    lw: bool,
) -> Result<Vec<(Storage, VarName, Value, Vec<(VarName, Value)>)>, ExploreError> {
    // 1. the target location: a shift must resolve to 0; an index resolves
    //    to a literal
    let mut located: Vec<(Storage, VarName, Vec<(VarName, Value)>)> = Vec::new();
    match target {
        Target::Var(v) if v.is_concrete() => {
            located.push((storage.clone(), v.clone(), Vec::new()));
        }
        Target::Var(v) => {
            let ix = v.index.as_ref().expect("non-concrete name has an index");
            for res in resolve_expr(storage, pid, ix, lw)? {
                let Some(val) = res.expr.as_value() else {
                    return Err(StorageError::NotClosed(res.expr.to_string()).into());
                };
                located.push((
                    res.storage,
                    VarName::indexed(v.base.clone(), Expr::Lit(val.clone())),
                    res.reads,
                ));
            }
        }
        Target::Shifted(amount, base) => {
            for res in resolve_expr(storage, pid, amount, lw)? {
                match res.expr.as_value() {
                    Some(Value::Int(0)) => {
                        located.push((res.storage, base.clone(), res.reads));
                    }
                    Some(Value::Int(n)) => {
                        return Err(StepError::Eval(
                            crate::expr::EvalError::NonzeroShift(*n),
                        )
                        .into())
                    }
                    _ => {
                        return Err(StorageError::NotClosed(res.expr.to_string()).into())
                    }
                }
            }
        }
    }
    // 2. the stored value, then the write itself
    let mut out = Vec::new();
    for (storage1, loc, reads1) in located {
        for res in resolve_expr(&storage1, pid, expr, lw)? {
            let Some(v) = res.expr.as_value() else {
                return Err(StorageError::NotClosed(res.expr.to_string()).into());
            };
            let mut reads = reads1.clone();
            reads.extend(res.reads.clone());
            match &res.storage {
                Storage::Mca(m) => {
                    let mut m2 = m.clone();
                    m2.insert(loc.clone(), v.clone());
                    out.push((Storage::Mca(m2), loc.clone(), v.clone(), reads));
                }
                Storage::Wl(wl) => {
                    let w = Write::new(pid, loc.clone(), v.clone());
                    for placed in nmca_store(wl, w, lw) {
                        out.push((
                            Storage::Wl(placed),
                            loc.clone(),
                            v.clone(),
                            reads.clone(),
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn apply_fence(storage: &Storage, pid: Pid, kind: FenceKind, pids: &[Pid]) -> Storage {
    match storage {
        Storage::Mca(_) => storage.clone(),
        Storage::Wl(wl) => match kind {
            FenceKind::Full | FenceKind::Store => Storage::Wl(nmca_flush(wl, pid, pids)),
            FenceKind::LoadGate | FenceKind::Eieio => Storage::Wl(nmca_lwflush(wl, pid)),
            FenceKind::Ctrl | FenceKind::StoreGate => storage.clone(),
        },
    }
}

/// Execute an atomic body elementwise: one indivisible step, forking over
/// read candidates and write placements, refusing outright on a false
/// guard. Returns (storage, local updates, payloads) per outcome.
#[allow(clippy::type_complexity)]
fn run_atomic(
    storage: &Storage,
    pid: Pid,
    body: &[Action],
    lw: bool,
    pids: &[Pid],
) -> Result<Vec<(Storage, Valuation, Vec<Payload>)>, ExploreError> {
    let mut branches: Vec<(Storage, Valuation, Vec<Payload>)> =
        vec![(storage.clone(), Valuation::new(), Vec::new())];
    for el in body {
        let mut next_branches = Vec::new();
        for (st, delta, payloads) in &branches {
            run_atomic_element(st, pid, el, delta, payloads, lw, pids, &mut next_branches)?;
        }
        branches = next_branches;
        if branches.is_empty() {
            break;
        }
    }
    Ok(branches)
}

#[allow(clippy::too_many_arguments)]
fn run_atomic_element(
    st: &Storage,
    pid: Pid,
    el: &Action,
    delta: &Valuation,
    payloads: &[Payload],
    lw: bool,
    pids: &[Pid],
    out: &mut Vec<(Storage, Valuation, Vec<Payload>)>,
) -> Result<(), ExploreError> {
    match el {
        Action::Update(t, e) => {
            // inner bindings made earlier in the body are visible here
            let e = evaluate(e, delta).map_err(StepError::Eval)?;
            let t = subst_target_delta(t, delta)?;
            // a target the storage knows is a store; anything else binds a
            // local for the rest of the body
            let is_store = match &t {
                Target::Var(v) => storage_has_location(st, v) || !v.is_concrete(),
                Target::Shifted(..) => true,
            };
            if is_store {
                for (storage2, loc, v, reads) in store_outcomes(st, pid, &t, &e, lw)? {
                    let mut ps = payloads.to_vec();
                    ps.extend(
                        reads
                            .iter()
                            .map(|(x, val)| Payload::Read(x.clone(), val.clone())),
                    );
                    ps.push(Payload::Store(loc, Expr::Lit(v)));
                    out.push((storage2, delta.clone(), ps));
                }
            } else {
                let Target::Var(dest) = t else { unreachable!() };
                for res in resolve_expr(st, pid, &e, lw)? {
                    let Some(v) = res.expr.as_value() else {
                        return Err(StorageError::NotClosed(res.expr.to_string()).into());
                    };
                    let mut delta2 = delta.clone();
                    delta2.insert(dest.clone(), v.clone());
                    let mut ps = payloads.to_vec();
                    ps.extend(
                        res.reads
                            .iter()
                            .map(|(x, val)| Payload::Read(x.clone(), val.clone())),
                    );
                    out.push((res.storage, delta2, ps));
                }
            }
        }
        Action::Guard(e) => {
            let e = evaluate(e, delta).map_err(StepError::Eval)?;
            if let Some(Value::Bool(false)) = e.as_value() {
                return Ok(());
            }
            for res in resolve_expr(st, pid, &e, lw)? {
                match res.expr.as_value() {
                    Some(Value::Bool(true)) => {
                        let mut ps = payloads.to_vec();
                        ps.push(Payload::Guard(e.clone()));
                        out.push((res.storage, delta.clone(), ps));
                    }
                    Some(Value::Bool(false)) => {}
                    _ => {
                        return Err(ExploreError::Condition(format!(
                            "guard `{e}` did not evaluate to a boolean"
                        )))
                    }
                }
            }
        }
        Action::Fence(kind) => {
            let storage2 = apply_fence(st, pid, *kind, pids);
            let mut ps = payloads.to_vec();
            ps.push(Payload::Fence(*kind));
            out.push((storage2, delta.clone(), ps));
        }
        Action::Atomic(_) => {
            // parsing rejects nested atomics
            return Err(ExploreError::Condition(
                "nested atomic sequence".to_string(),
            ));
        }
    }
    Ok(())
}

fn storage_has_location(st: &Storage, v: &VarName) -> bool {
    match st {
        Storage::Mca(m) => m.contains_key(v) || m.keys().any(|k| k.base == v.base),
        Storage::Wl(wl) => wl.0.iter().any(|w| w.location == *v || w.location.base == v.base),
    }
}

fn subst_target_delta(t: &Target, delta: &Valuation) -> Result<Target, ExploreError> {
    match t {
        Target::Var(v) => Ok(Target::Var(
            crate::expr::eval_varname(v, delta).map_err(StepError::Eval)?,
        )),
        Target::Shifted(a, base) => {
            let a = evaluate(a, delta).map_err(StepError::Eval)?;
            let base = crate::expr::eval_varname(base, delta).map_err(StepError::Eval)?;
            match a.as_value() {
                Some(Value::Int(0)) => Ok(Target::Var(base)),
                _ => Ok(Target::Shifted(a, base)),
            }
        }
    }
}

/// Depth-first exhaustive search with visited-set deduplication. Collects
/// every terminal final state, a first-found witness per final state when
/// requested, and exploration statistics.
pub fn explore(
    system: &System,
    arch: &Architecture,
    opts: &ExploreOptions,
) -> Result<ExplorationResult, ExploreError> {
    let initial = Configuration::initial(system, arch, opts);
    let mut result = ExplorationResult::default();
    let mut visited: HashSet<u128> = HashSet::new();
    // stack entries: (configuration, incoming step, path length before it)
    let mut stack: Vec<(Configuration, Option<WitnessStep>, usize)> =
        vec![(initial, None, 0)];
    let mut path: Vec<WitnessStep> = Vec::new();

    while let Some((cfg, incoming, depth)) = stack.pop() {
        path.truncate(depth);
        if let Some(w) = incoming {
            path.push(w);
        }
        if opts.dedup && !visited.insert(cfg.key()) {
            continue;
        }
        result.stats.configs_visited += 1;
        if result.stats.configs_visited > opts.max_configs {
            return Err(ExploreError::CapExceeded { partial: Box::new(result) });
        }
        if cfg.is_terminal() {
            let fs = FinalState::of(&cfg);
            if opts.witnesses && !result.witnesses.contains_key(&fs) {
                result.witnesses.insert(fs.clone(), path.clone());
            }
            result.finals.insert(fs);
            continue;
        }
        let steps = system_steps(arch, &cfg)?;
        result.stats.steps_expanded += steps.len();
        let next_depth = path.len();
        // push in reverse so the first-generated child is explored first
        for step in steps.into_iter().rev() {
            result.stats.bound_hit |= step.bound_hit;
            let witness = WitnessStep {
                pid: step.pid,
                label: step.label.clone(),
                desc: step.describe(),
            };
            stack.push((step.next, Some(witness), next_depth));
        }
    }
    Ok(result)
}

/// Litmus verdicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Observable(Vec<WitnessStep>),
    NotObservable,
    NotObservableBounded,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Observable(_) => "observable",
            Verdict::NotObservable => "not-observable",
            Verdict::NotObservableBounded => "not-observable-bounded",
        }
    }

    pub fn observable(&self) -> bool {
        matches!(self, Verdict::Observable(_))
    }
}

/// Evaluate a condition over one final state. Locals are referenced as
/// `pid:name`, globals by their location name.
pub fn eval_condition(fs: &FinalState, cond: &Expr) -> Result<bool, ExploreError> {
    let mut valuation: Valuation = fs.memory.clone();
    for (pid, locals) in &fs.locals {
        for (name, v) in locals {
            valuation.insert(
                VarName::plain(format!("{}:{}", pid, name.base)),
                v.clone(),
            );
        }
    }
    let folded = evaluate(cond, &valuation)
        .map_err(|e| ExploreError::Condition(e.to_string()))?;
    match folded.as_value() {
        Some(Value::Bool(b)) => Ok(*b),
        _ => Err(ExploreError::Condition(format!(
            "condition `{cond}` mentions unknown variables (residual `{folded}`)"
        ))),
    }
}

/// Decide a final-state condition over an exploration result.
pub fn check_condition(
    result: &ExplorationResult,
    cond: &Expr,
) -> Result<Verdict, ExploreError> {
    for fs in &result.finals {
        if eval_condition(fs, cond)? {
            let witness = result.witnesses.get(fs).cloned().unwrap_or_default();
            return Ok(Verdict::Observable(witness));
        }
    }
    Ok(if result.stats.bound_hit {
        Verdict::NotObservableBounded
    } else {
        Verdict::NotObservable
    })
}

/// Re-run a witness through the step relation, label by label, and check it
/// lands on a terminal configuration with the expected final state.
pub fn replay_witness(
    system: &System,
    arch: &Architecture,
    opts: &ExploreOptions,
    witness: &[WitnessStep],
    satisfies: &Expr,
) -> Result<bool, ExploreError> {
    fn go(
        arch: &Architecture,
        cfg: &Configuration,
        witness: &[WitnessStep],
        satisfies: &Expr,
    ) -> Result<bool, ExploreError> {
        match witness.first() {
            None => {
                if !cfg.is_terminal() {
                    return Ok(false);
                }
                eval_condition(&FinalState::of(cfg), satisfies)
            }
            Some(expected) => {
                for step in system_steps(arch, cfg)? {
                    if step.pid == expected.pid && step.label == expected.label {
                        if go(arch, &step.next, &witness[1..], satisfies)? {
                            return Ok(true);
                        }
                    }
                }
                Ok(false)
            }
        }
    }
    let initial = Configuration::initial(system, arch, opts);
    go(arch, &initial, witness, satisfies)
}
