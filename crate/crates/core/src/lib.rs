//! An executable operational semantics for hardware weak memory models
//! (SC, TSO, revised ARMv8, non-multi-copy-atomic ARM, POWER) over a small
//! wide-spectrum language, with an exhaustive explorer for litmus-test
//! conditions and trace-inclusion refinement.
//!
//! Instruction reordering is captured by an architecture-parametric
//! pair-wise relation together with forwarding of earlier assignments;
//! storage is either a flat multi-copy-atomic map or a list of writes with
//! per-process visibility.

pub mod action;
pub mod arch;
pub mod command;
pub mod explore;
pub mod expr;
pub mod litmus;
pub mod parse;
pub mod refine;
pub mod reorder;
pub mod storage;
pub mod system;
pub mod thread;
pub mod value;

pub use action::{Action, FenceKind, Label, Payload, Target};
pub use arch::{ArchKind, Architecture};
pub use command::{seq_compose, Command};
pub use explore::{
    check_condition, eval_condition, explore, replay_witness, system_steps, Configuration,
    ExplorationResult, ExploreError, ExploreOptions, FinalState, Verdict, WitnessStep,
};
pub use expr::{evaluate, substitute, variable_sets, BinOp, EvalError, Expr, Field, Scope, UnaryOp, Valuation};
pub use litmus::{bundled_corpus, bundled_corpus_sources, gate_warnings, run_corpus, run_test, CorpusJson, CorpusReport, RunOutcome, TestReport};
pub use parse::{parse_litmus, parse_system, Condition, ConditionMode, Expectation, LitmusTest, ParseError};
pub use refine::{command_traces, par_traces, refines_commands, refines_par, refines_systems, system_traces, trace_equivalent_systems};
pub use reorder::{forward, may_promote, reorderable};
pub use storage::{
    can_reorder, can_see_past, mca_apply, nmca_flush, nmca_load, nmca_lwflush, nmca_store,
    Storage, StorageError, StorageKind, Write, WriteList,
};
pub use system::{Process, System};
pub use thread::{command_steps, process_steps, CmdStep, ProcAction, ProcStep, RuleTag};
pub use value::{Pid, Value, VarName};
