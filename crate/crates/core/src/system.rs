//! Processes and systems.

use std::collections::BTreeMap;
use std::fmt;

use crate::arch::ArchKind;
use crate::command::Command;
use crate::expr::{Scope, Valuation};
use crate::value::{Pid, Value, VarName};

/// A process: a pid, a local store, and a command. Every local variable
/// referenced by the command must be in the domain of the local store.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Process {
    pub pid: Pid,
    pub locals: Valuation,
    pub code: Command,
}

impl Process {
    pub fn scope(&self) -> Scope {
        self.locals.keys().map(|v| v.base.clone()).collect()
    }
}

/// A whole system: initial global state and a set of processes. Pids are
/// unique and local names are disjoint from global names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct System {
    pub arch_hint: Option<ArchKind>,
    pub globals: BTreeMap<VarName, Value>,
    pub processes: Vec<Process>,
}

impl System {
    pub fn pids(&self) -> Vec<Pid> {
        self.processes.iter().map(|p| p.pid).collect()
    }

    pub fn process(&self, pid: Pid) -> Option<&Process> {
        self.processes.iter().find(|p| p.pid == pid)
    }

    /// Base names of the declared global locations.
    pub fn global_bases(&self) -> std::collections::BTreeSet<String> {
        self.globals.keys().map(|v| v.base.clone()).collect()
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(a) = self.arch_hint {
            writeln!(f, "arch {a}")?;
        }
        writeln!(f, "init {{")?;
        for (k, v) in &self.globals {
            writeln!(f, "  {k} = {v};")?;
        }
        writeln!(f, "}}")?;
        for p in &self.processes {
            write!(f, "process {} ", p.pid)?;
            if !p.locals.is_empty() {
                write!(f, "locals {{ ")?;
                for (k, v) in &p.locals {
                    write!(f, "{k} = {v}; ")?;
                }
                write!(f, "}} ")?;
            }
            writeln!(f, "{{")?;
            write_command_block(f, &p.code, 1)?;
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}

fn indent(f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
    for _ in 0..depth {
        write!(f, "  ")?;
    }
    Ok(())
}

/// Statement-shaped printing of a command, re-parseable by the DSL parser.
pub(crate) fn write_command_block(
    f: &mut fmt::Formatter<'_>,
    c: &Command,
    depth: usize,
) -> fmt::Result {
    use crate::action::Action;
    match c {
        Command::Skip => Ok(()),
        Command::Prefix(a, rest) => {
            indent(f, depth)?;
            match a {
                Action::Atomic(body) => {
                    writeln!(f, "atomic {{")?;
                    for el in body {
                        indent(f, depth + 1)?;
                        writeln!(f, "{el};")?;
                    }
                    indent(f, depth)?;
                    writeln!(f, "}}")?;
                }
                _ => writeln!(f, "{a};")?,
            }
            write_command_block(f, rest, depth)
        }
        Command::TruePrefix(a, rest) => {
            indent(f, depth)?;
            writeln!(f, "{a} @;")?;
            write_command_block(f, rest, depth)
        }
        Command::Choice(l, r) => {
            indent(f, depth)?;
            writeln!(f, "choice {{")?;
            indent(f, depth + 1)?;
            writeln!(f, "{{")?;
            write_command_block(f, l, depth + 2)?;
            indent(f, depth + 1)?;
            writeln!(f, "}}")?;
            indent(f, depth + 1)?;
            writeln!(f, "or {{")?;
            write_command_block(f, r, depth + 2)?;
            indent(f, depth + 1)?;
            writeln!(f, "}}")?;
            indent(f, depth)?;
            writeln!(f, "}}")
        }
        Command::While { cond, body, cont, .. } => {
            indent(f, depth)?;
            writeln!(f, "while {cond} {{")?;
            write_command_block(f, body, depth + 1)?;
            indent(f, depth)?;
            writeln!(f, "}}")?;
            write_command_block(f, cont, depth)
        }
    }
}
