//! Commands: prefixed action sequences with choice and bounded loops.

use std::fmt;

use crate::action::Action;
use crate::expr::Expr;

/// A command term.
///
/// `Prefix` is ordinary instruction prefixing, subject to reordering.
/// `TruePrefix` fixes the head strictly before everything that follows; it
/// never arises from parsing source programs and is produced only by
/// law-checking utilities. `While` carries its continuation so sequential
/// composition after a loop can be deferred to unfold time, and a
/// remaining-unfoldings budget consumed by each unfolding of that syntactic
/// occurrence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Skip,
    Prefix(Action, Box<Command>),
    TruePrefix(Action, Box<Command>),
    Choice(Box<Command>, Box<Command>),
    While {
        cond: Expr,
        body: Box<Command>,
        budget: u32,
        cont: Box<Command>,
    },
}

impl Command {
    pub fn prefix(a: Action, rest: Command) -> Command {
        Command::Prefix(a, Box::new(rest))
    }

    pub fn true_prefix(a: Action, rest: Command) -> Command {
        Command::TruePrefix(a, Box::new(rest))
    }

    pub fn choice(a: Command, b: Command) -> Command {
        Command::Choice(Box::new(a), Box::new(b))
    }

    /// Chain of plain prefixes ending in Skip.
    pub fn seq(actions: impl IntoIterator<Item = Action>) -> Command {
        let mut acts: Vec<Action> = actions.into_iter().collect();
        let mut cmd = Command::Skip;
        while let Some(a) = acts.pop() {
            cmd = Command::prefix(a, cmd);
        }
        cmd
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, Command::Skip)
    }

    /// Set every loop budget in the term to `n` unfoldings.
    pub fn with_loop_budget(&self, n: u32) -> Command {
        match self {
            Command::Skip => Command::Skip,
            Command::Prefix(a, c) => {
                Command::Prefix(a.clone(), Box::new(c.with_loop_budget(n)))
            }
            Command::TruePrefix(a, c) => {
                Command::TruePrefix(a.clone(), Box::new(c.with_loop_budget(n)))
            }
            Command::Choice(a, b) => Command::Choice(
                Box::new(a.with_loop_budget(n)),
                Box::new(b.with_loop_budget(n)),
            ),
            Command::While { cond, body, cont, .. } => Command::While {
                cond: cond.clone(),
                body: Box::new(body.with_loop_budget(n)),
                budget: n,
                cont: Box::new(cont.with_loop_budget(n)),
            },
        }
    }

    pub fn actions_count(&self) -> usize {
        match self {
            Command::Skip => 0,
            Command::Prefix(_, c) | Command::TruePrefix(_, c) => 1 + c.actions_count(),
            Command::Choice(a, b) => a.actions_count() + b.actions_count(),
            Command::While { body, cont, .. } => {
                1 + body.actions_count() + cont.actions_count()
            }
        }
    }
}

/// Sequential composition of commands, defined by induction on the first
/// argument:
///   Skip ; c = c
///   (a; c1) ; c2 = a; (c1 ; c2)
///   (c1 [] c2) ; c3 = (c1 ; c3) [] (c2 ; c3)
/// A loop composes by extending its continuation.
pub fn seq_compose(c1: &Command, c2: &Command) -> Command {
    if c2.is_skip() {
        return c1.clone();
    }
    match c1 {
        Command::Skip => c2.clone(),
        Command::Prefix(a, rest) => {
            Command::Prefix(a.clone(), Box::new(seq_compose(rest, c2)))
        }
        Command::TruePrefix(a, rest) => {
            Command::TruePrefix(a.clone(), Box::new(seq_compose(rest, c2)))
        }
        Command::Choice(a, b) => {
            Command::choice(seq_compose(a, c2), seq_compose(b, c2))
        }
        Command::While { cond, body, budget, cont } => Command::While {
            cond: cond.clone(),
            body: body.clone(),
            budget: *budget,
            cont: Box::new(seq_compose(cont, c2)),
        },
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Skip => write!(f, "skip"),
            Command::Prefix(a, c) => {
                write!(f, "{a}")?;
                if !c.is_skip() {
                    write!(f, "; {c}")?;
                }
                Ok(())
            }
            Command::TruePrefix(a, c) => {
                write!(f, "{a} @")?;
                if !c.is_skip() {
                    write!(f, "; {c}")?;
                }
                Ok(())
            }
            Command::Choice(a, b) => write!(f, "choice {{ {{ {a} }} or {{ {b} }} }}"),
            Command::While { cond, body, cont, .. } => {
                write!(f, "while {cond} {{ {body} }}")?;
                if !cont.is_skip() {
                    write!(f, "; {cont}")?;
                }
                Ok(())
            }
        }
    }
}
