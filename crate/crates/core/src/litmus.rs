//! Litmus-test execution: single tests, corpus runs with expectation
//! comparison, and machine-readable reports.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::arch::{ArchKind, Architecture};
use crate::explore::{
    check_condition, explore, ExploreError, ExploreOptions, FinalState, Verdict, WitnessStep,
};
use crate::parse::{ConditionMode, Expectation, LitmusTest};
use crate::system::System;

/// Result of running one test under one architecture.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub test: String,
    pub arch: ArchKind,
    pub mode: ConditionMode,
    pub verdict: Option<Verdict>,
    /// Set when exploration hit a resource cap.
    pub inconclusive: Option<String>,
    pub expected: Option<Expectation>,
    /// Verdict versus expectation, when both are informative.
    pub agrees: Option<bool>,
    /// The condition's outcome in the sense of the test mode: for
    /// `forbidden` tests the sense is inverted.
    pub holds: Option<bool>,
    pub finals: Vec<FinalState>,
    pub witness: Vec<WitnessStep>,
    pub configs: usize,
    pub steps: usize,
    pub bound_hit: bool,
    pub millis: u128,
    pub warnings: Vec<String>,
}

fn expectation_agrees(verdict: &Verdict, expected: &Expectation) -> Option<bool> {
    match expected {
        Expectation::Unknown => None,
        Expectation::Observable => Some(verdict.observable()),
        Expectation::NotObservable => Some(!verdict.observable()),
    }
}

/// Gate fences only have their intended meaning on POWER.
pub fn gate_warnings(system: &System, arch: &Architecture) -> Vec<String> {
    let mut out = Vec::new();
    if arch.kind == ArchKind::Power {
        return out;
    }
    for p in &system.processes {
        let mut found = false;
        visit_actions(&p.code, &mut |a| found |= a.gate_fences());
        if found {
            out.push(format!(
                "process {} uses storegate/loadgate/eieio, which only have their defined \
                 reordering behaviour under power (running under {})",
                p.pid, arch.kind
            ));
        }
    }
    out
}

fn visit_actions(c: &crate::command::Command, f: &mut impl FnMut(&crate::action::Action)) {
    use crate::command::Command;
    match c {
        Command::Skip => {}
        Command::Prefix(a, rest) | Command::TruePrefix(a, rest) => {
            f(a);
            visit_actions(rest, f);
        }
        Command::Choice(l, r) => {
            visit_actions(l, f);
            visit_actions(r, f);
        }
        Command::While { body, cont, .. } => {
            visit_actions(body, f);
            visit_actions(cont, f);
        }
    }
}

/// Run one litmus test: explore, decide the condition, compare with the
/// expectation for this architecture when one is recorded.
pub fn run_test(test: &LitmusTest, arch: &Architecture, opts: &ExploreOptions) -> RunOutcome {
    let started = Instant::now();
    let warnings = gate_warnings(&test.system, arch);
    let expected = test.expectations.get(&arch.kind).cloned();
    let mut outcome = RunOutcome {
        test: test.name.clone(),
        arch: arch.kind,
        mode: test.condition.mode,
        verdict: None,
        inconclusive: None,
        expected: expected.clone(),
        agrees: None,
        holds: None,
        finals: Vec::new(),
        witness: Vec::new(),
        configs: 0,
        steps: 0,
        bound_hit: false,
        millis: 0,
        warnings,
    };
    match explore(&test.system, arch, opts) {
        Ok(result) => {
            outcome.configs = result.stats.configs_visited;
            outcome.steps = result.stats.steps_expanded;
            outcome.bound_hit = result.stats.bound_hit;
            outcome.finals = result.finals.iter().cloned().collect();
            match check_condition(&result, &test.condition.predicate) {
                Ok(verdict) => {
                    if let Verdict::Observable(w) = &verdict {
                        outcome.witness = w.clone();
                    }
                    outcome.holds = Some(match test.condition.mode {
                        ConditionMode::Exists => verdict.observable(),
                        ConditionMode::Forbidden => !verdict.observable(),
                    });
                    if let Some(exp) = &expected {
                        outcome.agrees = expectation_agrees(&verdict, exp);
                    }
                    outcome.verdict = Some(verdict);
                }
                Err(e) => outcome.inconclusive = Some(e.to_string()),
            }
        }
        Err(ExploreError::CapExceeded { partial }) => {
            outcome.configs = partial.stats.configs_visited;
            outcome.steps = partial.stats.steps_expanded;
            outcome.bound_hit = partial.stats.bound_hit;
            outcome.inconclusive =
                Some("configuration cap exceeded; verdict is inconclusive".to_string());
        }
        Err(e) => outcome.inconclusive = Some(e.to_string()),
    }
    outcome.millis = started.elapsed().as_millis();
    outcome
}

/// A corpus report: one row per executed test plus summary counts.
#[derive(Debug, Clone)]
pub struct CorpusReport {
    pub arch: ArchKind,
    pub rows: Vec<RunOutcome>,
    pub skipped: Vec<String>,
}

impl CorpusReport {
    pub fn total(&self) -> usize {
        self.rows.len()
    }

    pub fn agreed(&self) -> usize {
        self.rows.iter().filter(|r| r.agrees == Some(true)).count()
    }

    pub fn disagreed(&self) -> Vec<&RunOutcome> {
        self.rows.iter().filter(|r| r.agrees == Some(false)).collect()
    }

    pub fn inconclusive(&self) -> usize {
        self.rows.iter().filter(|r| r.inconclusive.is_some()).count()
    }

    pub fn all_agree(&self) -> bool {
        self.disagreed().is_empty()
    }
}

/// Run a corpus under one architecture. Tests carrying an `arch` hint for a
/// different architecture are skipped. Tests run on `workers` threads; rows
/// are merged in test-name order so the report is deterministic.
pub fn run_corpus(
    tests: &[LitmusTest],
    arch: &Architecture,
    opts: &ExploreOptions,
    workers: usize,
) -> CorpusReport {
    let mut selected: Vec<&LitmusTest> = Vec::new();
    let mut skipped = Vec::new();
    for t in tests {
        match t.system.arch_hint {
            Some(hint) if hint != arch.kind => skipped.push(t.name.clone()),
            _ => selected.push(t),
        }
    }
    let workers = workers.max(1).min(selected.len().max(1));
    let mut rows: Vec<RunOutcome> = if workers <= 1 {
        selected.iter().map(|t| run_test(t, arch, opts)).collect()
    } else {
        let chunk = selected.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = selected
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|t| run_test(t, arch, opts)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("corpus worker panicked"))
                .collect()
        })
    };
    rows.sort_by(|a, b| a.test.cmp(&b.test));
    skipped.sort();
    CorpusReport { arch: arch.kind, rows, skipped }
}

/// The litmus tests shipped with the crate, as (name, source) pairs.
pub fn bundled_corpus_sources() -> Vec<(&'static str, &'static str)> {
    macro_rules! bundle {
        ($($name:literal),+ $(,)?) => {
            vec![$(($name, include_str!(concat!("../corpus/", $name, ".lit")))),+]
        };
    }
    bundle![
        "cas-excl",
        "corr",
        "fetch-add",
        "fwd-own-store",
        "iriw-addrs",
        "iriw-syncs",
        "lb-deps",
        "lb-pos",
        "mp-dmb-addr",
        "mp-dmb-ctrl",
        "mp-dmb-ctrl-cfence",
        "mp-dmb-po",
        "mp-eieio-addr",
        "mp-fence-st",
        "mp-lwfence-addr",
        "mp-pos",
        "ppo017",
        "sb",
        "sb-eieio",
        "sb-fence-left",
        "sb-fence-st",
        "sb-fences",
        "sb-fwd",
        "sb-lwfence",
        "two-plus-two-w",
        "two-writes-visibility",
        "wrc-addrs",
        "wrc-lwsync-addr",
    ]
}

/// Parse the bundled corpus.
pub fn bundled_corpus() -> Vec<LitmusTest> {
    bundled_corpus_sources()
        .into_iter()
        .map(|(name, src)| {
            crate::parse::parse_litmus(src)
                .unwrap_or_else(|e| panic!("bundled test {name} does not parse: {e}"))
        })
        .collect()
}

// ---- serialisable report shapes ---------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FinalReport {
    pub locals: BTreeMap<String, BTreeMap<String, String>>,
    pub memory: BTreeMap<String, String>,
}

impl FinalReport {
    pub fn of(fs: &FinalState) -> FinalReport {
        FinalReport {
            locals: fs
                .locals
                .iter()
                .map(|(pid, locals)| {
                    (
                        pid.to_string(),
                        locals
                            .iter()
                            .map(|(k, v)| (k.to_string(), v.to_string()))
                            .collect(),
                    )
                })
                .collect(),
            memory: fs
                .memory
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub configs: usize,
    pub steps: usize,
    pub bound_hit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub test: String,
    pub arch: ArchKind,
    pub mode: String,
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inconclusive: Option<String>,
    pub expected: Option<String>,
    pub agrees: Option<bool>,
    pub holds: Option<bool>,
    pub finals: Vec<FinalReport>,
    pub witness: Vec<String>,
    pub stats: StatsReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn of(outcome: &RunOutcome) -> TestReport {
        TestReport {
            test: outcome.test.clone(),
            arch: outcome.arch,
            mode: match outcome.mode {
                ConditionMode::Exists => "exists".to_string(),
                ConditionMode::Forbidden => "forbidden".to_string(),
            },
            verdict: outcome.verdict.as_ref().map(|v| v.name().to_string()),
            inconclusive: outcome.inconclusive.clone(),
            expected: outcome.expected.as_ref().map(|e| e.to_string()),
            agrees: outcome.agrees,
            holds: outcome.holds,
            finals: outcome.finals.iter().map(FinalReport::of).collect(),
            witness: outcome.witness.iter().map(|w| w.desc.clone()).collect(),
            stats: StatsReport {
                configs: outcome.configs,
                steps: outcome.steps,
                bound_hit: outcome.bound_hit,
            },
            warnings: outcome.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusJson {
    pub arch: ArchKind,
    pub rows: Vec<TestReport>,
    pub skipped: Vec<String>,
    pub summary: CorpusSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusSummary {
    pub total: usize,
    pub agreed: usize,
    pub disagreed: usize,
    pub no_expectation: usize,
    pub inconclusive: usize,
    pub skipped: usize,
}

impl CorpusJson {
    pub fn of(report: &CorpusReport) -> CorpusJson {
        let no_expectation = report
            .rows
            .iter()
            .filter(|r| r.agrees.is_none() && r.inconclusive.is_none())
            .count();
        CorpusJson {
            arch: report.arch,
            rows: report.rows.iter().map(TestReport::of).collect(),
            skipped: report.skipped.clone(),
            summary: CorpusSummary {
                total: report.total(),
                agreed: report.agreed(),
                disagreed: report.disagreed().len(),
                no_expectation,
                inconclusive: report.inconclusive(),
                skipped: report.skipped.len(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_litmus;

    #[test]
    fn bundled_corpus_parses() {
        let tests = bundled_corpus();
        assert_eq!(tests.len(), 28);
        for t in &tests {
            assert!(!t.expectations.is_empty(), "{} has no expectations", t.name);
        }
    }

    #[test]
    fn run_test_agreement() {
        let src = "test sb\n\
            init { x = 0; y = 0; }\n\
            process 1 locals { r1 = 0; } { x := 1; r1 := y; }\n\
            process 2 locals { r2 = 0; } { y := 1; r2 := x; }\n\
            exists (1:r1 = 0 && 2:r2 = 0)\n\
            expect tso observable\n\
            expect sc not-observable\n";
        let test = parse_litmus(src).unwrap();
        let opts = ExploreOptions::default();
        let tso = run_test(&test, &Architecture::tso(), &opts);
        assert_eq!(tso.agrees, Some(true));
        assert!(tso.verdict.as_ref().unwrap().observable());
        let sc = run_test(&test, &Architecture::sc(), &opts);
        assert_eq!(sc.agrees, Some(true));
        assert!(!sc.verdict.as_ref().unwrap().observable());
    }

    #[test]
    fn empty_corpus_gives_empty_report() {
        let report = run_corpus(&[], &Architecture::tso(), &ExploreOptions::default(), 2);
        assert_eq!(report.total(), 0);
        assert!(report.all_agree());
    }

    #[test]
    fn arch_hint_filters() {
        let src = "test only-power\narch power\n\
            init { x = 0; }\n\
            process 1 { x := 1; }\n\
            exists (x = 1)\n\
            expect power observable\n";
        let test = parse_litmus(src).unwrap();
        let report = run_corpus(
            std::slice::from_ref(&test),
            &Architecture::tso(),
            &ExploreOptions::default(),
            1,
        );
        assert_eq!(report.total(), 0);
        assert_eq!(report.skipped, vec!["only-power".to_string()]);
        let report = run_corpus(
            std::slice::from_ref(&test),
            &Architecture::power(),
            &ExploreOptions::default(),
            1,
        );
        assert_eq!(report.total(), 1);
    }

    #[test]
    fn gate_warning_off_power() {
        let src = "test g\ninit { x = 0; }\nprocess 1 { storegate; x := 1; }\nexists (x = 1)";
        let test = parse_litmus(src).unwrap();
        let out = run_test(&test, &Architecture::arm_nmca(), &ExploreOptions::default());
        assert_eq!(out.warnings.len(), 1);
        let out = run_test(&test, &Architecture::power(), &ExploreOptions::default());
        assert!(out.warnings.is_empty());
    }
}
