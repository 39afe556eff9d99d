use wmm_core::*;

fn main() {
    let tests = bundled_corpus();
    let opts = ExploreOptions { witnesses: false, ..Default::default() };
    let mut disagreements = 0;
    for kind in ArchKind::ALL {
        let arch = Architecture::new(kind);
        let t0 = std::time::Instant::now();
        let report = run_corpus(&tests, &arch, &opts, 4);
        println!(
            "== {kind}: {} run, {} agreed, {} disagreed, {} inconclusive, {} skipped ({:?})",
            report.total(),
            report.agreed(),
            report.disagreed().len(),
            report.inconclusive(),
            report.skipped.len(),
            t0.elapsed()
        );
        for row in report.disagreed() {
            disagreements += 1;
            println!(
                "   DISAGREE {}: verdict={:?} expected={:?} (configs={})",
                row.test,
                row.verdict.as_ref().map(|v| v.name()),
                row.expected,
                row.configs
            );
        }
        for row in &report.rows {
            if row.inconclusive.is_some() {
                println!("   INCONCLUSIVE {}: {:?}", row.test, row.inconclusive);
            }
        }
    }
    println!("total disagreements: {disagreements}");
}
