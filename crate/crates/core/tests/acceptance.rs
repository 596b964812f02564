//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Set `NARRALYZE_ACCEPTANCE_TABLES=1` to print the synthetic
//! comparison tables.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::criteria::{self, Outcome};

const SEED: u64 = 7;

fn main() -> ExitCode {
    let show_tables = std::env::var_os("NARRALYZE_ACCEPTANCE_TABLES").is_some();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, run: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n} {name}: {why} [{secs:.1}s]");
            }
        }
    };
    report(1, "lexicon oracle", &|| criteria::lexicon_oracle(1000, SEED));
    report(2, "coherence oracle", &|| criteria::coherence_oracle(100, SEED));
    report(3, "evaluator schema", &|| criteria::evaluator_schema_suite(100, SEED));
    report(4, "TreeSHAP", &|| criteria::shap_suite(1000, SEED));
    report(5, "CV machinery", &|| criteria::cv_machinery(SEED));
    report(6, "directional synthetic replication", &|| {
        let (outcome, cv) = criteria::directional(SEED);
        if let (true, Some(cv)) = (show_tables, cv) {
            println!("{}", criteria::format_table(&cv));
        }
        outcome
    });
    report(7, "null control", &|| {
        let (outcome, cv) = criteria::null_control(SEED);
        if let (true, Some(cv)) = (show_tables, cv) {
            println!("{}", criteria::format_table(&cv));
        }
        outcome
    });
    report(8, "end-to-end determinism", &|| criteria::determinism(200, SEED));
    if failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
