//! Runs every acceptance criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion. Exits non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=3,9` restricts the run to the listed criteria.

use std::process::ExitCode;

use rosenblatt_spde::verify::{criteria, run_criterion, Context, VerifyOptions};

fn main() -> ExitCode {
    // libtest arguments such as --nocapture are accepted and ignored
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let ctx = Context::new(VerifyOptions::default());
    let mut failed = Vec::new();
    for c in criteria() {
        if only.as_ref().is_some_and(|o| !o.contains(&c)) {
            continue;
        }
        let r = run_criterion(c, &ctx).expect("criterion exists");
        println!("{r}");
        if !r.passed {
            failed.push(c);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
