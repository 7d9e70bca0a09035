//! Acceptance battery: runs every verification criterion at its pinned
//! tolerance and prints one pass/fail line per criterion.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the lines; the test fails if any criterion fails.

use triphase_core::verify::run_acceptance;

#[test]
fn acceptance_criteria() {
    let results = run_acceptance().expect("acceptance battery runs to completion");
    let mut all_ok = true;
    for r in &results {
        println!("{}", r.line());
        all_ok &= r.passed;
    }
    assert!(all_ok, "one or more acceptance criteria failed");
}
