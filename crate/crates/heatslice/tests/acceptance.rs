//! Acceptance scorecard: every criterion prints one pass/fail line; the process fails if any does.

use heatslice::experiments::{run_all, Tolerances};
use heatslice::par::Execution;

fn main() {
    let tol = Tolerances::default();
    let results = run_all(&tol, 11, Execution::default(), |r| println!("{}", r.line()));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
