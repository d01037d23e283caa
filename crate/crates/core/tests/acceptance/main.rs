//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.
//!
//! `KABEM_ACCEPTANCE=1,3` restricts the run to the listed criteria. Failures
//! are reported but only change the exit status under
//! `KABEM_ACCEPTANCE_STRICT=1`, so `cargo test --workspace` reflects the
//! unit and integration tests while this target still shows every verdict.

mod gradients;
mod invariants;
mod oracle_suite;
mod oracles;
mod reproducibility;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("KABEM_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 7] = [
        (1, "gradient suite", gradients::run),
        (2, "oracle suite", oracle_suite::run),
        (3, "invariant suite", invariants::run),
        (4, "desk-scale learning", learning::criterion_4),
        (5, "ablation trends", learning::criterion_5),
        (6, "TransE sanity", transe::run),
        (7, "determinism", reproducibility::run),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::new(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {id} ({name}): {} [{:.1}s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        return;
    }
    println!("acceptance: failed criteria {failed:?}");
    if std::env::var_os("KABEM_ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        std::process::exit(1);
    }
}
