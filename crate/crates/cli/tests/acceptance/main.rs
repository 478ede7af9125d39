//! Acceptance suite. Each criterion prints one `[PASS]` or `[FAIL]` line; the process
//! exits nonzero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,4,9` restricts the run to the listed criteria.

mod cli_runs;
mod gradients;
mod oracles;
mod pipeline;
mod training;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

/// Outcome of one criterion: pass/fail plus a one-line summary.
pub struct Verdict {
    pub pass: bool,
    pub summary: String,
}

impl Verdict {
    pub fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
        }
    }
}

type Criterion = (usize, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "gradient suite", gradients::run),
    (2, "sparse convolution oracle", oracles::sparse_conv),
    (3, "uncertainty weighting closed form", oracles::uncertainty),
    (4, "data pipeline oracle", pipeline::run),
    (5, "kNN exactness", oracles::knn),
    (6, "metric fixtures", oracles::metrics),
    (7, "disposability", cli_runs::disposability),
    (8, "toy joint-learning trend", training::run),
    (9, "interaction module identity and invariance", oracles::pvi),
    (10, "determinism", cli_runs::determinism),
];

fn selected() -> Option<Vec<usize>> {
    let v = std::env::var("ACCEPTANCE_ONLY").ok()?;
    Some(v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() -> ExitCode {
    let only = selected();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let verdict = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Verdict::new(false, format!("panicked: {msg}"))
            }
        };
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {id:>2} {name}: {} ({:.1} s)",
            verdict.summary,
            start.elapsed().as_secs_f64()
        );
        if !verdict.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
