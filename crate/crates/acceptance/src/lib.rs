//! Runner for the acceptance suite: one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Env var holding a comma-separated list of criterion ids to run.
pub const ONLY_VAR: &str = "XTASC_ACCEPTANCE_ONLY";

pub type Check = fn() -> Result<String, String>;

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Wall-clock limit; exceeding it fails the criterion.
    pub budget: Option<Duration>,
    pub check: Check,
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn selected(id: u32) -> bool {
    match std::env::var(ONLY_VAR) {
        Ok(list) if !list.trim().is_empty() => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        _ => true,
    }
}

/// Runs each selected criterion and reports whether all of them passed.
pub fn run(criteria: &[Criterion]) -> bool {
    let mut all = true;
    for c in criteria.iter().filter(|c| selected(c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64())),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("{tag} [{:>2}] {} ({:.2}s) {detail}", c.id, c.name, elapsed.as_secs_f64());
        all &= outcome.is_ok();
    }
    all
}
