//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Tolerances are pinned constants in each check.

#[path = "../common/mod.rs"]
mod common;

mod evaluation;
mod geometry;
mod pipeline;
mod service;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome detail on success, reason on failure.
pub type Check = Result<String, String>;

/// `Err` with a formatted reason unless `cond` holds.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("ray-intersection oracle equivalence", geometry::ray_oracle),
        ("fit-loss gradient check", geometry::gradient_check),
        ("decomposition recovery", geometry::recovery),
        ("metrics exactness", evaluation::metrics_exactness),
        ("scale-shift optimality", evaluation::scale_shift_optimality),
        ("bAcc arithmetic", evaluation::bacc_arithmetic),
        ("edit-locality contract", pipeline::edit_locality),
        ("determinism", pipeline::determinism),
        ("protocol fuzz", pipeline::protocol_fuzz),
        ("service integrity", service::integrity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
