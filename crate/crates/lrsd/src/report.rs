//! Trace CSVs.
//!
//! Per-run files have the columns
//!
//! ```text
//! iter,objective,rel_error,stationarity,gamma,elapsed_seconds
//! ```
//!
//! with one row per iteration (no row for the starting point, so a zero
//! budget gives a header-only file). The combined file of `compare` prepends
//! an `algorithm` column. Reals are written as `{:.16e}`, which round-trips
//! every `f64`.
//!
//! `rel_error = (objective - F*) / |F*|`, where `F*` is the smallest
//! objective seen in any run of the experiment or in the reference run.
//! `stationarity` is the gap measured at the iterate the row's iteration
//! started from; `elapsed_seconds` is cumulative solver time, or zero when
//! timing is disabled.

use std::fmt::Write;

use lrsd_core::IterationTrace;

use crate::run::RunResult;

pub const TRACE_HEADER: &str = "iter,objective,rel_error,stationarity,gamma,elapsed_seconds";

pub fn rel_error(objective: f64, f_star: f64) -> f64 {
    ((objective - f_star) / f_star.abs().max(f64::MIN_POSITIVE)).max(0.0)
}

fn push_row(out: &mut String, t: &IterationTrace<f64>, f_star: f64) {
    writeln!(
        out,
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        t.iter,
        t.objective,
        rel_error(t.objective, f_star),
        t.stationarity,
        t.gamma,
        t.elapsed_seconds
    )
    .expect("writing to a String");
}

pub fn trace_csv(trace: &[IterationTrace<f64>], f_star: f64) -> String {
    let mut out = String::with_capacity(100 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        push_row(&mut out, t, f_star);
    }
    out
}

pub fn combined_csv(runs: &[RunResult], f_star: f64) -> String {
    let mut out = format!("algorithm,{TRACE_HEADER}\n");
    for r in runs {
        for t in &r.trace {
            out.push_str(&r.name);
            out.push(',');
            push_row(&mut out, t, f_star);
        }
    }
    out
}

/// Smallest objective over all runs and the reference value.
pub fn f_star(runs: &[RunResult], reference: f64) -> f64 {
    runs.iter()
        .filter_map(RunResult::min_objective)
        .fold(reference, f64::min)
}
