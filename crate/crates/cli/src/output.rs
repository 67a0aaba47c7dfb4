//! Trace CSV and JSON report writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use tullock_core::dynamics::Trace;

use crate::error::CliError;

/// 17 significant digits, `.` decimal separator; round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// `t,x_1..x_n,V,V_1..V_n,step_used`, one row per record, `\n` line endings.
pub fn trace_csv(trace: &Trace) -> String {
    let n = trace.records.first().map_or(0, |r| r.x.len());
    let mut out = String::from("t");
    for i in 1..=n {
        write!(out, ",x_{i}").unwrap();
    }
    out.push_str(",V");
    for i in 1..=n {
        write!(out, ",V_{i}").unwrap();
    }
    out.push_str(",step_used\n");
    for r in &trace.records {
        out.push_str(&fmt_f64(r.t));
        for v in r.x.iter().chain([&r.potential]).chain(&r.regret).chain([&r.step_used]) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}
