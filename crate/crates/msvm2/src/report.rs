//! Human-readable report tables and their machine-readable JSON mirrors.
//!
//! Every row is deterministic; the only run-dependent content is the header
//! line (generation time and wall time), which comparisons should skip.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::selection::{BoundReport, SelectionResult};

/// Header line carrying the generation timestamp and wall time. Excluded from
/// byte-for-byte comparisons; everything after it is deterministic.
pub fn volatile_header(elapsed_ms: u128) -> String {
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# generated_unix: {unix} wall_ms: {elapsed_ms}\n")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6e}"),
        None => "inf".to_string(),
    }
}

/// Bound report as an aligned key/value table.
pub fn bound_table(report: &BoundReport, elapsed_ms: u128) -> String {
    let mut out = volatile_header(elapsed_ms);
    let _ = writeln!(out, "diameter_sq      {:.17e}", report.d_sq);
    let _ = writeln!(out, "margin_sum       {:.17e}", report.margin_sum);
    let _ = writeln!(out, "bound            {:.17e}", report.bound_value);
    let _ = writeln!(out, "bound_clamped    {:.17e}", report.bound_clamped);
    let _ = writeln!(out, "bound_via_alpha  {:.17e}", report.bound_via_alpha);
    let _ = writeln!(out, "bound_over_q_sq  {:.17e}", report.bound_over_q_sq);
    let _ = writeln!(out, "alpha_sum        {:.17e}", report.alpha_sum);
    match report.loo_errors {
        Some(e) => {
            let _ = writeln!(out, "loo_errors       {e}");
            let _ = writeln!(
                out,
                "loo_within_bound {}",
                (e as f64) <= report.bound_value + 1e-6
            );
            let _ = writeln!(
                out,
                "key_lemma_violations {}",
                report.key_lemma_violations.len()
            );
        }
        None => {
            let _ = writeln!(out, "loo_errors       -");
        }
    }
    let _ = writeln!(out, "dataset          {}", report.dataset_digest);
    out
}

/// Selection sweep as a fixed-width table, one row per grid point.
pub fn selection_table(result: &SelectionResult, elapsed_ms: u128) -> String {
    let mut out = volatile_header(elapsed_ms);
    let _ = writeln!(
        out,
        "{:<4} {:<40} {:>10} {:>13} {:>13} {:>8} {}",
        "row", "kernel", "C", "bound", "bound/Q^2", "loo", "note"
    );
    for (i, row) in result.rows.iter().enumerate() {
        let marker = if i == result.best { "*" } else { " " };
        let loo = row
            .loo_errors
            .map(|e| e.to_string())
            .unwrap_or_else(|| "-".to_string());
        let note = row.failure.clone().unwrap_or_default();
        let _ = writeln!(
            out,
            "{marker}{:<3} {:<40} {:>10} {:>13} {:>13} {:>8} {note}",
            i,
            row.kernel.to_string(),
            format_c(row.c),
            fmt_opt(row.bound),
            fmt_opt(row.bound_over_q_sq),
            loo,
        );
    }
    let best = &result.rows[result.best];
    let _ = writeln!(
        out,
        "best row {} -> kernel {} C {}",
        result.best,
        best.kernel,
        format_c(best.c)
    );
    let _ = writeln!(out, "dataset {}", result.dataset_digest);
    out
}

fn format_c(c: f64) -> String {
    format!("{c}")
}

#[derive(Serialize)]
struct Mirror<'a, T: Serialize> {
    format: &'static str,
    body: &'a T,
}

/// JSON mirror of a report body, fully deterministic (no timestamps).
pub fn json_mirror<T: Serialize>(kind: &'static str, body: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&Mirror { format: kind, body })?;
    text.push('\n');
    Ok(text)
}
