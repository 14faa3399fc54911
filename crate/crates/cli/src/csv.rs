//! Result tables in CSV form.
//!
//! One fixed column set covers every command that emits tabular
//! results, so downstream tooling can concatenate files from
//! `optimize`, `simulate` and `sweep` runs without schema juggling.
//! Numbers are written in Rust's shortest round-trip form; columns
//! without a defined value hold `NaN`. Lines end in `\n` and no field
//! ever needs quoting, so the output is trivially RFC-4180 compatible.

use std::path::Path;

use crate::{write_atomic, CliError};

pub const HEADER: &str = "d,n,s,sigma,kappa0_bound,eta_threshold,epsilon0,seed,wall_ms";

/// One row of results. `sigma` is a counting-statistics error bar
/// (0 for noise-free theory rows), `eta_threshold` and `epsilon0` are
/// NaN when the row's `s` does not violate the inequality, and
/// `wall_ms` is wall-clock milliseconds (0 where determinism of the
/// output bytes matters more than timing).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub d: usize,
    pub n: usize,
    pub s: f64,
    pub sigma: f64,
    pub kappa0_bound: f64,
    pub eta_threshold: f64,
    pub epsilon0: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

impl ResultRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.d,
            self.n,
            self.s,
            self.sigma,
            self.kappa0_bound,
            self.eta_threshold,
            self.epsilon0,
            self.seed,
            self.wall_ms
        )
    }
}

/// Renders header plus rows as one CSV document.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

/// Writes the table atomically (temp file + rename).
pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    write_atomic(path, &render_csv(rows))
}
