//! Table rendering: aligned text, CSV, and JSON. Output is byte-identical
//! across runs for identical inputs.

use crate::error::{Error, Result};

use super::config::OutputFormat;
use super::{ComparisonRow, SweepRow};

fn opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:.prec$}"),
        None => "-".to_string(),
    }
}

fn opt_sci(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v:.6e}")
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: &[String], widths: &[usize]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    out.push_str(&fmt_row(&head, &widths));
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row, &widths));
        out.push('\n');
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| csv_escape(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

const COMPARISON_HEADER: &[&str] = &[
    "scenario",
    "step",
    "gamma",
    "delta",
    "theta_analysis",
    "theta_sim",
    "ci95_half_width",
    "rel_error",
    "status",
];

fn comparison_cells(rows: &[ComparisonRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.step.to_string(),
                format!("{:.3}", r.gamma),
                opt_sci(r.delta),
                opt(r.theta_analysis, 4),
                opt(r.theta_sim, 4),
                opt(r.ci95_half_width, 4),
                opt(r.rel_error.map(|e| e * 100.0), 3),
                r.error.clone().unwrap_or_else(|| "ok".to_string()),
            ]
        })
        .collect()
}

pub fn format_comparison(rows: &[ComparisonRow], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Text => Ok(render_table(COMPARISON_HEADER, &comparison_cells(rows))),
        OutputFormat::Csv => Ok(render_csv(COMPARISON_HEADER, &comparison_cells(rows))),
        OutputFormat::Json => serde_json::to_string_pretty(rows)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Config(format!("json encoding failed: {e}"))),
    }
}

const SWEEP_HEADER: &[&str] = &[
    "scenario",
    "step",
    "axis",
    "value",
    "theta_analysis",
    "theta_sim",
    "ci95_half_width",
    "monotonicity_alarm",
    "status",
];

fn sweep_cells(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.step.to_string(),
                r.axis.clone(),
                format!("{:.6e}", r.value),
                opt(r.theta_analysis, 4),
                opt(r.theta_sim, 4),
                opt(r.ci95_half_width, 4),
                r.monotonicity_alarm.to_string(),
                r.error.clone().unwrap_or_else(|| "ok".to_string()),
            ]
        })
        .collect()
}

pub fn format_sweep(rows: &[SweepRow], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Text => Ok(render_table(SWEEP_HEADER, &sweep_cells(rows))),
        OutputFormat::Csv => Ok(render_csv(SWEEP_HEADER, &sweep_cells(rows))),
        OutputFormat::Json => serde_json::to_string_pretty(rows)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Config(format!("json encoding failed: {e}"))),
    }
}
