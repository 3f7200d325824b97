//! Side-by-side comparison of aggregate reports.

use std::fmt::Write as _;

use super::{PipelineError, Result};
use crate::metrics::{format_percent, AggregateReport};

pub const TABLE_COLUMNS: [&str; 3] = ["Sensitivity", "MAP", "F1"];

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    /// Sensitivity, MAP, F1 as fractions.
    pub values: [Option<f64>; 3],
    /// Best in column, compared at two-decimal percent precision.
    pub best: [bool; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub corner: String,
    pub k: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Hundredths of a percent, the displayed precision.
fn display_key(v: f64) -> i64 {
    (v * 10_000.0).round() as i64
}

/// One row per report, in input order. All reports must share `k`.
pub fn compare_runs(reports: &[AggregateReport]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or(PipelineError::NoReports)?;
    if reports.iter().any(|r| r.k != first.k) {
        let mut ks: Vec<usize> = reports.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        return Err(PipelineError::MixedK(ks));
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            label: r.model_label.clone(),
            values: [r.mean_sensitivity, r.map, r.mean_f1],
            best: [false; 3],
        })
        .collect();
    for col in 0..3 {
        let best = rows.iter().filter_map(|r| r.values[col]).map(display_key).max();
        if let Some(best) = best {
            for row in &mut rows {
                row.best[col] = row.values[col].map(display_key) == Some(best);
            }
        }
    }
    Ok(ComparisonTable {
        corner: "Model \\ in %".to_owned(),
        k: first.k,
        rows,
    })
}

impl ComparisonTable {
    pub fn with_corner(mut self, corner: impl Into<String>) -> Self {
        self.corner = corner.into();
        self
    }

    /// Fixed-width text; best values carry a leading `*`.
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .chain([self.corner.chars().count()])
            .max()
            .unwrap_or(0)
            + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", self.corner);
        for c in TABLE_COLUMNS {
            let _ = write!(out, "{c:>13}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<width$}", row.label);
            for (v, best) in row.values.iter().zip(row.best) {
                let cell = format_percent(*v);
                let cell = if best { format!("*{cell}") } else { cell };
                let _ = write!(out, "{cell:>13}");
            }
            out.push('\n');
        }
        out
    }

    /// Markdown table; best values in bold.
    pub fn render_markdown(&self) -> String {
        let mut out = format!("| {} | {} |\n", self.corner, TABLE_COLUMNS.join(" | "));
        out.push_str("|---|---:|---:|---:|\n");
        for row in &self.rows {
            let cells: Vec<String> = row
                .values
                .iter()
                .zip(row.best)
                .map(|(v, best)| {
                    let cell = format_percent(*v);
                    if best {
                        format!("**{cell}**")
                    } else {
                        cell
                    }
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", row.label, cells.join(" | "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(label: &str, k: usize, s: f64, m: f64, f: f64) -> AggregateReport {
        AggregateReport {
            model_label: label.into(),
            k,
            n_requirements_evaluated: 1,
            n_excluded: 0,
            mean_sensitivity: Some(s),
            map: Some(m),
            mean_f1: Some(f),
            mean_precision: None,
            mean_recall: None,
            per_report: Default::default(),
        }
    }

    #[test]
    fn single_row_is_best_everywhere() {
        let t = compare_runs(&[report("only", 5, 0.1, 0.2, 0.3)]).unwrap();
        assert_eq!(t.rows[0].best, [true; 3]);
    }

    #[test]
    fn ties_highlight_both() {
        let t = compare_runs(&[report("a", 5, 0.1, 0.4, 0.3), report("b", 5, 0.2, 0.4, 0.1)]).unwrap();
        assert_eq!(t.rows[0].best, [false, true, true]);
        assert_eq!(t.rows[1].best, [true, true, false]);
    }

    #[test]
    fn ties_at_displayed_precision() {
        let t = compare_runs(&[report("a", 5, 0.123_44, 0.0, 0.0), report("b", 5, 0.123_41, 0.0, 0.0)]).unwrap();
        assert!(t.rows[0].best[0] && t.rows[1].best[0]);
    }

    #[test]
    fn mixed_k_rejected() {
        assert!(matches!(
            compare_runs(&[report("a", 5, 0.0, 0.0, 0.0), report("b", 10, 0.0, 0.0, 0.0)]),
            Err(PipelineError::MixedK(ks)) if ks == [5, 10]
        ));
        assert!(matches!(compare_runs(&[]), Err(PipelineError::NoReports)));
    }

    #[test]
    fn text_layout() {
        let t = compare_runs(&[
            report("x", 5, 0.5, 0.25, 0.125),
            report("longer label", 5, 0.1, 0.3, 0.1),
        ])
        .unwrap();
        let text = t.render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Model \\ in %"));
        assert!(lines[1].ends_with("*50.00        25.00       *12.50"), "{}", lines[1]);
        assert!(lines[2].contains("*30.00"));
        assert!(t.render_markdown().contains("| x | **50.00** | 25.00 | **12.50** |"));
    }
}
