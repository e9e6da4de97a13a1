use std::fmt::Write;

use super::{EvaluationReport, MetricRow};

fn flags(row: &MetricRow) -> String {
    let mut out = Vec::new();
    if row.flags.undefined_precision {
        out.push("undefined-precision");
    }
    if row.flags.undefined_recall {
        out.push("undefined-recall");
    }
    out.join(",")
}

/// Fixed-width text table: one row per label A-G, then the macro averages
/// and any reference discrepancies.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "strategy: {}  records: {}  correct: {}",
        report.strategy, report.dataset_size, report.correct
    );
    let _ = writeln!(
        out,
        "{:<7}{:>4}{:>4}{:>4}{:>4}{:>11}{:>8}{:>10}  FLAGS",
        "LABEL", "TP", "FP", "FN", "N", "PRECISION", "RECALL", "F1_SCORE"
    );
    for row in &report.rows {
        let c = row.counts;
        let line = format!(
            "{:<7}{:>4}{:>4}{:>4}{:>4}{:>11.2}{:>8.2}{:>10.2}  {}",
            row.label,
            c.tp,
            c.fp,
            c.fn_,
            c.n,
            row.precision,
            row.recall,
            row.f1,
            flags(row)
        );
        let _ = writeln!(out, "{}", line.trim_end());
    }
    match &report.macro_avg {
        Some(m) => {
            let _ = writeln!(
                out,
                "{:<23}{:>11.2}{:>8.2}{:>10.2}",
                "MACRO AVG", m.precision, m.recall, m.f1
            );
        }
        None => {
            let _ = writeln!(out, "{:<23}{:>11}{:>8}{:>10}", "MACRO AVG", "n/a", "n/a", "n/a");
        }
    }
    if !report.discrepancies.is_empty() {
        let _ = writeln!(out, "discrepancies against reference:");
        for d in &report.discrepancies {
            let _ = writeln!(out, "  - {d}");
        }
    }
    out
}

/// `label,precision,recall,f1` at four decimals, one line per label.
pub fn render_chart_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("label,precision,recall,f1\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4}",
            row.label, row.precision, row.recall, row.f1
        );
    }
    out
}
