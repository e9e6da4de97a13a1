//! Comparison of a computed report against a published reference table.
//!
//! A reference row carries printed counts and printed metrics at two decimal
//! places. A printed metric agrees with a computed value when it equals that
//! value either rounded or truncated to two places. Three kinds of
//! disagreement are reported:
//!
//! * the printed metrics do not follow from the printed counts;
//! * the dataset's counts differ from the printed counts;
//! * the dataset's metrics differ from the printed metrics.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{DatasetError, EvaluationReport, LabelCounts, MetricRow};
use crate::question_bank::OptionLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: OptionLabel,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub n: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ReferenceRow {
    pub fn counts(&self) -> LabelCounts {
        LabelCounts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            n: self.n,
        }
    }
}

/// Reads `label,tp,fp,fn,n,precision,recall,f1` CSV.
pub fn load_reference<R: Read>(source: R) -> Result<Vec<ReferenceRow>, DatasetError> {
    let mut reader = csv::Reader::from_reader(source);
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| DatasetError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscrepancyKind {
    /// Printed metric does not follow from the printed counts.
    ReferenceInternal,
    /// Dataset count differs from the printed count.
    Count,
    /// Dataset metric differs from the printed metric.
    Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub label: OptionLabel,
    pub kind: DiscrepancyKind,
    pub field: String,
    pub computed: f64,
    pub printed: f64,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Discrepancy {
            label,
            field,
            computed,
            printed,
            ..
        } = self;
        match self.kind {
            DiscrepancyKind::ReferenceInternal => write!(
                f,
                "{label} {field}: reference counts imply {computed:.4}, reference prints {printed:.2}"
            ),
            DiscrepancyKind::Count => {
                write!(
                    f,
                    "{label} {field}: dataset gives {computed}, reference prints {printed}"
                )
            }
            DiscrepancyKind::Metric => write!(
                f,
                "{label} {field}: dataset gives {computed:.4}, reference prints {printed:.2}"
            ),
        }
    }
}

const EPS: f64 = 1e-9;

fn agrees(computed: f64, printed: f64) -> bool {
    let rounded = (computed * 100.0).round() / 100.0;
    let truncated = (computed * 100.0 + EPS).floor() / 100.0;
    (printed - rounded).abs() < EPS || (printed - truncated).abs() < EPS
}

fn metric_fields(row: &MetricRow) -> [(&'static str, f64); 3] {
    [("precision", row.precision), ("recall", row.recall), ("f1", row.f1)]
}

fn printed_fields(row: &ReferenceRow) -> [f64; 3] {
    [row.precision, row.recall, row.f1]
}

/// Lists every disagreement between `report` and `reference`, label by label
/// in A-G order.
pub fn compare_with_reference(report: &EvaluationReport, reference: &[ReferenceRow]) -> Vec<Discrepancy> {
    let mut out = Vec::new();
    let mut ordered: Vec<&ReferenceRow> = reference.iter().collect();
    ordered.sort_by_key(|r| r.label);
    for printed in ordered {
        let label = printed.label;
        let note = |kind, field: &str, computed: f64, shown: f64| Discrepancy {
            label,
            kind,
            field: field.to_string(),
            computed,
            printed: shown,
        };

        let implied = MetricRow::from_counts(label, printed.counts());
        for ((field, value), shown) in metric_fields(&implied).into_iter().zip(printed_fields(printed)) {
            if !agrees(value, shown) {
                out.push(note(DiscrepancyKind::ReferenceInternal, field, value, shown));
            }
        }

        let computed = report.row(label);
        let c = computed.counts;
        for (field, value, shown) in [
            ("tp", c.tp, printed.tp),
            ("fp", c.fp, printed.fp),
            ("fn", c.fn_, printed.fn_),
            ("n", c.n, printed.n),
        ] {
            if value != shown {
                out.push(note(DiscrepancyKind::Count, field, value as f64, shown as f64));
            }
        }

        for ((field, value), shown) in metric_fields(computed).into_iter().zip(printed_fields(printed)) {
            if !agrees(value, shown) {
                out.push(note(DiscrepancyKind::Metric, field, value, shown));
            }
        }
    }
    out
}
