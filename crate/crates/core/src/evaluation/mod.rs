//! Label-level evaluation of transcript normalization.
//!
//! A dataset is a list of `(person, response, label)` records. Each response
//! is run through one normalization strategy and tallied per label:
//!
//! * prediction equals truth: `tp[truth] += 1`
//! * no match: `fn[truth] += 1` (abstentions never produce a false positive)
//! * prediction is another label `m`: `fn[truth] += 1` and `fp[m] += 1`
//!
//! Precision, recall and F1 follow from the counts. A zero denominator yields
//! 0 with an "undefined" flag rather than 1.

mod reference;
mod report;

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalizer::{exact_letter_only, normalize_letter, HomophoneTable, NormalizationResult, Transcript};
use crate::question_bank::OptionLabel;

pub use reference::{compare_with_reference, load_reference, Discrepancy, DiscrepancyKind, ReferenceRow};
pub use report::{render_chart_csv, render_table};

const LABELS: usize = OptionLabel::ALL.len();

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub person_id: String,
    pub response: String,
    pub truth: OptionLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ExactLetter,
    Homophone,
}

impl Strategy {
    pub fn predict(self, response: &str, table: &HomophoneTable) -> NormalizationResult {
        let transcript = Transcript::new(response);
        match self {
            Strategy::ExactLetter => exact_letter_only(&transcript),
            Strategy::Homophone => normalize_letter(&transcript, table),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ExactLetter => "exact-letter",
            Strategy::Homophone => "homophone",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown strategy {0:?} (expected exact or homophone)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" | "exact-letter" => Ok(Strategy::ExactLetter),
            "homophone" => Ok(Strategy::Homophone),
            other => Err(UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: invalid label {label:?} (expected A-G)")]
    InvalidLabel { line: u64, label: String },
    #[error("dataset header must be `person,response,label`, found `{0}`")]
    Header(String),
}

/// Reads a `person,response,label` CSV. Records keep file order.
pub fn load_dataset<R: Read>(source: R) -> Result<Vec<LabeledRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.iter().map(str::trim).ne(["person", "response", "label"]) {
        return Err(DatasetError::Header(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        let label = row.get(2).unwrap_or_default();
        let truth = label.parse().map_err(|_| DatasetError::InvalidLabel {
            line,
            label: label.to_string(),
        })?;
        out.push(LabeledRecord {
            person_id: row.get(0).unwrap_or_default().to_string(),
            response: row.get(1).unwrap_or_default().to_string(),
            truth,
        });
    }
    Ok(out)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> DatasetError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    DatasetError::Parse {
        line,
        message: e.to_string(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Records whose truth is this label.
    pub n: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts([LabelCounts; LABELS]);

impl ConfusionCounts {
    pub fn get(&self, label: OptionLabel) -> LabelCounts {
        self.0[label.ordinal()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (OptionLabel, LabelCounts)> + '_ {
        OptionLabel::ALL.into_iter().zip(self.0.iter().copied())
    }

    /// Tallies one prediction against its truth.
    pub fn record(&mut self, truth: OptionLabel, predicted: Option<OptionLabel>) {
        self.0[truth.ordinal()].n += 1;
        match predicted {
            Some(p) if p == truth => self.0[truth.ordinal()].tp += 1,
            Some(p) => {
                self.0[truth.ordinal()].fn_ += 1;
                self.0[p.ordinal()].fp += 1;
            }
            None => self.0[truth.ordinal()].fn_ += 1,
        }
    }

    pub fn total_support(&self) -> u64 {
        self.0.iter().map(|c| c.n).sum()
    }

    pub fn correct(&self) -> u64 {
        self.0.iter().map(|c| c.tp).sum()
    }
}

pub fn confusion(records: &[LabeledRecord], strategy: Strategy, table: &HomophoneTable) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for r in records {
        counts.record(r.truth, strategy.predict(&r.response, table).label());
    }
    counts
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub undefined_precision: bool,
    pub undefined_recall: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: OptionLabel,
    #[serde(flatten)]
    pub counts: LabelCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flags: MetricFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl MetricRow {
    pub fn from_counts(label: OptionLabel, counts: LabelCounts) -> Self {
        let (precision, undefined_precision) = ratio(counts.tp, counts.tp + counts.fp);
        let (recall, undefined_recall) = ratio(counts.tp, counts.tp + counts.fn_);
        Self {
            label,
            counts,
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            flags: MetricFlags {
                undefined_precision,
                undefined_recall,
            },
        }
    }
}

pub fn metrics(counts: &ConfusionCounts) -> Vec<MetricRow> {
    counts
        .iter()
        .map(|(label, c)| MetricRow::from_counts(label, c))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no label has any support; macro average is undefined")]
pub struct NoSupportedLabels;

/// Unweighted mean over the rows whose label has support.
pub fn macro_average(rows: &[MetricRow]) -> Result<MacroAverage, NoSupportedLabels> {
    let supported: Vec<&MetricRow> = rows.iter().filter(|r| r.counts.n > 0).collect();
    if supported.is_empty() {
        return Err(NoSupportedLabels);
    }
    let k = supported.len() as f64;
    let mean = |f: fn(&MetricRow) -> f64| supported.iter().map(|r| f(r)).sum::<f64>() / k;
    Ok(MacroAverage {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub strategy: Strategy,
    pub dataset_size: usize,
    pub correct: u64,
    pub rows: Vec<MetricRow>,
    #[serde(rename = "macro")]
    pub macro_avg: Option<MacroAverage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discrepancies: Vec<Discrepancy>,
}

pub fn evaluate(records: &[LabeledRecord], strategy: Strategy, table: &HomophoneTable) -> EvaluationReport {
    let counts = confusion(records, strategy, table);
    let rows = metrics(&counts);
    EvaluationReport {
        strategy,
        dataset_size: records.len(),
        correct: counts.correct(),
        macro_avg: macro_average(&rows).ok(),
        rows,
        discrepancies: Vec::new(),
    }
}

impl EvaluationReport {
    pub fn row(&self, label: OptionLabel) -> &MetricRow {
        &self.rows[label.ordinal()]
    }
}
