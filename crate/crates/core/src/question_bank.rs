//! Exam content and registered students.
//!
//! A bank is a single JSON document holding every exam definition and every
//! student who may log in. Loading is all-or-nothing: [`load_bank`] rejects
//! the whole file on the first parse error or on any invariant violation,
//! while [`validate_bank`] reports every violation it finds without failing.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalizer;

/// One of the seven answer letters, ordered A < B < ... < G.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl OptionLabel {
    pub const ALL: [OptionLabel; 7] = [
        OptionLabel::A,
        OptionLabel::B,
        OptionLabel::C,
        OptionLabel::D,
        OptionLabel::E,
        OptionLabel::F,
        OptionLabel::G,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        Self::ALL.get(ordinal).copied()
    }

    /// Accepts `a`..`g` in either case.
    pub fn from_char(c: char) -> Option<Self> {
        let c = c.to_ascii_uppercase();
        if ('A'..='G').contains(&c) {
            Self::from_ordinal((c as u8 - b'A') as usize)
        } else {
            None
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn as_lowercase(self) -> char {
        self.as_char().to_ascii_lowercase()
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_char().encode_utf8(&mut [0; 4]))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid option label {0:?} (expected one of A-G)")]
pub struct InvalidLabel(pub String);

impl FromStr for OptionLabel {
    type Err = InvalidLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c).ok_or_else(|| InvalidLabel(s.to_string())),
            _ => Err(InvalidLabel(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerOption {
    pub label: OptionLabel,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub number: u32,
    pub stem: String,
    pub options: Vec<AnswerOption>,
    pub correct: OptionLabel,
}

impl Question {
    pub fn labels(&self) -> impl Iterator<Item = OptionLabel> + '_ {
        self.options.iter().map(|o| o.label)
    }

    pub fn has_label(&self, label: OptionLabel) -> bool {
        self.labels().any(|l| l == label)
    }

    pub fn option(&self, label: OptionLabel) -> Option<&AnswerOption> {
        self.options.iter().find(|o| o.label == label)
    }
}

/// Per-exam interaction settings. The defaults give the strict one-shot
/// protocol: no re-prompt on an unrecognized answer, read the heard letter
/// back, and announce the running score after every question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExamSettings {
    pub retries_on_no_match: u32,
    pub read_back_answer: bool,
    pub announce_running_score: bool,
}

impl Default for ExamSettings {
    fn default() -> Self {
        Self {
            retries_on_no_match: 0,
            read_back_answer: true,
            announce_running_score: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExamDefinition {
    pub exam_id: String,
    pub title: String,
    #[serde(default)]
    pub settings: ExamSettings,
    pub questions: Vec<Question>,
}

impl ExamDefinition {
    pub fn question(&self, number: u32) -> Option<&Question> {
        let idx = usize::try_from(number).ok()?.checked_sub(1)?;
        self.questions.get(idx).filter(|q| q.number == number)
    }

    pub fn len(&self) -> u32 {
        self.questions.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentRecord {
    pub student_id: String,
    pub display_name: String,
    /// Stored already normalized, e.g. `"student 123"`.
    pub spoken_credential: String,
}

/// The whole content of a bank file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bank {
    pub exams: Vec<ExamDefinition>,
    #[serde(default)]
    pub students: Vec<StudentRecord>,
}

impl Bank {
    pub fn exam(&self, exam_id: &str) -> Option<&ExamDefinition> {
        self.exams.iter().find(|e| e.exam_id == exam_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ViolationKind {
    #[error("exam has no questions")]
    NoQuestions,
    #[error("exam_id is used by more than one exam")]
    DuplicateExamId,
    #[error("question number {found} out of sequence (expected {expected})")]
    QuestionNumbering { expected: u32, found: u32 },
    #[error("question stem is empty")]
    EmptyStem,
    #[error("question has {0} options (expected 2 to 7)")]
    OptionCount(usize),
    #[error("option label {0} appears more than once")]
    DuplicateOptionLabel(OptionLabel),
    #[error("option labels must run A, B, C, ... in order (position {position} is {found})")]
    OptionLabelOrder { position: usize, found: OptionLabel },
    #[error("option {0} has empty text")]
    EmptyOptionText(OptionLabel),
    #[error("correct answer {0} is not one of the options")]
    CorrectNotAnOption(OptionLabel),
    #[error("student_id is used by more than one student")]
    DuplicateStudentId,
    #[error("spoken credential {found:?} is not normalized (expected {expected:?})")]
    CredentialNotNormalized { found: String, expected: String },
}

/// Where a violation was found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    Exam { exam_id: String, question: Option<u32> },
    Student { student_id: String },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Exam {
                exam_id,
                question: Some(q),
            } => {
                write!(f, "exam {exam_id:?} question {q}")
            }
            Location::Exam {
                exam_id,
                question: None,
            } => write!(f, "exam {exam_id:?}"),
            Location::Student { student_id } => write!(f, "student {student_id:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{location}: {kind}")]
pub struct Violation {
    pub location: Location,
    pub kind: ViolationKind,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("malformed bank file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read bank file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid bank: {first}{}", if *.more > 0 { format!(" (and {} more)", .more) } else { String::new() })]
    Invalid {
        first: Violation,
        more: usize,
        violations: Vec<Violation>,
    },
}

/// Parses a bank file without checking invariants. See [`validate_bank`].
pub fn parse_bank<R: Read>(source: R) -> Result<Bank, BankError> {
    Ok(serde_json::from_reader(source)?)
}

/// Parses and validates a bank file. Any violation rejects the whole file.
pub fn load_bank<R: Read>(source: R) -> Result<Bank, BankError> {
    let bank = parse_bank(source)?;
    let violations = validate_bank(&bank);
    match violations.first() {
        None => Ok(bank),
        Some(first) => Err(BankError::Invalid {
            first: first.clone(),
            more: violations.len() - 1,
            violations,
        }),
    }
}

pub fn load_bank_str(source: &str) -> Result<Bank, BankError> {
    load_bank(source.as_bytes())
}

/// Lists every invariant violation in `bank`; empty means valid.
pub fn validate_bank(bank: &Bank) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen_exams = HashSet::new();
    for exam in &bank.exams {
        let at = |question| Location::Exam {
            exam_id: exam.exam_id.clone(),
            question,
        };
        if !seen_exams.insert(exam.exam_id.as_str()) {
            out.push(Violation {
                location: at(None),
                kind: ViolationKind::DuplicateExamId,
            });
        }
        if exam.questions.is_empty() {
            out.push(Violation {
                location: at(None),
                kind: ViolationKind::NoQuestions,
            });
        }
        for (idx, q) in exam.questions.iter().enumerate() {
            let expected = idx as u32 + 1;
            if q.number != expected {
                out.push(Violation {
                    location: at(Some(q.number)),
                    kind: ViolationKind::QuestionNumbering {
                        expected,
                        found: q.number,
                    },
                });
            }
            for kind in question_violations(q) {
                out.push(Violation {
                    location: at(Some(q.number)),
                    kind,
                });
            }
        }
    }

    let mut seen_students = HashSet::new();
    for student in &bank.students {
        let at = || Location::Student {
            student_id: student.student_id.clone(),
        };
        if !seen_students.insert(student.student_id.as_str()) {
            out.push(Violation {
                location: at(),
                kind: ViolationKind::DuplicateStudentId,
            });
        }
        let expected = normalizer::normalize_credential(&student.spoken_credential);
        if expected != student.spoken_credential {
            out.push(Violation {
                location: at(),
                kind: ViolationKind::CredentialNotNormalized {
                    found: student.spoken_credential.clone(),
                    expected,
                },
            });
        }
    }
    out
}

fn question_violations(q: &Question) -> Vec<ViolationKind> {
    let mut out = Vec::new();
    if q.stem.trim().is_empty() {
        out.push(ViolationKind::EmptyStem);
    }
    if !(2..=7).contains(&q.options.len()) {
        out.push(ViolationKind::OptionCount(q.options.len()));
    }
    let mut seen = HashSet::new();
    let mut duplicated = false;
    for opt in &q.options {
        if !seen.insert(opt.label) {
            duplicated = true;
            out.push(ViolationKind::DuplicateOptionLabel(opt.label));
        }
        if opt.text.trim().is_empty() {
            out.push(ViolationKind::EmptyOptionText(opt.label));
        }
    }
    if !duplicated {
        if let Some((position, opt)) = q.options.iter().enumerate().find(|(i, o)| o.label.ordinal() != *i) {
            out.push(ViolationKind::OptionLabelOrder {
                position,
                found: opt.label,
            });
        }
    }
    if !q.has_label(q.correct) {
        out.push(ViolationKind::CorrectNotAnOption(q.correct));
    }
    out
}
