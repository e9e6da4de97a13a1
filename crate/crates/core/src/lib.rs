//! Core of the viva-cbt exam service.
//!
//! * [`question_bank`] - exam content, students, and bank-file loading.
//! * [`normalizer`] - speech transcripts to option labels and credentials.
//! * [`exam_engine`] - the per-session question/answer state machine.
//! * [`evaluation`] - per-label confusion counts, precision/recall/F1, reports.

pub mod evaluation;
pub mod exam_engine;
pub mod normalizer;
pub mod question_bank;

pub use exam_engine::{ExamSession, PromptScript, SessionState, Utterance, UtteranceKind};
pub use normalizer::{HomophoneTable, NormalizationResult, Transcript};
pub use question_bank::{ExamDefinition, OptionLabel, Question, StudentRecord};
