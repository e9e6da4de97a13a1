//! The exam session state machine.
//!
//! A session walks each question in order:
//!
//! ```text
//! Asking(k) --render_prompt--> AwaitingAnswer(k, 0) --submit--> Asking(k+1) | Finished
//!                                   |        ^
//!                                   +--------+ no match, retries left
//! ```
//!
//! Every transition takes the old session by reference and returns a new one;
//! nothing is mutated in place.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalizer::{normalize_answer, HomophoneTable, NormalizationResult, Transcript};
use crate::question_bank::{ExamDefinition, Question};

pub const SPEAK_NOW: &str = "Speak now...";
pub const NOT_CAUGHT: &str = "Sorry, I didn't catch that.";
pub const CORRECT: &str = "Correct!";
pub const WRONG: &str = "Wrong!";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum SessionState {
    Ready,
    Asking { question: u32 },
    AwaitingAnswer { question: u32, attempts_used: u32 },
    Finished,
}

impl SessionState {
    pub fn question(&self) -> Option<u32> {
        match *self {
            SessionState::Asking { question } | SessionState::AwaitingAnswer { question, .. } => Some(question),
            _ => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self, SessionState::Finished)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceKind {
    Question,
    Option,
    Instruction,
    Feedback,
    Score,
    Result,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub kind: UtteranceKind,
}

impl Utterance {
    fn new(kind: UtteranceKind, text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            kind,
        }
    }
}

/// Ordered speakable lines for the client's synthesis engine.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptScript(pub Vec<Utterance>);

impl PromptScript {
    pub fn texts(&self) -> Vec<&str> {
        self.0.iter().map(|u| u.text.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn push(&mut self, kind: UtteranceKind, text: impl Into<String>) {
        self.0.push(Utterance::new(kind, text));
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_number: u32,
    pub raw_transcript: String,
    pub result: NormalizationResult,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamSession {
    pub session_id: String,
    pub student_id: String,
    pub exam_id: String,
    pub state: SessionState,
    pub answers: Vec<AnswerRecord>,
    pub score: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub score: u32,
    pub total: u32,
    pub answers: Vec<AnswerRecord>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot {operation} in state {state:?}")]
    InvalidState {
        operation: &'static str,
        state: SessionState,
    },
    #[error("session belongs to exam {session:?}, not {given:?}")]
    ExamMismatch { session: String, given: String },
    #[error("exam {exam_id:?} has no question {number}")]
    MissingQuestion { exam_id: String, number: u32 },
}

/// What a submitted answer did to the session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub feedback: PromptScript,
    pub session: ExamSession,
    /// The normalizer's verdict, recorded even when a retry follows.
    pub result: NormalizationResult,
    /// `None` when the answer was not recognized and a retry remains.
    pub record: Option<AnswerRecord>,
}

pub fn final_result_line(score: u32, total: u32) -> String {
    format!("You scored {score} out of {total}")
}

impl ExamSession {
    /// Opens a session on question 1 with a fresh random id.
    pub fn start(exam: &ExamDefinition, student_id: impl Into<String>) -> Self {
        Self::start_with_id(uuid::Uuid::new_v4().to_string(), exam, student_id)
    }

    pub fn start_with_id(session_id: impl Into<String>, exam: &ExamDefinition, student_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            student_id: student_id.into(),
            exam_id: exam.exam_id.clone(),
            state: SessionState::Asking { question: 1 },
            answers: Vec::new(),
            score: 0,
        }
    }

    fn check_exam(&self, exam: &ExamDefinition) -> Result<(), EngineError> {
        if self.exam_id != exam.exam_id {
            return Err(EngineError::ExamMismatch {
                session: self.exam_id.clone(),
                given: exam.exam_id.clone(),
            });
        }
        Ok(())
    }

    fn question<'e>(&self, exam: &'e ExamDefinition, number: u32) -> Result<&'e Question, EngineError> {
        exam.question(number).ok_or_else(|| EngineError::MissingQuestion {
            exam_id: exam.exam_id.clone(),
            number,
        })
    }

    /// Reads out the current question. Moves `Asking(k)` to
    /// `AwaitingAnswer(k, 0)`; calling it again while awaiting re-reads the
    /// same script without changing state.
    pub fn render_prompt(&self, exam: &ExamDefinition) -> Result<(PromptScript, ExamSession), EngineError> {
        self.check_exam(exam)?;
        let (number, next_state) = match self.state {
            SessionState::Asking { question } => (
                question,
                SessionState::AwaitingAnswer {
                    question,
                    attempts_used: 0,
                },
            ),
            SessionState::AwaitingAnswer { question, .. } => (question, self.state),
            state => {
                return Err(EngineError::InvalidState {
                    operation: "render prompt",
                    state,
                })
            }
        };
        let q = self.question(exam, number)?;
        let mut script = PromptScript::default();
        script.push(UtteranceKind::Question, format!("Question {} {}", q.number, q.stem));
        for opt in &q.options {
            script.push(UtteranceKind::Option, format!("{}: {}", opt.label, opt.text));
        }
        script.push(UtteranceKind::Instruction, SPEAK_NOW);
        let mut next = self.clone();
        next.state = next_state;
        Ok((script, next))
    }

    /// Normalizes `transcript` against the current question and grades it.
    pub fn submit_transcript(
        &self,
        exam: &ExamDefinition,
        transcript: &Transcript,
        table: &HomophoneTable,
    ) -> Result<Submission, EngineError> {
        let (number, _) = self.awaiting()?;
        self.check_exam(exam)?;
        let q = self.question(exam, number)?;
        let result = normalize_answer(transcript, q, table);
        self.apply_result(exam, &transcript.raw, result)
    }

    fn awaiting(&self) -> Result<(u32, u32), EngineError> {
        match self.state {
            SessionState::AwaitingAnswer {
                question,
                attempts_used,
            } => Ok((question, attempts_used)),
            state => Err(EngineError::InvalidState {
                operation: "submit an answer",
                state,
            }),
        }
    }

    /// Grades an already-normalized answer. Used directly when replaying a
    /// session log, where the normalization outcome was recorded.
    pub fn apply_result(
        &self,
        exam: &ExamDefinition,
        raw_transcript: &str,
        result: NormalizationResult,
    ) -> Result<Submission, EngineError> {
        let (number, attempts_used) = self.awaiting()?;
        self.check_exam(exam)?;
        let q = self.question(exam, number)?;
        let settings = &exam.settings;
        let mut feedback = PromptScript::default();
        let mut next = self.clone();

        let label = result.label();
        if label.is_none() {
            feedback.push(UtteranceKind::Feedback, NOT_CAUGHT);
            if attempts_used < settings.retries_on_no_match {
                feedback.push(UtteranceKind::Instruction, SPEAK_NOW);
                next.state = SessionState::AwaitingAnswer {
                    question: number,
                    attempts_used: attempts_used + 1,
                };
                return Ok(Submission {
                    feedback,
                    session: next,
                    result,
                    record: None,
                });
            }
        }

        let correct = label == Some(q.correct);
        if let Some(label) = label {
            if settings.read_back_answer {
                feedback.push(UtteranceKind::Feedback, format!("You said: {}", label.as_lowercase()));
            }
        }
        feedback.push(UtteranceKind::Feedback, if correct { CORRECT } else { WRONG });
        if correct {
            next.score += 1;
        }
        if settings.announce_running_score {
            feedback.push(UtteranceKind::Score, format!("Your score is {}", next.score));
        }
        let record = AnswerRecord {
            question_number: number,
            raw_transcript: raw_transcript.to_string(),
            result: result.clone(),
            correct,
        };
        next.answers.push(record.clone());

        if number >= exam.len() {
            next.state = SessionState::Finished;
            feedback.push(UtteranceKind::Result, final_result_line(next.score, exam.len()));
        } else {
            next.state = SessionState::Asking { question: number + 1 };
        }
        Ok(Submission {
            feedback,
            session: next,
            result,
            record: Some(record),
        })
    }

    pub fn result_summary(&self, exam: &ExamDefinition) -> Result<ResultSummary, EngineError> {
        self.check_exam(exam)?;
        if !self.state.is_finished() {
            return Err(EngineError::InvalidState {
                operation: "summarize results",
                state: self.state,
            });
        }
        Ok(ResultSummary {
            score: self.score,
            total: exam.len(),
            answers: self.answers.clone(),
        })
    }

    pub fn wrong_count(&self) -> usize {
        self.answers.iter().filter(|a| !a.correct).count()
    }
}
