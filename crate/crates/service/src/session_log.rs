//! Append-only JSONL log of session events, and crash recovery from it.
//!
//! Each line is one [`SessionLogEntry`]:
//!
//! ```json
//! {"seq":3,"session_id":"...","kind":"answered","payload":{...},"ts":"2026-01-01T00:00:00Z"}
//! ```
//!
//! `seq` starts at 1 for every session and has no gaps. Entries are synced to
//! disk before the request that produced them is answered.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use viva_cbt_core::exam_engine::{AnswerRecord, ExamSession, SessionState};
use viva_cbt_core::normalizer::NormalizationResult;
use viva_cbt_core::question_bank::Bank;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        exam_id: String,
        student_id: String,
    },
    Prompted {
        question: u32,
    },
    Answered {
        question: u32,
        transcript: String,
        result: NormalizationResult,
        /// Absent when the answer was not recognized and a retry remained.
        record: Option<AnswerRecord>,
        score_delta: u32,
    },
    Finished {
        score: u32,
        total: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub seq: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: SessionEvent,
    pub ts: DateTime<Utc>,
}

impl SessionLogEntry {
    pub fn new(seq: u64, session_id: impl Into<String>, event: SessionEvent) -> Self {
        Self {
            seq,
            session_id: session_id.into(),
            event,
            ts: Utc::now(),
        }
    }
}

pub struct SessionLog {
    file: File,
}

impl SessionLog {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    /// Writes the entries as consecutive lines and syncs them to disk.
    pub fn append(&mut self, entries: &[SessionLogEntry]) -> io::Result<()> {
        let mut buf = Vec::new();
        for entry in entries {
            serde_json::to_writer(&mut buf, entry)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LogFault {
    #[error("line {line}: unreadable log entry: {message}")]
    Malformed { line: usize, message: String },
    #[error("session {session_id}: expected seq {expected}, found seq {found}")]
    Gap {
        session_id: String,
        expected: u64,
        found: u64,
    },
    #[error("session {session_id}: seq {seq} refers to a session that was never started")]
    UnknownSession { session_id: String, seq: u64 },
    #[error("session {session_id}: seq {seq} is inconsistent: {reason}")]
    Inconsistent {
        session_id: String,
        seq: u64,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecoveredSession {
    pub session: ExamSession,
    pub last_seq: u64,
}

pub type SessionMap = HashMap<String, RecoveredSession>;

/// Recovery hit a bad entry. `partial` holds every session up to its last
/// valid entry; the faulty session is frozen at the entry before `fault`.
#[derive(Debug, Error)]
#[error("corrupt session log: {fault}")]
pub struct RecoveryError {
    pub fault: LogFault,
    pub partial: SessionMap,
}

/// Rebuilds every session from its logged events.
pub fn recover<I>(entries: I, bank: &Bank) -> Result<SessionMap, RecoveryError>
where
    I: IntoIterator<Item = SessionLogEntry>,
{
    let mut sessions = SessionMap::new();
    let mut first_fault = None;
    let mut frozen: Vec<String> = Vec::new();
    for entry in entries {
        if frozen.contains(&entry.session_id) {
            continue;
        }
        if let Err(fault) = apply(&mut sessions, entry.clone(), bank) {
            frozen.push(entry.session_id);
            first_fault.get_or_insert(fault);
        }
    }
    match first_fault {
        None => Ok(sessions),
        Some(fault) => Err(RecoveryError {
            fault,
            partial: sessions,
        }),
    }
}

fn apply(sessions: &mut SessionMap, entry: SessionLogEntry, bank: &Bank) -> Result<(), LogFault> {
    let SessionLogEntry {
        seq, session_id, event, ..
    } = entry;
    let inconsistent = |reason: String| LogFault::Inconsistent {
        session_id: session_id.clone(),
        seq,
        reason,
    };

    if let SessionEvent::Started { exam_id, student_id } = &event {
        if let Some(existing) = sessions.get(&session_id) {
            return Err(LogFault::Gap {
                session_id: session_id.clone(),
                expected: existing.last_seq + 1,
                found: seq,
            });
        }
        if seq != 1 {
            return Err(LogFault::Gap {
                session_id,
                expected: 1,
                found: seq,
            });
        }
        let exam = bank
            .exam(exam_id)
            .ok_or_else(|| inconsistent(format!("unknown exam {exam_id:?}")))?;
        let session = ExamSession::start_with_id(session_id.clone(), exam, student_id.clone());
        sessions.insert(session_id, RecoveredSession { session, last_seq: 1 });
        return Ok(());
    }

    let live = sessions.get_mut(&session_id).ok_or_else(|| LogFault::UnknownSession {
        session_id: session_id.clone(),
        seq,
    })?;
    if seq != live.last_seq + 1 {
        return Err(LogFault::Gap {
            session_id,
            expected: live.last_seq + 1,
            found: seq,
        });
    }
    let exam = bank
        .exam(&live.session.exam_id)
        .ok_or_else(|| inconsistent(format!("unknown exam {:?}", live.session.exam_id)))?;

    let next = match event {
        SessionEvent::Started { .. } => unreachable!("handled above"),
        SessionEvent::Prompted { question } => {
            if live.session.state != (SessionState::Asking { question }) {
                return Err(inconsistent(format!(
                    "prompt for question {question} in state {:?}",
                    live.session.state
                )));
            }
            let (_, next) = live
                .session
                .render_prompt(exam)
                .map_err(|e| inconsistent(e.to_string()))?;
            next
        }
        SessionEvent::Answered {
            question,
            transcript,
            result,
            record,
            score_delta,
        } => {
            if live.session.state.question() != Some(question) {
                return Err(inconsistent(format!(
                    "answer for question {question} in state {:?}",
                    live.session.state
                )));
            }
            let sub = live
                .session
                .apply_result(exam, &transcript, result)
                .map_err(|e| inconsistent(e.to_string()))?;
            if sub.record != record {
                return Err(inconsistent("logged answer record does not match replay".into()));
            }
            if sub.session.score - live.session.score != score_delta {
                return Err(inconsistent("logged score change does not match replay".into()));
            }
            sub.session
        }
        SessionEvent::Finished { score, total } => {
            if !live.session.state.is_finished() || live.session.score != score || exam.len() != total {
                return Err(inconsistent(format!(
                    "finish {score}/{total} does not match replayed state {:?} with score {}",
                    live.session.state, live.session.score
                )));
            }
            live.session.clone()
        }
    };
    live.session = next;
    live.last_seq = seq;
    Ok(())
}

/// Parsed log content. A fault stops reading: entries after it are not
/// returned.
#[derive(Debug, Default)]
pub struct LogContents {
    pub entries: Vec<SessionLogEntry>,
    pub fault: Option<LogFault>,
    /// Byte length of the leading run of complete, valid lines.
    pub valid_len: u64,
    /// The fault is an unterminated final line (a write cut short).
    pub torn_tail: bool,
}

pub fn read_log<R: Read>(mut source: R) -> io::Result<LogContents> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut out = LogContents::default();
    let mut offset = 0usize;
    for (idx, chunk) in text.split_inclusive('\n').enumerate() {
        let terminated = chunk.ends_with('\n');
        let line = chunk.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            offset += chunk.len();
            continue;
        }
        match serde_json::from_str::<SessionLogEntry>(line) {
            Ok(entry) if terminated => {
                out.entries.push(entry);
                offset += chunk.len();
            }
            result => {
                out.torn_tail = !terminated;
                out.fault = Some(LogFault::Malformed {
                    line: idx + 1,
                    message: match result {
                        Err(e) => e.to_string(),
                        Ok(_) => "line is not newline-terminated".into(),
                    },
                });
                break;
            }
        }
    }
    out.valid_len = offset as u64;
    Ok(out)
}

/// Reads `path`, cutting off an unterminated final line left by a crash.
pub fn read_and_repair(path: impl AsRef<Path>) -> io::Result<LogContents> {
    let path = path.as_ref();
    let mut file = match OpenOptions::new().read(true).write(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(LogContents::default()),
        Err(e) => return Err(e),
    };
    let mut contents = read_log(&mut file)?;
    if contents.torn_tail {
        file.set_len(contents.valid_len)?;
        file.seek(SeekFrom::End(0))?;
        file.sync_data()?;
        contents.fault = None;
        contents.torn_tail = false;
    }
    Ok(contents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use viva_cbt_core::normalizer::NoMatchReason;
    use viva_cbt_core::question_bank::load_bank_str;

    fn bank() -> Bank {
        load_bank_str(include_str!("../../../fixtures/bank.json")).unwrap()
    }

    fn started(seq: u64, id: &str) -> SessionLogEntry {
        SessionLogEntry::new(
            seq,
            id,
            SessionEvent::Started {
                exam_id: "cbt-sample".into(),
                student_id: "stu-001".into(),
            },
        )
    }

    #[test]
    fn entry_wire_shape() {
        let entry = SessionLogEntry::new(2, "s1", SessionEvent::Prompted { question: 1 });
        let json = serde_json::to_value(&entry).unwrap();
        assert_eq!(json["seq"], 2);
        assert_eq!(json["session_id"], "s1");
        assert_eq!(json["kind"], "prompted");
        assert_eq!(json["payload"]["question"], 1);
        assert!(json["ts"].as_str().unwrap().contains('T'));
        let back: SessionLogEntry = serde_json::from_value(json).unwrap();
        assert_eq!(back, entry);
    }

    #[test]
    fn empty_log_recovers_nothing() {
        assert!(recover(Vec::new(), &bank()).unwrap().is_empty());
    }

    #[test]
    fn gap_is_reported_and_session_frozen() {
        let entries = vec![
            started(1, "s1"),
            SessionLogEntry::new(3, "s1", SessionEvent::Prompted { question: 1 }),
            started(1, "s2"),
            SessionLogEntry::new(2, "s2", SessionEvent::Prompted { question: 1 }),
        ];
        let err = recover(entries, &bank()).unwrap_err();
        assert_eq!(
            err.fault,
            LogFault::Gap {
                session_id: "s1".into(),
                expected: 2,
                found: 3
            }
        );
        assert_eq!(err.partial["s1"].last_seq, 1);
        assert_eq!(err.partial["s1"].session.state, SessionState::Asking { question: 1 });
        assert_eq!(
            err.partial["s2"].session.state,
            SessionState::AwaitingAnswer {
                question: 1,
                attempts_used: 0
            }
        );
    }

    #[test]
    fn unknown_session_and_tampered_record() {
        let err = recover(
            vec![SessionLogEntry::new(1, "x", SessionEvent::Prompted { question: 1 })],
            &bank(),
        )
        .unwrap_err();
        assert!(matches!(err.fault, LogFault::UnknownSession { .. }));

        let result = NormalizationResult::NoMatch {
            reason: NoMatchReason::Empty,
        };
        let entries = vec![
            started(1, "s"),
            SessionLogEntry::new(2, "s", SessionEvent::Prompted { question: 1 }),
            SessionLogEntry::new(
                3,
                "s",
                SessionEvent::Answered {
                    question: 1,
                    transcript: String::new(),
                    result,
                    record: None,
                    score_delta: 0,
                },
            ),
        ];
        let err = recover(entries, &bank()).unwrap_err();
        assert!(
            matches!(err.fault, LogFault::Inconsistent { seq: 3, .. }),
            "{:?}",
            err.fault
        );
    }

    #[test]
    fn torn_tail_is_detected_and_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut log = SessionLog::open(&path).unwrap();
        log.append(&[started(1, "s")]).unwrap();
        let good_len = std::fs::metadata(&path).unwrap().len();
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"seq\":2,\"sess")
            .unwrap();

        let raw = read_log(File::open(&path).unwrap()).unwrap();
        assert!(raw.torn_tail);
        assert!(matches!(raw.fault, Some(LogFault::Malformed { line: 2, .. })));
        assert_eq!(raw.entries.len(), 1);

        let repaired = read_and_repair(&path).unwrap();
        assert!(repaired.fault.is_none());
        assert_eq!(repaired.entries.len(), 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), good_len);
    }

    #[test]
    fn malformed_middle_line_is_not_repaired() {
        let text = format!(
            "{}\nnot json\n{}\n",
            serde_json::to_string(&started(1, "a")).unwrap(),
            serde_json::to_string(&started(1, "b")).unwrap()
        );
        let contents = read_log(text.as_bytes()).unwrap();
        assert!(!contents.torn_tail);
        assert_eq!(contents.entries.len(), 1);
        assert!(matches!(contents.fault, Some(LogFault::Malformed { line: 2, .. })));
    }

    #[test]
    fn missing_log_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let contents = read_and_repair(dir.path().join("absent.jsonl")).unwrap();
        assert!(contents.entries.is_empty() && contents.fault.is_none());
    }
}
