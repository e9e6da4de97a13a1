//! Spoken-credential login and bearer tokens.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::Rng;
use viva_cbt_core::normalizer::normalize_credential;
use viva_cbt_core::question_bank::StudentRecord;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionToken {
    pub token: String,
    pub student_id: String,
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum LoginOutcome<'a> {
    Matched(&'a StudentRecord),
    NoMatch,
    /// More than one student is registered with the same credential.
    Ambiguous,
}

/// Exact comparison of the normalized transcript against stored credentials.
pub fn match_credential<'a>(transcript: &str, students: &'a [StudentRecord]) -> LoginOutcome<'a> {
    let spoken = normalize_credential(transcript);
    if spoken.is_empty() {
        return LoginOutcome::NoMatch;
    }
    let mut hits = students.iter().filter(|s| s.spoken_credential == spoken);
    match (hits.next(), hits.next()) {
        (Some(student), None) => LoginOutcome::Matched(student),
        (None, _) => LoginOutcome::NoMatch,
        (Some(_), Some(_)) => LoginOutcome::Ambiguous,
    }
}

/// 256 random bits, hex encoded.
fn fresh_token() -> String {
    let bytes: [u8; 32] = rand::rng().random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
pub struct TokenStore {
    tokens: Mutex<HashMap<String, SessionToken>>,
}

impl TokenStore {
    pub fn issue(&self, student_id: &str) -> SessionToken {
        let token = SessionToken {
            token: fresh_token(),
            student_id: student_id.to_string(),
            issued_at: Utc::now(),
        };
        self.tokens
            .lock()
            .expect("token store poisoned")
            .insert(token.token.clone(), token.clone());
        token
    }

    pub fn resolve(&self, token: &str) -> Option<SessionToken> {
        self.tokens.lock().expect("token store poisoned").get(token).cloned()
    }
}
