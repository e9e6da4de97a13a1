#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use viva_cbt::api::{router, AppState};
use viva_cbt_core::normalizer::HomophoneTable;
use viva_cbt_core::question_bank::{load_bank_str, Bank};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn bank() -> Bank {
    load_bank_str(&std::fs::read_to_string(fixture("bank.json")).unwrap()).unwrap()
}

pub struct TestServer {
    pub base: String,
    pub client: Client,
    handle: tokio::task::JoinHandle<()>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

/// Serves the fixture bank on an ephemeral port, recovering from `log`.
pub async fn spawn(bank: Bank, log: &Path) -> TestServer {
    let state = AppState::open(bank, HomophoneTable::default(), log).expect("state opens");
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = tokio::spawn(async move {
        axum::serve(listener, router(Arc::new(state))).await.unwrap();
    });
    TestServer {
        base: format!("http://{addr}"),
        client: Client::new(),
        handle,
    }
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn login(&self, transcript: &str) -> String {
        let resp = self
            .client
            .post(self.url("/v1/login"))
            .json(&json!({ "transcript": transcript }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        resp.json::<Value>().await.unwrap()["token"]
            .as_str()
            .unwrap()
            .to_string()
    }

    pub async fn start(&self, token: &str, exam_id: &str) -> String {
        let resp = self
            .client
            .post(self.url(&format!("/v1/exams/{exam_id}/sessions")))
            .bearer_auth(token)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        resp.json::<Value>().await.unwrap()["session_id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    pub async fn get(&self, token: &str, path: &str) -> (StatusCode, Value) {
        let resp = self.client.get(self.url(path)).bearer_auth(token).send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn answer(&self, token: &str, session: &str, transcript: &str) -> (StatusCode, Value) {
        let resp = self
            .client
            .post(self.url(&format!("/v1/sessions/{session}/answers")))
            .bearer_auth(token)
            .json(&json!({ "transcript": transcript }))
            .send()
            .await
            .unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn prompt(&self, token: &str, session: &str) -> (StatusCode, Value) {
        self.get(token, &format!("/v1/sessions/{session}/prompt")).await
    }
}

pub fn texts(script: &Value) -> Vec<String> {
    script
        .as_array()
        .expect("script is an array")
        .iter()
        .map(|u| u["text"].as_str().unwrap().to_string())
        .collect()
}

/// Log length (in entries) and in-memory session after each request.
pub type Checkpoint = (usize, viva_cbt::session_log::RecoveredSession);

pub fn log_entries(path: &Path) -> Vec<viva_cbt::session_log::SessionLogEntry> {
    let bytes = std::fs::read(path).unwrap_or_default();
    let contents = viva_cbt::session_log::read_log(bytes.as_slice()).unwrap();
    assert!(contents.fault.is_none(), "{:?}", contents.fault);
    contents.entries
}

/// Runs one full session in process, checking after every answer that its
/// entry is already on disk. Returns the session id and one checkpoint per
/// request.
pub async fn drive(app: &AppState, log: &Path, answers: &[&str]) -> (String, Vec<Checkpoint>) {
    use viva_cbt_core::normalizer::Transcript;

    let token = app.login(&Transcript::new("student one two three")).unwrap();
    let session = app.start_session(&token, "cbt-sample").unwrap();
    let id = session.session_id;
    let mut checkpoints = vec![(log_entries(log).len(), app.snapshot(&id).await.unwrap())];
    for raw in answers {
        app.prompt(&token, &id).await.unwrap();
        checkpoints.push((log_entries(log).len(), app.snapshot(&id).await.unwrap()));
        let resp = app.answer(&token, &id, Transcript::new(*raw)).await.unwrap();
        let on_disk = log_entries(log);
        let answered = on_disk
            .iter()
            .rev()
            .find(|e| matches!(e.event, viva_cbt::session_log::SessionEvent::Answered { .. }))
            .expect("answered entry is on disk");
        match &answered.event {
            viva_cbt::session_log::SessionEvent::Answered { transcript, .. } => assert_eq!(transcript, raw),
            _ => unreachable!(),
        }
        let snap = app.snapshot(&id).await.unwrap();
        assert_eq!(snap.session.score, resp.score);
        checkpoints.push((on_disk.len(), snap));
        if resp.state.is_finished() {
            break;
        }
    }
    (id, checkpoints)
}

/// Recovers every prefix of the log and compares the session against the
/// first checkpoint at or after that prefix. An answer that ends the exam
/// writes two entries at once, so a prefix can end between them.
pub fn check_all_prefixes(log: &Path, id: &str, checkpoints: &[Checkpoint]) -> Result<(), String> {
    use viva_cbt::session_log::recover;

    let entries = log_entries(log);
    let bank = bank();
    for k in 0..=entries.len() {
        let map = recover(entries[..k].to_vec(), &bank).map_err(|e| format!("prefix {k}: {e}"))?;
        let Some((_, expected)) = checkpoints.iter().find(|(len, _)| *len >= k) else {
            return Err(format!("prefix {k} is past the last checkpoint"));
        };
        match map.get(id) {
            None if k == 0 => {}
            None => return Err(format!("prefix {k}: session missing")),
            Some(got) if got.session != expected.session => {
                return Err(format!(
                    "prefix {k}: recovered {:?}, expected {:?}",
                    got.session.state, expected.session.state
                ))
            }
            Some(_) => {}
        }
    }
    Ok(())
}
