use proptest::prelude::*;
use viva_cbt_core::exam_engine::{ExamSession, SessionState, Submission, UtteranceKind};
use viva_cbt_core::normalizer::HomophoneTable;
use viva_cbt_core::question_bank::{load_bank_str, ExamDefinition};

fn exam() -> ExamDefinition {
    load_bank_str(include_str!("../../../fixtures/bank.json"))
        .unwrap()
        .exams
        .remove(0)
}

/// Runs prompt+answer for every transcript, collecting (prompt, feedback) texts.
/// (prompt, feedback) texts for one question.
type Turn = (Vec<String>, Vec<String>);

fn replay(exam: &ExamDefinition, transcripts: &[&str]) -> (ExamSession, Vec<Turn>) {
    let table = HomophoneTable::default();
    let mut session = ExamSession::start_with_id("fixed", exam, "stu-001");
    let mut turns = Vec::new();
    for raw in transcripts {
        let (prompt, awaiting) = session.render_prompt(exam).unwrap();
        let Submission {
            feedback,
            session: next,
            ..
        } = awaiting.submit_transcript(exam, &(*raw).into(), &table).unwrap();
        let owned = |s: &viva_cbt_core::PromptScript| s.texts().into_iter().map(String::from).collect();
        turns.push((owned(&prompt), owned(&feedback)));
        session = next;
    }
    (session, turns)
}

#[test]
fn golden_replay_in_process() {
    let exam = exam();
    let (session, turns) = replay(&exam, &["", "a", "b", "a", "d"]);
    assert_eq!(
        turns[0].0,
        [
            "Question 1 What is the Capital of England",
            "A: London",
            "B: Derby",
            "C: Manchester",
            "D: Nottingham Forest",
            "Speak now..."
        ]
    );
    assert_eq!(turns[2].0[1], "A: 8");
    assert_eq!(turns[0].1, ["Sorry, I didn't catch that.", "Wrong!", "Your score is 0"]);
    assert_eq!(turns[1].1, ["You said: a", "Correct!", "Your score is 1"]);
    assert_eq!(turns[2].1, ["You said: b", "Correct!", "Your score is 2"]);
    assert_eq!(turns[3].1, ["You said: a", "Correct!", "Your score is 3"]);
    assert_eq!(&turns[4].1[..2], ["You said: d", "Correct!"]);
    assert_eq!(turns[4].1[2..], ["Your score is 4", "You scored 4 out of 5"]);
    assert_eq!(session.state, SessionState::Finished);
    let summary = session.result_summary(&exam).unwrap();
    assert_eq!((summary.score, summary.total), (4, 5));
    assert_eq!(summary.answers.len(), 5);
}

#[test]
fn all_unrecognized_scores_zero() {
    let exam = exam();
    let (session, _) = replay(&exam, &["", "um", "", "x", "pardon"]);
    let summary = session.result_summary(&exam).unwrap();
    assert_eq!((summary.score, summary.total), (0, 5));
}

#[test]
fn prompt_kinds() {
    let exam = exam();
    let (prompt, _) = ExamSession::start(&exam, "s").render_prompt(&exam).unwrap();
    let kinds: Vec<_> = prompt.0.iter().map(|u| u.kind).collect();
    assert_eq!(kinds[0], UtteranceKind::Question);
    assert!(kinds[1..5].iter().all(|k| *k == UtteranceKind::Option));
    assert_eq!(kinds[5], UtteranceKind::Instruction);
}

fn answer_words() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "", "a", "b", "c", "d", "see", "a b", "london", "11", "huh", "option d",
    ])
    .prop_map(String::from)
}

proptest! {
    #[test]
    fn session_invariants_hold_throughout(
        answers in prop::collection::vec(answer_words(), 5..20),
        retries in 0u32..3,
    ) {
        let mut exam = exam();
        exam.settings.retries_on_no_match = retries;
        let table = HomophoneTable::default();
        let mut session = ExamSession::start(&exam, "s");
        for raw in &answers {
            if session.state.is_finished() {
                break;
            }
            let (_, awaiting) = session.render_prompt(&exam).unwrap();
            let before = awaiting.clone();
            let sub = awaiting.submit_transcript(&exam, &raw.as_str().into(), &table).unwrap();
            let after = &sub.session;
            // monotone, +0 or +1 per appended record
            prop_assert!(after.score >= before.score);
            prop_assert!(after.score - before.score <= 1);
            let appended = after.answers.len() - before.answers.len();
            prop_assert!(appended <= 1);
            if appended == 0 {
                prop_assert_eq!(after.score, before.score);
                prop_assert!(retries > 0);
            }
            if retries == 0 {
                prop_assert_eq!(appended, 1);
            }
            // conservation and score definition
            prop_assert_eq!(after.score as usize + after.wrong_count(), after.answers.len());
            prop_assert_eq!(after.score as usize, after.answers.iter().filter(|a| a.correct).count());
            // answers in question order
            for (i, a) in after.answers.iter().enumerate() {
                prop_assert_eq!(a.question_number as usize, i + 1);
                let q = exam.question(a.question_number).unwrap();
                prop_assert_eq!(a.correct, a.result.label() == Some(q.correct));
            }
            if let SessionState::AwaitingAnswer { attempts_used, .. } = after.state {
                prop_assert!(attempts_used <= retries);
            }
            prop_assert!(!sub.feedback.is_empty());
            session = sub.session;
        }
    }

    #[test]
    fn replay_is_deterministic(answers in prop::collection::vec(answer_words(), 5)) {
        let exam = exam();
        let refs: Vec<&str> = answers.iter().map(String::as_str).collect();
        prop_assert_eq!(replay(&exam, &refs), replay(&exam, &refs));
    }
}
