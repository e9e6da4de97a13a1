use proptest::prelude::*;
use viva_cbt_core::normalizer::{
    exact_letter_only, normalize_answer, normalize_letter, HomophoneTable, MatchMethod, NormalizationResult, Transcript,
};
use viva_cbt_core::question_bank::{load_bank_str, Bank, OptionLabel};

fn bank() -> Bank {
    load_bank_str(include_str!("../../../fixtures/bank.json")).unwrap()
}

#[test]
fn sample_exam_examples() {
    let bank = bank();
    let exam = &bank.exams[0];
    let table = HomophoneTable::default();
    let got = |q: u32, raw: &str| normalize_answer(&raw.into(), exam.question(q).unwrap(), &table);
    assert_eq!(got(3, "b").label(), Some(OptionLabel::B));
    assert_eq!(
        got(2, "bernard arnault"),
        NormalizationResult::Matched {
            label: OptionLabel::C,
            method: MatchMethod::OptionText,
            matched_token: "bernard arnault".into()
        }
    );
    assert_eq!(got(1, "I think it's Nottingham Forest.").label(), Some(OptionLabel::D));
    assert_eq!(got(3, "eleven").label(), None);
    assert_eq!(got(3, "11").label(), Some(OptionLabel::B));
}

#[test]
fn table_file_overrides_defaults() {
    let table = HomophoneTable::from_json(include_str!("../../../fixtures/homophones.json")).unwrap();
    assert_eq!(table, HomophoneTable::default());
    let custom = HomophoneTable::from_json(r#"{"homophones":{"ay":"A"},"fillers":[]}"#).unwrap();
    assert_eq!(normalize_letter(&"ay".into(), &custom).label(), Some(OptionLabel::A));
    assert_eq!(normalize_letter(&"see".into(), &custom).label(), None);
}

fn transcript_words() -> impl Strategy<Value = String> {
    let word = prop::sample::select(vec![
        "a", "b", "c", "d", "e", "f", "g", "h", "see", "bee", "hey", "he", "gee", "sea", "option", "the", "london",
        "derby", "elon", "musk", "bernard", "arnault", "11", "8", "tin", "i", "said", "banana",
    ]);
    prop::collection::vec(word, 0..5).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn deterministic_and_case_punctuation_invariant(raw in transcript_words(), q in 1u32..=5, punct in "[.!?,]") {
        let bank = bank();
        let question = bank.exams[0].question(q).unwrap();
        let table = HomophoneTable::default();
        let plain = normalize_answer(&Transcript::new(raw.clone()), question, &table);
        prop_assert_eq!(&plain, &normalize_answer(&Transcript::new(raw.clone()), question, &table));
        let loud = Transcript::new(format!("{}{}", raw.to_uppercase(), punct));
        prop_assert_eq!(plain, normalize_answer(&loud, question, &table));
    }

    #[test]
    fn never_returns_a_label_outside_the_question(raw in transcript_words(), n_opts in 2usize..=7) {
        let mut bank = bank();
        let mut question = bank.exams[0].questions.remove(0);
        question.options.truncate(n_opts.min(4));
        let table = HomophoneTable::default();
        if let Some(label) = normalize_answer(&Transcript::new(raw), &question, &table).label() {
            prop_assert!(question.has_label(label));
        }
    }

    #[test]
    fn single_bare_letter_wins_regardless_of_table(
        letter in 0usize..4,
        noise in prop::collection::vec(prop::sample::select(vec!["see", "bee", "hey", "london", "musk", "zz"]), 0..4),
        remap in prop::collection::vec((prop::sample::select(vec!["see", "bee", "hey", "zz", "musk"]), 0usize..7), 0..5),
    ) {
        let bank = bank();
        let question = bank.exams[0].question(2).unwrap();
        let label = OptionLabel::from_ordinal(letter).unwrap();
        let mut words: Vec<String> = noise.iter().map(|s| s.to_string()).collect();
        words.insert(words.len() / 2, label.as_lowercase().to_string());
        let mut pairs: Vec<(&str, OptionLabel)> = Vec::new();
        for (k, l) in &remap {
            if !pairs.iter().any(|(p, _)| p == k) {
                pairs.push((k, OptionLabel::from_ordinal(*l).unwrap()));
            }
        }
        let table = HomophoneTable::from_pairs(pairs).unwrap();
        let result = normalize_answer(&Transcript::new(words.join(" ")), question, &table);
        prop_assert_eq!(result, NormalizationResult::Matched {
            label,
            method: MatchMethod::ExactLetter,
            matched_token: label.as_lowercase().to_string(),
        });
    }

    #[test]
    fn homophone_strategy_dominates_exact(raw in transcript_words()) {
        // anything the bare-letter stage resolves, the homophone pipeline resolves identically
        let t = Transcript::new(raw);
        if let Some(label) = exact_letter_only(&t).label() {
            prop_assert_eq!(normalize_letter(&t, &HomophoneTable::default()).label(), Some(label));
        }
    }
}
