//! Speech-to-text transcripts in, option labels and credentials out.
//!
//! Answer matching runs three stages and stops at the first stage that
//! produces a hit:
//!
//! 1. exact letter: a bare `a`..`g` token naming one of the question's labels;
//! 2. homophone: a token the [`HomophoneTable`] maps to one of the labels
//!    (`"see"` -> C, `"gee"` -> G, ...);
//! 3. option text: the transcript contains one option's text as a contiguous
//!    run of tokens (`"bernard arnault"` -> C).
//!
//! Two different labels hit within one stage is [`NoMatchReason::Ambiguous`];
//! the pipeline does not fall through to later stages in that case.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::question_bank::{OptionLabel, Question};

const DEFAULT_TABLE: &str = include_str!("../data/homophones.json");

/// Raw recognizer output. `raw` is kept exactly as received.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_confidence: Option<f64>,
}

impl Transcript {
    pub fn new(raw: impl Into<String>) -> Self {
        Self {
            raw: raw.into(),
            engine_confidence: None,
        }
    }
}

impl From<&str> for Transcript {
    fn from(raw: &str) -> Self {
        Transcript::new(raw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMethod {
    ExactLetter,
    Homophone,
    OptionText,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMethod::ExactLetter => "exact-letter",
            MatchMethod::Homophone => "homophone",
            MatchMethod::OptionText => "option-text",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoMatchReason {
    Empty,
    Unrecognized,
    Ambiguous,
}

impl fmt::Display for NoMatchReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoMatchReason::Empty => "empty",
            NoMatchReason::Unrecognized => "unrecognized",
            NoMatchReason::Ambiguous => "ambiguous",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum NormalizationResult {
    Matched {
        label: OptionLabel,
        method: MatchMethod,
        matched_token: String,
    },
    NoMatch {
        reason: NoMatchReason,
    },
}

impl NormalizationResult {
    pub fn label(&self) -> Option<OptionLabel> {
        match self {
            NormalizationResult::Matched { label, .. } => Some(*label),
            NormalizationResult::NoMatch { .. } => None,
        }
    }

    fn no_match(reason: NoMatchReason) -> Self {
        NormalizationResult::NoMatch { reason }
    }
}

impl fmt::Display for NormalizationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalizationResult::Matched { label, method, .. } => write!(f, "{label} ({method})"),
            NormalizationResult::NoMatch { reason } => write!(f, "no match ({reason})"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("malformed homophone table: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("homophone key {0:?} is not a normalized token")]
    NotNormalized(String),
    #[error("filler {0:?} does not normalize to a single token")]
    BadFiller(String),
}

/// Recognizer tokens that stand for a letter, plus filler words ignored
/// before matching. Keys are single normalized tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomophoneTable {
    homophones: BTreeMap<String, OptionLabel>,
    fillers: BTreeSet<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    #[serde(deserialize_with = "unique_keys")]
    homophones: Vec<(String, OptionLabel)>,
    #[serde(default)]
    fillers: Vec<String>,
}

fn unique_keys<'de, D>(deserializer: D) -> Result<Vec<(String, OptionLabel)>, D::Error>
where
    D: Deserializer<'de>,
{
    struct Entries;

    impl<'de> Visitor<'de> for Entries {
        type Value = Vec<(String, OptionLabel)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object mapping tokens to labels")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out: Vec<(String, OptionLabel)> = Vec::new();
            while let Some((key, label)) = map.next_entry::<String, OptionLabel>()? {
                if out.iter().any(|(k, _)| *k == key) {
                    return Err(serde::de::Error::custom(format!("duplicate homophone key {key:?}")));
                }
                out.push((key, label));
            }
            Ok(out)
        }
    }

    deserializer.deserialize_map(Entries)
}

impl Default for HomophoneTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("embedded homophone table is valid")
    }
}

impl HomophoneTable {
    pub fn from_json(json: &str) -> Result<Self, TableError> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn from_reader<R: Read>(source: R) -> Result<Self, TableError> {
        Self::from_file(serde_json::from_reader(source)?)
    }

    fn from_file(file: TableFile) -> Result<Self, TableError> {
        let mut homophones = BTreeMap::new();
        for (key, label) in file.homophones {
            if normalize_text(&key) != [key.as_str()] {
                return Err(TableError::NotNormalized(key));
            }
            homophones.insert(key, label);
        }
        let mut fillers = BTreeSet::new();
        for filler in file.fillers {
            match normalize_text(&filler).as_slice() {
                [token] => {
                    fillers.insert(token.clone());
                }
                _ => return Err(TableError::BadFiller(filler)),
            }
        }
        Ok(Self { homophones, fillers })
    }

    /// A table with only the given mappings and no fillers.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, OptionLabel)>) -> Result<Self, TableError> {
        Self::from_file(TableFile {
            homophones: pairs.into_iter().map(|(k, l)| (k.to_string(), l)).collect(),
            fillers: Vec::new(),
        })
    }

    pub fn lookup(&self, token: &str) -> Option<OptionLabel> {
        self.homophones.get(token).copied()
    }

    pub fn is_filler(&self, token: &str) -> bool {
        self.fillers.contains(token)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, OptionLabel)> {
        self.homophones.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn fillers(&self) -> impl Iterator<Item = &str> {
        self.fillers.iter().map(String::as_str)
    }

    fn strip_fillers(&self, tokens: Vec<String>) -> Vec<String> {
        tokens.into_iter().filter(|t| !self.is_filler(t)).collect()
    }
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize_text(raw: &str) -> Vec<String> {
    raw.split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

enum Hit {
    Nothing,
    One(OptionLabel, String),
    Ambiguous,
}

impl Hit {
    fn add(self, label: OptionLabel, token: &str) -> Hit {
        match self {
            Hit::Nothing => Hit::One(label, token.to_string()),
            Hit::One(seen, _) if seen != label => Hit::Ambiguous,
            other => other,
        }
    }

    fn into_result(self, method: MatchMethod) -> Option<NormalizationResult> {
        match self {
            Hit::Nothing => None,
            Hit::One(label, matched_token) => Some(NormalizationResult::Matched {
                label,
                method,
                matched_token,
            }),
            Hit::Ambiguous => Some(NormalizationResult::no_match(NoMatchReason::Ambiguous)),
        }
    }
}

fn letter_stage(tokens: &[String], allowed: &dyn Fn(OptionLabel) -> bool) -> Hit {
    tokens.iter().fold(Hit::Nothing, |hit, token| {
        let mut chars = token.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphabetic() => match OptionLabel::from_char(c) {
                Some(label) if allowed(label) => hit.add(label, token),
                _ => hit,
            },
            _ => hit,
        }
    })
}

fn homophone_stage(tokens: &[String], table: &HomophoneTable, allowed: &dyn Fn(OptionLabel) -> bool) -> Hit {
    tokens
        .iter()
        .fold(Hit::Nothing, |hit, token| match table.lookup(token) {
            Some(label) if allowed(label) => hit.add(label, token),
            _ => hit,
        })
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn option_text_stage(tokens: &[String], question: &Question, table: &HomophoneTable) -> Hit {
    question.options.iter().fold(Hit::Nothing, |hit, option| {
        let full = normalize_text(&option.text);
        let stripped = table.strip_fillers(full.clone());
        let needle = if stripped.is_empty() { full } else { stripped };
        if contains_run(tokens, &needle) {
            hit.add(option.label, &needle.join(" "))
        } else {
            hit
        }
    })
}

fn run_stages(
    raw: &str,
    table: Option<&HomophoneTable>,
    question: Option<&Question>,
    allowed: &dyn Fn(OptionLabel) -> bool,
) -> NormalizationResult {
    let tokens = normalize_text(raw);
    if tokens.is_empty() {
        return NormalizationResult::no_match(NoMatchReason::Empty);
    }
    let tokens = match table {
        Some(table) => table.strip_fillers(tokens),
        None => tokens,
    };
    if let Some(result) = letter_stage(&tokens, allowed).into_result(MatchMethod::ExactLetter) {
        return result;
    }
    if let Some(table) = table {
        if let Some(result) = homophone_stage(&tokens, table, allowed).into_result(MatchMethod::Homophone) {
            return result;
        }
        if let Some(question) = question {
            if let Some(result) = option_text_stage(&tokens, question, table).into_result(MatchMethod::OptionText) {
                return result;
            }
        }
    }
    NormalizationResult::no_match(NoMatchReason::Unrecognized)
}

/// Maps an answer transcript to one of `question`'s option labels.
pub fn normalize_answer(transcript: &Transcript, question: &Question, table: &HomophoneTable) -> NormalizationResult {
    run_stages(&transcript.raw, Some(table), Some(question), &|l| question.has_label(l))
}

/// Letter and homophone stages against the full A-G range, with no question
/// context.
pub fn normalize_letter(transcript: &Transcript, table: &HomophoneTable) -> NormalizationResult {
    run_stages(&transcript.raw, Some(table), None, &|_| true)
}

/// Bare-letter matching only. Homophones such as "see" or "gee" are not
/// recognized.
pub fn exact_letter_only(transcript: &Transcript) -> NormalizationResult {
    run_stages(&transcript.raw, None, None, &|_| true)
}

fn digit_for(token: &str) -> Option<char> {
    Some(match token {
        "zero" | "oh" => '0',
        "one" => '1',
        "two" => '2',
        "three" => '3',
        "four" => '4',
        "five" => '5',
        "six" => '6',
        "seven" => '7',
        "eight" => '8',
        "nine" => '9',
        _ => return None,
    })
}

/// Normalizes spoken login details: `"student one two three"` becomes
/// `"student 123"`. Runs of digits (spoken or written) join into one token.
pub fn normalize_credential(raw: &str) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut in_digits = false;
    for token in normalize_text(raw) {
        let digits = match digit_for(&token) {
            Some(d) => Some(d.to_string()),
            None if token.chars().all(|c| c.is_ascii_digit()) => Some(token.clone()),
            None => None,
        };
        match digits {
            Some(d) if in_digits => parts.last_mut().expect("digit run open").push_str(&d),
            Some(d) => {
                parts.push(d);
                in_digits = true;
            }
            None => {
                parts.push(token);
                in_digits = false;
            }
        }
    }
    parts.join(" ")
}
