//! Clinical note ingestion and per-day document construction.
//!
//! Notes from the first 48 hours of a stay are binned into two day
//! documents. Discharge notes never enter a document. Numbers become the
//! literal token `"0"`, and a [`Vocabulary`] maps rare tokens to `<rare>`.

mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{read_jsonl, write_jsonl};
use crate::{Error, Result};

pub use vocab::{build_vocab, Vocabulary, DEFAULT_MIN_COUNT, RARE};

/// Literal replacement for numeric tokens.
pub const NUMZERO: &str = "0";
/// Note category excluded from every document.
pub const DISCHARGE: &str = "discharge";
/// Clause terminators kept in day documents for negation scoping.
pub const TERMINATORS: [&str; 2] = [".", ";"];

const HOURS_PER_DAY: f64 = 24.0;
const WINDOW_DAYS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub stay_id: u64,
    pub category: String,
    /// Hours since admission; `None` for date-only notes (ECG, echo).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charttime: Option<f64>,
    /// Day index since admission, 0-based.
    pub chartdate: u32,
    pub text: String,
}

impl NoteEvent {
    pub fn is_discharge(&self) -> bool {
        self.category.trim().eq_ignore_ascii_case(DISCHARGE)
    }

    /// Day bin inside the 48 h window, or `None` if the note falls outside.
    pub fn day(&self) -> Option<u32> {
        let day = match self.charttime {
            Some(t) if t >= 0.0 => (t / HOURS_PER_DAY).floor() as u32,
            Some(_) => return None,
            None => self.chartdate,
        };
        (day < WINDOW_DAYS).then_some(day)
    }
}

/// Aggregated text of one day of a stay.
///
/// `tokens` holds normalized word tokens interleaved with the clause
/// terminators `"."` and `";"`; [`DayDocument::words`] drops the terminators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayDocument {
    pub stay_id: u64,
    pub day: u32,
    pub tokens: Vec<String>,
}

impl DayDocument {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str).filter(|t| !is_terminator(t))
    }

    pub fn word_tokens(&self) -> Vec<String> {
        self.words().map(str::to_string).collect()
    }
}

pub fn is_terminator(token: &str) -> bool {
    TERMINATORS.contains(&token)
}

/// Lowercased word tokens; whitespace and punctuation split tokens and are
/// dropped. A `.` between two digits stays inside the number.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = tokenize_clauses(text);
    out.retain(|t| !is_terminator(t));
    out
}

/// Like [`tokenize`] but keeps sentence/clause terminators as the standalone
/// tokens `"."` (from `.`, `!`, `?`) and `";"`.
pub fn tokenize_clauses(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        if !cur.is_empty() {
            out.push(std::mem::take(cur));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
            continue;
        }
        let in_number = c == '.'
            && !cur.is_empty()
            && cur.chars().all(|d| d.is_ascii_digit() || d == '.')
            && !cur.contains('.')
            && chars.get(i + 1).is_some_and(char::is_ascii_digit);
        if in_number {
            cur.push('.');
            continue;
        }
        flush(&mut cur, &mut out);
        match c {
            '.' | '!' | '?' => out.push(".".to_string()),
            ';' => out.push(";".to_string()),
            _ => {}
        }
    }
    flush(&mut cur, &mut out);
    out
}

fn is_number(token: &str) -> bool {
    let mut parts = token.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

/// Replaces every numeric token (digits, optionally one decimal point) with
/// [`NUMZERO`].
pub fn normalize_numbers(tokens: Vec<String>) -> Vec<String> {
    tokens
        .into_iter()
        .map(|t| if is_number(&t) { NUMZERO.to_string() } else { t })
        .collect()
}

/// Builds the two day documents of one stay.
///
/// Timestamped notes go to half-open 24 h bins from admission, date-only
/// notes to their chart date. Discharge notes and notes outside the 48 h
/// window are dropped. Within a day, notes are ordered by time (date-only
/// notes sort at the end of their day) and then by input order; a `"."` is
/// appended after each note that does not already end a clause.
pub fn aggregate_daily(notes: &[NoteEvent], stay_id: u64) -> Result<(DayDocument, DayDocument)> {
    let mut binned: Vec<(u32, f64, usize, &NoteEvent)> = Vec::new();
    for (i, note) in notes.iter().enumerate() {
        if note.stay_id != stay_id {
            return Err(Error::Data(format!(
                "note {i} belongs to stay {} not {stay_id}",
                note.stay_id
            )));
        }
        if note.is_discharge() {
            continue;
        }
        let Some(day) = note.day() else {
            log::debug!(
                "stay {stay_id}: dropping note {i} outside the 48 h window (charttime {:?}, chartdate {})",
                note.charttime,
                note.chartdate
            );
            continue;
        };
        let key = note
            .charttime
            .unwrap_or(HOURS_PER_DAY * f64::from(day + 1));
        binned.push((day, key, i, note));
    }
    binned.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut days = [Vec::new(), Vec::new()];
    for (day, _, _, note) in binned {
        let toks = &mut days[day as usize];
        let note_tokens = normalize_numbers(tokenize_clauses(&note.text));
        if note_tokens.iter().all(|t| is_terminator(t)) {
            continue;
        }
        toks.extend(note_tokens);
        if !toks.last().is_some_and(|t| is_terminator(t)) {
            toks.push(".".to_string());
        }
    }
    let [d0, d1] = days;
    Ok((
        DayDocument {
            stay_id,
            day: 0,
            tokens: d0,
        },
        DayDocument {
            stay_id,
            day: 1,
            tokens: d1,
        },
    ))
}

pub fn write_documents(path: &Path, docs: &[DayDocument]) -> Result<()> {
    write_jsonl(path, docs)
}

pub fn read_documents(path: &Path) -> Result<Vec<DayDocument>> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn note(charttime: Option<f64>, chartdate: u32, category: &str, text: &str) -> NoteEvent {
        NoteEvent {
            stay_id: 1,
            category: category.into(),
            charttime,
            chartdate,
            text: text.into(),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("No oropharyngeal lesion."), toks(&["no", "oropharyngeal", "lesion"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("BP 120/80 mmHg"), toks(&["bp", "120", "80", "mmhg"]));
        assert_eq!(tokenize("dose 12.5 mg."), toks(&["dose", "12.5", "mg"]));
        assert_eq!(
            tokenize_clauses("No fever; cough. Ok"),
            toks(&["no", "fever", ";", "cough", ".", "ok"])
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_numbers(toks(&["hr", "98"])), toks(&["hr", "0"]));
        assert_eq!(normalize_numbers(toks(&["0"])), toks(&["0"]));
        assert_eq!(normalize_numbers(toks(&["12.5", "mg"])), toks(&["0", "mg"]));
        assert_eq!(normalize_numbers(toks(&["3rd", "b12"])), toks(&["3rd", "b12"]));
    }

    #[test]
    fn aggregate_windowing() {
        let notes = vec![
            note(Some(3.5), 0, "nursing", "Patient stable."),
            note(Some(30.0), 1, "discharge", "expired"),
            note(None, 1, "ecg", "Sinus rhythm"),
            note(Some(50.0), 2, "nursing", "late note"),
            note(Some(24.0), 1, "nursing", "HR 98"),
        ];
        let (d0, d1) = aggregate_daily(&notes, 1).unwrap();
        assert_eq!(d0.tokens, toks(&["patient", "stable", "."]));
        assert_eq!(d1.tokens, toks(&["hr", "0", ".", "sinus", "rhythm", "."]));
        assert!(!d1.tokens.contains(&"expired".to_string()));
    }

    #[test]
    fn aggregate_orders_by_time_then_input() {
        let notes = vec![
            note(Some(10.0), 0, "a", "second"),
            note(Some(2.0), 0, "a", "first"),
            note(Some(10.0), 0, "a", "third"),
        ];
        let (d0, _) = aggregate_daily(&notes, 1).unwrap();
        assert_eq!(d0.word_tokens(), toks(&["first", "second", "third"]));
    }

    #[test]
    fn aggregate_rejects_foreign_note() {
        let mut n = note(Some(1.0), 0, "a", "x");
        n.stay_id = 2;
        assert!(aggregate_daily(&[n], 1).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(words in proptest::collection::vec("[a-z0-9.]{1,6}", 0..20)) {
            let once = normalize_numbers(words);
            let twice = normalize_numbers(once.clone());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn documents_hold_no_digit_strings_but_zero(text in "[a-zA-Z0-9 .,;/]{0,80}") {
            let notes = vec![note(Some(1.0), 0, "n", &text)];
            let (d0, _) = aggregate_daily(&notes, 1).unwrap();
            for t in &d0.tokens {
                if t.bytes().all(|b| b.is_ascii_digit() || b == b'.') && !is_terminator(t) {
                    prop_assert_eq!(t.as_str(), NUMZERO);
                }
            }
        }
    }
}
