//! Rule-based template parser.
//!
//! A template is valid when it holds exactly one `<subject>`, exactly one
//! `<object>` and no other `<...>` span. Everything else is reported as a list
//! of [`ParseError`]s, one per violated aspect.

use serde::{Deserialize, Serialize};

use crate::model::{ParseError, ParseErrorKind, Template, OBJECT, SUBJECT};

/// A `<...>` span located in template text. Offsets are byte offsets, `end`
/// exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Finds every maximal `<` + non-angle-bracket characters + `>` substring,
/// left to right and non-overlapping.
///
/// An unmatched `<` is dropped as soon as another `<` appears before any `>`,
/// so `a < b <subject>` yields only `<subject>`.
pub fn find_placeholders(text: &str) -> Vec<PlaceholderSpan> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        match ch {
            '<' => open = Some(idx),
            '>' => {
                if let Some(start) = open.take() {
                    let end = idx + 1;
                    spans.push(PlaceholderSpan {
                        text: text[start..end].to_owned(),
                        start,
                        end,
                    });
                }
            }
            _ => {}
        }
    }
    spans
}

/// Checks the three structural conditions. Returns an empty list iff the
/// template is valid.
///
/// Error order is stable: subject errors, object errors, then one
/// `IllegalPlaceholder` per foreign span in text order.
pub fn check_conditions(template: &Template) -> Vec<ParseError> {
    check_text(template.as_str())
}

pub fn check_text(text: &str) -> Vec<ParseError> {
    let spans = find_placeholders(text);
    let subjects = spans.iter().filter(|s| s.text == SUBJECT).count();
    let objects = spans.iter().filter(|s| s.text == OBJECT).count();

    let mut errors = Vec::new();
    match subjects {
        0 => errors.push(ParseError::new(ParseErrorKind::MissingSubject, "0")),
        1 => {}
        n => errors.push(ParseError::new(
            ParseErrorKind::MultipleSubjects,
            n.to_string(),
        )),
    }
    match objects {
        0 => errors.push(ParseError::new(ParseErrorKind::MissingObject, "0")),
        1 => {}
        n => errors.push(ParseError::new(
            ParseErrorKind::MultipleObjects,
            n.to_string(),
        )),
    }
    errors.extend(
        spans
            .into_iter()
            .filter(|s| s.text != SUBJECT && s.text != OBJECT)
            .map(|s| ParseError::new(ParseErrorKind::IllegalPlaceholder, s.text)),
    );
    errors
}

pub fn is_valid(template: &Template) -> bool {
    check_conditions(template).is_empty()
}
