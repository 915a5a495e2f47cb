//! Turning raw completions into templates.
//!
//! Sentence completions name the example entities, so they are delexicalised
//! against the sample's triples. Json completions carry the template in a
//! named field.

use serde_json::Value;
use thiserror::Error;

use crate::model::{ParseError, ParseErrorKind, RelationSample, Template, OBJECT, SUBJECT};
use crate::parser::{check_conditions, find_placeholders};
use crate::prompt::OutputMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("completion contains no json object")]
    NoJsonObject,
    #[error("json object has no field `{0}`")]
    FieldMissing(String),
    #[error("json field `{0}` is not a string")]
    FieldNotString(String),
}

/// One entity mention replaced by a placeholder. Offsets index the raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub start: usize,
    pub end: usize,
    pub placeholder: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delexicalized {
    pub template: Template,
    pub replacements: Vec<Replacement>,
}

/// Replaces the first case-insensitive mention of the subject with
/// `<subject>` and of the object with `<object>`.
///
/// Triples are tried in sample order; the first one for which both entities
/// are found wins, otherwise the first triple's partial result is kept. When
/// one surface form contains the other, the longer one is located first.
/// Existing placeholder spans are never matched, and a placeholder already
/// present in the text is not added a second time, which keeps the operation
/// idempotent.
pub fn delexicalize(raw: &str, sample: &RelationSample) -> Template {
    delexicalize_spans(raw, sample).template
}

pub fn delexicalize_spans(raw: &str, sample: &RelationSample) -> Delexicalized {
    let existing = find_placeholders(raw);
    let has_subject = existing.iter().any(|s| s.text == SUBJECT);
    let has_object = existing.iter().any(|s| s.text == OBJECT);
    let blocked: Vec<(usize, usize)> = existing.iter().map(|s| (s.start, s.end)).collect();

    let mut first_partial = None;
    for triple in sample.triples() {
        let mut wanted: Vec<(&str, &'static str)> = Vec::with_capacity(2);
        if !has_subject {
            wanted.push((triple.subject(), SUBJECT));
        }
        if !has_object {
            wanted.push((triple.object(), OBJECT));
        }
        // Longer surface forms first so "Mario Kart" is not split by "Mario".
        wanted.sort_by_key(|(surface, _)| std::cmp::Reverse(surface.chars().count()));

        let mut taken = blocked.clone();
        let mut replacements = Vec::new();
        for (surface, placeholder) in &wanted {
            if let Some((start, end)) = find_ci(raw, surface, &taken) {
                taken.push((start, end));
                replacements.push(Replacement {
                    start,
                    end,
                    placeholder,
                });
            }
        }
        let complete = replacements.len() == wanted.len();
        if complete {
            return apply(raw, replacements);
        }
        if first_partial.is_none() {
            first_partial = Some(replacements);
        }
    }
    apply(raw, first_partial.unwrap_or_default())
}

fn apply(raw: &str, mut replacements: Vec<Replacement>) -> Delexicalized {
    replacements.sort_by_key(|r| r.start);
    let mut out = String::with_capacity(raw.len());
    let mut cursor = 0;
    for r in &replacements {
        out.push_str(&raw[cursor..r.start]);
        out.push_str(r.placeholder);
        cursor = r.end;
    }
    out.push_str(&raw[cursor..]);
    Delexicalized {
        template: Template::from_completion(out),
        replacements,
    }
}

fn chars_eq_ci(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// First case-insensitive occurrence of `needle` in `hay` that does not
/// overlap any `blocked` byte range.
fn find_ci(hay: &str, needle: &str, blocked: &[(usize, usize)]) -> Option<(usize, usize)> {
    let needle: Vec<char> = needle.chars().collect();
    if needle.is_empty() {
        return None;
    }
    for (start, _) in hay.char_indices() {
        let mut hay_chars = hay[start..].char_indices();
        let mut end = start;
        let mut matched = true;
        for want in &needle {
            match hay_chars.next() {
                Some((offset, got)) if chars_eq_ci(*want, got) => {
                    end = start + offset + got.len_utf8();
                }
                _ => {
                    matched = false;
                    break;
                }
            }
        }
        if matched && !blocked.iter().any(|&(b0, b1)| start < b1 && b0 < end) {
            return Some((start, end));
        }
    }
    None
}

/// Strips a surrounding markdown code fence, if any.
fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let body = rest.split_once('\n').map_or("", |(_, body)| body);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses the first well-formed json object in `raw` and returns the string
/// found at the dot-separated `field_path`.
pub fn extract_json_template(raw: &str, field_path: &str) -> Result<Template, ExtractError> {
    assert!(!field_path.is_empty(), "empty json field path");
    let text = strip_fences(raw);
    let object = first_json_object(text).ok_or(ExtractError::NoJsonObject)?;
    let mut current = &object;
    for key in field_path.split('.') {
        current = current
            .get(key)
            .ok_or_else(|| ExtractError::FieldMissing(field_path.to_owned()))?;
    }
    current
        .as_str()
        .map(|s| Template::from_completion(s.trim()))
        .ok_or_else(|| ExtractError::FieldNotString(field_path.to_owned()))
}

fn first_json_object(text: &str) -> Option<Value> {
    text.match_indices('{').find_map(|(idx, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[idx..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(value @ Value::Object(_))) => Some(value),
            _ => None,
        }
    })
}

/// A completion read into a template together with its parse errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub template: Template,
    pub errors: Vec<ParseError>,
    /// Set when a json completion could not be read at all.
    pub extract_error: Option<ExtractError>,
}

/// Errors recorded for a completion whose json could not be read, so the
/// retry loop sees an ordinary failing shot.
pub fn unusable_completion_errors() -> Vec<ParseError> {
    vec![
        ParseError::new(ParseErrorKind::MissingSubject, "0"),
        ParseError::new(ParseErrorKind::MissingObject, "0"),
    ]
}

/// Reads `raw` according to `mode` and runs the parser on the result.
pub fn extract_template(
    raw: &str,
    mode: OutputMode,
    field_path: Option<&str>,
    sample: &RelationSample,
) -> Extraction {
    match mode {
        OutputMode::Sentence => {
            let template = delexicalize(raw.trim(), sample);
            let errors = check_conditions(&template);
            Extraction {
                template,
                errors,
                extract_error: None,
            }
        }
        OutputMode::JsonObject => {
            let path = field_path.unwrap_or("template");
            match extract_json_template(raw, path) {
                Ok(template) => {
                    let errors = check_conditions(&template);
                    Extraction {
                        template,
                        errors,
                        extract_error: None,
                    }
                }
                Err(err) => Extraction {
                    template: Template::from_completion(raw.trim()),
                    errors: unusable_completion_errors(),
                    extract_error: Some(err),
                },
            }
        }
    }
}
