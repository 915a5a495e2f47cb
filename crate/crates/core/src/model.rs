//! Domain types shared by every stage of the template pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Subject placeholder literal. Matching is byte-exact and case-sensitive.
pub const SUBJECT: &str = "<subject>";
/// Object placeholder literal.
pub const OBJECT: &str = "<object>";
/// Shared entity token used when building metric inputs.
pub const ENTITY: &str = "<entity>";

/// Raised when a domain value is constructed with data that breaks its invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("triple field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("relation sample has no triples")]
    EmptySample,
    #[error("relation sample holds {len} triples, cap is {cap}")]
    TooManyTriples { len: usize, cap: usize },
    #[error("triple relation `{found}` does not match sample relation `{expected}`")]
    RelationMismatch { expected: String, found: String },
    #[error("template text is empty")]
    EmptyTemplate,
}

/// One RDF triple `<subject, relation, object>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTriple")]
pub struct Triple {
    subject: String,
    relation: String,
    object: String,
}

#[derive(Deserialize)]
struct RawTriple {
    subject: String,
    relation: String,
    object: String,
}

impl TryFrom<RawTriple> for Triple {
    type Error = ModelError;

    fn try_from(raw: RawTriple) -> Result<Self, Self::Error> {
        Triple::new(raw.subject, raw.relation, raw.object)
    }
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let (subject, relation, object) = (subject.into(), relation.into(), object.into());
        for (name, value) in [("subject", &subject), ("relation", &relation), ("object", &object)] {
            if value.trim().is_empty() {
                return Err(ModelError::EmptyField(name));
            }
        }
        Ok(Self {
            subject,
            relation,
            object,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn object(&self) -> &str {
        &self.object
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.subject, self.relation, self.object)
    }
}

/// Default number of example triples kept per relation.
pub const DEFAULT_EXAMPLE_CAP: usize = 2;

/// A group of example triples that share one relation label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSample {
    relation: String,
    triples: Vec<Triple>,
}

impl RelationSample {
    /// Builds a sample, checking that every triple carries `relation` and that
    /// the number of triples lies in `1..=cap`.
    pub fn new(
        relation: impl Into<String>,
        triples: Vec<Triple>,
        cap: usize,
    ) -> Result<Self, ModelError> {
        let relation = relation.into();
        if triples.is_empty() {
            return Err(ModelError::EmptySample);
        }
        if triples.len() > cap {
            return Err(ModelError::TooManyTriples {
                len: triples.len(),
                cap,
            });
        }
        if let Some(bad) = triples.iter().find(|t| t.relation != relation) {
            return Err(ModelError::RelationMismatch {
                expected: relation,
                found: bad.relation.clone(),
            });
        }
        Ok(Self { relation, triples })
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }
}

/// Candidate verbalisation text with `<subject>`/`<object>` placeholders.
///
/// Structural validity is judged by [`crate::parser::check_conditions`], not here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Template(String);

impl Template {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.is_empty() {
            return Err(ModelError::EmptyTemplate);
        }
        Ok(Self(text))
    }

    /// Wraps text without the non-empty check. Extraction paths use this so an
    /// empty completion still flows to the parser, which flags it.
    pub fn from_completion(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which structural condition a parse error violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Exactly one `<subject>`.
    C0,
    /// Exactly one `<object>`.
    C1,
    /// No other `<...>` spans.
    C2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParseErrorKind {
    MissingSubject,
    MultipleSubjects,
    MissingObject,
    MultipleObjects,
    IllegalPlaceholder,
}

impl ParseErrorKind {
    pub const ALL: [ParseErrorKind; 5] = [
        ParseErrorKind::MissingSubject,
        ParseErrorKind::MultipleSubjects,
        ParseErrorKind::MissingObject,
        ParseErrorKind::MultipleObjects,
        ParseErrorKind::IllegalPlaceholder,
    ];

    pub fn condition(self) -> Condition {
        match self {
            ParseErrorKind::MissingSubject | ParseErrorKind::MultipleSubjects => Condition::C0,
            ParseErrorKind::MissingObject | ParseErrorKind::MultipleObjects => Condition::C1,
            ParseErrorKind::IllegalPlaceholder => Condition::C2,
        }
    }
}

/// A structural error flagged by the rule-based parser.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Offending placeholder text, or the observed placeholder count.
    pub detail: String,
}

impl ParseError {
    pub fn new(kind: ParseErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ParseErrorKind::MissingSubject => write!(f, "missing {SUBJECT} placeholder"),
            ParseErrorKind::MultipleSubjects => {
                write!(f, "{} {SUBJECT} placeholders, expected exactly one", self.detail)
            }
            ParseErrorKind::MissingObject => write!(f, "missing {OBJECT} placeholder"),
            ParseErrorKind::MultipleObjects => {
                write!(f, "{} {OBJECT} placeholders, expected exactly one", self.detail)
            }
            ParseErrorKind::IllegalPlaceholder => {
                write!(f, "illegal placeholder {}", self.detail)
            }
        }
    }
}

/// One generator shot: the raw completion, the template extracted from it and
/// the parser's verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: usize,
    pub raw_completion: String,
    pub template: Template,
    pub errors: Vec<ParseError>,
    /// Set on the shot carried into the consistency gate.
    pub parent_f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChosenSource {
    Generator,
    ConsistencyValidator,
}

/// Outcome of running the pipeline on one relation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub relation: String,
    pub final_template: Template,
    /// Parse errors of `final_template`.
    pub final_errors: Vec<ParseError>,
    /// PARENT F1 of `final_template` (or of the backup template when used).
    pub final_f1: f64,
    pub final_precision: f64,
    pub final_recall: f64,
    pub shots: Vec<ShotRecord>,
    /// Index into `shots` of the generator template carried into the gate.
    pub carried_shot: usize,
    pub cv_invoked: bool,
    pub cv_raw_completion: Option<String>,
    pub cv_template: Option<Template>,
    pub cv_errors: Vec<ParseError>,
    pub cv_f1: Option<f64>,
    pub chosen_source: ChosenSource,
    pub backup_used: bool,
}

impl PipelineResult {
    /// The generator template that entered the consistency gate.
    pub fn generator_shot(&self) -> &ShotRecord {
        &self.shots[self.carried_shot]
    }
}
