//! Prompt manifests and `{{slot}}` rendering.
//!
//! A prompt lives on disk as `prompts/<name>.txt` (the text) and
//! `prompts/<name>.meta` (TOML: `kind`, `output_mode`, `output_field_path`,
//! `required_slots`). The four built-in prompts are also compiled in, see
//! [`PromptSet::builtin`].

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ParseError, ParseErrorKind, RelationSample, OBJECT, SUBJECT};

pub const SLOT_EXAMPLES: &str = "examples";
pub const SLOT_RELATION: &str = "relation";
pub const SLOT_PROMPT: &str = "prompt";
pub const SLOT_COMPLETION: &str = "completion";
pub const SLOT_ERRORS: &str = "errors";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt `{name}` lacks required slot {{{{{slot}}}}}")]
    MissingSlot { name: String, slot: String },
    #[error("prompt `{name}` references unbound slot {{{{{slot}}}}}")]
    UnboundSlot { name: String, slot: String },
    #[error("prompt `{name}` has an unterminated slot at byte {offset}")]
    UnterminatedSlot { name: String, offset: usize },
    #[error("prompt `{name}` is a {found:?} prompt, expected {expected:?}")]
    WrongKind {
        name: String,
        expected: PromptKind,
        found: PromptKind,
    },
    #[error("prompt `{0}` uses json output but has no output_field_path")]
    MissingFieldPath(String),
    #[error("consistency prompt `{0}` must use json output")]
    ConsistencyNotJson(String),
    #[error("retry prompt rendered without errors")]
    NoErrors,
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid metadata in {path}: {source}")]
    Meta {
        path: PathBuf,
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Initial,
    Retry,
    Consistency,
}

impl PromptKind {
    fn required_slots(self) -> &'static [&'static str] {
        match self {
            PromptKind::Initial => &[SLOT_EXAMPLES],
            PromptKind::Retry => &[SLOT_PROMPT, SLOT_COMPLETION, SLOT_ERRORS],
            PromptKind::Consistency => &[SLOT_RELATION, SLOT_COMPLETION],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Plain sentence; entities are delexicalised afterwards.
    Sentence,
    /// A json object whose `output_field_path` holds the template.
    JsonObject,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PromptMeta {
    kind: PromptKind,
    output_mode: OutputMode,
    #[serde(default)]
    output_field_path: Option<String>,
    #[serde(default)]
    required_slots: Vec<String>,
}

/// A loaded prompt: its text plus how the completion should be read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptManifest {
    pub name: String,
    pub kind: PromptKind,
    pub template_text: String,
    pub output_mode: OutputMode,
    pub output_field_path: Option<String>,
}

impl PromptManifest {
    /// Builds and validates a manifest. Every slot the render operation for
    /// `kind` fills must appear in `template_text`, as must any extra
    /// `required_slots`.
    pub fn new(
        name: impl Into<String>,
        kind: PromptKind,
        template_text: impl Into<String>,
        output_mode: OutputMode,
        output_field_path: Option<String>,
        required_slots: &[String],
    ) -> Result<Self, PromptError> {
        let manifest = Self {
            name: name.into(),
            kind,
            template_text: template_text.into(),
            output_mode,
            output_field_path,
        };
        let present = manifest.slots()?;
        let required = kind
            .required_slots()
            .iter()
            .map(|s| s.to_string())
            .chain(required_slots.iter().cloned());
        for slot in required {
            if !present.contains(&slot) {
                return Err(PromptError::MissingSlot {
                    name: manifest.name,
                    slot,
                });
            }
        }
        if output_mode == OutputMode::JsonObject
            && manifest
                .output_field_path
                .as_deref()
                .map_or(true, str::is_empty)
        {
            return Err(PromptError::MissingFieldPath(manifest.name));
        }
        if kind == PromptKind::Consistency && output_mode != OutputMode::JsonObject {
            return Err(PromptError::ConsistencyNotJson(manifest.name));
        }
        Ok(manifest)
    }

    /// Loads `<dir>/<name>.txt` and `<dir>/<name>.meta`.
    pub fn load(dir: &Path, name: &str) -> Result<Self, PromptError> {
        let text_path = dir.join(format!("{name}.txt"));
        let meta_path = dir.join(format!("{name}.meta"));
        let text = read(&text_path)?;
        let meta_src = read(&meta_path)?;
        let meta: PromptMeta = toml::from_str(&meta_src).map_err(|source| PromptError::Meta {
            path: meta_path,
            source,
        })?;
        Self::new(
            name,
            meta.kind,
            text,
            meta.output_mode,
            meta.output_field_path,
            &meta.required_slots,
        )
    }

    /// Names of all `{{slot}}` references in the text.
    pub fn slots(&self) -> Result<BTreeSet<String>, PromptError> {
        let mut slots = BTreeSet::new();
        for piece in self.pieces()? {
            if let Piece::Slot(name) = piece {
                slots.insert(name.to_owned());
            }
        }
        Ok(slots)
    }

    fn expect_kind(&self, expected: PromptKind) -> Result<(), PromptError> {
        if self.kind != expected {
            return Err(PromptError::WrongKind {
                name: self.name.clone(),
                expected,
                found: self.kind,
            });
        }
        Ok(())
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, PromptError> {
        let text = self.template_text.as_str();
        let mut pieces = Vec::new();
        let mut rest = 0;
        while let Some(found) = text[rest..].find("{{") {
            let open = rest + found;
            let close = text[open + 2..]
                .find("}}")
                .map(|i| open + 2 + i)
                .ok_or_else(|| PromptError::UnterminatedSlot {
                    name: self.name.clone(),
                    offset: open,
                })?;
            pieces.push(Piece::Text(&text[rest..open]));
            pieces.push(Piece::Slot(text[open + 2..close].trim()));
            rest = close + 2;
        }
        pieces.push(Piece::Text(&text[rest..]));
        Ok(pieces)
    }

    /// Single-pass substitution: inserted values are never rescanned, so a
    /// value containing `{{...}}` is copied verbatim.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.template_text.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Text(text) => out.push_str(text),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(slot, _)| *slot == name)
                        .map(|(_, value)| *value)
                        .ok_or_else(|| PromptError::UnboundSlot {
                            name: self.name.clone(),
                            slot: name.to_owned(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn read(path: &Path) -> Result<String, PromptError> {
    fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.to_owned(),
        source,
    })
}

/// `subject : <s> | relation : <r> | object : <o>`, one triple per line.
pub fn serialize_examples(sample: &RelationSample) -> String {
    sample
        .triples()
        .iter()
        .map(|t| {
            format!(
                "subject : {} | relation : {} | object : {}",
                t.subject(),
                t.relation(),
                t.object()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_initial(
    manifest: &PromptManifest,
    sample: &RelationSample,
) -> Result<String, PromptError> {
    manifest.expect_kind(PromptKind::Initial)?;
    let examples = serialize_examples(sample);
    manifest.render(&[
        (SLOT_EXAMPLES, &examples),
        (SLOT_RELATION, sample.relation()),
    ])
}

/// Human-readable line for one parse error, used inside retry prompts.
pub fn describe_error(error: &ParseError) -> String {
    match error.kind {
        ParseErrorKind::MissingSubject => format!(
            "Missing {SUBJECT}: the template must contain exactly one {SUBJECT} placeholder, found none."
        ),
        ParseErrorKind::MultipleSubjects => format!(
            "Multiple {SUBJECT}: the template must contain exactly one {SUBJECT} placeholder, found {}.",
            error.detail
        ),
        ParseErrorKind::MissingObject => format!(
            "Missing {OBJECT}: the template must contain exactly one {OBJECT} placeholder, found none."
        ),
        ParseErrorKind::MultipleObjects => format!(
            "Multiple {OBJECT}: the template must contain exactly one {OBJECT} placeholder, found {}.",
            error.detail
        ),
        ParseErrorKind::IllegalPlaceholder => format!(
            "Illegal placeholder {}: only {SUBJECT} and {OBJECT} may appear inside angle brackets.",
            error.detail
        ),
    }
}

pub fn render_retry(
    manifest: &PromptManifest,
    original_prompt: &str,
    completion: &str,
    errors: &[ParseError],
) -> Result<String, PromptError> {
    manifest.expect_kind(PromptKind::Retry)?;
    if errors.is_empty() {
        return Err(PromptError::NoErrors);
    }
    let described = errors
        .iter()
        .map(|e| format!("- {}", describe_error(e)))
        .collect::<Vec<_>>()
        .join("\n");
    manifest.render(&[
        (SLOT_PROMPT, original_prompt),
        (SLOT_COMPLETION, completion),
        (SLOT_ERRORS, &described),
    ])
}

pub fn render_consistency(
    manifest: &PromptManifest,
    relation: &str,
    completion: &str,
) -> Result<String, PromptError> {
    manifest.expect_kind(PromptKind::Consistency)?;
    manifest.render(&[(SLOT_RELATION, relation), (SLOT_COMPLETION, completion)])
}

/// Which initial prompt variant to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitialVariant {
    /// Plain sentence output, delexicalised afterwards.
    Asdot,
    /// Json output carrying the template directly.
    Json,
}

impl InitialVariant {
    pub fn file_stem(self) -> &'static str {
        match self {
            InitialVariant::Asdot => "asdot-initial",
            InitialVariant::Json => "json-initial",
        }
    }
}

/// The three prompts a pipeline run needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub initial: PromptManifest,
    pub retry: PromptManifest,
    pub consistency: PromptManifest,
}

macro_rules! builtin_prompt {
    ($stem:literal) => {
        (
            $stem,
            include_str!(concat!("../prompts/", $stem, ".txt")),
            include_str!(concat!("../prompts/", $stem, ".meta")),
        )
    };
}

const BUILTIN: [(&str, &str, &str); 4] = [
    builtin_prompt!("asdot-initial"),
    builtin_prompt!("json-initial"),
    builtin_prompt!("retry"),
    builtin_prompt!("consistency"),
];

fn builtin_manifest(stem: &str) -> PromptManifest {
    let (name, text, meta) = BUILTIN
        .iter()
        .find(|(name, _, _)| *name == stem)
        .expect("unknown builtin prompt");
    let meta: PromptMeta = toml::from_str(meta).expect("builtin prompt metadata parses");
    PromptManifest::new(
        *name,
        meta.kind,
        *text,
        meta.output_mode,
        meta.output_field_path,
        &meta.required_slots,
    )
    .expect("builtin prompt is valid")
}

impl PromptSet {
    pub fn builtin(variant: InitialVariant) -> Self {
        Self {
            initial: builtin_manifest(variant.file_stem()),
            retry: builtin_manifest("retry"),
            consistency: builtin_manifest("consistency"),
        }
    }

    /// Loads the three prompts from a directory laid out like `prompts/`.
    pub fn load(dir: &Path, variant: InitialVariant) -> Result<Self, PromptError> {
        let set = Self {
            initial: PromptManifest::load(dir, variant.file_stem())?,
            retry: PromptManifest::load(dir, "retry")?,
            consistency: PromptManifest::load(dir, "consistency")?,
        };
        set.initial.expect_kind(PromptKind::Initial)?;
        set.retry.expect_kind(PromptKind::Retry)?;
        set.consistency.expect_kind(PromptKind::Consistency)?;
        Ok(set)
    }

    /// Writes the built-in prompt files into `dir` for editing.
    pub fn write_builtin(dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (stem, text, meta) in BUILTIN {
            fs::write(dir.join(format!("{stem}.txt")), text)?;
            fs::write(dir.join(format!("{stem}.meta")), meta)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Triple;

    fn mario() -> RelationSample {
        RelationSample::new(
            "creator",
            vec![Triple::new("Mario", "creator", "Shigeru Miyamoto").unwrap()],
            2,
        )
        .unwrap()
    }

    #[test]
    fn builtin_prompts_load() {
        for variant in [InitialVariant::Asdot, InitialVariant::Json] {
            let set = PromptSet::builtin(variant);
            assert_eq!(set.consistency.output_mode, OutputMode::JsonObject);
        }
        assert_eq!(
            PromptSet::builtin(InitialVariant::Json).initial.output_mode,
            OutputMode::JsonObject
        );
        assert_eq!(
            PromptSet::builtin(InitialVariant::Asdot).initial.output_mode,
            OutputMode::Sentence
        );
    }

    #[test]
    fn initial_prompt_embeds_triples() {
        for variant in [InitialVariant::Asdot, InitialVariant::Json] {
            let set = PromptSet::builtin(variant);
            let text = render_initial(&set.initial, &mario()).unwrap();
            assert!(text.contains("Mario"));
            assert!(text.contains("Shigeru Miyamoto"));
            assert!(text.contains("subject : Mario | relation : creator | object : Shigeru Miyamoto"));
        }
        let json = PromptSet::builtin(InitialVariant::Json);
        assert!(render_initial(&json.initial, &mario()).unwrap().to_lowercase().contains("json"));
    }

    #[test]
    fn manifest_without_examples_slot_is_rejected() {
        let err = PromptManifest::new(
            "broken",
            PromptKind::Initial,
            "Verbalise {{relation}}.",
            OutputMode::Sentence,
            None,
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::MissingSlot { slot, .. } if slot == SLOT_EXAMPLES));
    }

    #[test]
    fn consistency_must_be_json() {
        let err = PromptManifest::new(
            "c",
            PromptKind::Consistency,
            "{{relation}} {{completion}}",
            OutputMode::Sentence,
            None,
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::ConsistencyNotJson(_)));
    }

    #[test]
    fn json_mode_needs_field_path() {
        let err = PromptManifest::new(
            "j",
            PromptKind::Initial,
            "{{examples}}",
            OutputMode::JsonObject,
            None,
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::MissingFieldPath(_)));
    }

    #[test]
    fn retry_lists_every_error() {
        let set = PromptSet::builtin(InitialVariant::Asdot);
        let errors = vec![
            ParseError::new(ParseErrorKind::MissingObject, "0"),
            ParseError::new(ParseErrorKind::IllegalPlaceholder, "<place>"),
        ];
        let text = render_retry(&set.retry, "PROMPT", "<subject> has <place>.", &errors).unwrap();
        assert!(text.contains("PROMPT"));
        assert!(text.contains("<subject> has <place>."));
        assert!(text.contains(&describe_error(&errors[0])));
        assert!(text.contains(&describe_error(&errors[1])));

        let missing = [ParseError::new(ParseErrorKind::MissingSubject, "0")];
        let text = render_retry(&set.retry, "p", "c", &missing).unwrap();
        assert!(text.contains("Missing <subject>"));

        assert!(matches!(
            render_retry(&set.retry, "p", "c", &[]),
            Err(PromptError::NoErrors)
        ));
    }

    #[test]
    fn every_error_kind_has_a_description() {
        for kind in ParseErrorKind::ALL {
            assert!(!describe_error(&ParseError::new(kind, "2")).is_empty());
        }
    }

    #[test]
    fn consistency_embeds_arguments() {
        let set = PromptSet::builtin(InitialVariant::Asdot);
        let text = render_consistency(&set.consistency, "creator", "<subject> is <object>.").unwrap();
        assert!(text.contains("creator"));
        assert!(text.contains("<subject> is <object>."));
        assert!(render_consistency(&set.consistency, "", "c").is_ok());
    }

    #[test]
    fn kinds_are_enforced() {
        let set = PromptSet::builtin(InitialVariant::Asdot);
        assert!(matches!(
            render_initial(&set.retry, &mario()),
            Err(PromptError::WrongKind { .. })
        ));
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let m = PromptManifest::new(
            "c",
            PromptKind::Consistency,
            "{{relation}}|{{ completion }}",
            OutputMode::JsonObject,
            Some("template".into()),
            &[],
        )
        .unwrap();
        let text = render_consistency(&m, "{{completion}}", "x").unwrap();
        assert_eq!(text, "{{completion}}|x");
    }

    #[test]
    fn unbound_and_unterminated_slots() {
        let m = PromptManifest::new(
            "i",
            PromptKind::Initial,
            "{{examples}} {{extra}}",
            OutputMode::Sentence,
            None,
            &[],
        )
        .unwrap();
        assert!(matches!(
            render_initial(&m, &mario()),
            Err(PromptError::UnboundSlot { slot, .. }) if slot == "extra"
        ));
        let err = PromptManifest::new(
            "i",
            PromptKind::Initial,
            "{{examples}} {{oops",
            OutputMode::Sentence,
            None,
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::UnterminatedSlot { .. }));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        PromptSet::write_builtin(dir.path()).unwrap();
        let loaded = PromptSet::load(dir.path(), InitialVariant::Json).unwrap();
        assert_eq!(loaded, PromptSet::builtin(InitialVariant::Json));
    }

    #[test]
    fn load_reports_required_slots_from_meta() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "{{examples}}").unwrap();
        fs::write(
            dir.path().join("x.meta"),
            "kind = \"initial\"\noutput_mode = \"sentence\"\nrequired_slots = [\"relation\"]\n",
        )
        .unwrap();
        assert!(matches!(
            PromptManifest::load(dir.path(), "x"),
            Err(PromptError::MissingSlot { slot, .. }) if slot == "relation"
        ));
    }
}
