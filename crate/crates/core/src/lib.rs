//! Entity-agnostic verbalisation templates for knowledge-graph relations.
//!
//! Given example triples of a relation, an LLM is asked for a sentence
//! template such as `<subject> was created by <object>.`. Completions are
//! checked by a rule-based parser ([`parser`]); structurally broken templates
//! trigger a retry prompt that lists the errors. The surviving template is
//! scored with PARENT F1 against an artificial table built from the relation
//! label ([`parent`]); below a threshold, a consistency prompt asks for a
//! repaired template and the higher-scoring one is kept ([`pipeline`]).
//!
//! Each capability has a runnable example under `examples/`.

pub mod backend;
pub mod cli;
pub mod dataset;
pub mod extract;
pub mod model;
pub mod parent;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod report;

pub use model::{
    ChosenSource, ParseError, ParseErrorKind, PipelineResult, RelationSample, ShotRecord,
    Template, Triple,
};
