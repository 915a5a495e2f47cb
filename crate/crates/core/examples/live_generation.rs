//! Generates a template for one relation through a chat-completion endpoint.
//! Needs `OPENAI_API_KEY`; `RELVERB_ENDPOINT` and `RELVERB_MODEL` override
//! the defaults. Without a key it only prints the prompt it would send.
//!
//! cargo run --example live_generation

use std::sync::Arc;

use relverb::backend::{BackendConfig, BackendKind, HttpBackend, DEFAULT_API_KEY_ENV};
use relverb::pipeline::{run_sample, PipelineConfig};
use relverb::prompt::{render_initial, InitialVariant, PromptSet};
use relverb::{RelationSample, Triple};

fn main() {
    let sample = RelationSample::new(
        "creator",
        vec![Triple::new("Mario", "creator", "Shigeru Miyamoto").unwrap()],
        2,
    )
    .unwrap();
    let prompts = PromptSet::builtin(InitialVariant::Asdot);
    if std::env::var(DEFAULT_API_KEY_ENV).map_or(true, |k| k.is_empty()) {
        println!("{DEFAULT_API_KEY_ENV} is not set; the initial prompt would be:\n");
        println!("{}", render_initial(&prompts.initial, &sample).unwrap());
        return;
    }
    let mut config = BackendConfig {
        kind: BackendKind::Http,
        ..BackendConfig::default()
    };
    if let Ok(url) = std::env::var("RELVERB_ENDPOINT") {
        config.endpoint_url = url;
    }
    if let Ok(model) = std::env::var("RELVERB_MODEL") {
        config.model_name = model;
    }
    let backend = Arc::new(HttpBackend::new(config).expect("http backend"));
    let pipeline = PipelineConfig::uniform(prompts, backend, 2, true);
    let result = run_sample(&sample, &pipeline).expect("pipeline run");
    println!("{}", serde_json::to_string_pretty(&result).unwrap());
}
