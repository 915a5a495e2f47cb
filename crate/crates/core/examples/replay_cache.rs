//! Records completions into a replay cache through a mock backend, then
//! serves the same requests offline from disk.
//!
//! cargo run --example replay_cache

use std::sync::Arc;

use relverb::backend::{
    cache_key, mock_script_for_pipeline, CompletionBackend, CompletionRequest, MockBackend,
    ReplayBackend, Stage,
};

pub fn run_example() -> (String, String, bool) {
    let dir = tempfile::tempdir().unwrap();
    let script = mock_script_for_pipeline([("creator", 0, Stage::Initial, "Mario was created by Shigeru Miyamoto.")]).unwrap();
    let mock: Arc<dyn CompletionBackend> = Arc::new(MockBackend::new(script, "gpt-3.5-turbo"));
    let request = CompletionRequest {
        prompt: "Write a template for: Mario | creator | Shigeru Miyamoto",
        relation: "creator",
        shot_index: 0,
        stage: Stage::Initial,
    };

    let recording = ReplayBackend::new(dir.path().to_owned(), "gpt-3.5-turbo".into(), Some(mock)).unwrap();
    let first = recording.complete(&request).unwrap();

    let offline = ReplayBackend::new(dir.path().to_owned(), "gpt-3.5-turbo".into(), None).unwrap();
    let second = offline.complete(&request).unwrap();
    let on_disk = offline.entry_path(&cache_key("gpt-3.5-turbo", request.prompt)).is_file();
    (first, second, on_disk)
}

fn main() {
    let (first, second, on_disk) = run_example();
    println!("recorded: {first}");
    println!("replayed: {second}");
    println!("cache entry on disk: {on_disk}");
}
