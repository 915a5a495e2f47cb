//! Renders the built-in initial, retry and consistency prompts for one
//! relation sample.
//!
//! cargo run --example render_prompts

use relverb::parser::check_text;
use relverb::prompt::{render_consistency, render_initial, render_retry, InitialVariant, PromptSet};
use relverb::{RelationSample, Triple};

pub fn run_example() -> [String; 3] {
    let sample = RelationSample::new(
        "creator",
        vec![Triple::new("Mario", "creator", "Shigeru Miyamoto").unwrap()],
        2,
    )
    .unwrap();
    let prompts = PromptSet::builtin(InitialVariant::Asdot);
    let initial = render_initial(&prompts.initial, &sample).unwrap();
    let completion = "Mario likes <object>.";
    let retry = render_retry(&prompts.retry, &initial, completion, &check_text("likes <object>.")).unwrap();
    let consistency =
        render_consistency(&prompts.consistency, "creator", "<subject> was created by <object>.").unwrap();
    [initial, retry, consistency]
}

fn main() {
    for (name, text) in ["initial", "retry", "consistency"].iter().zip(run_example()) {
        println!("===== {name} =====\n{text}\n");
    }
}
