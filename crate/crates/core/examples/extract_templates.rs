//! Turns raw completions into templates: delexicalisation of plain sentences
//! and field lookup in json answers.
//!
//! cargo run --example extract_templates

use relverb::extract::{delexicalize, extract_json_template};
use relverb::{RelationSample, Triple};

pub fn run_example() -> Vec<String> {
    let sample = RelationSample::new(
        "creator",
        vec![
            Triple::new("Mario", "creator", "Shigeru Miyamoto").unwrap(),
            Triple::new("Zelda", "creator", "Shigeru Miyamoto").unwrap(),
        ],
        2,
    )
    .unwrap();
    let mut out = vec![
        delexicalize("Mario was created by Shigeru Miyamoto.", &sample).into_string(),
        delexicalize("SHIGERU MIYAMOTO designed zelda.", &sample).into_string(),
    ];
    let json_answer = "Sure! Here it is:\n```json\n{\"reasoning\": \"...\", \"template\": \"<subject> is a game by <object>.\"}\n```";
    out.push(extract_json_template(json_answer, "template").unwrap().into_string());
    let nested = r#"{"result": {"fixed_template": "<subject> creator <object>"}}"#;
    out.push(extract_json_template(nested, "result.fixed_template").unwrap().into_string());
    out
}

fn main() {
    for template in run_example() {
        println!("{template}");
    }
}
