//! Checks candidate templates against the three structural conditions.
//!
//! cargo run --example validate_templates

use relverb::parser::check_conditions;
use relverb::Template;

pub fn run_example() -> Vec<(String, Vec<String>)> {
    let candidates = [
        "<subject> was created by <object>.",
        "Mario likes <object>.",
        "<subject> and <subject> met <object>.",
        "<subject> is a <genre> by <object>.",
        "It happened.",
    ];
    candidates
        .iter()
        .map(|text| {
            let template = Template::new(*text).expect("non-empty");
            let errors = check_conditions(&template).iter().map(ToString::to_string).collect();
            (text.to_string(), errors)
        })
        .collect()
}

fn main() {
    for (template, errors) in run_example() {
        if errors.is_empty() {
            println!("ok      {template}");
        } else {
            println!("invalid {template}");
            for e in errors {
                println!("        - {e}");
            }
        }
    }
}
