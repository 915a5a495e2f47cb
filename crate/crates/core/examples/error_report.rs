//! Builds an error-breakdown table from parsed templates and computes the
//! error rate reduction between two setups.
//!
//! cargo run --example error_report

use relverb::report::{breakdown_csv, breakdown_templates, rate_reduction};
use relverb::Template;

pub fn run_example() -> (String, f64) {
    let baseline: Vec<Template> = [
        "<subject> was created by <object>.",
        "It is located in <object>.",
        "<subject> married <subject>.",
        "<subject> is a <genre> film.",
        "<subject> is the capital of <object>.",
    ]
    .iter()
    .map(|t| Template::new(*t).unwrap())
    .collect();
    let improved: Vec<Template> = [
        "<subject> was created by <object>.",
        "<subject> is located in <object>.",
        "<subject> married <object>.",
        "<subject> is a film of genre <object>.",
        "<subject> is the capital of <object>.",
    ]
    .iter()
    .map(|t| Template::new(*t).unwrap())
    .collect();
    let rows = [
        breakdown_templates("0 retries", &baseline),
        breakdown_templates("1 retry", &improved),
    ];
    let rr = rate_reduction(rows[0].templates_with_errors, rows[1].templates_with_errors).unwrap();
    (breakdown_csv(&rows), rr)
}

fn main() {
    let (csv, rr) = run_example();
    print!("{csv}");
    println!("error rate reduction: {rr:.2}%");
}
