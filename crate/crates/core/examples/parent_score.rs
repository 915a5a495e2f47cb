//! Scores templates against their relation label with PARENT and shows the
//! per-order breakdown.
//!
//! cargo run --example parent_score

use relverb::parent::{build_parent_inputs, parent_breakdown, ParentBreakdown, ParentConfig};
use relverb::Template;

pub fn run_example() -> Vec<(String, String, ParentBreakdown)> {
    let config = ParentConfig::default();
    [
        ("<subject> was created by <object>.", "creator"),
        ("<subject> creator <object>", "creator"),
        ("<subject> has the birth place <object>.", "birth place"),
        ("<object> is the birth place of <subject>.", "birth place"),
    ]
    .iter()
    .map(|(text, relation)| {
        let inputs = build_parent_inputs(&Template::new(*text).unwrap(), relation).unwrap();
        let breakdown = parent_breakdown(&inputs, &config).unwrap();
        (text.to_string(), relation.to_string(), breakdown)
    })
    .collect()
}

fn main() {
    for (template, relation, b) in run_example() {
        println!("{template}  [{relation}]");
        for order in &b.orders {
            println!(
                "  n={}  precision {:.4}  reference recall {:.4}",
                order.n, order.precision, order.reference_recall
            );
        }
        println!(
            "  table recall {:.4}  =>  P {:.4}  R {:.4}  F1 {:.4}",
            b.table_recall, b.score.precision, b.score.recall, b.score.f1
        );
    }
}
