//! Runs the pipeline over a small corpus with a scripted mock backend: without
//! retries, with one retry, and with one retry plus consistency validation.
//!
//! cargo run --example mock_pipeline

use std::path::PathBuf;
use std::sync::Arc;

use relverb::backend::MockBackend;
use relverb::dataset::{load_canonical, select_examples};
use relverb::pipeline::{run_dataset, PipelineConfig};
use relverb::prompt::{InitialVariant, PromptSet};
use relverb::report::{aggregate_parent, breakdown_text, error_breakdown, rate_reduction, BreakdownRow};

pub fn run_example() -> (Vec<BreakdownRow>, Vec<f64>, f64) {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pipeline");
    let records = load_canonical(&fixtures.join("relations.jsonl")).unwrap();
    let samples: Vec<_> = records.iter().map(|r| select_examples(r, 2).unwrap()).collect();
    let backend = Arc::new(MockBackend::load(&fixtures.join("mock.jsonl"), "mock").unwrap());

    let mut rows = Vec::new();
    let mut f1 = Vec::new();
    for (label, retries, cv) in [("0 retries", 0, false), ("1 retry", 1, false), ("1 retry +CV", 1, true)] {
        let config = PipelineConfig::uniform(PromptSet::builtin(InitialVariant::Asdot), backend.clone(), retries, cv);
        let outcomes = run_dataset(&samples, &config, 2).unwrap();
        let results: Vec<_> = outcomes.iter().filter_map(|o| o.result()).collect();
        rows.push(error_breakdown(label, results.iter().copied()));
        f1.push(aggregate_parent(results.iter().copied()).unwrap().f1);
    }
    let rr = rate_reduction(rows[0].templates_with_errors, rows[1].templates_with_errors).unwrap();
    (rows, f1, rr)
}

fn main() {
    let (rows, f1, rr) = run_example();
    print!("{}", breakdown_text(&rows));
    for (row, f1) in rows.iter().zip(f1) {
        println!("{}: mean PARENT F1 {f1:.4}", row.label);
    }
    println!("error rate reduction: {rr:.2}%");
}
