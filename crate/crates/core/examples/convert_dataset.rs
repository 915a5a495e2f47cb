//! Loads the bundled DART, Rel2Text and WebNLG miniatures, prints their
//! statistics and writes canonical jsonl. Point `RELVERB_DATASET` and
//! `RELVERB_FORMAT` at a real corpus to convert that instead.
//!
//! cargo run --example convert_dataset

use std::path::PathBuf;

use relverb::dataset::{
    count_single_rdf, extract_single_rdf, load_canonical, load_entries, record_stats,
    save_canonical, DatasetFormat,
};

#[derive(Debug)]
pub struct Stats {
    pub name: String,
    pub entries: usize,
    pub single_rdf_entries: usize,
    pub relations: usize,
    pub single_rdf_relations: usize,
}

pub fn run_example() -> Vec<Stats> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut sources = vec![
        ("dart".to_string(), fixtures.join("dart"), DatasetFormat::Dart),
        ("rel2text".to_string(), fixtures.join("rel2text/test.csv"), DatasetFormat::Rel2text),
        ("webnlg".to_string(), fixtures.join("webnlg"), DatasetFormat::Webnlg),
    ];
    if let (Ok(path), Ok(format)) = (std::env::var("RELVERB_DATASET"), std::env::var("RELVERB_FORMAT")) {
        let format = match format.as_str() {
            "dart" => DatasetFormat::Dart,
            "rel2text" => DatasetFormat::Rel2text,
            _ => DatasetFormat::Webnlg,
        };
        sources = vec![(path.clone(), PathBuf::from(path), format)];
    }

    let out = tempfile::tempdir().unwrap();
    sources
        .into_iter()
        .map(|(name, path, format)| {
            let corpus = load_entries(&path, format).unwrap().expect("source format");
            let records = corpus.records();
            let target = out.path().join("canonical.jsonl");
            save_canonical(&records, &target).unwrap();
            assert_eq!(load_canonical(&target).unwrap(), records);
            Stats {
                name,
                entries: corpus.entries.len(),
                single_rdf_entries: count_single_rdf(&corpus.entries),
                relations: record_stats(&records).unique_relations,
                single_rdf_relations: record_stats(&extract_single_rdf(&corpus.entries)).unique_relations,
            }
        })
        .collect()
}

fn main() {
    for s in run_example() {
        println!(
            "{:10} entries {:5}  single-triple {:5}  relations {:5}  single-triple relations {:5}",
            s.name, s.entries, s.single_rdf_entries, s.relations, s.single_rdf_relations
        );
    }
}
