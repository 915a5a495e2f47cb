//! Dataset ingestion and the canonical interchange format.
//!
//! Every loader produces [`CanonicalRecord`]s: one per relation label, holding
//! every triple of that relation in file order. Relations are grouped by exact
//! string match and ordered by first appearance.
//!
//! Source layouts understood:
//!
//! - **DART**: a json array (or a directory of json files, read in name order)
//!   of `{"tripleset": [[s, r, o], ...], "annotations": [{"text": ...}, ...]}`.
//! - **Rel2Text**: tabular rows, one triple per row, as `.csv`, `.tsv`, `.json`
//!   (array of objects) or `.jsonl`. Columns are matched by name:
//!   relation = `relation` | `label` | `rel`; subject = `head` | `subject` |
//!   `subj`; object = `tail` | `object` | `obj`; reference = `text` |
//!   `verbalisation` | `verbalization` | `ref` | `reference`. A single `input`
//!   column of the form `s | r | o` may replace the three triple columns.
//!   Other columns are ignored with a warning.
//! - **WebNLG**: benchmark xml (`benchmark/entries/entry` with
//!   `modifiedtripleset/mtriple` holding `s | p | o` and `lex` references, the
//!   reference text either inline or in a `text` child), or the json release
//!   (`{"entries": [{"<id>": {"modifiedtripleset": [{"subject", "property",
//!   "object"}], "lexicalisations": [{"lex": ...}]}}]}`). A file or a directory
//!   searched recursively.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ModelError, RelationSample, Triple};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid json: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: malformed line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: csv error: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: xml error: {source}")]
    Xml {
        path: PathBuf,
        source: roxmltree::Error,
    },
    #[error("{path}: unexpected layout: {message}")]
    Layout { path: PathBuf, message: String },
    #[error("invalid record: {0}")]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

fn layout(path: &Path, message: impl Into<String>) -> DatasetError {
    DatasetError::Layout {
        path: path.to_owned(),
        message: message.into(),
    }
}

/// All known triples of one relation, with optional human references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub relation: String,
    pub triples: Vec<Triple>,
    #[serde(default)]
    pub references: Vec<String>,
}

impl CanonicalRecord {
    pub fn new(
        relation: impl Into<String>,
        triples: Vec<Triple>,
        references: Vec<String>,
    ) -> Result<Self, ModelError> {
        let relation = relation.into();
        if let Some(bad) = triples.iter().find(|t| t.relation() != relation) {
            return Err(ModelError::RelationMismatch {
                expected: relation,
                found: bad.relation().to_owned(),
            });
        }
        Ok(Self {
            relation,
            triples,
            references,
        })
    }
}

/// One source entry: a triple set and its reference texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceEntry {
    pub triples: Vec<Triple>,
    pub references: Vec<String>,
}

impl SourceEntry {
    fn single_triple(&self) -> Option<&Triple> {
        match self.triples.as_slice() {
            [only] => Some(only),
            _ => None,
        }
    }
}

/// Entries read from a corpus plus the number of entries that were skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub entries: Vec<SourceEntry>,
    pub skipped: usize,
}

impl LoadedCorpus {
    pub fn records(&self) -> Vec<CanonicalRecord> {
        group_entries(&self.entries)
    }
}

/// Summary numbers for a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStats {
    pub unique_relations: usize,
    pub triples: usize,
}

pub fn record_stats(records: &[CanonicalRecord]) -> RecordStats {
    RecordStats {
        unique_relations: records
            .iter()
            .map(|r| r.relation.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        triples: records.iter().map(|r| r.triples.len()).sum(),
    }
}

/// Buckets every triple by relation in first-appearance order. References are
/// attached only from entries consisting of a single triple of that relation.
pub fn group_entries(entries: &[SourceEntry]) -> Vec<CanonicalRecord> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut records: Vec<CanonicalRecord> = Vec::new();
    for entry in entries {
        for triple in &entry.triples {
            let slot = *index.entry(triple.relation()).or_insert_with(|| {
                records.push(CanonicalRecord {
                    relation: triple.relation().to_owned(),
                    triples: Vec::new(),
                    references: Vec::new(),
                });
                records.len() - 1
            });
            records[slot].triples.push(triple.clone());
        }
        if let Some(only) = entry.single_triple() {
            let slot = index[only.relation()];
            records[slot].references.extend(entry.references.iter().cloned());
        }
    }
    records
}

/// Keeps only entries with exactly one triple and groups them by relation.
pub fn extract_single_rdf(entries: &[SourceEntry]) -> Vec<CanonicalRecord> {
    let singles: Vec<SourceEntry> = entries
        .iter()
        .filter(|e| e.single_triple().is_some())
        .cloned()
        .collect();
    group_entries(&singles)
}

/// Number of single-triple entries, the DART-SingleRDF entry count.
pub fn count_single_rdf(entries: &[SourceEntry]) -> usize {
    entries.iter().filter(|e| e.single_triple().is_some()).count()
}

/// The first `cap` triples in file order.
pub fn select_examples(record: &CanonicalRecord, cap: usize) -> Result<RelationSample, ModelError> {
    assert!(cap >= 1, "example cap must be at least 1");
    let triples = record.triples.iter().take(cap).cloned().collect();
    RelationSample::new(record.relation.clone(), triples, cap)
}

fn files_with_extension(path: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>, DatasetError> {
    if path.is_file() {
        return Ok(vec![path.to_owned()]);
    }
    if !path.is_dir() {
        return Err(DatasetError::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        });
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| DatasetError::Io {
            path: path.to_owned(),
            source: e.into(),
        })?;
        let matches = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.contains(&e));
        if entry.file_type().is_file() && matches {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

fn read_json(path: &Path) -> Result<Value, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_owned(),
        source,
    })
}

// ---------------------------------------------------------------------------
// DART

fn parse_dart_entry(value: &Value) -> Option<SourceEntry> {
    let tripleset = value.get("tripleset")?.as_array()?;
    let mut triples = Vec::with_capacity(tripleset.len());
    for raw in tripleset {
        match raw.as_array()?.as_slice() {
            [s, r, o] => triples.push(Triple::new(s.as_str()?, r.as_str()?, o.as_str()?).ok()?),
            _ => return None,
        }
    }
    if triples.is_empty() {
        return None;
    }
    let references = value
        .get("annotations")
        .and_then(Value::as_array)
        .map(|annotations| {
            annotations
                .iter()
                .filter_map(|a| a.get("text").and_then(Value::as_str))
                .map(str::to_owned)
                .collect()
        })
        .unwrap_or_default();
    Some(SourceEntry {
        triples,
        references,
    })
}

/// Reads a DART json file, or every `.json` file under a directory. Malformed
/// entries (missing tripleset, non-triple rows, blank fields) are skipped and
/// counted.
pub fn load_dart_entries(path: &Path) -> Result<LoadedCorpus, DatasetError> {
    let mut corpus = LoadedCorpus::default();
    for file in files_with_extension(path, &["json"])? {
        let value = read_json(&file)?;
        let items = value
            .as_array()
            .ok_or_else(|| layout(&file, "expected a json array of entries"))?;
        for item in items {
            match parse_dart_entry(item) {
                Some(entry) => corpus.entries.push(entry),
                None => corpus.skipped += 1,
            }
        }
    }
    if corpus.skipped > 0 {
        log::warn!("{}: skipped {} malformed DART entries", path.display(), corpus.skipped);
    }
    Ok(corpus)
}

/// One record per unique DART relation.
pub fn load_dart(path: &Path) -> Result<Vec<CanonicalRecord>, DatasetError> {
    Ok(load_dart_entries(path)?.records())
}

// ---------------------------------------------------------------------------
// Rel2Text

const REL_RELATION: &[&str] = &["relation", "label", "rel"];
const REL_SUBJECT: &[&str] = &["head", "subject", "subj"];
const REL_OBJECT: &[&str] = &["tail", "object", "obj"];
const REL_REFERENCE: &[&str] = &["text", "verbalisation", "verbalization", "ref", "reference"];
const REL_INPUT: &str = "input";

fn row_entry(row: &HashMap<String, String>) -> Option<SourceEntry> {
    let pick = |names: &[&str]| names.iter().find_map(|n| row.get(*n)).cloned();
    let triple = match (pick(REL_SUBJECT), pick(REL_RELATION), pick(REL_OBJECT)) {
        (Some(s), Some(r), Some(o)) => Triple::new(s, r, o).ok()?,
        _ => {
            let input = row.get(REL_INPUT)?;
            let parts: Vec<&str> = input.split(" | ").collect();
            match parts.as_slice() {
                [s, r, o] => Triple::new(s.trim(), r.trim(), o.trim()).ok()?,
                _ => return None,
            }
        }
    };
    let references = pick(REL_REFERENCE)
        .filter(|t| !t.trim().is_empty())
        .into_iter()
        .collect();
    Some(SourceEntry {
        triples: vec![triple],
        references,
    })
}

fn warn_unknown_columns<'a>(path: &Path, columns: impl IntoIterator<Item = &'a String>) {
    let known: BTreeSet<&str> = REL_RELATION
        .iter()
        .chain(REL_SUBJECT)
        .chain(REL_OBJECT)
        .chain(REL_REFERENCE)
        .copied()
        .chain([REL_INPUT])
        .collect();
    for column in columns {
        if !known.contains(column.as_str()) {
            log::warn!("{}: ignoring column `{column}`", path.display());
        }
    }
}

fn json_row(value: &Value) -> Option<HashMap<String, String>> {
    let object = value.as_object()?;
    Some(
        object
            .iter()
            .filter_map(|(k, v)| match v {
                Value::String(s) => Some((k.clone(), s.clone())),
                Value::Number(n) => Some((k.clone(), n.to_string())),
                _ => None,
            })
            .collect(),
    )
}

/// Loads Rel2Text-style rows. Each row is one sample.
pub fn load_rel2text_entries(path: &Path) -> Result<LoadedCorpus, DatasetError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    let rows: Vec<Option<HashMap<String, String>>> = match ext.as_str() {
        "csv" | "tsv" => {
            let delimiter = if ext == "tsv" { b'\t' } else { b',' };
            let csv_err = |source| DatasetError::Csv {
                path: path.to_owned(),
                source,
            };
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .from_path(path)
                .map_err(csv_err)?;
            let headers: Vec<String> = reader
                .headers()
                .map_err(csv_err)?
                .iter()
                .map(|h| h.trim().to_owned())
                .collect();
            warn_unknown_columns(path, &headers);
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record.map_err(csv_err)?;
                rows.push(Some(
                    headers
                        .iter()
                        .cloned()
                        .zip(record.iter().map(str::to_owned))
                        .collect(),
                ));
            }
            rows
        }
        "json" => {
            let value = read_json(path)?;
            let items = value
                .as_array()
                .or_else(|| value.get("data").and_then(Value::as_array))
                .ok_or_else(|| layout(path, "expected a json array or {\"data\": [...]}"))?;
            if let Some(first) = items.first().and_then(Value::as_object) {
                warn_unknown_columns(path, first.keys());
            }
            items.iter().map(json_row).collect()
        }
        "jsonl" => {
            let file = fs::File::open(path).map_err(io_err(path))?;
            let mut rows = Vec::new();
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value =
                    serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
                        path: path.to_owned(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                if rows.is_empty() {
                    if let Some(object) = value.as_object() {
                        warn_unknown_columns(path, object.keys());
                    }
                }
                rows.push(json_row(&value));
            }
            rows
        }
        other => {
            return Err(layout(
                path,
                format!("unsupported Rel2Text extension `{other}` (csv, tsv, json, jsonl)"),
            ))
        }
    };

    let mut corpus = LoadedCorpus::default();
    for row in rows {
        match row.as_ref().and_then(row_entry) {
            Some(entry) => corpus.entries.push(entry),
            None => corpus.skipped += 1,
        }
    }
    if corpus.skipped > 0 {
        log::warn!("{}: skipped {} malformed rows", path.display(), corpus.skipped);
    }
    Ok(corpus)
}

pub fn load_rel2text(path: &Path) -> Result<Vec<CanonicalRecord>, DatasetError> {
    Ok(load_rel2text_entries(path)?.records())
}

// ---------------------------------------------------------------------------
// WebNLG

fn split_webnlg_triple(text: &str) -> Option<Triple> {
    let parts: Vec<&str> = text.trim().split(" | ").collect();
    match parts.as_slice() {
        [s, p, o] => Triple::new(s.trim(), p.trim(), o.trim()).ok(),
        _ => None,
    }
}

fn webnlg_xml_entries(path: &Path, corpus: &mut LoadedCorpus) -> Result<(), DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc = roxmltree::Document::parse(&text).map_err(|source| DatasetError::Xml {
        path: path.to_owned(),
        source,
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "benchmark" {
        return Err(layout(path, "root element must be <benchmark>"));
    }
    let entries = root
        .children()
        .find(|n| n.has_tag_name("entries"))
        .ok_or_else(|| layout(path, "missing <entries>"))?;
    for entry in entries.children().filter(|n| n.has_tag_name("entry")) {
        let modified = entry
            .children()
            .find(|n| n.has_tag_name("modifiedtripleset"))
            .ok_or_else(|| layout(path, "<entry> without <modifiedtripleset>"))?;
        let parsed: Option<Vec<Triple>> = modified
            .children()
            .filter(|n| n.has_tag_name("mtriple"))
            .map(|n| n.text().and_then(split_webnlg_triple))
            .collect();
        let references = entry
            .children()
            .filter(|n| n.has_tag_name("lex"))
            .filter_map(|lex| {
                lex.children()
                    .find(|n| n.has_tag_name("text"))
                    .and_then(|t| t.text())
                    .or_else(|| lex.text())
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_owned)
            })
            .collect();
        match parsed {
            Some(triples) if !triples.is_empty() => corpus.entries.push(SourceEntry {
                triples,
                references,
            }),
            _ => corpus.skipped += 1,
        }
    }
    Ok(())
}

fn webnlg_json_entries(path: &Path, corpus: &mut LoadedCorpus) -> Result<(), DatasetError> {
    let value = read_json(path)?;
    let entries = value
        .get("entries")
        .and_then(Value::as_array)
        .ok_or_else(|| layout(path, "expected {\"entries\": [...]}"))?;
    for wrapper in entries {
        let Some(object) = wrapper.as_object() else {
            corpus.skipped += 1;
            continue;
        };
        for entry in object.values() {
            let triples: Option<Vec<Triple>> = entry
                .get("modifiedtripleset")
                .and_then(Value::as_array)
                .map(|set| {
                    set.iter()
                        .map(|t| {
                            Triple::new(
                                t.get("subject")?.as_str()?,
                                t.get("property")?.as_str()?,
                                t.get("object")?.as_str()?,
                            )
                            .ok()
                        })
                        .collect()
                })
                .unwrap_or(None);
            let references = entry
                .get("lexicalisations")
                .and_then(Value::as_array)
                .map(|lexes| {
                    lexes
                        .iter()
                        .filter_map(|l| l.get("lex").and_then(Value::as_str))
                        .map(str::to_owned)
                        .collect()
                })
                .unwrap_or_default();
            match triples {
                Some(triples) if !triples.is_empty() => corpus.entries.push(SourceEntry {
                    triples,
                    references,
                }),
                _ => corpus.skipped += 1,
            }
        }
    }
    Ok(())
}

/// Loads WebNLG entries from an xml/json file or a directory tree of them.
pub fn load_webnlg_entries(path: &Path) -> Result<LoadedCorpus, DatasetError> {
    let mut corpus = LoadedCorpus::default();
    let files = files_with_extension(path, &["xml", "json"])?;
    if files.is_empty() {
        return Err(layout(path, "no .xml or .json files found"));
    }
    for file in files {
        match file.extension().and_then(|e| e.to_str()) {
            Some("xml") => webnlg_xml_entries(&file, &mut corpus)?,
            _ => webnlg_json_entries(&file, &mut corpus)?,
        }
    }
    if corpus.skipped > 0 {
        log::warn!("{}: skipped {} malformed WebNLG entries", path.display(), corpus.skipped);
    }
    Ok(corpus)
}

pub fn load_webnlg(path: &Path) -> Result<Vec<CanonicalRecord>, DatasetError> {
    Ok(load_webnlg_entries(path)?.records())
}

// ---------------------------------------------------------------------------
// Canonical jsonl

pub fn save_canonical(records: &[CanonicalRecord], path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serialises");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn load_canonical(path: &Path) -> Result<Vec<CanonicalRecord>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| DatasetError::MalformedLine {
            path: path.to_owned(),
            line: idx + 1,
            message,
        };
        let record: CanonicalRecord =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let record = CanonicalRecord::new(record.relation, record.triples, record.references)
            .map_err(|e| malformed(e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

/// Source format selector shared by the command line tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Dart,
    Rel2text,
    Webnlg,
    Canonical,
}

/// Loads source entries for formats that have them; canonical files are
/// already grouped.
pub fn load_entries(path: &Path, format: DatasetFormat) -> Result<Option<LoadedCorpus>, DatasetError> {
    match format {
        DatasetFormat::Dart => load_dart_entries(path).map(Some),
        DatasetFormat::Rel2text => load_rel2text_entries(path).map(Some),
        DatasetFormat::Webnlg => load_webnlg_entries(path).map(Some),
        DatasetFormat::Canonical => Ok(None),
    }
}

/// Loads records in any supported format. With `single_rdf` only
/// single-triple entries are kept (a no-op for canonical input).
pub fn load_records(
    path: &Path,
    format: DatasetFormat,
    single_rdf: bool,
) -> Result<Vec<CanonicalRecord>, DatasetError> {
    match load_entries(path, format)? {
        Some(corpus) if single_rdf => Ok(extract_single_rdf(&corpus.entries)),
        Some(corpus) => Ok(corpus.records()),
        None => load_canonical(path),
    }
}
