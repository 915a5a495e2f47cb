//! Parse-error statistics, error-rate reduction and PARENT aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChosenSource, ParseError, ParseErrorKind, PipelineResult, Template};
use crate::parent::ParentScore;
use crate::parser::check_conditions;
use crate::pipeline::SampleOutcome;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("rate reduction needs a non-zero baseline")]
    DivisionByZero,
    #[error("no results to aggregate")]
    EmptyInput,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One row of the error table: totals plus a count per error kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub label: String,
    pub templates: usize,
    pub total_errors: usize,
    pub templates_with_errors: usize,
    pub missing_subject: usize,
    pub missing_object: usize,
    pub multiple_subjects: usize,
    pub multiple_objects: usize,
    pub illegal_placeholder: usize,
}

impl BreakdownRow {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            templates: 0,
            total_errors: 0,
            templates_with_errors: 0,
            missing_subject: 0,
            missing_object: 0,
            multiple_subjects: 0,
            multiple_objects: 0,
            illegal_placeholder: 0,
        }
    }

    pub fn add(&mut self, errors: &[ParseError]) {
        self.templates += 1;
        self.total_errors += errors.len();
        if !errors.is_empty() {
            self.templates_with_errors += 1;
        }
        for error in errors {
            *self.count_mut(error.kind) += 1;
        }
    }

    fn count_mut(&mut self, kind: ParseErrorKind) -> &mut usize {
        match kind {
            ParseErrorKind::MissingSubject => &mut self.missing_subject,
            ParseErrorKind::MissingObject => &mut self.missing_object,
            ParseErrorKind::MultipleSubjects => &mut self.multiple_subjects,
            ParseErrorKind::MultipleObjects => &mut self.multiple_objects,
            ParseErrorKind::IllegalPlaceholder => &mut self.illegal_placeholder,
        }
    }

    pub fn count(&self, kind: ParseErrorKind) -> usize {
        match kind {
            ParseErrorKind::MissingSubject => self.missing_subject,
            ParseErrorKind::MissingObject => self.missing_object,
            ParseErrorKind::MultipleSubjects => self.multiple_subjects,
            ParseErrorKind::MultipleObjects => self.multiple_objects,
            ParseErrorKind::IllegalPlaceholder => self.illegal_placeholder,
        }
    }

    pub fn kind_sum(&self) -> usize {
        ParseErrorKind::ALL.iter().map(|k| self.count(*k)).sum()
    }
}

/// Error counts over the final templates of `results`.
pub fn error_breakdown<'a>(
    label: impl Into<String>,
    results: impl IntoIterator<Item = &'a PipelineResult>,
) -> BreakdownRow {
    let mut row = BreakdownRow::new(label);
    for result in results {
        row.add(&result.final_errors);
    }
    row
}

/// Error counts over bare templates, running the parser on each.
pub fn breakdown_templates<'a>(
    label: impl Into<String>,
    templates: impl IntoIterator<Item = &'a Template>,
) -> BreakdownRow {
    let mut row = BreakdownRow::new(label);
    for template in templates {
        row.add(&check_conditions(template));
    }
    row
}

/// `100 * (baseline - improved) / baseline`, rounded to two decimals.
pub fn rate_reduction(baseline_count: usize, improved_count: usize) -> Result<f64, ReportError> {
    if baseline_count == 0 {
        return Err(ReportError::DivisionByZero);
    }
    let raw = 100.0 * (baseline_count as f64 - improved_count as f64) / baseline_count as f64;
    Ok((raw * 100.0).round() / 100.0)
}

/// Arithmetic mean of per-sample final precision, recall and F1.
pub fn aggregate_parent<'a>(
    results: impl IntoIterator<Item = &'a PipelineResult>,
) -> Result<ParentScore, ReportError> {
    let mut n = 0usize;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for result in results {
        n += 1;
        p += result.final_precision;
        r += result.final_recall;
        f += result.final_f1;
    }
    if n == 0 {
        return Err(ReportError::EmptyInput);
    }
    let n = n as f64;
    Ok(ParentScore {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    })
}

const COLUMNS: [&str; 9] = [
    "setup",
    "templates",
    "total_errors",
    "templates_with_errors",
    "missing_subject",
    "missing_object",
    "multiple_subjects",
    "multiple_objects",
    "illegal_placeholder",
];

fn row_cells(row: &BreakdownRow) -> [String; 9] {
    [
        row.label.clone(),
        row.templates.to_string(),
        row.total_errors.to_string(),
        row.templates_with_errors.to_string(),
        row.missing_subject.to_string(),
        row.missing_object.to_string(),
        row.multiple_subjects.to_string(),
        row.multiple_objects.to_string(),
        row.illegal_placeholder.to_string(),
    ]
}

pub fn breakdown_csv(rows: &[BreakdownRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(COLUMNS).expect("in-memory csv");
    for row in rows {
        writer.write_record(row_cells(row)).expect("in-memory csv");
    }
    String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Aligned plain-text rendering of the error table.
pub fn breakdown_text(rows: &[BreakdownRow]) -> String {
    let header = [
        "Setup",
        "Templates",
        "Total |E|",
        "Templates w/ E",
        "Missing SUBJ.",
        "Missing OBJ.",
        "Multiple SUBJECTs",
        "Multiple OBJECTs",
        "Illegal PLACEHOLDER",
    ];
    let body: Vec<[String; 9]> = rows.iter().map(row_cells).collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for cells in &body {
        for (w, cell) in widths.iter_mut().zip(cells) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let rendered: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", rendered.join("  ").trim_end());
    };
    line(header.to_vec());
    for cells in &body {
        line(cells.iter().map(String::as_str).collect());
    }
    out
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub samples: usize,
    pub completed: usize,
    pub failed: usize,
    pub cv_invoked: usize,
    pub cv_chosen: usize,
    pub backup_used: usize,
    pub breakdown: BreakdownRow,
    pub parent: Option<ParentScore>,
}

pub fn summarize(label: &str, outcomes: &[SampleOutcome]) -> RunSummary {
    let completed: Vec<&PipelineResult> = outcomes.iter().filter_map(SampleOutcome::result).collect();
    RunSummary {
        label: label.to_owned(),
        samples: outcomes.len(),
        completed: completed.len(),
        failed: outcomes.len() - completed.len(),
        cv_invoked: completed.iter().filter(|r| r.cv_invoked).count(),
        cv_chosen: completed
            .iter()
            .filter(|r| r.chosen_source == ChosenSource::ConsistencyValidator)
            .count(),
        backup_used: completed.iter().filter(|r| r.backup_used).count(),
        breakdown: error_breakdown(label, completed.iter().copied()),
        parent: aggregate_parent(completed.iter().copied()).ok(),
    }
}

/// Relation to final template text, for completed samples.
pub fn template_map(outcomes: &[SampleOutcome]) -> BTreeMap<String, String> {
    outcomes
        .iter()
        .filter_map(SampleOutcome::result)
        .map(|r| (r.relation.clone(), r.final_template.as_str().to_owned()))
        .collect()
}

pub fn save_templates(map: &BTreeMap<String, String>, path: &Path) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(map).expect("map serialises");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_templates(path: &Path) -> Result<BTreeMap<String, String>, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Breakdown of a relation-to-template map.
pub fn breakdown_template_map(label: &str, map: &BTreeMap<String, String>) -> BreakdownRow {
    let templates: Vec<Template> = map.values().map(Template::from_completion).collect();
    breakdown_templates(label, &templates)
}

/// Writes `templates.json`, `results.jsonl`, `report.csv`, `report.txt` and
/// `summary.json` under `dir`. Contents depend only on `outcomes`.
pub fn write_run_outputs(dir: &Path, label: &str, outcomes: &[SampleOutcome]) -> Result<RunSummary, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_templates(&template_map(outcomes), &dir.join("templates.json"))?;

    let mut results = String::new();
    for outcome in outcomes {
        results.push_str(&serde_json::to_string(outcome).expect("outcome serialises"));
        results.push('\n');
    }
    let results_path = dir.join("results.jsonl");
    fs::write(&results_path, results).map_err(io_err(&results_path))?;

    let summary = summarize(label, outcomes);
    let rows = [summary.breakdown.clone()];
    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, breakdown_csv(&rows)).map_err(io_err(&csv_path))?;

    let mut text = breakdown_text(&rows);
    if let Some(parent) = summary.parent {
        let _ = writeln!(
            text,
            "\nPARENT (mean over {} templates): precision {:.4}  recall {:.4}  F1 {:.4}",
            summary.completed, parent.precision, parent.recall, parent.f1
        );
    }
    let _ = writeln!(
        text,
        "samples {}  failed {}  cv invoked {}  cv chosen {}",
        summary.samples, summary.failed, summary.cv_invoked, summary.cv_chosen
    );
    let text_path = dir.join("report.txt");
    fs::write(&text_path, text).map_err(io_err(&text_path))?;

    let summary_path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    json.push('\n');
    fs::write(&summary_path, json).map_err(io_err(&summary_path))?;
    Ok(summary)
}
