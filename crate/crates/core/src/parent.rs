//! PARENT scoring with the word-overlap entailment model.
//!
//! Precision credits hypothesis n-grams found in the reference or entailed by
//! the table. Recall combines reference recall and table recall
//! geometrically:
//!
//! ```text
//! recall = recall_ref ^ lambda * recall_table ^ (1 - lambda)
//! ```
//!
//! [`build_parent_inputs`] turns a template and its relation into the
//! artificial hypothesis / reference / table triple used by the consistency
//! gate: both placeholders become `<entity>`, the reference is the relation
//! label, and the table is a single record whose attribute is the relation
//! split on spaces.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Template, ENTITY, OBJECT, SUBJECT};

/// Lower clamp applied to every probability term before geometric combination.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_MAX_N: usize = 4;

const PUNCTUATION: &[char] = &[
    '.', ',', ';', ':', '!', '?', '(', ')', '\'', '"', '\u{201c}', '\u{201d}',
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParentError {
    #[error("relation `{0}` has no tokens")]
    DegenerateRelation(String),
    #[error("table record has an empty {0} list")]
    EmptyRecordField(&'static str),
    #[error("table has no records")]
    EmptyTable,
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("max_n must be at least 1")]
    InvalidMaxN,
}

/// One `(attribute, value)` row of the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct TableRecord {
    attribute_tokens: Vec<String>,
    value_tokens: Vec<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    attribute_tokens: Vec<String>,
    value_tokens: Vec<String>,
}

impl TryFrom<RawRecord> for TableRecord {
    type Error = ParentError;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        TableRecord::new(raw.attribute_tokens, raw.value_tokens)
    }
}

impl TableRecord {
    pub fn new(
        attribute_tokens: Vec<String>,
        value_tokens: Vec<String>,
    ) -> Result<Self, ParentError> {
        if attribute_tokens.is_empty() {
            return Err(ParentError::EmptyRecordField("attribute"));
        }
        if value_tokens.is_empty() {
            return Err(ParentError::EmptyRecordField("value"));
        }
        Ok(Self {
            attribute_tokens,
            value_tokens,
        })
    }

    pub fn attribute_tokens(&self) -> &[String] {
        &self.attribute_tokens
    }

    pub fn value_tokens(&self) -> &[String] {
        &self.value_tokens
    }
}

/// Hypothesis, reference and table for one PARENT evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentInputs {
    pub hypothesis_tokens: Vec<String>,
    pub reference_tokens: Vec<String>,
    pub table: Vec<TableRecord>,
}

impl ParentInputs {
    /// Empty hypothesis or reference; such inputs score zero.
    pub fn is_degenerate(&self) -> bool {
        self.hypothesis_tokens.is_empty() || self.reference_tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParentScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ParentScore {
    pub const ZERO: ParentScore = ParentScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParentConfig {
    /// Weight of reference recall against table recall.
    pub lambda: f64,
    pub max_n: usize,
}

impl Default for ParentConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            max_n: DEFAULT_MAX_N,
        }
    }
}

impl ParentConfig {
    pub fn validate(&self) -> Result<(), ParentError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ParentError::InvalidLambda(self.lambda));
        }
        if self.max_n == 0 {
            return Err(ParentError::InvalidMaxN);
        }
        Ok(())
    }
}

/// Per-order precision and reference recall, unclamped. Orders for which the
/// hypothesis has no n-gram are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentBreakdown {
    pub orders: Vec<OrderScore>,
    pub table_recall: f64,
    pub score: ParentScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub n: usize,
    pub precision: f64,
    pub reference_recall: f64,
}

/// Lowercases, splits on whitespace and detaches punctuation. A `<...>` span
/// stays a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let spans = crate::parser::find_placeholders(&lowered);
    let mut tokens = Vec::new();
    let mut cursor = 0;
    for span in spans {
        split_plain(&lowered[cursor..span.start], &mut tokens);
        tokens.push(span.text);
        cursor = span.end;
    }
    split_plain(&lowered[cursor..], &mut tokens);
    tokens
}

fn split_plain(text: &str, out: &mut Vec<String>) {
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if PUNCTUATION.contains(&ch) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
}

/// Builds the artificial hypothesis, reference and table for a template of
/// `relation`.
pub fn build_parent_inputs(
    template: &Template,
    relation: &str,
) -> Result<ParentInputs, ParentError> {
    let reference_tokens = tokenize(relation);
    let attribute_tokens: Vec<String> = relation
        .split(' ')
        .filter(|part| !part.is_empty())
        .map(str::to_lowercase)
        .collect();
    if reference_tokens.is_empty() || attribute_tokens.is_empty() {
        return Err(ParentError::DegenerateRelation(relation.to_owned()));
    }
    let hypothesis = template
        .as_str()
        .replace(SUBJECT, ENTITY)
        .replace(OBJECT, ENTITY);
    let record = TableRecord::new(attribute_tokens, vec![ENTITY.to_owned(), ENTITY.to_owned()])?;
    Ok(ParentInputs {
        hypothesis_tokens: tokenize(&hypothesis),
        reference_tokens,
        table: vec![record],
    })
}

/// Table vocabulary: every attribute and value token of every record.
fn table_vocabulary(table: &[TableRecord]) -> HashSet<&str> {
    table
        .iter()
        .flat_map(|r| r.attribute_tokens.iter().chain(&r.value_tokens))
        .map(String::as_str)
        .collect()
}

/// Word-overlap entailment probability: share of the n-gram's tokens that
/// occur anywhere in the table.
pub fn entailment_prob(ngram: &[String], table: &[TableRecord]) -> f64 {
    assert!(!ngram.is_empty(), "entailment of an empty n-gram");
    entailment_with(ngram, &table_vocabulary(table))
}

fn entailment_with(ngram: &[String], vocab: &HashSet<&str>) -> f64 {
    let hits = ngram.iter().filter(|t| vocab.contains(t.as_str())).count();
    hits as f64 / ngram.len() as f64
}

/// Ordered map so floating-point sums run in a fixed order.
fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// Longest common subsequence length at token level.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0)
}

fn geometric_mean(values: &[f64]) -> f64 {
    let log_sum: f64 = values.iter().map(|v| clamp_prob(*v).ln()).sum();
    (log_sum / values.len() as f64).exp()
}

/// Scores `inputs`. Degenerate inputs (empty hypothesis or reference) score
/// zero on every field.
pub fn parent_score(inputs: &ParentInputs, config: &ParentConfig) -> Result<ParentScore, ParentError> {
    parent_breakdown(inputs, config).map(|b| b.score)
}

pub fn parent_breakdown(
    inputs: &ParentInputs,
    config: &ParentConfig,
) -> Result<ParentBreakdown, ParentError> {
    config.validate()?;
    if inputs.table.is_empty() {
        return Err(ParentError::EmptyTable);
    }
    if inputs.is_degenerate() {
        return Ok(ParentBreakdown {
            orders: Vec::new(),
            table_recall: 0.0,
            score: ParentScore::ZERO,
        });
    }

    let hyp = &inputs.hypothesis_tokens;
    let reference = &inputs.reference_tokens;
    let vocab = table_vocabulary(&inputs.table);

    let mut orders = Vec::new();
    for n in 1..=config.max_n.min(hyp.len()) {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts = ngram_counts(reference, n);

        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (gram, &count_h) in &hyp_counts {
            let count_r = ref_counts.get(gram).copied().unwrap_or(0);
            let overlap = count_h.min(count_r);
            numerator += overlap as f64 + (count_h - overlap) as f64 * entailment_with(gram, &vocab);
            denominator += count_h as f64;
        }
        let precision = numerator / denominator;

        let mut rec_num = 0.0;
        let mut rec_den = 0.0;
        for (gram, &count_r) in &ref_counts {
            let weight = entailment_with(gram, &vocab);
            let count_h = hyp_counts.get(gram).copied().unwrap_or(0);
            rec_num += weight * count_h.min(count_r) as f64;
            rec_den += weight * count_r as f64;
        }
        let reference_recall = if rec_den == 0.0 { 1.0 } else { rec_num / rec_den };

        orders.push(OrderScore {
            n,
            precision,
            reference_recall,
        });
    }

    let precisions: Vec<f64> = orders.iter().map(|o| o.precision).collect();
    let ref_recalls: Vec<f64> = orders.iter().map(|o| o.reference_recall).collect();
    let precision = geometric_mean(&precisions);
    let recall_ref = geometric_mean(&ref_recalls);

    let table_recall = inputs
        .table
        .iter()
        .map(|r| lcs_len(&r.value_tokens, hyp) as f64 / r.value_tokens.len() as f64)
        .sum::<f64>()
        / inputs.table.len() as f64;

    let recall = recall_ref.powf(config.lambda) * clamp_prob(table_recall).powf(1.0 - config.lambda);

    Ok(ParentBreakdown {
        orders,
        table_recall,
        score: ParentScore::from_precision_recall(precision, recall),
    })
}

/// Convenience wrapper: F1 of a template against its relation. Relations that
/// tokenise to nothing score zero.
pub fn template_score(template: &Template, relation: &str, config: &ParentConfig) -> ParentScore {
    build_parent_inputs(template, relation)
        .and_then(|inputs| parent_score(&inputs, config))
        .unwrap_or(ParentScore::ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn creator_table() -> Vec<TableRecord> {
        vec![TableRecord::new(toks(&["creator"]), toks(&["<entity>", "<entity>"])).unwrap()]
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("<entity> was created by <entity>."),
            toks(&["<entity>", "was", "created", "by", "<entity>", "."])
        );
        assert_eq!(tokenize("Birth Place"), toks(&["birth", "place"]));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("\"Hi,\" (she) said: it's <x y>!"),
            toks(&["\"", "hi", ",", "\"", "(", "she", ")", "said", ":", "it", "'", "s", "<x y>", "!"])
        );
        assert_eq!(tokenize("a<entity>b"), toks(&["a", "<entity>", "b"]));
    }

    #[test]
    fn build_inputs_for_creator() {
        let t = Template::new("<subject> was created by <object>.").unwrap();
        let inputs = build_parent_inputs(&t, "creator").unwrap();
        assert_eq!(
            inputs.hypothesis_tokens,
            toks(&["<entity>", "was", "created", "by", "<entity>", "."])
        );
        assert_eq!(inputs.reference_tokens, toks(&["creator"]));
        assert_eq!(inputs.table, creator_table());
    }

    #[test]
    fn build_inputs_splits_relation_on_spaces() {
        let t = Template::new("<subject> has <object>.").unwrap();
        let inputs = build_parent_inputs(&t, "birth place").unwrap();
        assert_eq!(inputs.table[0].attribute_tokens(), toks(&["birth", "place"]));

        let t = Template::new("no placeholders here").unwrap();
        let inputs = build_parent_inputs(&t, "creator").unwrap();
        assert!(!inputs.hypothesis_tokens.iter().any(|t| t == ENTITY));
    }

    #[test]
    fn build_inputs_rejects_blank_relation() {
        let t = Template::new("<subject> x <object>").unwrap();
        assert!(matches!(
            build_parent_inputs(&t, "  "),
            Err(ParentError::DegenerateRelation(_))
        ));
    }

    #[test]
    fn entailment_examples() {
        let table = creator_table();
        assert_eq!(entailment_prob(&toks(&["<entity>"]), &table), 1.0);
        assert_eq!(entailment_prob(&toks(&["banana"]), &table), 0.0);
        assert_eq!(entailment_prob(&toks(&["was", "created"]), &table), 0.0);
        assert_eq!(entailment_prob(&toks(&["creator", "was"]), &table), 0.5);
    }

    #[test]
    fn identical_single_token_scores_one() {
        let inputs = ParentInputs {
            hypothesis_tokens: toks(&["creator"]),
            reference_tokens: toks(&["creator"]),
            table: vec![TableRecord::new(toks(&["creator"]), toks(&["creator"])).unwrap()],
        };
        let s = parent_score(&inputs, &ParentConfig::default()).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn disjoint_hypothesis_scores_zero() {
        let inputs = ParentInputs {
            hypothesis_tokens: toks(&["banana"]),
            reference_tokens: toks(&["creator"]),
            table: creator_table(),
        };
        let s = parent_score(&inputs, &ParentConfig::default()).unwrap();
        assert!(s.f1.abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn degenerate_inputs_score_zero() {
        let inputs = ParentInputs {
            hypothesis_tokens: vec![],
            reference_tokens: toks(&["creator"]),
            table: creator_table(),
        };
        assert_eq!(parent_score(&inputs, &ParentConfig::default()).unwrap(), ParentScore::ZERO);
    }

    #[test]
    fn config_is_validated() {
        let inputs = ParentInputs {
            hypothesis_tokens: toks(&["a"]),
            reference_tokens: toks(&["a"]),
            table: creator_table(),
        };
        let bad = ParentConfig { lambda: 1.5, max_n: 4 };
        assert!(matches!(parent_score(&inputs, &bad), Err(ParentError::InvalidLambda(_))));
        let bad = ParentConfig { lambda: 0.5, max_n: 0 };
        assert_eq!(parent_score(&inputs, &bad), Err(ParentError::InvalidMaxN));
        let empty = ParentInputs { table: vec![], ..inputs };
        assert_eq!(parent_score(&empty, &ParentConfig::default()), Err(ParentError::EmptyTable));
    }

    #[test]
    fn lcs_basics() {
        assert_eq!(lcs_len(&toks(&["a", "b", "c"]), &toks(&["a", "x", "c"])), 2);
        assert_eq!(lcs_len(&toks(&[]), &toks(&["a"])), 0);
        assert_eq!(lcs_len(&toks(&["a", "a"]), &toks(&["b", "a", "c", "a"])), 2);
    }

    #[test]
    fn f1_formula() {
        let s = ParentScore::from_precision_recall(0.5, 0.25);
        assert!((s.f1 - 2.0 * 0.5 * 0.25 / 0.75).abs() < 1e-12);
        assert_eq!(ParentScore::from_precision_recall(0.0, 0.0).f1, 0.0);
    }

    #[test]
    fn records_reject_empty_lists() {
        assert!(TableRecord::new(vec![], toks(&["a"])).is_err());
        assert!(TableRecord::new(toks(&["a"]), vec![]).is_err());
    }
}
