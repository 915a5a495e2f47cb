#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use relverb::backend::{BackendError, CompletionBackend, CompletionRequest, Stage};
use relverb::parent::{ParentInputs, TableRecord};

use oracle::OracleRecord;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn toks(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const VOCAB: &[&str] = &["a", "b", "c", "creator", "<entity>", ".", "was", "by"];

fn random_tokens<R: Rng>(rng: &mut R, min: usize, max: usize) -> Vec<String> {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect()
}

/// Small random PARENT instance: up to 8 hypothesis and reference tokens and
/// one or two table records over a shared tiny vocabulary.
pub struct Instance {
    pub hyp: Vec<String>,
    pub reference: Vec<String>,
    pub table: Vec<(Vec<String>, Vec<String>)>,
}

impl Instance {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let records = rng.gen_range(1..=2);
        Self {
            hyp: random_tokens(rng, 1, 8),
            reference: random_tokens(rng, 1, 8),
            table: (0..records)
                .map(|_| (random_tokens(rng, 1, 3), random_tokens(rng, 1, 3)))
                .collect(),
        }
    }

    pub fn inputs(&self) -> ParentInputs {
        ParentInputs {
            hypothesis_tokens: self.hyp.clone(),
            reference_tokens: self.reference.clone(),
            table: self
                .table
                .iter()
                .map(|(a, v)| TableRecord::new(a.clone(), v.clone()).unwrap())
                .collect(),
        }
    }

    pub fn oracle_table(&self) -> Vec<OracleRecord> {
        self.table
            .iter()
            .map(|(a, v)| OracleRecord {
                attribute: a.clone(),
                value: v.clone(),
            })
            .collect()
    }
}

const WORDS: &[&str] = &[
    "was", "created", "by", "the", "is", "capital", "of", "born", "in", "married", "to", ".", ",",
    "creator", "founded",
];

/// Random template with exactly one subject and one object placeholder.
pub fn random_template<R: Rng>(rng: &mut R) -> String {
    let mut parts: Vec<&str> = (0..rng.gen_range(0..=6)).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let s = rng.gen_range(0..=parts.len());
    parts.insert(s, "<subject>");
    let o = rng.gen_range(0..=parts.len());
    parts.insert(o, "<object>");
    parts.join(" ")
}

/// Wraps a backend and records every call.
pub struct Recording<B> {
    pub inner: B,
    pub calls: Mutex<Vec<(String, Stage, usize, String)>>,
    pub count: AtomicUsize,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Arc<Self> {
        Arc::new(Self {
            inner,
            calls: Mutex::new(Vec::new()),
            count: AtomicUsize::new(0),
        })
    }

    pub fn calls_at(&self, stage: Stage) -> usize {
        self.calls.lock().unwrap().iter().filter(|c| c.1 == stage).count()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.calls.lock().unwrap().iter().map(|c| c.3.clone()).collect()
    }
}

impl<B: CompletionBackend> CompletionBackend for Recording<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.calls.lock().unwrap().push((
            request.relation.to_owned(),
            request.stage,
            request.shot_index,
            request.prompt.to_owned(),
        ));
        self.inner.complete(request)
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}
