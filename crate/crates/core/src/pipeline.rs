//! Template generation with parser-triggered retries and a PARENT-gated
//! consistency repair.
//!
//! Per relation sample:
//!
//! 1. Shot 0 sends the initial prompt to generator backend 0.
//! 2. While the latest template has parse errors and fewer than `max_retries`
//!    retries were spent, the retry prompt (previous prompt, previous
//!    completion, error list) goes to the next generator backend.
//! 3. The shot with the fewest errors (latest on ties) is scored with PARENT F1.
//! 4. Below `cv_threshold`, the consistency prompt produces a candidate; the
//!    higher F1 of the two wins, ties going to the generator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, Stage};
use crate::extract::extract_template;
use crate::model::{ChosenSource, PipelineResult, RelationSample, ShotRecord, Template};
use crate::parent::{template_score, ParentConfig};
use crate::parser::check_conditions;
use crate::prompt::{render_consistency, render_initial, render_retry, PromptError, PromptSet};

pub const DEFAULT_CV_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend failure at {stage:?} shot {shot}: {source}")]
    Backend {
        stage: Stage,
        shot: usize,
        #[source]
        source: BackendError,
    },
}

#[derive(Clone)]
pub struct PipelineConfig {
    pub max_retries: usize,
    pub cv_threshold: f64,
    pub cv_enabled: bool,
    pub prompts: PromptSet,
    /// One backend per shot, `max_retries + 1` in total.
    pub generator_backends: Vec<Arc<dyn CompletionBackend>>,
    pub cv_backend: Option<Arc<dyn CompletionBackend>>,
    pub parent: ParentConfig,
    /// Substituted for final templates that still have parse errors. Off by
    /// default.
    pub backup_template: Option<Template>,
}

impl PipelineConfig {
    /// Config with the same backend at every generator shot and for the
    /// consistency stage.
    pub fn uniform(
        prompts: PromptSet,
        backend: Arc<dyn CompletionBackend>,
        max_retries: usize,
        cv_enabled: bool,
    ) -> Self {
        Self {
            max_retries,
            cv_threshold: DEFAULT_CV_THRESHOLD,
            cv_enabled,
            prompts,
            generator_backends: vec![backend.clone(); max_retries + 1],
            cv_backend: cv_enabled.then_some(backend),
            parent: ParentConfig::default(),
            backup_template: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.generator_backends.len() != self.max_retries + 1 {
            return Err(PipelineError::Config(format!(
                "{} generator backends for {} retries, expected {}",
                self.generator_backends.len(),
                self.max_retries,
                self.max_retries + 1
            )));
        }
        if self.cv_enabled && self.cv_backend.is_none() {
            return Err(PipelineError::Config(
                "consistency validation enabled without a backend".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.cv_threshold) {
            return Err(PipelineError::Config(format!(
                "cv threshold {} outside [0, 1]",
                self.cv_threshold
            )));
        }
        self.parent
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

fn call(
    backend: &dyn CompletionBackend,
    prompt: &str,
    relation: &str,
    shot: usize,
    stage: Stage,
) -> Result<String, PipelineError> {
    backend
        .complete(&CompletionRequest {
            prompt,
            relation,
            shot_index: shot,
            stage,
        })
        .map_err(|source| PipelineError::Backend {
            stage,
            shot,
            source,
        })
}

/// Index of the shot with the fewest errors, latest on ties.
fn fewest_errors(shots: &[ShotRecord]) -> usize {
    let mut best = 0;
    for (idx, shot) in shots.iter().enumerate() {
        if shot.errors.len() <= shots[best].errors.len() {
            best = idx;
        }
    }
    best
}

pub fn run_sample(
    sample: &RelationSample,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    config.validate()?;
    let relation = sample.relation();
    let initial = &config.prompts.initial;
    // Retry completions answer the original prompt again, so they are read
    // with the initial prompt's output mode.
    let mode = initial.output_mode;
    let field_path = initial.output_field_path.as_deref();

    let mut prompt = render_initial(initial, sample)?;
    let mut shots: Vec<ShotRecord> = Vec::new();
    for shot in 0..=config.max_retries {
        let stage = if shot == 0 { Stage::Initial } else { Stage::Retry };
        let raw = call(
            config.generator_backends[shot].as_ref(),
            &prompt,
            relation,
            shot,
            stage,
        )?;
        let extraction = extract_template(&raw, mode, field_path, sample);
        let done = extraction.errors.is_empty() || shot == config.max_retries;
        if !done {
            prompt = render_retry(&config.prompts.retry, &prompt, &raw, &extraction.errors)?;
        }
        shots.push(ShotRecord {
            shot_index: shot,
            raw_completion: raw,
            template: extraction.template,
            errors: extraction.errors,
            parent_f1: None,
        });
        if done {
            break;
        }
    }

    let carried = fewest_errors(&shots);
    let generator_score = template_score(&shots[carried].template, relation, &config.parent);
    shots[carried].parent_f1 = Some(generator_score.f1);

    let mut result = PipelineResult {
        relation: relation.to_owned(),
        final_template: shots[carried].template.clone(),
        final_errors: shots[carried].errors.clone(),
        final_f1: generator_score.f1,
        final_precision: generator_score.precision,
        final_recall: generator_score.recall,
        shots,
        carried_shot: carried,
        cv_invoked: false,
        cv_raw_completion: None,
        cv_template: None,
        cv_errors: Vec::new(),
        cv_f1: None,
        chosen_source: ChosenSource::Generator,
        backup_used: false,
    };

    if config.cv_enabled && generator_score.f1 < config.cv_threshold {
        let backend = config
            .cv_backend
            .as_ref()
            .expect("validated: cv backend present");
        let consistency = &config.prompts.consistency;
        let cv_prompt = render_consistency(consistency, relation, result.final_template.as_str())?;
        let raw = call(backend.as_ref(), &cv_prompt, relation, 0, Stage::Consistency)?;
        let extraction = extract_template(
            &raw,
            consistency.output_mode,
            consistency.output_field_path.as_deref(),
            sample,
        );
        // An unreadable repair completion cannot beat the generator.
        let cv_score = if extraction.extract_error.is_some() {
            crate::parent::ParentScore::ZERO
        } else {
            template_score(&extraction.template, relation, &config.parent)
        };
        result.cv_invoked = true;
        result.cv_raw_completion = Some(raw);
        result.cv_errors = extraction.errors.clone();
        result.cv_f1 = Some(cv_score.f1);
        if cv_score.f1 > generator_score.f1 {
            result.final_template = extraction.template.clone();
            result.final_errors = extraction.errors;
            result.final_f1 = cv_score.f1;
            result.final_precision = cv_score.precision;
            result.final_recall = cv_score.recall;
            result.chosen_source = ChosenSource::ConsistencyValidator;
        }
        result.cv_template = Some(extraction.template);
    }

    if let Some(backup) = &config.backup_template {
        if !result.final_errors.is_empty() {
            let score = template_score(backup, relation, &config.parent);
            result.final_template = backup.clone();
            result.final_errors = check_conditions(backup);
            result.final_f1 = score.f1;
            result.final_precision = score.precision;
            result.final_recall = score.recall;
            result.backup_used = true;
        }
    }
    Ok(result)
}

/// A sample whose backend failed; it is reported, never dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub relation: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleOutcome {
    Completed(PipelineResult),
    Failed(FailedSample),
}

impl SampleOutcome {
    pub fn relation(&self) -> &str {
        match self {
            SampleOutcome::Completed(r) => &r.relation,
            SampleOutcome::Failed(f) => &f.relation,
        }
    }

    pub fn result(&self) -> Option<&PipelineResult> {
        match self {
            SampleOutcome::Completed(r) => Some(r),
            SampleOutcome::Failed(_) => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, SampleOutcome::Failed(_))
    }
}

/// Runs every sample on a pool of `parallelism` threads. Results come back
/// in input order. Configuration errors abort the run; backend failures are
/// recorded per sample.
pub fn run_dataset(
    samples: &[RelationSample],
    config: &PipelineConfig,
    parallelism: usize,
) -> Result<Vec<SampleOutcome>, PipelineError> {
    if parallelism == 0 {
        return Err(PipelineError::Config("parallelism must be at least 1".into()));
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| {
        use rayon::prelude::*;
        samples
            .par_iter()
            .map(|sample| match run_sample(sample, config) {
                Ok(result) => Ok(SampleOutcome::Completed(result)),
                Err(err @ PipelineError::Backend { .. }) => {
                    log::warn!("sample `{}` failed: {err}", sample.relation());
                    Ok(SampleOutcome::Failed(FailedSample {
                        relation: sample.relation().to_owned(),
                        error: err.to_string(),
                    }))
                }
                Err(err) => Err(err),
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{mock_script_for_pipeline, MockBackend};
    use crate::model::Triple;
    use crate::prompt::InitialVariant;

    fn sample(relation: &str, s: &str, o: &str) -> RelationSample {
        RelationSample::new(relation, vec![Triple::new(s, relation, o).unwrap()], 2).unwrap()
    }

    fn mock(entries: Vec<(&str, usize, Stage, &str)>) -> Arc<dyn CompletionBackend> {
        Arc::new(MockBackend::new(mock_script_for_pipeline(entries).unwrap(), "mock"))
    }

    #[test]
    fn fewest_errors_prefers_latest_on_ties() {
        let shot = |n: usize, errs: usize| ShotRecord {
            shot_index: n,
            raw_completion: String::new(),
            template: Template::from_completion("x"),
            errors: crate::extract::unusable_completion_errors()[..errs].to_vec(),
            parent_f1: None,
        };
        assert_eq!(fewest_errors(&[shot(0, 2), shot(1, 1), shot(2, 1)]), 2);
        assert_eq!(fewest_errors(&[shot(0, 1), shot(1, 2)]), 0);
    }

    #[test]
    fn config_validation() {
        let backend = mock(vec![]);
        let mut config =
            PipelineConfig::uniform(PromptSet::builtin(InitialVariant::Asdot), backend, 2, true);
        assert!(config.validate().is_ok());
        config.generator_backends.pop();
        assert!(matches!(config.validate(), Err(PipelineError::Config(_))));
        let mut config = PipelineConfig::uniform(
            PromptSet::builtin(InitialVariant::Asdot),
            mock(vec![]),
            0,
            false,
        );
        config.cv_enabled = true;
        assert!(matches!(config.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn asdot_sentence_is_delexicalised() {
        let backend = mock(vec![(
            "creator",
            0,
            Stage::Initial,
            "Mario was created by Shigeru Miyamoto.",
        )]);
        let config =
            PipelineConfig::uniform(PromptSet::builtin(InitialVariant::Asdot), backend, 0, false);
        let result = run_sample(&sample("creator", "Mario", "Shigeru Miyamoto"), &config).unwrap();
        assert_eq!(result.final_template.as_str(), "<subject> was created by <object>.");
        assert!(result.final_errors.is_empty());
        assert_eq!(result.shots.len(), 1);
    }

    #[test]
    fn exhausted_retries_carry_fewest_errors() {
        let backend = mock(vec![
            ("r", 0, Stage::Initial, "{\"template\": \"<subject> r\"}"),
            ("r", 1, Stage::Retry, "{\"template\": \"nothing\"}"),
            ("r", 2, Stage::Retry, "{\"template\": \"<x> <y>\"}"),
        ]);
        let config =
            PipelineConfig::uniform(PromptSet::builtin(InitialVariant::Json), backend, 2, false);
        let result = run_sample(&sample("r", "a", "b"), &config).unwrap();
        assert_eq!(result.shots.len(), 3);
        assert_eq!(result.carried_shot, 0);
        assert_eq!(result.final_template.as_str(), "<subject> r");
        assert!(result.shots[0].parent_f1.is_some());
        assert!(result.shots[1].parent_f1.is_none());
    }

    #[test]
    fn backup_template_only_replaces_broken_finals() {
        let backend = mock(vec![("r", 0, Stage::Initial, "{\"template\": \"broken\"}")]);
        let mut config =
            PipelineConfig::uniform(PromptSet::builtin(InitialVariant::Json), backend, 0, false);
        config.backup_template = Some(Template::new("<subject> r <object>").unwrap());
        let result = run_sample(&sample("r", "a", "b"), &config).unwrap();
        assert!(result.backup_used);
        assert!(result.final_errors.is_empty());
        assert_eq!(result.final_template.as_str(), "<subject> r <object>");
    }

    #[test]
    fn unreadable_cv_completion_keeps_generator() {
        let backend = mock(vec![
            ("r", 0, Stage::Initial, "{\"template\": \"<subject> is linked to <object>\"}"),
            ("r", 0, Stage::Consistency, "I cannot help with that."),
        ]);
        let config =
            PipelineConfig::uniform(PromptSet::builtin(InitialVariant::Json), backend, 0, true);
        let result = run_sample(&sample("r", "a", "b"), &config).unwrap();
        assert!(result.cv_invoked);
        assert_eq!(result.cv_f1, Some(0.0));
        assert_eq!(result.cv_errors.len(), 2);
        assert_eq!(result.chosen_source, ChosenSource::Generator);
    }

    #[test]
    fn zero_parallelism_is_rejected() {
        let config = PipelineConfig::uniform(
            PromptSet::builtin(InitialVariant::Asdot),
            mock(vec![]),
            0,
            false,
        );
        assert!(run_dataset(&[], &config, 0).is_err());
        assert!(run_dataset(&[], &config, 1).unwrap().is_empty());
    }
}
