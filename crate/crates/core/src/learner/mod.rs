//! Interactive learning loop: route user feedback, collect annotations, and
//! retrain the parser stage by stage.

mod simulate;
mod state;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use simulate::{
    Batching, NearestNeighborParser, NeuralParser,
    oracle_feedback, simulate, BatchResult, FeedbackNoise, GoldOracle, NearestNeighborTrainer, NeuralTrainer,
    SimulationConfig, SqlParser, Trainer,
};
pub use state::{load_state, save_state, read_stage_reports, stage_reports_tsv};

use crate::anonymize::{anonymize_sql_pair, EntityIndex};
use crate::dataset::{Example, Provenance};
use crate::error::Result;
use crate::executor::{Database, ExecError};
use crate::model::{train, Seq2Seq, TrainConfig};
use crate::paraphrase::ParaphraseTable;
use crate::schema::Schema;
use crate::template::{generate_seed_dataset, SchemaTemplate};
use crate::text;

/// The five judgments a user can give a displayed result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackLabel {
    #[serde(alias = "correct")]
    Correct,
    #[serde(alias = "Wrong Types", alias = "wrong_types")]
    WrongTypes,
    #[serde(alias = "Incomplete Result", alias = "incomplete_result")]
    IncompleteResult,
    #[serde(alias = "Wrong Result", alias = "wrong_result")]
    WrongResult,
    #[serde(alias = "Can't Tell", alias = "cant_tell")]
    CantTell,
}

impl FeedbackLabel {
    pub const ALL: [FeedbackLabel; 5] = [
        FeedbackLabel::Correct,
        FeedbackLabel::WrongTypes,
        FeedbackLabel::IncompleteResult,
        FeedbackLabel::WrongResult,
        FeedbackLabel::CantTell,
    ];

    /// Correct and IncompleteResult both mean the query itself is right.
    pub fn accepts_query(self) -> bool {
        matches!(self, FeedbackLabel::Correct | FeedbackLabel::IncompleteResult)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeedbackLabel::Correct => "Correct",
            FeedbackLabel::WrongTypes => "Wrong Types",
            FeedbackLabel::IncompleteResult => "Incomplete Result",
            FeedbackLabel::WrongResult => "Wrong Result",
            FeedbackLabel::CantTell => "Can't Tell",
        }
    }
}

impl fmt::Display for FeedbackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub utterance: String,
    pub predicted_sql: String,
    pub label: FeedbackLabel,
    pub stage: usize,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub executed: bool,
    /// Whether the prediction was actually right, when known (used for feedback-quality analysis).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_correct: Option<bool>,
}

impl FeedbackRecord {
    pub fn new(utterance: &str, predicted_sql: &str, label: FeedbackLabel, stage: usize, executed: bool) -> Self {
        FeedbackRecord {
            utterance: utterance.to_string(),
            predicted_sql: predicted_sql.to_string(),
            label,
            stage,
            timestamp: now_millis(),
            executed,
            gold_correct: None,
        }
    }
}

pub fn now_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: u64,
    pub utterance: String,
    pub predicted_sql: String,
    pub reason: FeedbackLabel,
    pub status: TaskStatus,
    pub gold_sql: Option<String>,
}

/// Anonymized training pairs without duplicates, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    examples: Vec<Example>,
    keys: HashSet<(String, String)>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_examples(examples: impl IntoIterator<Item = Example>) -> Self {
        let mut t = Self::new();
        for e in examples {
            t.insert(e);
        }
        t
    }

    /// Returns false when the (utterance, sql) pair is already present.
    pub fn insert(&mut self, example: Example) -> bool {
        if !self.keys.insert(example.key()) {
            return false;
        }
        self.examples.push(example);
        true
    }

    pub fn contains(&self, example: &Example) -> bool {
        self.keys.contains(&example.key())
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.examples.iter().filter(|e| e.provenance == provenance).count()
    }
}

/// What `process_feedback` did with a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum FeedbackAction {
    AddedToTraining,
    DuplicateSkipped,
    QueuedForAnnotation { task_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum AnnotationError {
    #[error("no annotation task {0}")]
    UnknownTask(u64),
    #[error("annotation task {0} is already done")]
    AlreadyDone(u64),
    #[error("gold SQL does not execute: {0}")]
    Rejected(ExecError),
}

/// Outcome of an accepted annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnnotationAccepted {
    pub task_id: u64,
    pub added: bool,
}

/// Feedback-quality statistics over records that carry a gold judgment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackQuality {
    /// Fraction of truly correct predictions that the user rejected.
    pub error_on_correct: f64,
    /// Fraction of truly incorrect predictions that the user accepted.
    pub error_on_incorrect: f64,
    pub non_executable_fraction: f64,
    pub gold_correct: usize,
    pub gold_incorrect: usize,
}

pub fn feedback_quality_report(records: &[FeedbackRecord]) -> FeedbackQuality {
    let judged: Vec<(&FeedbackRecord, bool)> = records.iter().filter_map(|r| r.gold_correct.map(|g| (r, g))).collect();
    let correct = judged.iter().filter(|(_, g)| *g).count();
    let incorrect = judged.len() - correct;
    let rejected = judged.iter().filter(|(r, g)| *g && !r.label.accepts_query()).count();
    let accepted = judged.iter().filter(|(r, g)| !*g && r.label.accepts_query()).count();
    FeedbackQuality {
        error_on_correct: ratio(rejected, correct),
        error_on_incorrect: ratio(accepted, incorrect),
        non_executable_fraction: ratio(records.iter().filter(|r| !r.executed).count(), records.len()),
        gold_correct: correct,
        gold_incorrect: incorrect,
    }
}

pub(crate) fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    /// Fraction of the stage's feedback marked Correct or IncompleteResult.
    pub accuracy: f64,
    pub annotated_fraction: f64,
    pub non_executable_fraction: f64,
    pub feedback_error_on_correct: f64,
    pub feedback_error_on_incorrect: f64,
    pub feedback_count: usize,
    pub training_size: usize,
}

impl StageReport {
    pub fn from_feedback(stage: usize, records: &[FeedbackRecord], training_size: usize) -> StageReport {
        let n = records.len();
        let accepted = records.iter().filter(|r| r.label.accepts_query()).count();
        let q = feedback_quality_report(records);
        StageReport {
            stage,
            accuracy: ratio(accepted, n),
            annotated_fraction: ratio(n - accepted, n),
            non_executable_fraction: q.non_executable_fraction,
            feedback_error_on_correct: q.error_on_correct,
            feedback_error_on_incorrect: q.error_on_incorrect,
            feedback_count: n,
            training_size,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub train: TrainConfig,
    /// Paraphrases generated per training example at each stage (0 disables).
    pub paraphrases_per_example: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            train: TrainConfig::default(),
            paraphrases_per_example: 1,
        }
    }
}

/// Everything needed to train one stage's model, detached from the learner
/// so training can run without holding the learner.
#[derive(Debug, Clone)]
pub struct StageJob {
    pub stage: usize,
    pub data: Vec<Example>,
    pub config: TrainConfig,
    pub report: StageReport,
}

impl StageJob {
    /// `None` when there is nothing to train on.
    pub fn train(&self) -> Result<Option<Seq2Seq>> {
        if self.data.is_empty() {
            return Ok(None);
        }
        train(&self.data, &[], &self.config).map(Some)
    }
}

/// Owner of the training set, feedback log, and annotation queue.
pub struct Learner {
    pub schema: Arc<Schema>,
    pub db: Arc<Database>,
    pub index: Arc<EntityIndex>,
    pub paraphrases: Option<Arc<ParaphraseTable>>,
    pub config: LearnerConfig,
    pub(crate) training: TrainingSet,
    pub(crate) feedback: Vec<FeedbackRecord>,
    pub(crate) tasks: Vec<AnnotationTask>,
    pub(crate) stage: usize,
    pub(crate) reports: Vec<StageReport>,
}

impl Learner {
    pub fn new(schema: Arc<Schema>, db: Arc<Database>, index: Arc<EntityIndex>, config: LearnerConfig) -> Learner {
        Learner {
            schema,
            db,
            index,
            paraphrases: None,
            config,
            training: TrainingSet::new(),
            feedback: Vec::new(),
            tasks: Vec::new(),
            stage: 1,
            reports: Vec::new(),
        }
    }

    pub fn with_paraphrases(mut self, table: Arc<ParaphraseTable>) -> Learner {
        self.paraphrases = Some(table);
        self
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.training
    }

    pub fn feedback_log(&self) -> &[FeedbackRecord] {
        &self.feedback
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn reports(&self) -> &[StageReport] {
        &self.reports
    }

    pub fn pending_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.status == TaskStatus::Pending).count()
    }

    /// Seeds the training set from schema templates.
    pub fn initial_data(&mut self, templates: &[SchemaTemplate], cap_per_template: usize, seed: u64) -> Result<usize> {
        let generated = generate_seed_dataset(templates, &self.schema, &self.db, cap_per_template, seed)?;
        Ok(generated.iter().filter(|g| self.training.insert(g.to_example())).count())
    }

    pub fn add_examples(&mut self, examples: impl IntoIterator<Item = Example>) -> usize {
        examples.into_iter().filter(|e| self.training.insert(e.clone())).count()
    }

    fn anonymized(&self, utterance: &str, sql: &str, provenance: Provenance) -> Example {
        let pair = anonymize_sql_pair(&text::words(utterance), sql, &self.schema);
        if !pair.is_aligned() {
            log::warn!("literals {:?} of {sql:?} not found in {utterance:?}", pair.unaligned);
        }
        Example::from_pair(&pair, provenance)
    }

    /// Routes one feedback record: accepted queries join the training set,
    /// everything else goes to the annotation queue.
    pub fn process_feedback(&mut self, record: FeedbackRecord) -> FeedbackAction {
        let action = if record.label.accepts_query() {
            let ex = self.anonymized(&record.utterance, &record.predicted_sql, Provenance::UserConfirmed);
            if self.training.insert(ex) {
                FeedbackAction::AddedToTraining
            } else {
                log::info!("duplicate pair skipped: {:?}", record.utterance);
                FeedbackAction::DuplicateSkipped
            }
        } else {
            if record.label == FeedbackLabel::WrongTypes {
                log::warn!(
                    "wrong types reported for {:?} -> {:?}",
                    record.utterance,
                    record.predicted_sql
                );
            }
            let id = self.tasks.len() as u64 + 1;
            self.tasks.push(AnnotationTask {
                id,
                utterance: record.utterance.clone(),
                predicted_sql: record.predicted_sql.clone(),
                reason: record.label,
                status: TaskStatus::Pending,
                gold_sql: None,
            });
            FeedbackAction::QueuedForAnnotation { task_id: id }
        };
        self.feedback.push(record);
        action
    }

    /// Oldest pending task.
    pub fn next_task(&self) -> Option<&AnnotationTask> {
        self.tasks.iter().find(|t| t.status == TaskStatus::Pending)
    }

    pub fn task(&self, id: u64) -> Option<&AnnotationTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Accepts `gold_sql` for a pending task once it executes cleanly.
    pub fn apply_annotation(&mut self, task_id: u64, gold_sql: &str) -> std::result::Result<AnnotationAccepted, AnnotationError> {
        let task = self.task(task_id).ok_or(AnnotationError::UnknownTask(task_id))?;
        if task.status == TaskStatus::Done {
            return Err(AnnotationError::AlreadyDone(task_id));
        }
        self.db.execute_default(gold_sql).map_err(AnnotationError::Rejected)?;
        let utterance = task.utterance.clone();
        let ex = self.anonymized(&utterance, gold_sql, Provenance::Annotated);
        let added = self.training.insert(ex);
        let task = self.tasks.iter_mut().find(|t| t.id == task_id).unwrap();
        task.status = TaskStatus::Done;
        task.gold_sql = Some(gold_sql.to_string());
        Ok(AnnotationAccepted { task_id, added })
    }

    /// Feedback collected during the current stage.
    pub fn stage_feedback(&self) -> Vec<FeedbackRecord> {
        self.feedback.iter().filter(|r| r.stage == self.stage).cloned().collect()
    }

    /// Training data for the next model: T plus fresh paraphrases (never stored in T).
    pub fn augmented_training_data(&self) -> Vec<Example> {
        let data = self.training.examples();
        match &self.paraphrases {
            Some(table) if self.config.paraphrases_per_example > 0 => table.augment(
                data,
                self.config.paraphrases_per_example,
                self.config.train.rng_seed ^ self.stage as u64,
            ),
            _ => data.to_vec(),
        }
    }

    /// Snapshot of the work for closing the current stage.
    pub fn prepare_stage(&self) -> StageJob {
        StageJob {
            stage: self.stage,
            data: self.augmented_training_data(),
            config: self.config.train.clone(),
            report: StageReport::from_feedback(self.stage, &self.stage_feedback(), self.training.len()),
        }
    }

    /// Records the report and opens the next stage.
    pub fn finish_stage(&mut self, job: &StageJob) {
        self.reports.push(job.report.clone());
        self.stage = job.stage + 1;
    }

    /// Closes the current stage: retrains from scratch on the augmented training set.
    pub fn run_stage(&mut self) -> Result<(Option<Seq2Seq>, StageReport)> {
        let job = self.prepare_stage();
        let model = job.train()?;
        self.finish_stage(&job);
        Ok((model, job.report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: FeedbackLabel, gold: bool, executed: bool) -> FeedbackRecord {
        FeedbackRecord {
            gold_correct: Some(gold),
            ..FeedbackRecord::new("u", "SELECT 1", label, 1, executed)
        }
    }

    #[test]
    fn label_wire_names() {
        assert_eq!(serde_json::to_string(&FeedbackLabel::CantTell).unwrap(), "\"CantTell\"");
        let l: FeedbackLabel = serde_json::from_str("\"Wrong Types\"").unwrap();
        assert_eq!(l, FeedbackLabel::WrongTypes);
        assert_eq!(FeedbackLabel::IncompleteResult.to_string(), "Incomplete Result");
    }

    #[test]
    fn quality_report_counts() {
        use FeedbackLabel::*;
        let all_right = vec![rec(Correct, true, true), rec(WrongResult, false, true)];
        let q = feedback_quality_report(&all_right);
        assert_eq!((q.error_on_correct, q.error_on_incorrect), (0.0, 0.0));
        assert_eq!(feedback_quality_report(&[]), FeedbackQuality::default());
        let q = feedback_quality_report(&[rec(CantTell, true, true), rec(IncompleteResult, false, false)]);
        assert_eq!((q.error_on_correct, q.error_on_incorrect, q.non_executable_fraction), (1.0, 1.0, 0.5));
    }

    #[test]
    fn training_set_dedups() {
        let e = Example::new(vec!["a".into()], "SELECT 1", Provenance::Template);
        let mut t = TrainingSet::new();
        assert!(t.insert(e.clone()));
        assert!(!t.insert(Example { provenance: Provenance::Annotated, ..e }));
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn empty_stage_report_is_zero() {
        let r = StageReport::from_feedback(1, &[], 7);
        assert_eq!((r.accuracy, r.annotated_fraction, r.non_executable_fraction, r.training_size), (0.0, 0.0, 0.0, 7));
    }
}
