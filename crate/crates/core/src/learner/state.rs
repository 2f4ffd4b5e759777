//! On-disk learner state: one directory with
//! `training_set.jsonl`, `feedback.jsonl`, `annotations.jsonl`, and `stage_reports.tsv`.

use std::path::Path;

use super::{AnnotationTask, FeedbackRecord, Learner, StageReport, TrainingSet};
use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::fsutil;

pub const TRAINING_FILE: &str = "training_set.jsonl";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const REPORTS_FILE: &str = "stage_reports.tsv";

const REPORT_HEADER: &str = "stage\taccuracy\tannotated_fraction\tnon_executable_fraction\tfeedback_error_on_correct\tfeedback_error_on_incorrect\tfeedback_count\ttraining_size";

pub fn stage_reports_tsv(reports: &[StageReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\n",
            r.stage,
            r.accuracy,
            r.annotated_fraction,
            r.non_executable_fraction,
            r.feedback_error_on_correct,
            r.feedback_error_on_incorrect,
            r.feedback_count,
            r.training_size
        ));
    }
    out
}

pub fn read_stage_reports(content: &str) -> Result<Vec<StageReport>> {
    let bad = |line: usize, m: String| Error::Parse {
        path: REPORTS_FILE.into(),
        line,
        column: 1,
        message: m,
    };
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(bad(n + 1, format!("expected 8 fields, found {}", f.len())));
        }
        let float = |i: usize| f[i].parse::<f64>().map_err(|e| bad(n + 1, e.to_string()));
        let int = |i: usize| f[i].parse::<usize>().map_err(|e| bad(n + 1, e.to_string()));
        out.push(StageReport {
            stage: int(0)?,
            accuracy: float(1)?,
            annotated_fraction: float(2)?,
            non_executable_fraction: float(3)?,
            feedback_error_on_correct: float(4)?,
            feedback_error_on_incorrect: float(5)?,
            feedback_count: int(6)?,
            training_size: int(7)?,
        });
    }
    Ok(out)
}

pub fn save_state(learner: &Learner, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records: Vec<Record> = learner.training.examples().iter().map(Record::from).collect();
    fsutil::write_jsonl(dir.join(TRAINING_FILE), &records)?;
    fsutil::write_jsonl(dir.join(FEEDBACK_FILE), &learner.feedback)?;
    fsutil::write_jsonl(dir.join(ANNOTATIONS_FILE), &learner.tasks)?;
    fsutil::write_atomic(dir.join(REPORTS_FILE), stage_reports_tsv(&learner.reports).as_bytes())
}

/// Restores whatever state files exist in `dir`; missing files leave that part empty.
pub fn load_state(learner: &mut Learner, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let path = dir.join(TRAINING_FILE);
    if path.exists() {
        let records: Vec<Record> = fsutil::read_jsonl(&path)?;
        learner.training = TrainingSet::from_examples(records.iter().map(|r| r.to_example(None)));
    }
    let path = dir.join(FEEDBACK_FILE);
    if path.exists() {
        learner.feedback = fsutil::read_jsonl::<FeedbackRecord>(&path)?;
    }
    let path = dir.join(ANNOTATIONS_FILE);
    if path.exists() {
        learner.tasks = fsutil::read_jsonl::<AnnotationTask>(&path)?;
    }
    let path = dir.join(REPORTS_FILE);
    if path.exists() {
        let content = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        learner.reports = read_stage_reports(&content)?;
    }
    learner.stage = learner.reports.last().map_or(1, |r| r.stage + 1);
    Ok(())
}

