//! One interactive stage: parse, collect feedback, annotate the misses, retrain.
use nlidb::fixtures;
use nlidb::learner::{FeedbackAction, FeedbackLabel, FeedbackRecord, Learner, LearnerConfig};
use nlidb::model::TrainConfig;
use nlidb::template::bundled_templates;

fn main() -> nlidb::Result<()> {
    let d = fixtures::geography()?;
    let config = LearnerConfig {
        train: TrainConfig {
            hidden_dim: 32,
            embed_dim: 32,
            epochs: 80,
            minibatch: 10,
            learning_rate: 0.005,
            min_word_count: 1,
            ..TrainConfig::default()
        },
        paraphrases_per_example: 1,
    };
    let mut learner = Learner::new(d.schema.clone(), d.db.clone(), d.index.clone(), config)
        .with_paraphrases(fixtures::paraphrases().into());
    println!("seed examples: {}", learner.initial_data(&bundled_templates(), 2, 0)?);

    let (model, report) = learner.run_stage()?;
    let model = model.expect("non-empty training set");
    println!("stage {} trained on {}", report.stage, report.training_size);

    let stage = learner.stage();
    for r in fixtures::geo_questions()?.iter().take(8) {
        let predicted = model.predict(&d.index, &r.utterance)?;
        let sql = predicted.sql().unwrap_or("").to_string();
        let ok = d.db.execute_default(&sql).is_ok();
        // The gold query stands in for a user reading the results.
        let right = ok && nlidb::learner::oracle_feedback(Some(&sql), &d.db.execute_default(&r.sql).unwrap(), &d.db);
        let label = if right { FeedbackLabel::Correct } else { FeedbackLabel::WrongResult };
        let action = learner.process_feedback(FeedbackRecord::new(&r.utterance, &sql, label, stage, ok));
        println!("{:<8} {}", label.display_name(), r.utterance);
        if let FeedbackAction::QueuedForAnnotation { task_id } = action {
            learner.apply_annotation(task_id, &r.sql).expect("gold SQL is valid");
        }
    }
    let (model, report) = learner.run_stage()?;
    let model = model.expect("non-empty training set");
    println!(
        "\nstage {}: accuracy {:.2}, annotated {:.2}, training set {}",
        report.stage, report.accuracy, report.annotated_fraction, report.training_size
    );
    let fixed = fixtures::geo_questions()?
        .iter()
        .take(8)
        .filter(|r| {
            let sql = model.predict(&d.index, &r.utterance).ok().and_then(|p| p.sql().map(str::to_string));
            nlidb::learner::oracle_feedback(sql.as_deref(), &d.db.execute_default(&r.sql).unwrap(), &d.db)
        })
        .count();
    println!("after retraining {fixed}/8 of the same questions are answered correctly");
    Ok(())
}
