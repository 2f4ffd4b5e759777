use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ratio, TrainingSet};
use crate::anonymize::{anonymize_sql_pair, deanonymize, EntityIndex};
use crate::dataset::{Example, Provenance, Record};
use crate::error::{Error, Result};
use crate::executor::{denotation_equal, Database, ExecutionResult};
use crate::model::{train, NearestNeighbor, Seq2Seq, TrainConfig};
use crate::paraphrase::ParaphraseTable;
use crate::schema::Schema;
use crate::text;

/// Anything that turns a raw question into executable SQL.
pub trait SqlParser {
    /// `None` when no complete SQL could be produced.
    fn parse(&self, utterance: &str) -> Option<String>;
}

/// Builds a parser from a training set.
pub trait Trainer {
    fn train(&self, data: &[Example]) -> Result<Box<dyn SqlParser>>;
}

/// Parser with nothing to go on.
struct NoParser;

impl SqlParser for NoParser {
    fn parse(&self, _: &str) -> Option<String> {
        None
    }
}

pub struct NeuralParser {
    pub model: Seq2Seq,
    pub index: Arc<EntityIndex>,
}

impl SqlParser for NeuralParser {
    fn parse(&self, utterance: &str) -> Option<String> {
        self.model.predict(&self.index, utterance).ok()?.sql().map(str::to_string)
    }
}

pub struct NeuralTrainer {
    pub config: TrainConfig,
    pub index: Arc<EntityIndex>,
}

impl Trainer for NeuralTrainer {
    fn train(&self, data: &[Example]) -> Result<Box<dyn SqlParser>> {
        if data.is_empty() {
            return Ok(Box::new(NoParser));
        }
        Ok(Box::new(NeuralParser {
            model: train(data, &[], &self.config)?,
            index: self.index.clone(),
        }))
    }
}

pub struct NearestNeighborParser {
    pub nn: NearestNeighbor,
    pub index: Arc<EntityIndex>,
}

impl SqlParser for NearestNeighborParser {
    fn parse(&self, utterance: &str) -> Option<String> {
        let anon = self.index.anonymize_text(utterance);
        let sql = self.nn.predict(&anon.tokens);
        deanonymize(&text::sql_target_tokens(sql), &anon.map).ok()
    }
}

pub struct NearestNeighborTrainer {
    pub index: Arc<EntityIndex>,
}

impl Trainer for NearestNeighborTrainer {
    fn train(&self, data: &[Example]) -> Result<Box<dyn SqlParser>> {
        if data.is_empty() {
            return Ok(Box::new(NoParser));
        }
        Ok(Box::new(NearestNeighborParser {
            nn: NearestNeighbor::fit(data)?,
            index: self.index.clone(),
        }))
    }
}

/// Parser that already knows every gold query; training is a no-op.
#[derive(Debug, Clone, Default)]
pub struct GoldOracle {
    gold: HashMap<String, String>,
}

impl GoldOracle {
    pub fn new(records: &[Record]) -> GoldOracle {
        GoldOracle {
            gold: records
                .iter()
                .map(|r| (text::words(&r.utterance).join(" "), r.sql.clone()))
                .collect(),
        }
    }
}

impl SqlParser for GoldOracle {
    fn parse(&self, utterance: &str) -> Option<String> {
        self.gold.get(&text::words(utterance).join(" ")).cloned()
    }
}

impl Trainer for GoldOracle {
    fn train(&self, _: &[Example]) -> Result<Box<dyn SqlParser>> {
        Ok(Box::new(self.clone()))
    }
}

/// Correct iff the prediction executes and its denotation equals the gold one.
pub fn oracle_feedback(predicted: Option<&str>, gold: &ExecutionResult, db: &Database) -> bool {
    let Some(sql) = predicted else { return false };
    match db.execute_default(sql) {
        Ok(r) => denotation_equal(&r, gold).equal,
        Err(_) => false,
    }
}

/// Probabilities of a simulated user misjudging a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackNoise {
    /// A correct prediction is marked wrong.
    pub reject_correct: f64,
    /// A wrong but executable prediction is marked correct.
    pub accept_incorrect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Batching {
    Count(usize),
    Size(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub batching: Batching,
    pub seed: u64,
    pub use_templates: bool,
    pub use_paraphrases: bool,
    pub paraphrases_per_example: usize,
    pub noise: FeedbackNoise,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            batching: Batching::Count(4),
            seed: 0,
            use_templates: true,
            use_paraphrases: true,
            paraphrases_per_example: 1,
            noise: FeedbackNoise::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch: usize,
    pub size: usize,
    /// Fraction of the batch the model got right (by denotation).
    pub accuracy: f64,
    /// Fraction of the batch sent to annotation.
    pub annotated_fraction: f64,
    pub non_executable_fraction: f64,
    /// Training examples (before paraphrasing) behind this batch's model.
    pub training_size: usize,
}

impl BatchResult {
    pub const TSV_HEADER: &'static str =
        "batch\tsize\taccuracy\tannotated_fraction\tnon_executable_fraction\ttraining_size";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            self.batch, self.size, self.accuracy, self.annotated_fraction, self.non_executable_fraction, self.training_size
        )
    }
}

fn split_batches(n: usize, batching: Batching) -> Result<Vec<(usize, usize)>> {
    let sizes: Vec<usize> = match batching {
        Batching::Count(k) => {
            if k == 0 || k > n {
                return Err(Error::Config(format!("cannot split {n} examples into {k} batches")));
            }
            (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
        }
        Batching::Size(s) => {
            if s == 0 || n == 0 {
                return Err(Error::Config(format!("cannot split {n} examples into batches of {s}")));
            }
            (0..n.div_ceil(s)).map(|i| s.min(n - i * s)).collect()
        }
    };
    let mut start = 0;
    Ok(sizes
        .into_iter()
        .map(|s| {
            start += s;
            (start - s, start)
        })
        .collect())
}

/// Runs the batch-by-batch interactive protocol with simulated feedback.
///
/// Labeled pairs are shuffled with `config.seed` and split into batches. Each
/// batch is parsed by a model trained on the seed data plus every earlier batch;
/// predictions judged correct join the training set as user-confirmed pairs,
/// the rest join with their gold query as annotated pairs.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    labeled: &[Record],
    seed_data: &[Example],
    paraphrases: Option<&ParaphraseTable>,
    schema: &Schema,
    db: &Database,
    trainer: &dyn Trainer,
    config: &SimulationConfig,
) -> Result<Vec<BatchResult>> {
    let mut gold = Vec::with_capacity(labeled.len());
    for r in labeled {
        let res = db
            .execute_default(&r.sql)
            .map_err(|e| Error::Execution(format!("gold query {:?} fails: {e}", r.sql)))?;
        gold.push(res);
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let batches = split_batches(order.len(), config.batching)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6E6F_6973_6521);

    let mut training = TrainingSet::new();
    if config.use_templates {
        for e in seed_data {
            training.insert(e.clone());
        }
    }
    let mut out = Vec::with_capacity(batches.len());
    for (b, &(start, end)) in batches.iter().enumerate() {
        let data = match paraphrases {
            Some(t) if config.use_paraphrases => {
                t.augment(training.examples(), config.paraphrases_per_example, config.seed.wrapping_add(b as u64))
            }
            _ => training.examples().to_vec(),
        };
        let parser = trainer.train(&data)?;
        let training_size = training.len();
        let (mut right, mut annotated, mut failed) = (0, 0, 0);
        for &i in &order[start..end] {
            let r = &labeled[i];
            let predicted = parser.parse(&r.utterance);
            let executes = predicted.as_deref().is_some_and(|s| db.execute_default(s).is_ok());
            if !executes {
                failed += 1;
            }
            let correct = oracle_feedback(predicted.as_deref(), &gold[i], db);
            if correct {
                right += 1;
            }
            let judged = if correct {
                noise_rng.gen::<f64>() >= config.noise.reject_correct
            } else {
                executes && noise_rng.gen::<f64>() < config.noise.accept_incorrect
            };
            let words = text::words(&r.utterance);
            let ex = match (&predicted, judged) {
                (Some(sql), true) => Example::from_pair(&anonymize_sql_pair(&words, sql, schema), Provenance::UserConfirmed),
                _ => {
                    annotated += 1;
                    Example::from_pair(&anonymize_sql_pair(&words, &r.sql, schema), Provenance::Annotated)
                }
            };
            training.insert(ex);
        }
        let size = end - start;
        let result = BatchResult {
            batch: b + 1,
            size,
            accuracy: ratio(right, size),
            annotated_fraction: ratio(annotated, size),
            non_executable_fraction: ratio(failed, size),
            training_size,
        };
        log::info!("{}", result.tsv_row());
        out.push(result);
    }
    Ok(out)
}
