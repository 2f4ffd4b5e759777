//! Command-line front end.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{load_records, Example, Provenance, Record};
use crate::error::{Error, Result};
use crate::executor::{denotation_equal, Database};
use crate::fixtures::{self, Domain};
use crate::fsutil;
use crate::learner::{
    load_state, save_state, simulate, AnnotationError, BatchResult, Batching, GoldOracle, Learner, LearnerConfig,
    NearestNeighborTrainer, NeuralTrainer, SimulationConfig, SqlParser, Trainer,
};
use crate::model::{train_with, PretrainedEmbeddings, Seq2Seq, TrainConfig};
use crate::paraphrase::ParaphraseTable;
use crate::schema::Schema;
use crate::service::{self, AppState, ServiceConfig};
use crate::template::{bundled_templates, generate_seed_dataset, load_templates, SchemaTemplate};

#[derive(Parser, Debug)]
#[command(name = "nlidb", version, about = "Natural language interface to a relational database")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seed dataset from schema templates.
    SeedGen(SeedGenArgs),
    /// Train the neural parser and write a checkpoint.
    Train(TrainArgs),
    /// Measure execution accuracy on a labeled dataset.
    Eval(EvalArgs),
    /// Run the simulated batch-by-batch feedback experiment.
    Simulate(SimulateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Annotate queued utterances from the terminal.
    Annotate(AnnotateArgs),
    /// Add paraphrased copies of a dataset's utterances.
    Augment(AugmentArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum BundledDomain {
    Academic,
    Geography,
}

#[derive(Args, Debug, Clone)]
pub struct DomainArgs {
    /// Use a bundled toy domain instead of --schema/--db.
    #[arg(long, value_enum)]
    pub domain: Option<BundledDomain>,
    /// Schema JSON file.
    #[arg(long, requires = "db")]
    pub schema: Option<PathBuf>,
    /// SQLite database file or `.sql` dump.
    #[arg(long, requires = "schema")]
    pub db: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SeedGenArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Template catalog (bundled catalog when omitted).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Maximum examples per template.
    #[arg(long, default_value_t = 30)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Development set for early stopping.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fixed pretrained word vectors to concatenate to the learned ones.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// TF-IDF nearest neighbor.
    Nn,
    /// Answers every labeled question with its gold query.
    Gold,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Gold dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Trained checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a baseline trained on --train-dataset instead.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Training data for the nearest-neighbor baseline.
    #[arg(long)]
    pub train_dataset: Option<PathBuf>,
    /// Precomputed predictions, one dataset record per gold line.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Labeled questions (bundled geography questions when omitted).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub paraphrases: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of batches K.
    #[arg(long, conflicts_with = "batch_size")]
    pub batches: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Template examples per template in the seed data.
    #[arg(long, default_value_t = 10)]
    pub cap: usize,
    #[arg(long)]
    pub no_templates: bool,
    #[arg(long)]
    pub no_paraphrase: bool,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Probability that a simulated user rejects a correct query.
    #[arg(long, default_value_t = 0.0)]
    pub reject_correct: f64,
    /// Probability that a simulated user accepts a wrong query.
    #[arg(long, default_value_t = 0.0)]
    pub accept_incorrect: f64,
    /// Output directory for the table and plot data.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub paraphrases: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory holding the training set, feedback log and annotation queue.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Start from this checkpoint instead of training on the seed data.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub cap: usize,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Bearer token for annotator routes.
    #[arg(long, env = "NLIDB_ANNOTATOR_TOKEN", default_value = "annotator")]
    pub token: String,
    /// JSON array of example utterances to show users.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub cors_origin: Option<String>,
    #[arg(long)]
    pub auto_retrain_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub state: PathBuf,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub paraphrases: Option<PathBuf>,
    /// Paraphrases per example.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdin.lock(), &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs one command with explicit input and output streams.
pub fn execute(command: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::SeedGen(a) => seed_gen(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Simulate(a) => simulate_cmd(a, out),
        Command::Serve(a) => serve(a),
        Command::Annotate(a) => annotate(a, input, out),
        Command::Augment(a) => augment(a, out),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

pub fn load_domain(args: &DomainArgs) -> Result<Domain> {
    match (&args.schema, &args.db, args.domain) {
        (Some(s), Some(d), _) => Domain::new("custom", Schema::load(s)?, Database::load(d)?),
        (_, _, Some(BundledDomain::Academic)) => fixtures::academic(),
        (_, _, Some(BundledDomain::Geography)) => fixtures::geography(),
        _ => Err(Error::Config("give --domain or both --schema and --db".into())),
    }
}

fn templates(path: &Option<PathBuf>) -> Result<Vec<SchemaTemplate>> {
    match path {
        Some(p) => load_templates(p),
        None => Ok(bundled_templates()),
    }
}

fn paraphrases(path: &Option<PathBuf>) -> Result<ParaphraseTable> {
    match path {
        Some(p) => ParaphraseTable::load(p),
        None => Ok(fixtures::paraphrases()),
    }
}

pub fn train_config(args: &ModelArgs) -> Result<TrainConfig> {
    let mut c = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        c.epochs = e;
    }
    if let Some(s) = args.seed {
        c.rng_seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn seed_gen(a: SeedGenArgs, out: &mut dyn Write) -> Result<()> {
    let d = load_domain(&a.domain)?;
    let generated = generate_seed_dataset(&templates(&a.templates)?, &d.schema, &d.db, a.cap, a.seed)?;
    let mut records = Vec::with_capacity(generated.len());
    for g in &generated {
        records.push(Record {
            utterance: g.utterance.restore(),
            sql: g.concrete_sql()?,
            provenance: Provenance::Template,
        });
    }
    fsutil::write_jsonl(&a.out, &records)?;
    writeln!(out, "wrote {} examples to {}", records.len(), a.out.display()).map_err(io_err)
}

fn examples_from(path: &Path, schema: &Schema) -> Result<Vec<Example>> {
    Ok(load_records(path)?.iter().map(|r| r.to_example(Some(schema))).collect())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let d = load_domain(&a.domain)?;
    let config = train_config(&a.model)?;
    let data = examples_from(&a.dataset, &d.schema)?;
    let dev = match &a.dev {
        Some(p) => examples_from(p, &d.schema)?,
        None => Vec::new(),
    };
    let pretrained = a.pretrained.as_ref().map(PretrainedEmbeddings::load).transpose()?;
    let model = train_with(&data, &dev, &config, pretrained.as_ref(), |r| {
        log::info!("epoch {} loss {:.4} dev {:?}", r.epoch, r.mean_loss, r.dev_token_accuracy);
    })?;
    model.save(&a.out)?;
    writeln!(out, "trained on {} examples; checkpoint {}", data.len(), a.out.display()).map_err(io_err)
}

/// Execution-based evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub examples: usize,
    pub accuracy: f64,
    pub non_executable_fraction: f64,
    pub empty_matches: usize,
}

pub fn evaluate(gold: &[Record], predictions: &[Option<String>], db: &Database) -> Result<EvalSummary> {
    let (mut right, mut failed, mut empty) = (0, 0, 0);
    for (g, p) in gold.iter().zip(predictions) {
        let gold_res = db
            .execute_default(&g.sql)
            .map_err(|e| Error::Execution(format!("gold query {:?} fails: {e}", g.sql)))?;
        match p.as_deref().map(|s| db.execute_default(s)) {
            Some(Ok(r)) => {
                let d = denotation_equal(&r, &gold_res);
                if d.equal {
                    right += 1;
                    if d.empty_match {
                        empty += 1;
                    }
                }
            }
            _ => failed += 1,
        }
    }
    let n = gold.len().max(1) as f64;
    Ok(EvalSummary {
        examples: gold.len(),
        accuracy: right as f64 / n,
        non_executable_fraction: failed as f64 / n,
        empty_matches: empty,
    })
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let d = load_domain(&a.domain)?;
    let gold = load_records(&a.dataset)?;
    let predictions: Vec<Option<String>> = if let Some(p) = &a.predictions {
        let preds = load_records(p)?;
        if preds.len() != gold.len() {
            return Err(Error::Config(format!(
                "{} predictions for {} gold examples",
                preds.len(),
                gold.len()
            )));
        }
        preds.into_iter().map(|r| Some(r.sql)).collect()
    } else {
        let parser: Box<dyn SqlParser> = match (&a.checkpoint, a.baseline) {
            (_, Some(Baseline::Gold)) => Box::new(GoldOracle::new(&gold)),
            (_, Some(Baseline::Nn)) => {
                let path = a
                    .train_dataset
                    .as_ref()
                    .ok_or_else(|| Error::Config("--baseline nn needs --train-dataset".into()))?;
                let train = examples_from(path, &d.schema)?;
                NearestNeighborTrainer { index: d.index.clone() }.train(&train)?
            }
            (Some(c), None) => Box::new(crate::learner::NeuralParser {
                model: Seq2Seq::load(c)?,
                index: d.index.clone(),
            }),
            (None, None) => return Err(Error::Config("give --checkpoint, --baseline or --predictions".into())),
        };
        gold.iter().map(|g| parser.parse(&g.utterance)).collect()
    };
    let s = evaluate(&gold, &predictions, &d.db)?;
    writeln!(
        out,
        "examples\t{}\naccuracy\t{:.6}\nnon_executable\t{:.6}\nempty_matches\t{}",
        s.examples, s.accuracy, s.non_executable_fraction, s.empty_matches
    )
    .map_err(io_err)
}

pub const SIMULATION_TABLE: &str = "simulation.tsv";
pub const SIMULATION_PLOT: &str = "batch_accuracy.dat";

fn simulate_cmd(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let d = load_domain(&a.domain)?;
    let config = train_config(&a.model)?;
    let labeled = match &a.dataset {
        Some(p) => load_records(p)?,
        None => fixtures::geo_questions()?,
    };
    let seed = config.rng_seed;
    let seed_data: Vec<Example> = if a.no_templates {
        Vec::new()
    } else {
        generate_seed_dataset(&templates(&a.templates)?, &d.schema, &d.db, a.cap, seed)?
            .iter()
            .map(|g| g.to_example())
            .collect()
    };
    let table = if a.no_paraphrase { None } else { Some(paraphrases(&a.paraphrases)?) };
    let sim = SimulationConfig {
        batching: match (a.batches, a.batch_size) {
            (_, Some(s)) => Batching::Size(s),
            (Some(k), None) => Batching::Count(k),
            (None, None) => Batching::Count(4),
        },
        seed,
        use_templates: !a.no_templates,
        use_paraphrases: !a.no_paraphrase,
        paraphrases_per_example: 1,
        noise: crate::learner::FeedbackNoise {
            reject_correct: a.reject_correct,
            accept_incorrect: a.accept_incorrect,
        },
    };
    let trainer: Box<dyn Trainer> = match a.baseline {
        Some(Baseline::Nn) => Box::new(NearestNeighborTrainer { index: d.index.clone() }),
        Some(Baseline::Gold) => Box::new(GoldOracle::new(&labeled)),
        None => Box::new(NeuralTrainer {
            config,
            index: d.index.clone(),
        }),
    };
    let results = simulate(&labeled, &seed_data, table.as_ref(), &d.schema, &d.db, trainer.as_ref(), &sim)?;
    write_simulation(&a.out, &results)?;
    writeln!(out, "{}", BatchResult::TSV_HEADER).map_err(io_err)?;
    for r in &results {
        writeln!(out, "{}", r.tsv_row()).map_err(io_err)?;
    }
    Ok(())
}

/// Writes the per-batch table and a whitespace-separated plot-data file.
pub fn write_simulation(dir: &Path, results: &[BatchResult]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut table = format!("{}\n", BatchResult::TSV_HEADER);
    let mut plot = String::from("# batch accuracy annotated_fraction\n");
    for r in results {
        table.push_str(&r.tsv_row());
        table.push('\n');
        plot.push_str(&format!("{} {:.6} {:.6}\n", r.batch, r.accuracy, r.annotated_fraction));
    }
    fsutil::write_atomic(dir.join(SIMULATION_TABLE), table.as_bytes())?;
    fsutil::write_atomic(dir.join(SIMULATION_PLOT), plot.as_bytes())
}

/// Learner for `d`, restored from `state` when it holds saved files.
fn learner_for(d: &Domain, config: LearnerConfig, state: Option<&Path>) -> Result<Learner> {
    let mut learner = Learner::new(d.schema.clone(), d.db.clone(), d.index.clone(), config);
    if let Some(dir) = state {
        load_state(&mut learner, dir)?;
    }
    Ok(learner)
}

fn serve(a: ServeArgs) -> Result<()> {
    let d = load_domain(&a.domain)?;
    let config = LearnerConfig {
        train: train_config(&a.model)?,
        ..LearnerConfig::default()
    };
    let mut learner = learner_for(&d, config, a.state.as_deref())?.with_paraphrases(Arc::new(paraphrases(&a.paraphrases)?));
    if learner.training_set().is_empty() {
        let n = learner.initial_data(&templates(&a.templates)?, a.cap, learner.config.train.rng_seed)?;
        log::info!("seeded training set with {n} template examples");
    }
    let model = match &a.checkpoint {
        Some(p) => Some(Seq2Seq::load(p)?),
        None => {
            let data = learner.augmented_training_data();
            if data.is_empty() {
                None
            } else {
                log::info!("training initial model on {} examples", data.len());
                Some(crate::model::train(&data, &[], &learner.config.train)?)
            }
        }
    };
    let examples = match &a.examples {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => d.example_utterances(),
    };
    if let Some(dir) = &a.state {
        save_state(&learner, dir)?;
    }
    let state = AppState::new(
        learner,
        model,
        ServiceConfig {
            annotator_token: a.token,
            example_utterances: examples,
            state_dir: a.state,
            auto_retrain_every: a.auto_retrain_every,
            cors_origin: a.cors_origin,
        },
    );
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(service::serve(state, a.addr)).map_err(|e| Error::io(a.addr.to_string(), e))
}

/// Terminal loop: show each pending task, read a gold query, validate, repeat.
/// An empty line skips the task; `q` quits.
pub fn annotation_loop(learner: &mut Learner, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<usize> {
    let mut accepted = 0;
    let mut skipped = std::collections::HashSet::new();
    loop {
        let Some(task) = learner.tasks().iter().find(|t| t.status == crate::learner::TaskStatus::Pending && !skipped.contains(&t.id)).cloned()
        else {
            writeln!(out, "no pending tasks").map_err(io_err)?;
            break;
        };
        writeln!(out, "task {} ({})\n  question: {}\n  predicted: {}", task.id, task.reason, task.utterance, task.predicted_sql)
            .map_err(io_err)?;
        write!(out, "gold sql> ").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        let mut line = String::new();
        if input.read_line(&mut line).map_err(io_err)? == 0 {
            break;
        }
        let line = line.trim();
        match line {
            "q" | "quit" => break,
            "" => {
                skipped.insert(task.id);
            }
            sql => match learner.apply_annotation(task.id, sql) {
                Ok(a) => {
                    accepted += 1;
                    writeln!(out, "accepted{}", if a.added { "" } else { " (duplicate pair)" }).map_err(io_err)?;
                }
                Err(AnnotationError::Rejected(e)) => {
                    writeln!(out, "rejected: {e}").map_err(io_err)?;
                }
                Err(e) => writeln!(out, "{e}").map_err(io_err)?,
            },
        }
    }
    Ok(accepted)
}

fn annotate(a: AnnotateArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let d = load_domain(&a.domain)?;
    let mut learner = learner_for(&d, LearnerConfig::default(), Some(&a.state))?;
    let n = annotation_loop(&mut learner, input, out)?;
    save_state(&learner, &a.state)?;
    writeln!(out, "{n} annotations saved").map_err(io_err)
}

fn augment(a: AugmentArgs, out: &mut dyn Write) -> Result<()> {
    let records = load_records(&a.dataset)?;
    let table = paraphrases(&a.paraphrases)?;
    let examples: Vec<Example> = records.iter().map(|r| r.to_example(None)).collect();
    let augmented = table.augment(&examples, a.k, a.seed);
    let mut out_records = records.clone();
    for e in &augmented[examples.len()..] {
        out_records.push(Record::from(e));
    }
    fsutil::write_jsonl(&a.out, &out_records)?;
    writeln!(out, "{} examples ({} paraphrases) written to {}", out_records.len(), out_records.len() - records.len(), a.out.display())
        .map_err(io_err)
}
