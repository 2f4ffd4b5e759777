//! Replay a labeled question set through the feedback loop with simulated users.
use nlidb::fixtures;
use nlidb::learner::{simulate, Batching, GoldOracle, NearestNeighborTrainer, NeuralTrainer, SimulationConfig, Trainer};
use nlidb::model::TrainConfig;
use nlidb::template::{bundled_templates, generate_seed_dataset};

fn main() -> nlidb::Result<()> {
    let d = fixtures::geography()?;
    let questions = fixtures::geo_questions()?;
    let seed: Vec<_> = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 5, 0)?
        .iter()
        .map(|g| g.to_example())
        .collect();
    let neural = NeuralTrainer {
        config: TrainConfig::from_toml(include_str!("../data/toy_train.toml"))?,
        index: d.index.clone(),
    };
    let nn = NearestNeighborTrainer { index: d.index.clone() };
    let gold = GoldOracle::new(&questions);
    let trainers: [(&str, &dyn Trainer); 3] = [("gold", &gold), ("nearest neighbor", &nn), ("neural", &neural)];

    let sim = SimulationConfig {
        batching: Batching::Count(3),
        seed: 0,
        ..SimulationConfig::default()
    };
    let para = fixtures::paraphrases();
    for (name, trainer) in trainers {
        println!("{name}\nbatch\tsize\taccuracy\tannotated\tnon_exec\ttraining");
        for r in simulate(&questions, &seed, Some(&para), &d.schema, &d.db, trainer, &sim)? {
            println!("{}", r.tsv_row());
        }
        println!();
    }
    Ok(())
}
