use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{self, Dropout};
use super::params::{Dims, ModelParameters};
use super::pretrained::PretrainedEmbeddings;
use super::vocab::{Vocabulary, START_ID};
use super::Seq2Seq;
use crate::dataset::Example;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub beam: usize,
    pub dropout_rate: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub rng_seed: u64,
    /// Keep the parameters with the best dev token accuracy and stop after
    /// `patience` epochs without improvement.
    pub early_stopping: bool,
    pub patience: usize,
    pub max_decode_len: usize,
    pub init_scale: f64,
    /// Rescale the minibatch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Source words seen fewer times than this map to UNK.
    pub min_word_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            minibatch: 100,
            epochs: 70,
            beam: 5,
            dropout_rate: 0.5,
            hidden_dim: 128,
            embed_dim: 64,
            rng_seed: 0,
            early_stopping: false,
            patience: 10,
            max_decode_len: 200,
            init_scale: 0.08,
            clip_norm: None,
            min_word_count: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.minibatch == 0 || self.beam == 0 || self.hidden_dim == 0 || self.embed_dim == 0 {
            return bad("minibatch, beam, hidden_dim and embed_dim must be positive");
        }
        if self.max_decode_len == 0 {
            return bad("max_decode_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c.is_finite() && c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn from_toml(content: &str) -> Result<TrainConfig> {
        let c: TrainConfig = toml::from_str(content).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// Summary handed to the training observer after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_token_accuracy: Option<f64>,
}

struct Adam {
    m: ModelParameters,
    v: ModelParameters,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &ModelParameters) -> Adam {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut ModelParameters, g: &ModelParameters, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let params = p.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(g.tensors()).zip(ms).zip(vs) {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = Self::BETA1 * m.data[k] + (1.0 - Self::BETA1) * gk;
                v.data[k] = Self::BETA2 * v.data[k] + (1.0 - Self::BETA2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= lr * mhat / (vhat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Vocabulary-mapped training pair; `target` ends with END.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

pub fn encode_examples(vocab: &Vocabulary, data: &[Example]) -> Vec<Option<EncodedExample>> {
    data.iter()
        .map(|ex| {
            let target = vocab.encode_target(&ex.target_tokens())?;
            let source = vocab.encode_source(&ex.utterance);
            (!source.is_empty()).then_some(EncodedExample { source, target })
        })
        .collect()
}

fn dropout_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Teacher-forced token accuracy: the fraction of target positions (END included)
/// where the argmax of the decoder distribution is the gold token.
pub fn token_accuracy(p: &ModelParameters, vocab: &Vocabulary, data: &[Example]) -> f64 {
    let mut right = 0usize;
    let mut total = 0usize;
    for (ex, enc) in data.iter().zip(encode_examples(vocab, data)) {
        let Some(enc) = enc else {
            total += ex.target_tokens().len() + 1;
            continue;
        };
        let Ok(states) = network::encode(p, &enc.source) else {
            continue;
        };
        let mut state = network::initial_state(p, &states);
        let mut prev = START_ID;
        for &y in &enc.target {
            let (dist, next) = network::decode_step(p, prev, &state, &states);
            if argmax(&dist) == y {
                right += 1;
            }
            total += 1;
            prev = y;
            state = next;
        }
    }
    if total == 0 {
        0.0
    } else {
        right as f64 / total as f64
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains a fresh model on `dataset`.
pub fn train(dataset: &[Example], dev: &[Example], config: &TrainConfig) -> Result<Seq2Seq> {
    train_with(dataset, dev, config, None, |_| {})
}

/// Builds the vocabulary and initial parameters exactly as training would.
pub fn initialize(dataset: &[Example], config: &TrainConfig, pretrained: Option<&PretrainedEmbeddings>) -> Result<Seq2Seq> {
    config.validate()?;
    let vocab = Vocabulary::build_with_min_count(dataset, config.min_word_count.max(1))?;
    let dims = Dims {
        source_vocab: vocab.source_len(),
        target_vocab: vocab.target_len(),
        embed: config.embed_dim,
        hidden: config.hidden_dim,
        pretrained: pretrained.map_or(0, |p| p.dim),
    };
    let mut params = ModelParameters::init(dims, config.init_scale, config.rng_seed);
    if let Some(pre) = pretrained {
        params.pretrained = Some(pre.table(&vocab));
    }
    Ok(Seq2Seq {
        vocab,
        config: config.clone(),
        params,
    })
}

/// Trains with optional fixed pretrained embeddings, calling `observer` after every epoch.
pub fn train_with(
    dataset: &[Example],
    dev: &[Example],
    config: &TrainConfig,
    pretrained: Option<&PretrainedEmbeddings>,
    mut observer: impl FnMut(&EpochReport),
) -> Result<Seq2Seq> {
    let mut model = initialize(dataset, config, pretrained)?;
    let encoded: Vec<(usize, EncodedExample)> = encode_examples(&model.vocab, dataset)
        .into_iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|e| (i, e)))
        .collect();
    if encoded.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = Adam::new(&model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let track_dev = config.early_stopping && !dev.is_empty();
    let mut best: Option<(f64, ModelParameters)> = None;
    let mut since_best = 0;
    let mut grads = model.params.zeros_like();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.minibatch) {
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            for &k in batch {
                let (id, ex) = &encoded[k];
                let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed(config.rng_seed, epoch, *id));
                let dropout = Some(Dropout {
                    rate: config.dropout_rate,
                    rng: &mut rng,
                });
                let loss = network::loss_and_gradients(&model.params, &ex.source, &ex.target, dropout, Some(&mut grads))
                    .map_err(|e| match e {
                        Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { example: *id },
                        other => other,
                    })?;
                epoch_loss += loss;
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(max) = config.clip_norm {
                let norm = grads.norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam.step(&mut model.params, &grads, config.learning_rate);
        }
        if !model.params.is_finite() {
            return Err(Error::NonFiniteLoss { example: usize::MAX });
        }
        let dev_acc = track_dev.then(|| token_accuracy(&model.params, &model.vocab, dev));
        let report = EpochReport {
            epoch: epoch + 1,
            mean_loss: epoch_loss / encoded.len() as f64,
            dev_token_accuracy: dev_acc,
        };
        log::debug!("epoch {} loss {:.4} dev {:?}", report.epoch, report.mean_loss, dev_acc);
        observer(&report);
        if let Some(acc) = dev_acc {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;

    fn toy() -> Vec<Example> {
        [
            ("list cities", "SELECT city.city_name FROM city"),
            ("list states", "SELECT state.state_name FROM state"),
            ("count cities", "SELECT COUNT ( * ) FROM city"),
            ("count states", "SELECT COUNT ( * ) FROM state"),
        ]
        .iter()
        .map(|(u, s)| Example::new(crate::text::words(u), s, Provenance::Template))
        .collect()
    }

    fn small() -> TrainConfig {
        TrainConfig {
            hidden_dim: 8,
            embed_dim: 8,
            minibatch: 4,
            dropout_rate: 0.0,
            rng_seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig { epochs: 0, ..small() };
        let m = train(&toy(), &[], &cfg).unwrap();
        let init = initialize(&toy(), &cfg, None).unwrap();
        assert_eq!(m.params, init.params);
    }

    #[test]
    fn loss_decreases_over_first_adam_steps() {
        let cfg = TrainConfig { epochs: 1, ..small() };
        let mut model = initialize(&toy(), &cfg, None).unwrap();
        let data: Vec<EncodedExample> = encode_examples(&model.vocab, &toy()).into_iter().map(Option::unwrap).collect();
        let batch_loss = |p: &ModelParameters| -> f64 {
            data.iter().map(|e| network::loss(p, &e.source, &e.target).unwrap()).sum()
        };
        let mut adam = Adam::new(&model.params);
        let mut last = batch_loss(&model.params);
        for _ in 0..5 {
            let mut g = model.params.zeros_like();
            for e in &data {
                network::loss_and_gradients::<ChaCha8Rng>(&model.params, &e.source, &e.target, None, Some(&mut g)).unwrap();
            }
            g.scale(1.0 / data.len() as f64);
            adam.step(&mut model.params, &g, 1e-3);
            let now = batch_loss(&model.params);
            assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { dropout_rate: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { minibatch: 0, ..TrainConfig::default() }.validate().is_err());
        let c = TrainConfig::from_toml("epochs = 3\nhidden_dim = 16\n").unwrap();
        assert_eq!((c.epochs, c.hidden_dim, c.minibatch), (3, 16, 100));
        assert!(TrainConfig::from_toml("epoch = 3").is_err());
    }

    #[test]
    fn early_stopping_keeps_best_dev_parameters() {
        let cfg = TrainConfig { epochs: 30, early_stopping: true, patience: 3, learning_rate: 0.01, ..small() };
        let mut accs = Vec::new();
        let m = train_with(&toy(), &toy(), &cfg, None, |r| accs.push(r.dev_token_accuracy.unwrap())).unwrap();
        let best = accs.iter().copied().fold(0.0, f64::max);
        assert_eq!(token_accuracy(&m.params, &m.vocab, &toy()), best);
    }
}
