//! Mini-batch descent loop shared by the policy and price learners.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{InputScaling, MlpModel, MlpSpec, OptState, OptimizerConfig};

/// Settings for one training phase.
///
/// One episode is one mini-batch update. Batches are consecutive slices of a
/// permutation of the sample indices; a fresh permutation is drawn each time
/// the previous one is exhausted. Network weights are initialized from
/// `seed` and the permutations from `seed + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub network: MlpSpec,
    pub episodes: usize,
    pub batch_size: usize,
    /// Riskless rate per year.
    pub riskless_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Validation loss is recorded every this many episodes and after the
    /// last one; 0 disables it.
    #[serde(default = "one")]
    pub validate_every: usize,
    /// Standardize network inputs with the training set's mean and standard
    /// deviation, unless the network already fixes its own input scaling.
    #[serde(default = "yes")]
    pub standardize_inputs: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch size must be at least 1".into()));
        }
        if !self.riskless_rate.is_finite() {
            return Err(Error::InvalidSpec("riskless rate must be finite".into()));
        }
        Ok(())
    }

    fn validates_at(&self, episode: usize) -> bool {
        self.validate_every > 0
            && ((episode + 1).is_multiple_of(self.validate_every) || episode + 1 == self.episodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

/// Per-episode losses of one training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub records: Vec<EpisodeRecord>,
    /// Samples per episode.
    pub batch_size: usize,
}

impl LossHistory {
    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    /// `(episode, loss)` for every episode that has a validation loss.
    pub fn validation_points(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.validation_loss.map(|v| (r.episode, v)))
            .collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_loss)
    }

    /// `episode,train_loss,validation_loss`, the last column empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,train_loss,validation_loss\n");
        for r in &self.records {
            match r.validation_loss {
                Some(v) => writeln!(out, "{},{},{}", r.episode, r.train_loss, v),
                None => writeln!(out, "{},{},", r.episode, r.train_loss),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Initial network for a training run; `rows` yields the training inputs
/// (row-major) when standardization statistics are needed.
pub(crate) fn initial_model(
    cfg: &TrainConfig,
    rows: impl FnOnce() -> Result<Vec<f64>>,
) -> Result<MlpModel> {
    let mut spec = cfg.network.clone();
    if cfg.standardize_inputs && spec.input_scaling.is_none() {
        let scaling = InputScaling::from_rows(&rows()?, spec.input_dim)?;
        spec = spec.with_input_scaling(scaling)?;
    }
    MlpModel::init(spec, cfg.seed)
}

/// A trained network and how it got there.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpModel,
    pub history: LossHistory,
}

/// Runs `cfg.episodes` updates. `batch_loss` returns the mean loss of the
/// selected samples and its gradient; a non-finite loss must be reported by
/// `batch_loss` itself as an error naming the offending sample.
pub(crate) fn descend<B, V>(
    mut model: MlpModel,
    n_samples: usize,
    cfg: &TrainConfig,
    mut batch_loss: B,
    mut validation: Option<V>,
) -> Result<Trained>
where
    B: FnMut(&MlpModel, &[usize], usize) -> Result<(f64, Vec<f64>)>,
    V: FnMut(&MlpModel) -> Result<f64>,
{
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Size("no training samples".into()));
    }
    let mut opt = OptState::new(cfg.optimizer, model.params().len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..n_samples).collect();
    let batch = cfg.batch_size.min(n_samples);
    let mut cursor = n_samples;
    let mut history = LossHistory {
        records: Vec::with_capacity(cfg.episodes),
        batch_size: batch,
    };

    for episode in 0..cfg.episodes {
        if cursor + batch > n_samples {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let (loss, grad) = batch_loss(&model, idx, episode)?;
        opt.step(model.params_mut(), &grad, episode);
        let validation_loss = match validation.as_mut() {
            Some(v) if cfg.validates_at(episode) => Some(v(&model)?),
            _ => None,
        };
        history.records.push(EpisodeRecord {
            episode,
            train_loss: loss,
            validation_loss,
        });
    }
    Ok(Trained { model, history })
}
