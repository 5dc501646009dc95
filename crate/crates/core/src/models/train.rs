use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::classifier::{ClassificationExample, Classifier};
use super::detector::{DetectionExample, Detector};
use crate::corpus::Dataset;
use crate::nn::{Graph, Optimizer, OptimizerConfig, ParamStore, Var};
use crate::{Error, Result};

/// Default learning rate for models trained from scratch.
pub const DEFAULT_LR: f64 = 3e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self { batch_size: 16, optimizer: OptimizerConfig::adam(DEFAULT_LR), seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub samples: usize,
}

/// A model trainable by [`Trainer`].
pub trait Trainable {
    type Example;

    fn store(&self) -> &ParamStore<f32>;
    fn store_mut(&mut self) -> &mut ParamStore<f32>;
    fn training_examples(&self, data: &Dataset) -> Result<Vec<Self::Example>>;
    fn example_loss(&self, g: &mut Graph<'_, f32>, ex: &Self::Example, rng: &mut ChaCha8Rng) -> Result<Var>;
}

impl Trainable for Detector {
    type Example = DetectionExample;

    fn store(&self) -> &ParamStore<f32> {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }
    fn training_examples(&self, data: &Dataset) -> Result<Vec<DetectionExample>> {
        self.examples(data)
    }
    fn example_loss(&self, g: &mut Graph<'_, f32>, ex: &DetectionExample, rng: &mut ChaCha8Rng) -> Result<Var> {
        self.loss(g, ex, Some(rng))
    }
}

impl Trainable for Classifier {
    type Example = ClassificationExample;

    fn store(&self) -> &ParamStore<f32> {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }
    fn training_examples(&self, data: &Dataset) -> Result<Vec<ClassificationExample>> {
        self.examples(data)
    }
    fn example_loss(&self, g: &mut Graph<'_, f32>, ex: &ClassificationExample, rng: &mut ChaCha8Rng) -> Result<Var> {
        self.loss(g, ex, Some(rng))
    }
}

/// Mini-batch training with a seeded shuffle per epoch. Keeps optimizer
/// state across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    optimizer: Optimizer<f32>,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        let optimizer = Optimizer::new(config.optimizer);
        Self { config, optimizer, epochs_done: 0 }
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// One pass over `data`. Each batch minimizes the mean example loss.
    pub fn epoch<M: Trainable>(&mut self, model: &mut M, data: &Dataset) -> Result<EpochStats> {
        let examples = model.training_examples(data)?;
        let epoch_seed = self.config.seed ^ (self.epochs_done as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size.max(1)) {
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let grads = {
                    let mut g = Graph::new(model.store());
                    let loss = model.example_loss(&mut g, &examples[i], &mut rng)?;
                    let value = g.scalar(loss) as f64;
                    if !value.is_finite() {
                        return Err(Error::Diverged(value));
                    }
                    total += value;
                    g.backward(loss)
                };
                model.store_mut().accumulate(&grads, scale);
            }
            self.optimizer.step(model.store_mut()).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::Diverged(f64::NAN),
                other => other,
            })?;
        }
        self.epochs_done += 1;
        let samples = examples.len();
        Ok(EpochStats {
            epoch: self.epochs_done,
            mean_loss: if samples == 0 { 0.0 } else { total / samples as f64 },
            samples,
        })
    }
}
