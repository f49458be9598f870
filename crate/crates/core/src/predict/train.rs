use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LstmModel, PredictError, SequenceSample, Split};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    /// Fit input and target scalers on the train split before training.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            max_epochs: 200,
            batch_size: 256,
            train_fraction: 0.8,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            standardize: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        let bad = |m: String| Err(PredictError::InvalidConfig(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.patience == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return bad("patience, max_epochs and batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("invalid optimizer moments".into());
        }
        let fr = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {fr:?} must be positive and sum to 1"));
        }
        Ok(())
    }

    pub fn split(&self, samples: &[SequenceSample]) -> Result<Split, PredictError> {
        self.validate()?;
        super::chronological_split(samples, self.train_fraction, self.validation_fraction)
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch loss with dropout active, in standardized target units.
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub parameter_count: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

fn fit_scalers(model: &mut LstmModel, train: &[SequenceSample]) {
    for j in 0..3 {
        let col: Vec<f64> = train.iter().flat_map(|s| s.inputs.iter().map(move |r| r[j])).collect();
        let (m, sd) = mean_sd(&col);
        model.input_mean[j] = m;
        model.input_scale[j] = sd;
    }
    let ys: Vec<f64> = train.iter().map(|s| s.target).collect();
    let (m, sd) = mean_sd(&ys);
    model.target_mean = m;
    model.target_scale = sd;
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let sd = crate::stats::population_variance(xs).sqrt();
    (m, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

/// Mini-batch training on `split.train` with early stopping on
/// `split.validation`. Returns the parameters of the best validation epoch.
pub fn train(model: LstmModel, split: &Split, cfg: &TrainConfig) -> Result<(LstmModel, TrainingLog), PredictError> {
    cfg.validate()?;
    model.check_parameters()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    let mut model = model;
    if cfg.standardize {
        fit_scalers(&mut model, &split.train);
    }
    let n = model.params.len();
    let mut adam = Adam::new(n, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let val: Vec<&SequenceSample> = split.validation.iter().collect();
    let mut grad = vec![0.0; n];
    let mut best = (model.params.clone(), f64::INFINITY, 0);
    let mut log = TrainingLog {
        parameter_count: n,
        epochs: Vec::new(),
        best_epoch: 0,
        best_validation_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| &split.train[i]).collect();
            let loss = model.accumulate_gradient(&batch, Some(rng.next_u64()), &mut grad);
            if !loss.is_finite() {
                return Err(PredictError::DivergedLoss { epoch });
            }
            weighted += loss * batch.len() as f64;
            adam.step(&mut model.params, &grad);
        }
        let train_loss = weighted / order.len() as f64;
        let validation_loss = model.loss(&val, None);
        if !validation_loss.is_finite() {
            return Err(PredictError::DivergedLoss { epoch });
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best.1 {
            best = (model.params.clone(), validation_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    model.params = best.0;
    log.best_validation_loss = best.1;
    log.best_epoch = best.2;
    Ok((model, log))
}
