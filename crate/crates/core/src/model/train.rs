//! Mini-batch training with AdamW and early stopping on validation accuracy.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ops::{bce_with_logit, sigmoid};
use super::optim::AdamW;
use super::{Model, ModelConfig, ModelError, ModelInput, Scalar};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Evaluations without a strict validation-accuracy gain before stopping.
    pub patience: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Set from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            batch_size: 32,
            patience: 10,
            max_steps: 3000,
            eval_every: 20,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!("learning_rate {} must be >= 0", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ModelError::Config(format!("weight_decay {} must be >= 0", self.weight_decay)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("max_steps", self.max_steps),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Images with binary targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<ModelInput>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, input: ModelInput, label: u8) {
        self.inputs.push(input);
        self.labels.push(label);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn write_log<W: Write>(w: W, rows: &[LogRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation-accuracy checkpoint (earliest on ties).
    pub model: Model<f32>,
    pub log: Vec<LogRow>,
    pub best_step: usize,
    pub best_val_accuracy: f64,
    pub steps_run: usize,
    pub evaluations: usize,
}

/// Mean loss and accuracy at the 0.5 threshold.
pub fn evaluate<T: Scalar>(model: &Model<T>, set: &LabeledSet) -> Result<(f64, f64), ModelError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (inputs, labels) in set.inputs.chunks(64).zip(set.labels.chunks(64)) {
        for (z, &y) in model.logits(inputs)?.into_iter().zip(labels) {
            loss += bce_with_logit(z, T::of(f64::from(y))).f64();
            correct += usize::from((sigmoid(z).f64() >= 0.5) == (y == 1));
        }
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains from a seeded initialization. Validation runs once before the
/// first step and then every `eval_every` steps; training stops after
/// `patience` consecutive evaluations without a strictly higher accuracy.
pub fn train(
    model_config: &ModelConfig,
    config: &TrainConfig,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptySplit("val"));
    }
    let mut model = Model::<f32>::new(model_config, config.seed)?;
    let mut opt = AdamW::new(model.params());
    let mut log = Vec::new();
    let (val_loss, val_acc) = evaluate(&model, val_set)?;
    log.push(LogRow { step: 0, split: "val".into(), loss: val_loss, accuracy: val_acc });
    let (mut best, mut best_step, mut best_acc) = (model.clone(), 0, val_acc);
    let mut evaluations = 1;
    let mut stale = 0;
    let n = train_set.len();
    let mut order: Vec<usize> = Vec::new();
    let (mut epoch, mut cursor) = (0u64, 0usize);
    let (mut run_loss, mut run_correct, mut run_count) = (0.0, 0usize, 0usize);
    let mut steps_run = 0;
    for step in 1..=config.max_steps {
        if cursor >= order.len() {
            order = (0..n).collect();
            order.shuffle(&mut stream(config.seed, Purpose::Shuffle, epoch));
            epoch += 1;
            cursor = 0;
        }
        let idx = &order[cursor..(cursor + config.batch_size).min(n)];
        cursor += idx.len();
        let inputs: Vec<ModelInput> = idx.iter().map(|&i| train_set.inputs[i].clone()).collect();
        let labels: Vec<u8> = idx.iter().map(|&i| train_set.labels[i]).collect();

        let mut rng = stream(config.seed, Purpose::Dropout, step as u64);
        let fwd = model.forward(&inputs, Some(&mut rng))?;
        let mut grads = model.zero_grads();
        let loss = model.backward(&fwd, &labels, &mut grads);
        if !loss.is_finite() {
            return Err(ModelError::NonFinite { what: "loss".into(), step });
        }
        if let Some((t, _)) = model.params().iter().zip(&grads).find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(ModelError::NonFinite { what: format!("gradient of {}", t.name), step });
        }
        run_loss += f64::from(loss) * labels.len() as f64;
        run_correct += fwd.logits.iter().zip(&labels).filter(|(&z, &y)| (sigmoid(z) >= 0.5) == (y == 1)).count();
        run_count += labels.len();
        opt.step(model.params_mut(), &grads, config.learning_rate, config.weight_decay);
        steps_run = step;

        if step % config.eval_every == 0 {
            log.push(LogRow {
                step,
                split: "train".into(),
                loss: run_loss / run_count as f64,
                accuracy: run_correct as f64 / run_count as f64,
            });
            (run_loss, run_correct, run_count) = (0.0, 0, 0);
            let (val_loss, val_acc) = evaluate(&model, val_set)?;
            log.push(LogRow { step, split: "val".into(), loss: val_loss, accuracy: val_acc });
            evaluations += 1;
            if val_acc > best_acc {
                (best, best_step, best_acc) = (model.clone(), step, val_acc);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { model: best, log, best_step, best_val_accuracy: best_acc, steps_run, evaluations })
}
