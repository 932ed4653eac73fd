use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{arg_err, Error, Result};
use crate::nn::{argmax, softmax_xent_forward, Mode, Model};
use crate::numerics::Rng;
use crate::pipeline::Partition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 32,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(arg_err("epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(arg_err(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

/// Inference-mode loss and accuracy over a partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

const EVAL_BATCH: usize = 256;

fn check_partition(model: &Model, part: &Partition, what: &str) -> Result<()> {
    if part.is_empty() {
        return Err(arg_err(format!("{what} partition is empty")));
    }
    let spec = model.spec();
    if part.cols != spec.input_length * spec.input_channels {
        return Err(Error::Compatibility(format!(
            "{what} partition has {} features but the model expects {}",
            part.cols,
            spec.input_length * spec.input_channels
        )));
    }
    if let Some((index, &label)) = part.labels.iter().enumerate().find(|(_, &l)| l >= model.num_classes()) {
        return Err(Error::Label {
            index,
            label,
            num_classes: model.num_classes(),
        });
    }
    Ok(())
}

/// Mean sparse categorical cross-entropy and arg-max accuracy with dropout
/// disabled.
pub fn evaluate(model: &Model, part: &Partition) -> Result<Evaluation> {
    check_partition(model, part, "evaluation")?;
    let spec = model.spec();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(part.rows);
    let all: Vec<usize> = (0..part.rows).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let x = part.gather(chunk, spec.input_length, spec.input_channels)?;
        let logits = model.logits(&x)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| part.labels[i]).collect();
        let (loss, probs) = softmax_xent_forward(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        predictions.extend(probs.data().chunks_exact(model.num_classes()).map(argmax));
    }
    let correct = predictions.iter().zip(&part.labels).filter(|(p, y)| p == y).count();
    Ok(Evaluation {
        loss: loss_sum / part.rows as f64,
        accuracy: correct as f64 / part.rows as f64,
        predictions,
    })
}

/// Mini-batch Adam training. Each epoch shuffles the training indices (when
/// enabled), trains on every batch including the final partial one, then
/// logs train and validation metrics in inference mode.
pub fn train(
    model: &mut Model,
    train_part: &Partition,
    val_part: &Partition,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    check_partition(model, train_part, "training")?;
    check_partition(model, val_part, "validation")?;
    let (steps, channels) = (model.spec().input_length, model.spec().input_channels);
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, model.parameters())?;
    let mut order: Vec<usize> = (0..train_part.rows).collect();
    let mut logs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let diverged = |loss: f64| Error::Divergence { epoch, batch, loss };
            let x = train_part.gather(idx, steps, channels)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train_part.labels[i]).collect();
            let mut loss = f64::NAN;
            let step = (|| -> Result<()> {
                let pass = model.forward(&x, Mode::Train, rng)?;
                loss = softmax_xent_forward(&pass.logits, &labels)?.0;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("loss".into()));
                }
                let grads = model.backward(&pass, &labels)?;
                adam_step(&mut model.parameters_mut(), &grads, &mut state)
            })();
            match step {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => return Err(diverged(loss)),
                Err(e) => return Err(e),
            }
            if model.parameters().iter().any(|p| !p.all_finite()) {
                return Err(diverged(loss));
            }
        }
        let batches = order.len().div_ceil(config.batch_size);
        let scored = evaluate(model, train_part).and_then(|tr| Ok((tr, evaluate(model, val_part)?)));
        let (tr, va) = match scored {
            Ok((tr, va)) if tr.loss.is_finite() && va.loss.is_finite() => (tr, va),
            Ok((tr, _)) => return Err(Error::Divergence { epoch, batch: batches, loss: tr.loss }),
            Err(Error::NonFinite(_)) => {
                return Err(Error::Divergence {
                    epoch,
                    batch: batches,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        let log = EpochLog {
            epoch,
            train_loss: tr.loss,
            train_accuracy: tr.accuracy,
            val_loss: va.loss,
            val_accuracy: va.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} | val loss {:.4} val acc {:.4} ({:.1}s)",
            log.train_loss,
            log.train_accuracy,
            log.val_loss,
            log.val_accuracy,
            log.seconds
        );
        logs.push(log);
    }
    Ok(logs)
}

/// One JSON object per line.
pub fn write_training_log(logs: &[EpochLog], mut out: impl Write) -> Result<()> {
    for log in logs {
        serde_json::to_writer(&mut out, log)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
