use std::fmt;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{total_loss, LossWeights};
use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::model::{argmax, Mode, Model};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Overrides the model's dropout rate for the run.
    pub dropout: f64,
    pub smooth_tau: f64,
    pub smooth_lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-4,
            dropout: 0.5,
            smooth_tau: 4.0,
            smooth_lambda: 0.15,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.epochs < 1 {
            bad.push("epochs must be >= 1".to_string());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            bad.push(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.smooth_tau.is_finite() && self.smooth_tau > 0.0) {
            bad.push(format!("smooth_tau must be > 0, got {}", self.smooth_tau));
        }
        if !(self.smooth_lambda.is_finite() && self.smooth_lambda >= 0.0) {
            bad.push(format!("smooth_lambda must be >= 0, got {}", self.smooth_lambda));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                bad.push(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            bad.push(format!("adam_eps must be > 0, got {}", self.adam_eps));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            smooth_tau: self.smooth_tau,
            smooth_lambda: self.smooth_lambda,
            detach_previous: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean total loss over the epoch's videos.
    pub loss: f64,
    /// Final-stage frame accuracy in percent, from the training passes.
    pub accuracy: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {} loss {:.6} acc {:.4}", self.epoch, self.loss, self.accuracy)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// One `epoch <n> loss <float> acc <float>` line per epoch.
    pub fn to_text(&self) -> String {
        self.epochs.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Trains for `cfg.epochs` epochs; see [`train_with`].
pub fn train(
    model: &mut Model<f32>,
    videos: &[VideoSample],
    cfg: &TrainConfig,
) -> Result<(TrainingHistory, AdamState<f32>)> {
    train_with(model, videos, cfg, None, |_, _| ControlFlow::Continue(()))
}

/// Batch-size-one training with per-epoch shuffling. `on_epoch` runs after
/// every epoch and may stop the run early. Passing a previous optimizer
/// state resumes from it.
pub fn train_with(
    model: &mut Model<f32>,
    videos: &[VideoSample],
    cfg: &TrainConfig,
    resume: Option<AdamState<f32>>,
    mut on_epoch: impl FnMut(&EpochRecord, &Model<f32>) -> ControlFlow<()>,
) -> Result<(TrainingHistory, AdamState<f32>)> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for v in videos {
        model.check_features(&v.features).map_err(|e| match e {
            Error::Incompatible(m) => Error::Incompatible(format!("video {}: {m}", v.id)),
            other => other,
        })?;
        v.labels()?;
    }
    model.set_dropout(cfg.dropout)?;
    let mut state = match resume {
        Some(s) => {
            s.check_matches(model.params())?;
            s
        }
        None => AdamState::new(model.params()),
    };
    let adam = cfg.adam();
    let weights = cfg.loss_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut history = TrainingHistory::default();
    model.params_mut().zero_grad();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let (mut correct, mut frames) = (0usize, 0usize);
        for &i in &order {
            let video = &videos[i];
            let labels = video.labels()?;
            let grads = {
                let (tape, logits) = model.forward_tape(&video.features, Mode::Train, &mut rng)?;
                let outs: Vec<_> = logits.iter().map(|&v| tape.value(v).clone()).collect();
                let (loss, dlogits) = total_loss(&outs, labels, &weights)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, video {}",
                        video.id
                    )));
                }
                loss_sum += loss as f64;
                let last = outs.last().expect("at least one stage");
                correct += (0..last.rows())
                    .filter(|&t| argmax(last.row(t)) == labels[t])
                    .count();
                frames += labels.len();
                tape.backward(logits.into_iter().zip(dlogits).collect())
            };
            model.params_mut().accumulate(&grads);
            adam_step(model.params_mut(), &mut state, &adam).map_err(|e| match e {
                Error::Numeric(m) => {
                    Error::Numeric(format!("{m} at epoch {epoch}, video {}", video.id))
                }
                other => other,
            })?;
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / videos.len() as f64,
            accuracy: 100.0 * correct as f64 / frames as f64,
        };
        history.epochs.push(record);
        if on_epoch(&record, model).is_break() {
            break;
        }
    }
    Ok((history, state))
}
