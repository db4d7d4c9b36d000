use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::argmax;
use super::{GcnModel, GcnParams, GnnError, NormalizedAdjacency};
use crate::graph::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied when the loss plateaus.
    pub gamma: f64,
    /// Number of past epochs the current loss is compared against.
    pub window: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.0005,
            gamma: 0.1,
            window: 6,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.window == 0 {
            return bad("scheduler window must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// One labelled graph ready for the network.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub adjacency: NormalizedAdjacency,
    pub features: FeatureMatrix,
    pub label: usize,
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    first: GcnParams,
    second: GcnParams,
}

impl Adam {
    pub fn new(params: &GcnParams, cfg: &TrainConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut GcnParams, grads: &GcnParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
        {
            for (((p, &g), m), v) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Decays the learning rate when the epoch loss exceeds the mean of the
/// previous `window` epochs. After a decay the window refills from empty
/// before another decay can happen.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    gamma: f64,
    window: usize,
    history: VecDeque<f64>,
}

impl PlateauScheduler {
    pub fn new(gamma: f64, window: usize) -> Self {
        Self {
            gamma,
            window,
            history: VecDeque::with_capacity(window),
        }
    }

    /// Record an epoch loss; returns the (possibly decayed) learning rate
    /// and whether a decay fired.
    pub fn observe(&mut self, loss: f64, lr: f64) -> (f64, bool) {
        if self.history.len() == self.window {
            let mean = self.history.iter().sum::<f64>() / self.window as f64;
            if loss > mean {
                self.history.clear();
                return (lr * self.gamma, true);
            }
            self.history.pop_front();
        }
        self.history.push_back(loss);
        (lr, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

/// Mean loss, accuracy, macro precision/recall and confusion matrix.
/// Classes never predicted count as precision 0; classes absent from the
/// samples are left out of the macro averages.
pub fn evaluate(model: &GcnModel, samples: &[GraphSample]) -> Result<Evaluation, GnnError> {
    let c = model.config.num_classes;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut predictions = Vec::with_capacity(samples.len());
    let mut loss = 0.0;
    for s in samples {
        let fp = model.forward(&s.adjacency, &s.features)?;
        let pred = fp.predicted();
        loss += -fp.probs[s.label].max(f64::MIN_POSITIVE).ln();
        confusion[s.label][pred] += 1;
        predictions.push(pred);
    }
    let n = samples.len().max(1) as f64;
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for k in 0..c {
        let actual: usize = confusion[k].iter().sum();
        if actual == 0 {
            continue;
        }
        let predicted: usize = (0..c).map(|t| confusion[t][k]).sum();
        recalls.push(confusion[k][k] as f64 / actual as f64);
        precisions.push(if predicted == 0 {
            0.0
        } else {
            confusion[k][k] as f64 / predicted as f64
        });
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        macro_precision: mean(&precisions),
        macro_recall: mean(&recalls),
        confusion,
        predictions,
    })
}

/// Mini-batch training. Each batch averages per-graph gradients before
/// one Adam update; batches are drawn from a seeded shuffle every epoch.
pub fn train(
    model: &mut GcnModel,
    train_set: &[GraphSample],
    val_set: &[GraphSample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>, GnnError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(GnnError::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&model.params, cfg);
    let mut scheduler = PlateauScheduler::new(cfg.gamma, cfg.window);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = adam.learning_rate;
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = model.params.zeros_like();
            for &i in batch {
                let s = &train_set[i];
                let (loss, grads, fp) = model.loss_and_grads(&s.adjacency, &s.features, s.label)?;
                epoch_loss += loss;
                correct += usize::from(argmax(&fp.logits) == s.label);
                acc.add_assign(&grads);
            }
            acc.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params, &acc);
            if !model.params.is_finite() {
                return Err(GnnError::NonFiniteLoss);
            }
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let e = evaluate(model, val_set)?;
            (Some(e.loss), Some(e.accuracy))
        };
        history.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            learning_rate: lr,
        });
        let (next_lr, decayed) = scheduler.observe(train_loss, lr);
        if decayed {
            log::info!("epoch {}: loss plateau, lr {lr} -> {next_lr}", epoch + 1);
        }
        adam.learning_rate = next_lr;
        log::debug!(
            "epoch {} loss {train_loss:.4} acc {:.3}",
            epoch + 1,
            history.last().map_or(0.0, |m| m.train_accuracy)
        );
    }
    Ok(history)
}

/// Per-epoch metrics as CSV with a header row.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows = history.iter().map(|m| {
        vec![
            m.epoch.to_string(),
            m.train_loss.to_string(),
            m.train_accuracy.to_string(),
            opt(m.val_loss),
            opt(m.val_accuracy),
            m.learning_rate.to_string(),
        ]
    });
    crate::table::to_csv(&["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_decays_once_per_window() {
        let mut s = PlateauScheduler::new(0.1, 6);
        let mut lr = 0.0005;
        for loss in [1.0, 0.9, 0.8, 0.7, 0.6, 0.5] {
            let (next, fired) = s.observe(loss, lr);
            assert!(!fired);
            lr = next;
        }
        // 0.76 > mean(1.0..0.5) = 0.75
        let (next, fired) = s.observe(0.76, lr);
        assert!(fired);
        assert!((next - 0.00005).abs() < 1e-18);
        lr = next;
        // The window is empty again: five more bad epochs cannot fire.
        for _ in 0..6 {
            let (next, fired) = s.observe(10.0, lr);
            assert!(!fired);
            lr = next;
        }
        assert!(s.observe(11.0, lr).1);
    }

    #[test]
    fn scheduler_ignores_improving_loss() {
        let mut s = PlateauScheduler::new(0.1, 2);
        let mut lr = 1.0;
        for i in 0..20 {
            let (next, fired) = s.observe(1.0 / (i + 1) as f64, lr);
            assert!(!fired);
            lr = next;
        }
        assert_eq!(lr, 1.0);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.learning_rate, 0.0005);
        assert_eq!(ok.gamma, 0.1);
        assert_eq!(ok.window, 6);
        for bad in [
            TrainConfig { learning_rate: 0.0, ..ok.clone() },
            TrainConfig { gamma: 1.0, ..ok.clone() },
            TrainConfig { window: 0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        use super::super::{init_params, ModelConfig};
        let m = init_params(&ModelConfig::new(3, 2), 0).unwrap();
        let mut p = m.params.clone();
        let mut g = p.zeros_like();
        g.fc2_bias.as_mut_slice()[0] = 2.0;
        g.fc2_bias.as_mut_slice()[1] = -0.5;
        let mut adam = Adam::new(&p, &TrainConfig::default());
        adam.step(&mut p, &g);
        let b = p.fc2_bias.as_slice();
        assert!((b[0] + 0.0005).abs() < 1e-10);
        assert!((b[1] - 0.0005).abs() < 1e-10);
        assert_eq!(p.fc1_bias, m.params.fc1_bias);
    }

    #[test]
    fn csv_has_header_and_blank_val() {
        let csv = metrics_csv(&[EpochMetrics {
            epoch: 1,
            train_loss: 0.5,
            train_accuracy: 1.0,
            val_loss: None,
            val_accuracy: None,
            learning_rate: 0.0005,
        }]);
        assert_eq!(csv, "epoch,train_loss,train_acc,val_loss,val_acc,lr\n1,0.5,1,,,0.0005\n");
    }
}
