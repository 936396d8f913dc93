use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{cross_entropy, ModelError, Network, Real, Sample};
use crate::landmark::GestureClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            batch_size: 8,
            epochs: 150,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        // learning_rate == 0 is accepted: it is the null-update baseline
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
        learning_rate: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

/// Per-epoch curves. Train metrics are running values over the epoch's
/// batches (predictions made before each update); validation metrics are
/// computed on the model at the end of the epoch, NaN without a
/// validation set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    pub fn train_accuracy(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_accuracy).collect()
    }

    pub fn train_loss(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn val_accuracy(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_accuracy).collect()
    }

    pub fn val_loss(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    /// `epoch,train_acc,train_loss,val_acc,val_loss` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_acc,train_loss,val_acc,val_loss\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_accuracy, e.train_loss, e.val_accuracy, e.val_loss
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub loss: f64,
    /// `confusion[true][predicted]`
    pub confusion: [[usize; GestureClass::COUNT]; GestureClass::COUNT],
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

pub fn evaluate<T: Real>(model: &Network<T>, samples: &[Sample]) -> Result<EvalReport, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut confusion = [[0; GestureClass::COUNT]; GestureClass::COUNT];
    let mut data_loss = 0.0;
    let mut correct = 0;
    for sample in samples {
        let logits = model.logits(&sample.matrix)?;
        data_loss += cross_entropy(&logits, sample.label.index());
        let predicted = super::Prediction::from_logits(&logits).class;
        confusion[sample.label.index()][predicted.index()] += 1;
        if predicted == sample.label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(EvalReport {
        accuracy: correct as f64 / n,
        loss: data_loss / n + model.l1_penalty(),
        confusion,
    })
}

/// First and second moment estimates, one pair per parameter tensor.
struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: i32,
}

impl<T: Real> Adam<T> {
    fn new(params: &[Vec<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [Vec<T>], grads: &[Vec<T>], cfg: &TrainConfig) {
        self.step += 1;
        let b1 = T::of(cfg.adam_beta1);
        let b2 = T::of(cfg.adam_beta2);
        let one = T::one();
        let m_correction = T::of(1.0 / (1.0 - cfg.adam_beta1.powi(self.step)));
        let v_correction = T::of(1.0 / (1.0 - cfg.adam_beta2.powi(self.step)));
        let lr = T::of(cfg.learning_rate);
        let eps = T::of(cfg.adam_epsilon);
        for (((w, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] * m_correction;
                let v_hat = v[i] * v_correction;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Mini-batch Adam on L1-regularized cross-entropy.
///
/// Shuffles with the config seed every epoch; the last batch of an epoch
/// holds the `N mod batch_size` remainder. Returns the final-epoch model.
pub fn train<T: Real>(
    model: Network<T>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Network<T>, TrainReport), TrainError> {
    train_with_progress(model, train_set, val_set, cfg, |_| {})
}

pub fn train_with_progress<T: Real>(
    mut model: Network<T>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Network<T>, TrainReport), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads, hits) = model.backward_counting(&batch)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    loss,
                    learning_rate: cfg.learning_rate,
                });
            }
            loss_sum += loss * batch.len() as f64;
            correct += hits;
            adam.update(model.params_mut(), &grads.tensors, cfg);
        }
        let n = train_set.len() as f64;
        let (val_accuracy, val_loss) = if val_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let r = evaluate(&model, val_set)?;
            (r.accuracy, r.loss)
        };
        let metrics = EpochMetrics {
            epoch,
            train_accuracy: correct as f64 / n,
            train_loss: loss_sum / n,
            val_accuracy,
            val_loss,
        };
        on_epoch(&metrics);
        report.epochs.push(metrics);
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{ArchitectureConfig, ConvSpec};
    use crate::matrix::{MotionMatrix, MATRIX_LEN};

    fn tiny() -> ArchitectureConfig {
        ArchitectureConfig {
            conv_layers: vec![ConvSpec::new(2, true)],
            dense_hidden: 4,
            ..ArchitectureConfig::default()
        }
    }

    fn samples() -> Vec<Sample> {
        (0..5)
            .map(|k| {
                let raw = (0..MATRIX_LEN).map(|i| ((i * (k + 3)) % 17) as f64).collect();
                let m = MotionMatrix::from_raw(raw).unwrap().normalize().unwrap();
                Sample::new(m, GestureClass::from_index(k).unwrap()).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_is_a_null_update() {
        let model = Network::<f32>::init(tiny(), 9).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let (trained, report) = train(model.clone(), &samples(), &samples(), &cfg).unwrap();
        assert_eq!(trained.params(), model.params());
        assert_eq!(report.epochs.len(), 3);
    }

    #[test]
    fn rejects_empty_and_invalid() {
        let model = Network::<f32>::init(tiny(), 9).unwrap();
        assert!(matches!(
            train(model.clone(), &[], &[], &TrainConfig::default()),
            Err(TrainError::EmptyTrainSet)
        ));
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(model, &samples(), &[], &cfg),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn diverging_run_aborts() {
        let model = Network::<f32>::init(tiny(), 9).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e38,
            epochs: 5,
            ..TrainConfig::default()
        };
        let err = train(model, &samples(), &[], &cfg).unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { .. }), "{err}");
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let model = Network::<f32>::init(tiny(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let (_, report) = train(model, &samples(), &[], &cfg).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("epoch,train_acc,train_loss,val_acc,val_loss\n"));
        assert!(report.val_accuracy().iter().all(|v| v.is_nan()));
    }
}
