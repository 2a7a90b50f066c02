//! Frame-level binary classifiers behind a common interface, SGD training
//! with patient-level checkpoint selection, and a finite-difference gradient
//! check.

mod band;
mod checkpoint;
mod conv;
mod gradcheck;
mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::SpectrogramFrame;

pub use band::BandLogistic;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use conv::ReferenceConv;
pub use gradcheck::{gradient_check, gradient_check_batch};
pub use train::{patient_accuracy, predict_proba, select_checkpoint, train, TrainOutcome};

/// Spectrogram rows (frequency bins) every model expects.
pub const INPUT_ROWS: usize = 128;
/// Spectrogram columns (time bins) every model expects.
pub const INPUT_COLS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("patient {0} appears in both training and validation data")]
    DisjointnessViolation(usize),
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("no training samples")]
    EmptyTraining,
    #[error("no validation patients")]
    EmptyValidation,
    #[error("frame shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("model input has {found} values, expected {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid model or schedule: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            learning_rate: 0.01,
            decay_factor: 0.5,
            decay_every: 10,
            epochs: 30,
            batch_size: 32,
            base_seed: crate::seed::DEFAULT_BASE_SEED,
        }
    }
}

impl TrainSchedule {
    /// Step decay: `lr0 * decay^(epoch / decay_every)`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate > 0.0 && self.decay_factor > 0.0) {
            return Err(ClassifierError::Spec("schedule: learning rate and decay must be positive".into()));
        }
        if self.decay_every == 0 || self.epochs < self.decay_every || self.batch_size == 0 {
            return Err(ClassifierError::Spec(
                "schedule: need decay_every > 0, epochs >= decay_every, batch_size > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ReferenceConv,
    BandLogistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Convolution filters per block (`reference_conv`).
    pub widths: Vec<usize>,
    /// Average-pooling factors (rows, cols) after every block but the last,
    /// which pools globally (`reference_conv`).
    pub pooling: Vec<[usize; 2]>,
    /// Frequency bands in Hz, `[lo, hi)` (`band_logistic`).
    pub bands_hz: Vec<[f64; 2]>,
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::band_logistic()
    }
}

impl ModelSpec {
    pub fn band_logistic() -> Self {
        ModelSpec {
            kind: ModelKind::BandLogistic,
            widths: vec![8, 16, 32],
            pooling: vec![[2, 4], [2, 4]],
            bands_hz: vec![[0.0, 4.0], [4.0, 8.0], [8.0, 12.0], [12.0, 20.0], [20.0, 30.0]],
            init_seed: 0,
        }
    }

    pub fn reference_conv() -> Self {
        ModelSpec {
            kind: ModelKind::ReferenceConv,
            ..ModelSpec::band_logistic()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self.kind {
            ModelKind::BandLogistic => {
                if self.bands_hz.is_empty() || self.bands_hz.iter().any(|[a, b]| !(b > a)) {
                    return Err(ClassifierError::Spec("bands must be non-empty ranges".into()));
                }
            }
            ModelKind::ReferenceConv => {
                if self.widths.is_empty() || self.widths.contains(&0) {
                    return Err(ClassifierError::Spec("conv widths must be positive".into()));
                }
                if self.pooling.len() + 1 != self.widths.len() {
                    return Err(ClassifierError::Spec(
                        "pooling needs one entry per block except the last".into(),
                    ));
                }
                let (mut h, mut w) = (INPUT_ROWS, INPUT_COLS);
                for [ph, pw] in &self.pooling {
                    if *ph == 0 || *pw == 0 || h % ph != 0 || w % pw != 0 {
                        return Err(ClassifierError::Spec("pooling must divide the feature map".into()));
                    }
                    h /= ph;
                    w /= pw;
                }
            }
        }
        Ok(())
    }

    /// Length of the encoded model input.
    pub fn input_len(&self) -> usize {
        match self.kind {
            ModelKind::BandLogistic => self.bands_hz.len(),
            ModelKind::ReferenceConv => INPUT_ROWS * INPUT_COLS,
        }
    }

    /// Maps a frame to the model's input vector. `bin_hz` is the frequency
    /// width of one spectrogram row; row `r` sits at `(r + 1) * bin_hz`.
    pub fn encode(&self, frame: &SpectrogramFrame, bin_hz: f64) -> Result<Vec<f32>, ClassifierError> {
        if frame.shape() != (INPUT_ROWS, INPUT_COLS) {
            return Err(ClassifierError::ShapeMismatch {
                expected: (INPUT_ROWS, INPUT_COLS),
                found: frame.shape(),
            });
        }
        Ok(match self.kind {
            ModelKind::ReferenceConv => frame.values.clone(),
            ModelKind::BandLogistic => band::band_features(frame, &self.bands_hz, bin_hz),
        })
    }

    /// Fresh model. Output layers start at zero, so an untrained model
    /// predicts exactly 0.5.
    pub fn build(&self, seed: u64) -> Box<dyn FrameModel> {
        match self.kind {
            ModelKind::BandLogistic => Box::new(BandLogistic::new(self.bands_hz.len())),
            ModelKind::ReferenceConv => Box::new(ReferenceConv::new(
                &self.widths,
                &self.pooling,
                crate::seed::mix(self.init_seed, seed),
            )),
        }
    }

    pub fn build_with(&self, params: &[f64]) -> Result<Box<dyn FrameModel>, ClassifierError> {
        let mut model = self.build(0);
        if model.params().len() != params.len() {
            return Err(ClassifierError::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params().len(),
                params.len()
            )));
        }
        model.params_mut().copy_from_slice(params);
        Ok(model)
    }
}

/// A differentiable model mapping one encoded frame to a logit.
pub trait FrameModel: Send + Sync {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Parameters updated by gradient descent; the rest are fitted once.
    fn trainable(&self) -> Range<usize> {
        0..self.params().len()
    }
    fn logit(&self, x: &[f32]) -> f64;
    /// Adds `dlogit * d(logit)/d(params)` into `grad`.
    fn accumulate_grad(&self, x: &[f32], dlogit: f64, grad: &mut [f64]);
    /// Fits non-trainable input statistics on the training inputs.
    fn fit_inputs(&mut self, _inputs: &[&[f32]]) {}

    fn predict(&self, x: &[f32]) -> f64 {
        sigmoid(self.logit(x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, computed stably.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// One encoded frame with its identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Corpus-wide patient key.
    pub patient: usize,
    pub channel: usize,
    pub window: usize,
    pub label: u8,
    pub present: bool,
    pub x: Vec<f32>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps() {
        let s = TrainSchedule::default();
        for e in 0..30 {
            let expected = 0.01 * 0.5f64.powi((e / 10) as i32);
            assert_eq!(s.learning_rate_at(e), expected);
        }
        assert_eq!(s.learning_rate_at(0), 0.01);
        assert_eq!(s.learning_rate_at(9), 0.01);
        assert_eq!(s.learning_rate_at(10), 0.005);
        assert_eq!(s.learning_rate_at(19), 0.005);
        assert_eq!(s.learning_rate_at(20), 0.0025);
        assert_eq!(s.learning_rate_at(29), 0.0025);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::reference_conv().validate().is_ok());
        let mut s = ModelSpec::reference_conv();
        s.pooling = vec![[3, 4], [2, 4]];
        assert!(s.validate().is_err());
        let mut s = ModelSpec::band_logistic();
        s.bands_hz = vec![[4.0, 4.0]];
        assert!(s.validate().is_err());
    }

    #[test]
    fn stable_loss() {
        assert!((bce_with_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logit(800.0, 0.0).is_finite());
        assert!(bce_with_logit(-800.0, 1.0).is_finite());
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
