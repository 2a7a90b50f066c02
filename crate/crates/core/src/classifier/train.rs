use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{bce_with_logit, sigmoid, Checkpoint, ClassifierError, FrameModel, ModelSpec, Sample, TrainSchedule};
use crate::analytics::{aggregate_patient, DEFAULT_TAU};
use crate::frame::SpectrogramFrame;
use crate::montage::ChannelMask;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Patient-level validation accuracy after every epoch.
    pub val_history: Vec<f64>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Earliest epoch with the highest validation accuracy.
pub fn select_checkpoint(history: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (e, &a) in history.iter().enumerate() {
        if best.is_none_or(|b| a > history[b]) {
            best = Some(e);
        }
    }
    best
}

/// Patient-level accuracy of soft voting over the given samples.
pub fn patient_accuracy(model: &dyn FrameModel, samples: &[&Sample]) -> f64 {
    let probs: Vec<f64> = samples.par_iter().map(|s| model.predict(&s.x)).collect();
    let mut per_patient: BTreeMap<usize, (u8, Vec<f64>)> = BTreeMap::new();
    for (s, p) in samples.iter().zip(probs) {
        per_patient.entry(s.patient).or_insert_with(|| (s.label, Vec::new())).1.push(p);
    }
    if per_patient.is_empty() {
        return 0.0;
    }
    let correct = per_patient
        .values()
        .filter(|(label, probs)| {
            aggregate_patient(probs, DEFAULT_TAU)
                .map(|p| p.label == *label)
                .unwrap_or(false)
        })
        .count();
    correct as f64 / per_patient.len() as f64
}

/// Frame probability under a checkpoint.
pub fn predict_proba(ck: &Checkpoint, frame: &SpectrogramFrame, bin_hz: f64) -> Result<f64, ClassifierError> {
    let x = ck.spec.encode(frame, bin_hz)?;
    Ok(ck.model()?.predict(&x))
}

fn rounded(params: &[f64]) -> Vec<f32> {
    params.iter().map(|&p| p as f32).collect()
}

/// Mini-batch SGD on present training frames with patient-level checkpoint
/// selection. Validation uses only frames of `val_channels` when given
/// (absent frames of those channels included); otherwise all frames.
pub fn train(
    train: &[&Sample],
    val: &[&Sample],
    val_channels: Option<&ChannelMask>,
    spec: &ModelSpec,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainOutcome, ClassifierError> {
    spec.validate()?;
    schedule.validate()?;
    let train_patients: BTreeSet<usize> = train.iter().map(|s| s.patient).collect();
    if let Some(s) = val.iter().find(|s| train_patients.contains(&s.patient)) {
        return Err(ClassifierError::DisjointnessViolation(s.patient));
    }
    let train: Vec<&Sample> = train.iter().copied().filter(|s| s.present).collect();
    if train.is_empty() {
        return Err(ClassifierError::EmptyTraining);
    }
    if train.iter().all(|s| s.label == train[0].label) {
        return Err(ClassifierError::SingleClassTraining);
    }
    let val: Vec<&Sample> = val
        .iter()
        .copied()
        .filter(|s| val_channels.is_none_or(|m| m.contains(s.channel)))
        .collect();
    if val.is_empty() {
        return Err(ClassifierError::EmptyValidation);
    }
    let expected = spec.input_len();
    if let Some(s) = train.iter().chain(&val).find(|s| s.x.len() != expected) {
        return Err(ClassifierError::InputLength {
            expected,
            found: s.x.len(),
        });
    }

    let mut model = spec.build(seed);
    let inputs: Vec<&[f32]> = train.iter().map(|s| s.x.as_slice()).collect();
    model.fit_inputs(&inputs);
    let trainable = model.trainable();
    let n_params = model.params().len();

    let mut rng = crate::seed::rng(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut val_history = Vec::with_capacity(schedule.epochs);
    let mut loss_history = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(usize, Vec<f32>, f64)> = None;

    for epoch in 0..schedule.epochs {
        let lr = schedule.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let m: &dyn FrameModel = model.as_ref();
            // Per-sample gradients in parallel, reduced in batch order so the
            // result does not depend on the thread schedule.
            let parts: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let s = train[i];
                    let y = s.label as f64;
                    let z = m.logit(&s.x);
                    let mut g = vec![0.0; n_params];
                    m.accumulate_grad(&s.x, sigmoid(z) - y, &mut g);
                    (bce_with_logit(z, y), g)
                })
                .collect();
            let mut grad = vec![0.0; n_params];
            for (l, g) in &parts {
                loss_sum += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = lr / batch.len() as f64;
            let params = model.params_mut();
            for k in trainable.clone() {
                params[k] -= scale * grad[k];
            }
        }
        loss_history.push(loss_sum / train.len() as f64);

        let snapshot = rounded(model.params());
        let snap_model = spec.build_with(&snapshot.iter().map(|&p| p as f64).collect::<Vec<_>>())?;
        let acc = patient_accuracy(snap_model.as_ref(), &val);
        val_history.push(acc);
        log::trace!("epoch {epoch}: loss {:.4} val {acc:.3}", loss_history[epoch]);
        if best.as_ref().is_none_or(|(_, _, b)| acc > *b) {
            best = Some((epoch, snapshot, acc));
        }
    }

    let (epoch, params, val_accuracy) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            spec: spec.clone(),
            epoch,
            params,
            val_accuracy,
        },
        val_history,
        loss_history,
    })
}
