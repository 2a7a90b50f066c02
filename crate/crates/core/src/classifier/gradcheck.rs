use rand::Rng;

use super::{bce_with_logit, sigmoid, FrameModel, ModelSpec};

const STEP: f64 = 1e-5;
const MAX_CHECKED: usize = 96;

fn batch_loss(model: &dyn FrameModel, batch: &[(Vec<f32>, u8)]) -> f64 {
    batch
        .iter()
        .map(|(x, y)| bce_with_logit(model.logit(x), *y as f64))
        .sum::<f64>()
        / batch.len() as f64
}

/// Compares analytic gradients of the mean BCE loss with central finite
/// differences on a random batch and random parameters. Returns the maximum
/// relative error over the checked parameters.
pub fn gradient_check(spec: &ModelSpec, seed: u64) -> f64 {
    let mut rng = crate::seed::rng(seed);
    let batch: Vec<(Vec<f32>, u8)> = (0..3)
        .map(|i| {
            let x = (0..spec.input_len()).map(|_| rng.random::<f32>()).collect();
            (x, (i % 2) as u8)
        })
        .collect();
    gradient_check_batch(spec, &batch, seed)
}

/// Same as [`gradient_check`] on a caller-provided batch.
pub fn gradient_check_batch(spec: &ModelSpec, batch: &[(Vec<f32>, u8)], seed: u64) -> f64 {
    let mut rng = crate::seed::rng(crate::seed::mix(seed, 0x67726164));
    let mut model = spec.build(seed);
    let inputs: Vec<&[f32]> = batch.iter().map(|(x, _)| x.as_slice()).collect();
    model.fit_inputs(&inputs);
    // Randomize the trainable parameters, including the zero-initialized
    // head, so every gradient path is exercised.
    let trainable = model.trainable();
    for k in trainable.clone() {
        let p = &mut model.params_mut()[k];
        *p += rng.random_range(-0.5..0.5);
    }

    let n = model.params().len();
    let mut grad = vec![0.0; n];
    for (x, y) in batch {
        let z = model.logit(x);
        model.accumulate_grad(x, (sigmoid(z) - *y as f64) / batch.len() as f64, &mut grad);
    }

    let mut idx: Vec<usize> = trainable.collect();
    if idx.len() > MAX_CHECKED {
        // Always keep the head (last parameters); sample the rest.
        let tail = idx.split_off(idx.len() - 16);
        let mut picked: Vec<usize> = (0..MAX_CHECKED - tail.len())
            .map(|_| idx[rng.random_range(0..idx.len())])
            .collect();
        picked.extend(tail);
        idx = picked;
    }

    let mut max_err: f64 = 0.0;
    for k in idx {
        let orig = model.params()[k];
        model.params_mut()[k] = orig + STEP;
        let up = batch_loss(model.as_ref(), batch);
        model.params_mut()[k] = orig - STEP;
        let down = batch_loss(model.as_ref(), batch);
        model.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = grad[k];
        let denom = analytic.abs().max(numeric.abs()).max(1e-7);
        let err = (analytic - numeric).abs() / denom;
        if !err.is_finite() {
            return f64::INFINITY;
        }
        max_err = max_err.max(err);
    }
    max_err
}
