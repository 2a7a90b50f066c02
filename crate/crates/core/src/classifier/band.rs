use std::ops::Range;

use super::FrameModel;
use crate::frame::SpectrogramFrame;

/// Mean normalized log-power per band, averaged over occupied time bins
/// (columns that are not entirely zero, i.e. not pure zero padding).
pub(crate) fn band_features(frame: &SpectrogramFrame, bands: &[[f64; 2]], bin_hz: f64) -> Vec<f32> {
    let occupied: Vec<usize> = (0..frame.cols)
        .filter(|&c| (0..frame.rows).any(|r| frame.at(r, c) != 0.0))
        .collect();
    if occupied.is_empty() {
        return vec![0.0; bands.len()];
    }
    bands
        .iter()
        .map(|&[lo, hi]| {
            let rows: Vec<usize> = (0..frame.rows)
                .filter(|&r| {
                    let f = (r + 1) as f64 * bin_hz;
                    f >= lo && f < hi
                })
                .collect();
            if rows.is_empty() {
                return 0.0;
            }
            let mut sum = 0.0f64;
            for &r in &rows {
                for &c in &occupied {
                    sum += frame.at(r, c) as f64;
                }
            }
            (sum / (rows.len() * occupied.len()) as f64) as f32
        })
        .collect()
}

/// Logistic regression on standardized band features.
///
/// Parameter layout: `[shift; n] [scale; n] [weight; n] [bias]`. Shift and
/// scale are fitted from the training inputs and not updated by SGD.
#[derive(Debug, Clone)]
pub struct BandLogistic {
    n: usize,
    params: Vec<f64>,
}

impl BandLogistic {
    pub fn new(n_features: usize) -> Self {
        let mut params = vec![0.0; 3 * n_features + 1];
        params[n_features..2 * n_features].fill(1.0);
        BandLogistic {
            n: n_features,
            params,
        }
    }

    fn z(&self, x: &[f32], i: usize) -> f64 {
        (x[i] as f64 - self.params[i]) * self.params[self.n + i]
    }
}

impl FrameModel for BandLogistic {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn trainable(&self) -> Range<usize> {
        2 * self.n..3 * self.n + 1
    }

    fn logit(&self, x: &[f32]) -> f64 {
        let w = &self.params[2 * self.n..3 * self.n];
        let mut acc = self.params[3 * self.n];
        for (i, wi) in w.iter().enumerate() {
            acc += wi * self.z(x, i);
        }
        acc
    }

    fn accumulate_grad(&self, x: &[f32], dlogit: f64, grad: &mut [f64]) {
        for i in 0..self.n {
            grad[2 * self.n + i] += dlogit * self.z(x, i);
        }
        grad[3 * self.n] += dlogit;
    }

    fn fit_inputs(&mut self, inputs: &[&[f32]]) {
        if inputs.is_empty() {
            return;
        }
        let m = inputs.len() as f64;
        for i in 0..self.n {
            let mean = inputs.iter().map(|x| x[i] as f64).sum::<f64>() / m;
            let var = inputs
                .iter()
                .map(|x| (x[i] as f64 - mean).powi(2))
                .sum::<f64>()
                / m;
            let sd = var.sqrt();
            self.params[i] = mean;
            self.params[self.n + i] = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with(rows_value: impl Fn(usize, usize) -> f32) -> SpectrogramFrame {
        let (rows, cols) = (128, 256);
        let values = (0..rows * cols).map(|i| rows_value(i / cols, i % cols)).collect();
        SpectrogramFrame {
            rows,
            cols,
            values,
            channel_index: 0,
            patient_id: String::new(),
            population_id: String::new(),
            window_index: 0,
            absent: false,
        }
    }

    #[test]
    fn features_average_over_occupied_columns() {
        // Columns >= 100 are zero padding; alpha rows (8-12 Hz) are 1.0.
        let f = frame_with(|r, c| {
            let hz = (r + 1) as f64 * 0.25;
            if c >= 100 {
                0.0
            } else if (8.0..12.0).contains(&hz) {
                1.0
            } else {
                0.5
            }
        });
        let bands = [[0.0, 4.0], [8.0, 12.0]];
        let x = band_features(&f, &bands, 0.25);
        assert_eq!(x, vec![0.5, 1.0]);
    }

    #[test]
    fn absent_frame_gives_zero_features() {
        let f = frame_with(|_, _| 0.0);
        assert_eq!(band_features(&f, &[[0.0, 4.0]], 0.25), vec![0.0]);
    }

    #[test]
    fn fit_inputs_standardizes() {
        let mut m = BandLogistic::new(1);
        let a = [1.0f32];
        let b = [3.0f32];
        m.fit_inputs(&[&a, &b]);
        assert_eq!(m.params()[0], 2.0);
        assert_eq!(m.params()[1], 1.0);
        assert_eq!(m.logit(&a), 0.0);
    }
}
