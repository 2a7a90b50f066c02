//! Deterministic fixtures shared by the benchmarks.

use xpop_core::classifier::Sample;
use xpop_core::montage::{AlignedRecording, N_CHANNELS};
use xpop_core::ChannelMask;

/// Sum of two sines plus a cheap deterministic wobble.
pub fn test_signal(n: usize, rate_hz: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            (2.0 * std::f64::consts::PI * 10.0 * t).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 3.3 * t).sin()
                + 0.1 * ((i * 7919 % 101) as f64 / 101.0 - 0.5)
        })
        .collect()
}

/// A recording with every montage channel present.
pub fn aligned_fixture(seconds: f64, rate_hz: f64) -> AlignedRecording {
    let n = (seconds * rate_hz) as usize;
    let row = test_signal(n, rate_hz);
    let matrix = (0..N_CHANNELS)
        .flat_map(|c| row.iter().map(move |&v| (v * (1.0 + c as f64 * 0.01)) as f32))
        .collect();
    AlignedRecording {
        population_id: "B".into(),
        patient_id: "b0".into(),
        label: 0,
        sample_rate_hz: rate_hz,
        n_samples: n,
        matrix,
        presence: ChannelMask::all(),
    }
}

/// Linearly separable band-feature samples, `per_patient` frames each.
pub fn band_samples(n_patients: usize, per_patient: usize, input_len: usize) -> Vec<Sample> {
    (0..n_patients)
        .flat_map(|p| {
            let label = (p % 2) as u8;
            (0..per_patient).map(move |w| Sample {
                patient: p,
                channel: 0,
                window: w,
                label,
                present: true,
                x: (0..input_len)
                    .map(|j| ((p * 31 + w * 17 + j * 7) % 13) as f32 / 13.0 + if j == 0 { label as f32 } else { 0.0 })
                    .collect(),
            })
        })
        .collect()
}
