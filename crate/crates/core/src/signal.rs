//! Spectro-temporal preprocessing: resampling, z-scoring, overlapping
//! windows, centered power STFT and per-window log normalization.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::SpectrogramFrame;
use crate::montage::{AlignedRecording, Montage};

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("upsampling from {from_hz} Hz to {to_hz} Hz is not supported")]
    UpsamplingRequested { from_hz: f64, to_hz: f64 },
    #[error("signal too short: {0} samples")]
    TooShort(usize),
    #[error("invalid sample rate {0}")]
    BadRate(f64),
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("window has {found} samples, expected {expected}")]
    BadWindowLength { expected: usize, found: usize },
    #[error("channel {channel}: {source}")]
    Channel {
        channel: String,
        #[source]
        source: Box<SignalError>,
    },
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub target_rate_hz: f64,
    pub window_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub stft_hop: usize,
    /// Relative power floor applied before the logarithm.
    pub log_floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_rate_hz: 64.0,
            window_len: 16384,
            hop: 8192,
            n_fft: 256,
            stft_hop: 64,
            log_floor: 1e-12,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::Config(m.to_string()));
        if !(self.target_rate_hz > 0.0) {
            return bad("target_rate_hz must be positive");
        }
        if self.window_len == 0 || self.hop * 2 != self.window_len {
            return bad("hop must equal window_len / 2");
        }
        if self.n_fft < 4 || !self.n_fft.is_multiple_of(2) {
            return bad("n_fft must be even and >= 4");
        }
        if self.stft_hop == 0 || !self.window_len.is_multiple_of(self.stft_hop) {
            return bad("stft_hop must divide window_len");
        }
        if self.n_fft / 2 > self.window_len {
            return bad("n_fft too large for window_len");
        }
        if !(self.log_floor > 0.0 && self.log_floor < 1.0) {
            return bad("log_floor must lie in (0, 1)");
        }
        Ok(())
    }

    /// Frequency bins and frames of the raw power spectrogram.
    pub fn stft_shape(&self) -> (usize, usize) {
        (self.n_fft / 2 + 1, self.window_len / self.stft_hop + 1)
    }

    /// Shape after dropping the first frequency and time bins.
    pub fn output_shape(&self) -> (usize, usize) {
        (self.n_fft / 2, self.window_len / self.stft_hop)
    }

    /// Width of one frequency bin in Hz.
    pub fn bin_hz(&self) -> f64 {
        self.target_rate_hz / self.n_fft as f64
    }
}

/// FFT-based rational resampling (ideal low-pass in the frequency domain).
pub fn resample(signal: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>, SignalError> {
    if !(to_hz > 0.0) || !from_hz.is_finite() {
        return Err(SignalError::BadRate(to_hz));
    }
    if from_hz < to_hz {
        return Err(SignalError::UpsamplingRequested { from_hz, to_hz });
    }
    if signal.len() < 2 {
        return Err(SignalError::TooShort(signal.len()));
    }
    let n = signal.len();
    let m = ((n as f64) * to_hz / from_hz).round() as usize;
    if m == n {
        return Ok(signal.to_vec());
    }
    if m == 0 {
        return Err(SignalError::TooShort(n));
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let half = (m - 1) / 2;
    out[0] = spec[0];
    for k in 1..=half {
        out[k] = spec[k];
        out[m - k] = spec[n - k];
    }
    if m.is_multiple_of(2) {
        // Nyquist bin of the shorter grid: keep the real part so the output stays real.
        let k = m / 2;
        out[k] = Complex64::new(0.5 * (spec[k].re + spec[n - k].re), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut out);
    let scale = 1.0 / n as f64;
    Ok(out.iter().map(|c| c.re * scale).collect())
}

/// Zero mean, unit population standard deviation.
pub fn standardize(signal: &[f64]) -> Result<Vec<f64>, SignalError> {
    if signal.len() < 2 {
        return Err(SignalError::TooShort(signal.len()));
    }
    let first = signal[0];
    if signal.iter().all(|&v| v == first) {
        return Err(SignalError::ZeroVariance);
    }
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let var = signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(SignalError::ZeroVariance);
    }
    Ok(signal.iter().map(|v| (v - mean) / sd).collect())
}

/// Start offsets of the analysis windows for a signal of `len` samples.
/// Short signals get a single zero-padded window at offset 0.
pub fn window_offsets(len: usize, window_len: usize, hop: usize) -> Vec<usize> {
    if len <= window_len {
        return vec![0];
    }
    let mut offsets: Vec<usize> = (0..)
        .map(|k| k * hop)
        .take_while(|&off| off + window_len <= len)
        .collect();
    let last = *offsets.last().unwrap();
    if last + window_len < len {
        offsets.push(len - window_len);
    }
    offsets
}

/// Splits `signal` into `window_len`-sample windows with hop `hop`, adding a
/// terminal window when the tail is not hop-aligned.
pub fn make_windows(signal: &[f64], window_len: usize, hop: usize) -> Vec<Vec<f64>> {
    window_offsets(signal.len(), window_len, hop)
        .into_iter()
        .map(|off| {
            let end = (off + window_len).min(signal.len());
            let mut w = signal[off..end].to_vec();
            w.resize(window_len, 0.0);
            w
        })
        .collect()
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Power spectrogram, frequency-major (`n_freq` rows of `n_frames`).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub n_freq: usize,
    pub n_frames: usize,
    pub values: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn at(&self, f: usize, t: usize) -> f64 {
        self.values[f * self.n_frames + t]
    }
}

fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Centered STFT power with a Hann window: the window is reflect-padded by
/// `n_fft / 2` on each side so frame `j` is centered at sample `j * stft_hop`.
pub fn stft_power(window: &[f64], cfg: &PipelineConfig) -> Result<PowerSpectrogram, SignalError> {
    if window.len() != cfg.window_len {
        return Err(SignalError::BadWindowLength {
            expected: cfg.window_len,
            found: window.len(),
        });
    }
    let n_fft = cfg.n_fft;
    let pad = n_fft / 2;
    let (n_freq, n_frames) = cfg.stft_shape();
    let g = hann(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut values = vec![0.0; n_freq * n_frames];
    for j in 0..n_frames {
        let start = (j * cfg.stft_hop) as isize - pad as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = reflect_index(start + i as isize, window.len());
            *b = Complex64::new(window[idx] * g[i], 0.0);
        }
        fft.process(&mut buf);
        for (f, b) in buf.iter().take(n_freq).enumerate() {
            values[f * n_frames + j] = b.norm_sqr();
        }
    }
    Ok(PowerSpectrogram {
        n_freq,
        n_frames,
        values,
    })
}

/// Max normalization, floored log, then affine rescaling to [0, 1]:
/// `(log(p / max) - a) / max(log(p / max) - a)` with `a = min log(p / max)`.
///
/// Returns `None` for degenerate input (all zero, or no dynamic range).
pub fn normalize_log_power(power: &[f64], log_floor: f64) -> Option<Vec<f64>> {
    let max = power.iter().cloned().fold(0.0f64, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return None;
    }
    let logs: Vec<f64> = power
        .iter()
        .map(|&p| (p / max).max(log_floor).ln())
        .collect();
    let alpha = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = logs.iter().map(|l| l - alpha).collect();
    let top = shifted.iter().cloned().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return None;
    }
    Some(shifted.iter().map(|s| s / top).collect())
}

/// Drops the first frequency row and first time column, then normalizes the
/// retained block. Returns `(values, degenerate)`; degenerate blocks are all
/// zeros.
pub fn log_normalize(power: &PowerSpectrogram, cfg: &PipelineConfig) -> (Vec<f32>, bool) {
    let rows = power.n_freq - 1;
    let cols = power.n_frames - 1;
    let mut trimmed = Vec::with_capacity(rows * cols);
    for f in 1..power.n_freq {
        let row = &power.values[f * power.n_frames + 1..(f + 1) * power.n_frames];
        trimmed.extend_from_slice(row);
    }
    match normalize_log_power(&trimmed, cfg.log_floor) {
        Some(v) => (v.into_iter().map(|x| x as f32).collect(), false),
        None => (vec![0.0; rows * cols], true),
    }
}

fn channel_frames(
    samples: &[f32],
    rate_hz: f64,
    cfg: &PipelineConfig,
) -> Result<Vec<(Vec<f32>, bool)>, SignalError> {
    let x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    let x = if rate_hz == cfg.target_rate_hz {
        x
    } else {
        resample(&x, rate_hz, cfg.target_rate_hz)?
    };
    let z = standardize(&x)?;
    make_windows(&z, cfg.window_len, cfg.hop)
        .iter()
        .map(|w| stft_power(w, cfg).map(|p| log_normalize(&p, cfg)))
        .collect()
}

/// Number of samples a recording has after resampling to the target rate.
pub fn resampled_len(n_samples: usize, rate_hz: f64, cfg: &PipelineConfig) -> usize {
    if rate_hz == cfg.target_rate_hz {
        n_samples
    } else {
        ((n_samples as f64) * cfg.target_rate_hz / rate_hz).round() as usize
    }
}

/// Full chain for one aligned recording. Frames are ordered channel-major
/// (montage index), then by window. Absent channels yield absent-flag frames.
pub fn preprocess(
    recording: &AlignedRecording,
    montage: &Montage,
    cfg: &PipelineConfig,
) -> Result<Vec<SpectrogramFrame>, SignalError> {
    cfg.validate()?;
    if recording.sample_rate_hz < cfg.target_rate_hz {
        return Err(SignalError::UpsamplingRequested {
            from_hz: recording.sample_rate_hz,
            to_hz: cfg.target_rate_hz,
        });
    }
    let n_windows = window_offsets(
        resampled_len(recording.n_samples, recording.sample_rate_hz, cfg),
        cfg.window_len,
        cfg.hop,
    )
    .len();
    let (rows, cols) = cfg.output_shape();
    let per_channel: Vec<Result<Vec<SpectrogramFrame>, SignalError>> = (0..montage.len())
        .into_par_iter()
        .map(|c| {
            let make = |k: usize, values: Vec<f32>, absent: bool| SpectrogramFrame {
                rows,
                cols,
                values,
                channel_index: c,
                patient_id: recording.patient_id.clone(),
                population_id: recording.population_id.clone(),
                window_index: k,
                absent,
            };
            if !recording.presence.contains(c) {
                return Ok((0..n_windows)
                    .map(|k| make(k, vec![0.0; rows * cols], true))
                    .collect());
            }
            let frames = channel_frames(recording.row(c), recording.sample_rate_hz, cfg).map_err(
                |e| SignalError::Channel {
                    channel: montage.label(c).to_string(),
                    source: Box::new(e),
                },
            )?;
            Ok(frames
                .into_iter()
                .enumerate()
                .map(|(k, (v, degenerate))| make(k, v, degenerate))
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(montage.len() * n_windows);
    for r in per_channel {
        out.extend(r?);
    }
    Ok(out)
}
