use serde::{Deserialize, Serialize};

use super::CohortManifest;
use crate::signal::{resampled_len, window_offsets, PipelineConfig};

/// Per-population composition after windowing. Frame counts cover channels
/// actually recorded (absent-channel frames are not counted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub population_id: String,
    pub n_patients: usize,
    pub n_control: usize,
    pub n_case: usize,
    pub n_frames: usize,
    pub frames_control: usize,
    pub frames_case: usize,
    pub frames_per_patient_mean: f64,
    pub frames_per_patient_sd: f64,
    pub minutes_median: f64,
    pub minutes_min: f64,
    pub minutes_max: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Composition table computed from recording lengths; frame counts follow
/// the windowing rule of the pipeline configuration.
pub fn corpus_stats(manifests: &[CohortManifest], cfg: &PipelineConfig) -> Vec<PopulationStats> {
    manifests
        .iter()
        .filter(|m| !m.patients.is_empty())
        .map(|m| {
            let mut frames = Vec::with_capacity(m.patients.len());
            let mut minutes = Vec::with_capacity(m.patients.len());
            let (mut fc, mut fp) = (0, 0);
            for p in &m.patients {
                let mut f = 0;
                let mut secs = 0.0;
                for r in &p.recordings {
                    let n = r.n_samples.unwrap_or(0);
                    let channels = r.n_channels.unwrap_or(m.site_montage.len());
                    let len = resampled_len(n, m.sample_rate_hz, cfg);
                    f += channels * window_offsets(len, cfg.window_len, cfg.hop).len();
                    secs += m.duration_s(r);
                }
                if p.label == 1 {
                    fp += f;
                } else {
                    fc += f;
                }
                frames.push(f as f64);
                minutes.push(secs / 60.0);
            }
            let n = frames.len() as f64;
            let mean = frames.iter().sum::<f64>() / n;
            let sd = if frames.len() > 1 {
                (frames.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            minutes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (n_control, n_case) = m.label_counts();
            PopulationStats {
                population_id: m.population_id.clone(),
                n_patients: m.patients.len(),
                n_control,
                n_case,
                n_frames: fc + fp,
                frames_control: fc,
                frames_case: fp,
                frames_per_patient_mean: mean,
                frames_per_patient_sd: sd,
                minutes_median: median(&minutes),
                minutes_min: minutes[0],
                minutes_max: *minutes.last().unwrap(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{PatientEntry, RecordingEntry};
    use std::path::PathBuf;

    fn one_patient(n_samples: usize, channels: usize) -> CohortManifest {
        CohortManifest {
            population_id: "P".into(),
            sample_rate_hz: 64.0,
            site_montage: vec![],
            patients: vec![PatientEntry {
                patient_id: "a".into(),
                label: 1,
                recordings: vec![RecordingEntry {
                    path: PathBuf::from("a.xrec"),
                    n_samples: Some(n_samples),
                    n_channels: Some(channels),
                }],
            }],
            ground_truth: None,
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn single_window_single_patient() {
        let s = corpus_stats(&[one_patient(16384, 65)], &PipelineConfig::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n_frames, 65);
        assert_eq!(s[0].frames_case, 65);
        assert_eq!(s[0].frames_per_patient_sd, 0.0);
        assert!((s[0].minutes_median - 16384.0 / 64.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn small_cohort_frame_scale() {
        // 17 patients, 4 channels and 25 windows each: 100 frames per patient.
        let len = 16384 + 24 * 8192;
        let mut m = one_patient(len, 4);
        let template = m.patients[0].clone();
        m.patients = (0..17)
            .map(|i| PatientEntry {
                patient_id: format!("p{i}"),
                label: u8::from(i >= 4),
                ..template.clone()
            })
            .collect();
        let s = &corpus_stats(&[m], &PipelineConfig::default())[0];
        assert_eq!((s.n_control, s.n_case), (4, 13));
        assert_eq!(s.frames_per_patient_mean, 100.0);
        assert_eq!(s.n_frames, 1700);
    }

    #[test]
    fn empty_input_empty_table() {
        assert!(corpus_stats(&[], &PipelineConfig::default()).is_empty());
    }

    #[test]
    fn two_windows_double_frames() {
        let s = corpus_stats(&[one_patient(24576, 32)], &PipelineConfig::default());
        assert_eq!(s[0].n_frames, 64);
    }
}
