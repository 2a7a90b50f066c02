//! Synthetic multi-site cohorts with a planted disease rhythm and
//! site-specific nuisance structure.
//!
//! Every channel carries 1/f^beta background noise. Label-1 patients get an
//! extra band-limited oscillation on the informative channels. Each site then
//! applies its own gain, line-noise tone and spectral tilt to all channels,
//! so site identity is recoverable from any channel while the label is only
//! recoverable from the informative ones.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{
    write_manifest, write_recording, CohortError, CohortManifest, GroundTruth, PatientEntry,
    RecordingEntry,
};
use crate::montage::{Montage, RawRecording, REFERENCE_LABELS};
use crate::seed::{hash_str, mix, rng, splitmix};

/// The 19-electrode clinical 10-20 layout.
pub const STANDARD_10_20: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8", "P7", "P3", "Pz",
    "P4", "P8", "O1", "O2",
];

/// A common 32-electrode layout.
pub const STANDARD_32: [&str; 32] = [
    "Fp1", "Fp2", "AF3", "AF4", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7",
    "C3", "Cz", "C4", "T8", "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8", "PO3", "PO4",
    "O1", "Oz", "O2",
];

/// Site montage: a named preset or an explicit label list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MontageSpec {
    Preset(String),
    Labels(Vec<String>),
}

impl MontageSpec {
    /// Presets: `full65`, `full65_no_cpz`, `standard_10_20`, `standard_32`.
    pub fn labels(&self) -> Result<Vec<String>, CohortError> {
        let owned = |s: &[&str]| s.iter().map(|l| l.to_string()).collect();
        match self {
            MontageSpec::Labels(v) => Ok(v.clone()),
            MontageSpec::Preset(name) => match name.as_str() {
                "full65" => Ok(owned(&REFERENCE_LABELS)),
                "full65_no_cpz" => Ok(REFERENCE_LABELS
                    .iter()
                    .filter(|l| **l != "CPz")
                    .map(|l| l.to_string())
                    .collect()),
                "standard_10_20" => Ok(owned(&STANDARD_10_20)),
                "standard_32" => Ok(owned(&STANDARD_32)),
                other => Err(CohortError::Config(format!("unknown montage preset `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub population_id: String,
    pub n_control: usize,
    pub n_case: usize,
    pub sample_rate_hz: f64,
    pub montage: MontageSpec,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default = "fifty")]
    pub line_noise_hz: f64,
    #[serde(default)]
    pub line_noise_amp: f64,
    /// Added to the 1/f exponent of the background noise.
    #[serde(default)]
    pub spectral_tilt: f64,
    /// Per-patient uniform jitter of the tilt, +/- this value.
    #[serde(default)]
    pub tilt_jitter: f64,
    /// Overrides the corpus-wide duration range.
    #[serde(default)]
    pub duration_s: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}
fn fifty() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub base_seed: u64,
    pub duration_s: [f64; 2],
    pub informative_channels: Vec<String>,
    pub informative_band_hz: [f64; 2],
    pub effect_size: f64,
    /// Label-independent rhythm in the informative band on every channel,
    /// with a per-patient amplitude drawn uniformly from [0, background_amp].
    pub background_amp: f64,
    pub sites: Vec<SiteConfig>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let site = |id: &str, nc, np, rate, montage: &str, gain, line, tilt, jitter| SiteConfig {
            population_id: id.to_string(),
            n_control: nc,
            n_case: np,
            sample_rate_hz: rate,
            montage: MontageSpec::Preset(montage.to_string()),
            gain,
            line_noise_hz: line,
            line_noise_amp: 0.5,
            spectral_tilt: tilt,
            tilt_jitter: jitter,
            duration_s: None,
        };
        let mut p4 = site("P4", 7, 7, 128.0, "standard_10_20", 0.5, 60.0, 0.3, 0.1);
        p4.duration_s = Some([270.0, 300.0]);
        SyntheticConfig {
            base_seed: 10,
            duration_s: [40.0, 120.0],
            informative_channels: ["P3", "Pz", "P4", "O1"].map(String::from).to_vec(),
            informative_band_hz: [8.0, 12.0],
            effect_size: 2.0,
            background_amp: 0.6,
            sites: vec![
                site("P1", 7, 7, 128.0, "full65_no_cpz", 1.0, 60.0, 0.0, 0.3),
                site("P2", 8, 8, 200.0, "standard_32", 2.0, 50.0, -0.3, 0.2),
                site("P3", 6, 6, 160.0, "standard_32", 0.7, 60.0, 0.5, 0.1),
                p4,
                site("P5", 5, 5, 128.0, "full65", 1.5, 50.0, -0.5, 0.1),
            ],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self, montage: &Montage) -> Result<(), CohortError> {
        let err = |m: String| Err(CohortError::Config(m));
        if self.sites.is_empty() {
            return err("at least one site is required".into());
        }
        let [lo, hi] = self.duration_s;
        if !(lo > 0.0 && hi >= lo) {
            return err("duration_s must be a positive, ordered range".into());
        }
        let [blo, bhi] = self.informative_band_hz;
        if !(blo >= 0.0 && bhi > blo) {
            return err("informative_band_hz must be an ordered range".into());
        }
        if !(self.effect_size >= 0.0) || !(self.background_amp >= 0.0) {
            return err("effect_size and background_amp must be non-negative".into());
        }
        for ch in &self.informative_channels {
            if montage.index_of(ch).is_none() {
                return err(format!("informative channel `{ch}` is not a reference label"));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for site in &self.sites {
            if !ids.insert(site.population_id.as_str()) {
                return err(format!("duplicate population `{}`", site.population_id));
            }
            if site.n_control == 0 || site.n_case == 0 {
                return err(format!("{}: patient counts must be positive", site.population_id));
            }
            if !(site.sample_rate_hz > 0.0) || !(site.gain > 0.0) {
                return err(format!("{}: rate and gain must be positive", site.population_id));
            }
            if let Some([a, b]) = site.duration_s {
                if !(a > 0.0 && b >= a) {
                    return err(format!("{}: bad duration range", site.population_id));
                }
            }
            let labels = site.montage.labels()?;
            for l in &labels {
                if montage.index_of(l).is_none() {
                    return err(format!("{}: unknown channel `{l}`", site.population_id));
                }
            }
            for ch in &self.informative_channels {
                if !labels.iter().any(|l| l.eq_ignore_ascii_case(ch)) {
                    return err(format!(
                        "{}: informative channel `{ch}` missing from site montage",
                        site.population_id
                    ));
                }
            }
            if bhi * 2.0 > site.sample_rate_hz {
                return err(format!("{}: informative band above Nyquist", site.population_id));
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            informative_channels: self.informative_channels.clone(),
            informative_band_hz: self.informative_band_hz,
            effect_size: self.effect_size,
        }
    }
}

fn gaussian_spectrum(rng: &mut impl Rng, n: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

/// Shapes white noise in the frequency domain by `gain(f)` and returns a
/// unit-variance real signal.
fn shaped_noise(
    rng: &mut impl Rng,
    n: usize,
    rate: f64,
    planner: &mut FftPlanner<f64>,
    gain: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut spec = gaussian_spectrum(rng, n, planner);
    for (k, c) in spec.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * rate / n as f64;
        *c *= gain(f);
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; n]
    }
}

fn patient_seed(base: u64, population: &str, patient: &str) -> u64 {
    mix(mix(base, hash_str(population)), splitmix(hash_str(patient)))
}

struct PatientPlan<'a> {
    site: &'a SiteConfig,
    labels: &'a [String],
    patient_id: String,
    label: u8,
}

fn synthesize_patient(cfg: &SyntheticConfig, p: &PatientPlan<'_>) -> RawRecording {
    let site = p.site;
    let mut rng = rng(patient_seed(cfg.base_seed, &site.population_id, &p.patient_id));
    let [lo, hi] = site.duration_s.unwrap_or(cfg.duration_s);
    let duration = lo + (hi - lo) * rng.random::<f64>();
    let rate = site.sample_rate_hz;
    let n = (duration * rate).round().max(2.0) as usize;
    let beta = 1.0 + site.spectral_tilt + site.tilt_jitter * (2.0 * rng.random::<f64>() - 1.0);
    let background = cfg.background_amp * rng.random::<f64>();
    let phase = 2.0 * PI * (splitmix(hash_str(&site.population_id)) as f64 / u64::MAX as f64);
    let [blo, bhi] = cfg.informative_band_hz;
    let band = |f: f64| if f >= blo && f <= bhi { 1.0 } else { 0.0 };
    let pink = |f: f64| if f == 0.0 { 0.0 } else { f.max(0.5).powf(-beta / 2.0) };

    let mut planner = FftPlanner::<f64>::new();
    let channels = p
        .labels
        .iter()
        .map(|label| {
            let mut x = shaped_noise(&mut rng, n, rate, &mut planner, pink);
            let rhythm = shaped_noise(&mut rng, n, rate, &mut planner, band);
            let informative = cfg
                .informative_channels
                .iter()
                .any(|c| c.eq_ignore_ascii_case(label));
            let amp = background
                + if p.label == 1 && informative {
                    cfg.effect_size
                } else {
                    0.0
                };
            let samples = x
                .iter_mut()
                .zip(&rhythm)
                .enumerate()
                .map(|(t, (v, r))| {
                    let line = site.line_noise_amp
                        * (2.0 * PI * site.line_noise_hz * t as f64 / rate + phase).sin();
                    (site.gain * (*v + amp * r) + line) as f32
                })
                .collect();
            (label.clone(), samples)
        })
        .collect();
    RawRecording {
        population_id: site.population_id.clone(),
        patient_id: p.patient_id.clone(),
        label: p.label,
        sample_rate_hz: rate,
        channels,
    }
}

/// Writes one manifest per site (`<out>/<population>.json`) and one
/// recording per patient (`<out>/<population>/<patient>.xrec`).
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
    montage: &Montage,
    out_dir: &Path,
) -> Result<Vec<CohortManifest>, CohortError> {
    cfg.validate(montage)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CohortError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut manifests = Vec::with_capacity(cfg.sites.len());
    for site in &cfg.sites {
        let labels: Vec<String> = site
            .montage
            .labels()?
            .iter()
            .map(|l| montage.canonical(l).unwrap().to_string())
            .collect();
        let plans: Vec<PatientPlan<'_>> = (0..site.n_control + site.n_case)
            .map(|i| {
                let label = (i >= site.n_control) as u8;
                PatientPlan {
                    site,
                    labels: &labels,
                    patient_id: format!(
                        "{}-{}{:03}",
                        site.population_id,
                        if label == 1 { "c" } else { "h" },
                        i
                    ),
                    label,
                }
            })
            .collect();
        let patients = plans
            .par_iter()
            .map(|p| {
                let rec = synthesize_patient(cfg, p);
                let rel = Path::new(&site.population_id).join(format!("{}.xrec", p.patient_id));
                write_recording(&out_dir.join(&rel), &rec)?;
                Ok(PatientEntry {
                    patient_id: p.patient_id.clone(),
                    label: p.label,
                    recordings: vec![RecordingEntry {
                        path: rel,
                        n_samples: Some(rec.n_samples()),
                        n_channels: Some(rec.channels.len()),
                    }],
                })
            })
            .collect::<Result<Vec<_>, CohortError>>()?;
        let manifest = CohortManifest {
            population_id: site.population_id.clone(),
            sample_rate_hz: site.sample_rate_hz,
            site_montage: labels,
            patients,
            ground_truth: Some(cfg.ground_truth()),
            base_dir: out_dir.to_path_buf(),
        };
        write_manifest(&out_dir.join(format!("{}.json", site.population_id)), &manifest)?;
        manifests.push(manifest);
    }
    Ok(manifests)
}
