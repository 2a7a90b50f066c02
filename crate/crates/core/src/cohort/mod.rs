//! Multi-population corpora: manifests, recording files, eligibility
//! filtering, a synthetic cohort generator and corpus statistics.

mod recording;
mod stats;
mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montage::Montage;

pub use recording::{
    encode_recording, read_header, read_recording, write_recording, RecordingHeader,
    RECORDING_MAGIC, RECORDING_VERSION,
};
pub use stats::{corpus_stats, PopulationStats};
pub use synth::{
    generate_synthetic, MontageSpec, SiteConfig, SyntheticConfig, STANDARD_10_20, STANDARD_32,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot parse manifest: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("duplicate patient id `{0}`")]
    DuplicatePatient(String),
    #[error("recording not found: {0}")]
    MissingRecording(PathBuf),
    #[error("{path}: {msg}")]
    RecordingFormat { path: PathBuf, msg: String },
    #[error("patient `{patient}`: label {label} is not 0 or 1")]
    BadLabel { patient: String, label: u8 },
    #[error("{path}: channel `{channel}` is not in the site montage")]
    ChannelNotInSiteMontage { path: PathBuf, channel: String },
    #[error("{path}: sample rate {found} Hz differs from manifest {expected} Hz")]
    RateMismatch {
        path: PathBuf,
        expected: f64,
        found: f64,
    },
    #[error("{path}: header says {found} samples, manifest says {expected}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub informative_channels: Vec<String>,
    pub informative_band_hz: [f64; 2],
    pub effect_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_channels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientEntry {
    pub patient_id: String,
    pub label: u8,
    pub recordings: Vec<RecordingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortManifest {
    pub population_id: String,
    pub sample_rate_hz: f64,
    pub site_montage: Vec<String>,
    pub patients: Vec<PatientEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CohortManifest {
    pub fn resolve(&self, entry: &RecordingEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// (controls, cases) at the patient level.
    pub fn label_counts(&self) -> (usize, usize) {
        let cases = self.patients.iter().filter(|p| p.label == 1).count();
        (self.patients.len() - cases, cases)
    }

    pub fn duration_s(&self, entry: &RecordingEntry) -> f64 {
        entry.n_samples.unwrap_or(0) as f64 / self.sample_rate_hz
    }
}

/// Loads and validates a manifest: unique patient ids, binary labels, and
/// every recording present, parseable and consistent with the site montage.
pub fn load_manifest(path: &Path) -> Result<CohortManifest, CohortError> {
    let text = std::fs::read_to_string(path).map_err(|source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut manifest: CohortManifest =
        serde_json::from_str(&text).map_err(|e| CohortError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if !(manifest.sample_rate_hz > 0.0) {
        return Err(CohortError::Parse {
            path: path.to_path_buf(),
            msg: "sample_rate_hz must be positive".into(),
        });
    }
    let site: BTreeSet<String> = manifest
        .site_montage
        .iter()
        .map(|l| l.to_ascii_uppercase())
        .collect();
    let mut seen = BTreeSet::new();
    for patient in &mut manifest.patients {
        if !seen.insert(patient.patient_id.clone()) {
            return Err(CohortError::DuplicatePatient(patient.patient_id.clone()));
        }
        if patient.label > 1 {
            return Err(CohortError::BadLabel {
                patient: patient.patient_id.clone(),
                label: patient.label,
            });
        }
    }
    let base = manifest.base_dir.clone();
    let rate = manifest.sample_rate_hz;
    for patient in &mut manifest.patients {
        for entry in &mut patient.recordings {
            let full = if entry.path.is_absolute() {
                entry.path.clone()
            } else {
                base.join(&entry.path)
            };
            let header = read_header(&full)?;
            if let Some(ch) = header
                .labels
                .iter()
                .find(|l| !site.contains(&l.to_ascii_uppercase()))
            {
                return Err(CohortError::ChannelNotInSiteMontage {
                    path: full,
                    channel: ch.clone(),
                });
            }
            if header.sample_rate_hz != rate {
                return Err(CohortError::RateMismatch {
                    path: full,
                    expected: rate,
                    found: header.sample_rate_hz,
                });
            }
            if let Some(n) = entry.n_samples {
                if n != header.n_samples {
                    return Err(CohortError::LengthMismatch {
                        path: full,
                        expected: n,
                        found: header.n_samples,
                    });
                }
            }
            entry.n_samples = Some(header.n_samples);
            entry.n_channels = Some(header.n_channels);
        }
    }
    Ok(manifest)
}

/// Checks that patient ids are unique across the whole corpus.
pub fn validate_corpus(manifests: &[CohortManifest]) -> Result<(), CohortError> {
    let mut seen = BTreeSet::new();
    for m in manifests {
        for p in &m.patients {
            if !seen.insert(p.patient_id.as_str()) {
                return Err(CohortError::DuplicatePatient(p.patient_id.clone()));
            }
        }
    }
    Ok(())
}

/// Checks that every manifest's site montage uses reference labels.
pub fn validate_site_montages(manifests: &[CohortManifest], montage: &Montage) -> Result<(), CohortError> {
    for m in manifests {
        if let Some(l) = m.site_montage.iter().find(|l| montage.index_of(l).is_none()) {
            return Err(CohortError::ChannelNotInSiteMontage {
                path: m.base_dir.clone(),
                channel: l.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub population_id: String,
    pub patient_id: String,
    pub path: PathBuf,
    pub duration_s: f64,
}

/// Removes recordings shorter than `min_seconds` (inclusive boundary keeps
/// exactly `min_seconds`) and patients left without recordings.
pub fn filter_eligible(manifest: &CohortManifest, min_seconds: f64) -> (CohortManifest, Vec<Exclusion>) {
    let mut out = manifest.clone();
    let mut excluded = Vec::new();
    for patient in &mut out.patients {
        patient.recordings.retain(|r| {
            let d = manifest.duration_s(r);
            let keep = d >= min_seconds;
            if !keep {
                excluded.push(Exclusion {
                    population_id: manifest.population_id.clone(),
                    patient_id: patient.patient_id.clone(),
                    path: r.path.clone(),
                    duration_s: d,
                });
            }
            keep
        });
    }
    let before = out.patients.len();
    out.patients.retain(|p| !p.recordings.is_empty());
    for e in &excluded {
        info!(
            "{}: excluded {} ({:.2} s < {} s)",
            e.population_id,
            e.path.display(),
            e.duration_s,
            min_seconds
        );
    }
    if out.patients.len() < before {
        info!(
            "{}: {} patient(s) removed with no eligible recordings",
            out.population_id,
            before - out.patients.len()
        );
    }
    (out, excluded)
}

/// Writes a manifest as pretty JSON into `path`.
pub fn write_manifest(path: &Path, manifest: &CohortManifest) -> Result<(), CohortError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n").map_err(|source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::RawRecording;

    fn write_rec(dir: &Path, name: &str, seconds: usize, rate: f64) -> RecordingEntry {
        let n = (seconds as f64 * rate) as usize;
        let rec = RawRecording {
            population_id: "P5".into(),
            patient_id: name.into(),
            label: 0,
            sample_rate_hz: rate,
            channels: vec![("Cz".into(), (0..n).map(|i| (i % 7) as f32).collect())],
        };
        write_recording(&dir.join(format!("{name}.xrec")), &rec).unwrap();
        RecordingEntry {
            path: format!("{name}.xrec").into(),
            n_samples: None,
            n_channels: None,
        }
    }

    fn manifest(dir: &Path, controls: usize, cases: usize) -> CohortManifest {
        let patients = (0..controls + cases)
            .map(|i| PatientEntry {
                patient_id: format!("P5-{i:02}"),
                label: (i >= controls) as u8,
                recordings: vec![write_rec(dir, &format!("P5-{i:02}"), 31, 10.0)],
            })
            .collect();
        CohortManifest {
            population_id: "P5".into(),
            sample_rate_hz: 10.0,
            site_montage: vec!["Cz".into(), "Pz".into()],
            patients,
            ground_truth: None,
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn loads_valid_manifest_with_label_balance() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path(), 4, 13);
        let path = dir.path().join("P5.json");
        write_manifest(&path, &m).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.patients.len(), 17);
        assert_eq!(loaded.label_counts(), (4, 13));
        assert_eq!(loaded.patients[0].recordings[0].n_samples, Some(310));
    }

    #[test]
    fn duplicate_patient_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), 1, 1);
        m.patients[1].patient_id = m.patients[0].patient_id.clone();
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        assert!(matches!(load_manifest(&path), Err(CohortError::DuplicatePatient(_))));
    }

    #[test]
    fn missing_recording_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), 1, 1);
        m.patients[0].recordings[0].path = "nope.xrec".into();
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        assert!(matches!(load_manifest(&path), Err(CohortError::MissingRecording(_))));
    }

    #[test]
    fn malformed_manifest_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_manifest(&path), Err(CohortError::Parse { .. })));
    }

    #[test]
    fn global_uniqueness() {
        let dir = tempfile::tempdir().unwrap();
        let a = manifest(dir.path(), 1, 1);
        let b = a.clone();
        assert!(matches!(validate_corpus(&[a, b]), Err(CohortError::DuplicatePatient(_))));
    }

    #[test]
    fn eligibility_boundary() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), 0, 3);
        m.base_dir = dir.path().to_path_buf();
        m.patients[0].recordings = vec![write_rec(dir.path(), "short", 29, 10.0)];
        m.patients[1].recordings = vec![write_rec(dir.path(), "exact", 30, 10.0)];
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        let loaded = load_manifest(&path).unwrap();
        let (kept, excluded) = filter_eligible(&loaded, 30.0);
        assert_eq!(kept.patients.len(), 2);
        assert_eq!(excluded.len(), 1);
        assert_eq!(excluded[0].path, PathBuf::from("short.xrec"));
        assert!(kept.patients.iter().any(|p| p.recordings[0].path == Path::new("exact.xrec")));

        let (same, none) = filter_eligible(&kept, 30.0);
        assert_eq!(same, kept);
        assert!(none.is_empty());
    }
}
