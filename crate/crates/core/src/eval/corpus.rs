use std::collections::HashMap;

use rayon::prelude::*;

use super::EvalError;
use crate::classifier::{ModelSpec, Sample};
use crate::cohort::{read_recording, CohortManifest};
use crate::montage::{align, ChannelMask, Montage, RawRecording, N_CHANNELS};
use crate::signal::{preprocess, PipelineConfig};

#[derive(Debug, Clone)]
pub struct PopulationData {
    pub id: String,
    /// Corpus-wide patient keys.
    pub patients: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PatientData {
    pub key: usize,
    pub patient_id: String,
    pub population: usize,
    pub label: u8,
    /// Channels recorded in at least one of the patient's recordings.
    pub present: ChannelMask,
    pub n_windows: usize,
    /// `encoded[e]` holds the frames encoded for spec `e`, ordered by
    /// channel then window (`N_CHANNELS * n_windows` samples).
    pub encoded: Vec<Vec<Sample>>,
}

/// Preprocessed, model-encoded frames of every patient, held in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub populations: Vec<PopulationData>,
    pub patients: Vec<PatientData>,
    pub specs: Vec<ModelSpec>,
}

impl Corpus {
    /// Builds the corpus from recordings, grouped into populations and
    /// patients in order of first appearance.
    pub fn from_recordings<I>(
        recordings: I,
        montage: &Montage,
        cfg: &PipelineConfig,
        specs: &[ModelSpec],
    ) -> Result<Corpus, EvalError>
    where
        I: IntoIterator<Item = Result<RawRecording, EvalError>>,
    {
        let bin_hz = cfg.bin_hz();
        let mut populations: Vec<PopulationData> = Vec::new();
        let mut patients: Vec<PatientData> = Vec::new();
        // Per patient, per spec, per channel: samples in window order.
        let mut pending: Vec<Vec<Vec<Vec<Sample>>>> = Vec::new();
        let mut pop_index: HashMap<String, usize> = HashMap::new();
        let mut patient_index: HashMap<(usize, String), usize> = HashMap::new();

        for rec in recordings {
            let rec = rec?;
            let pop = *pop_index.entry(rec.population_id.clone()).or_insert_with(|| {
                populations.push(PopulationData {
                    id: rec.population_id.clone(),
                    patients: Vec::new(),
                });
                populations.len() - 1
            });
            let key = *patient_index
                .entry((pop, rec.patient_id.clone()))
                .or_insert_with(|| {
                    let key = patients.len();
                    populations[pop].patients.push(key);
                    patients.push(PatientData {
                        key,
                        patient_id: rec.patient_id.clone(),
                        population: pop,
                        label: rec.label,
                        present: ChannelMask::default(),
                        n_windows: 0,
                        encoded: Vec::new(),
                    });
                    pending.push(vec![vec![Vec::new(); N_CHANNELS]; specs.len()]);
                    key
                });
            let aligned = align(&rec, montage)?;
            let frames = preprocess(&aligned, montage, cfg)?;
            let window_base = patients[key].n_windows;
            let n_windows = frames.len() / N_CHANNELS;
            for (e, spec) in specs.iter().enumerate() {
                let samples: Vec<Sample> = frames
                    .par_iter()
                    .map(|f| {
                        Ok(Sample {
                            patient: key,
                            channel: f.channel_index,
                            window: window_base + f.window_index,
                            label: rec.label,
                            present: aligned.presence.contains(f.channel_index),
                            x: spec.encode(f, bin_hz)?,
                        })
                    })
                    .collect::<Result<_, EvalError>>()?;
                for s in samples {
                    pending[key][e][s.channel].push(s);
                }
            }
            let p = &mut patients[key];
            p.present = p.present.union(aligned.presence);
            p.n_windows += n_windows;
        }

        for (p, per_spec) in patients.iter_mut().zip(pending) {
            p.encoded = per_spec.into_iter().map(|chs| chs.concat()).collect();
        }
        Ok(Corpus {
            populations,
            patients,
            specs: specs.to_vec(),
        })
    }

    /// Reads every recording listed in the manifests.
    pub fn load(
        manifests: &[CohortManifest],
        montage: &Montage,
        cfg: &PipelineConfig,
        specs: &[ModelSpec],
    ) -> Result<Corpus, EvalError> {
        let recordings = manifests.iter().flat_map(|m| {
            m.patients.iter().flat_map(move |p| {
                p.recordings.iter().map(move |r| {
                    read_recording(&m.resolve(r), &m.population_id, &p.patient_id, p.label)
                        .map_err(EvalError::from)
                })
            })
        });
        let corpus = Corpus::from_recordings(recordings, montage, cfg, specs)?;
        log::info!(
            "loaded {} patients in {} populations",
            corpus.patients.len(),
            corpus.populations.len()
        );
        Ok(corpus)
    }

    pub fn population_ids(&self) -> Vec<String> {
        self.populations.iter().map(|p| p.id.clone()).collect()
    }

    pub fn spec_index(&self, spec: &ModelSpec) -> Option<usize> {
        self.specs.iter().position(|s| s == spec)
    }

    /// Samples of one patient's channel under encoding `enc`.
    pub fn channel_samples(&self, enc: usize, patient: usize, channel: usize) -> &[Sample] {
        let p = &self.patients[patient];
        &p.encoded[enc][channel * p.n_windows..(channel + 1) * p.n_windows]
    }
}
