//! Unified 65-channel reference montage and recording alignment.
//!
//! The reference ordering runs anterior to posterior; within each row the
//! left-hemisphere (odd-numbered) electrodes come first from lateral to
//! medial, then the midline (`z`) electrode, then the right-hemisphere
//! (even-numbered) electrodes from medial to lateral. The normative list is
//! [`REFERENCE_LABELS`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of channels in the reference montage.
pub const N_CHANNELS: usize = 65;

/// Canonical reference labels, in index order.
pub const REFERENCE_LABELS: [&str; N_CHANNELS] = [
    "Nz", //
    "Fp1", "Fpz", "Fp2", //
    "AF7", "AF3", "AFz", "AF4", "AF8", //
    "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8", //
    "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", //
    "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8", //
    "TP9", "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "TP10", //
    "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", //
    "PO7", "PO3", "POz", "PO4", "PO8", //
    "O1", "Oz", "O2", //
    "Iz",
];

/// Row boundaries (start index of each anterior-posterior row) in
/// [`REFERENCE_LABELS`], with a final sentinel.
const ROW_STARTS: [usize; 12] = [0, 1, 4, 9, 18, 27, 36, 47, 56, 61, 64, 65];

#[derive(Debug, Error, PartialEq)]
pub enum MontageError {
    #[error("channel label `{0}` is not part of the reference montage")]
    UnknownChannelLabel(String),
    #[error("channel `{label}` has {found} samples, expected {expected}")]
    InconsistentChannelLengths {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("channel `{0}` appears more than once in the recording")]
    DuplicateChannel(String),
    #[error("label `{0}` has no hemisphere suffix")]
    NoHemisphere(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Frontal,
    Central,
    Temporal,
    Parietal,
    Occipital,
    MidlineExtension,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::Frontal => "frontal",
            Region::Central => "central",
            Region::Temporal => "temporal",
            Region::Parietal => "parietal",
            Region::Occipital => "occipital",
            Region::MidlineExtension => "midline-extension",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hemisphere {
    Left,
    Midline,
    Right,
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hemisphere::Left => "left",
            Hemisphere::Midline => "midline",
            Hemisphere::Right => "right",
        };
        f.write_str(s)
    }
}

/// Hemisphere of a 10-20 style label: trailing `z` is midline, otherwise the
/// parity of the trailing electrode number decides (odd left, even right).
pub fn hemisphere_of_label(label: &str) -> Result<Hemisphere, MontageError> {
    if label.ends_with('z') || label.ends_with('Z') {
        return Ok(Hemisphere::Midline);
    }
    let digits: String = label
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let number: u32 = digits
        .parse()
        .map_err(|_| MontageError::NoHemisphere(label.to_string()))?;
    Ok(if number % 2 == 1 {
        Hemisphere::Left
    } else {
        Hemisphere::Right
    })
}

fn region_of_label(label: &str) -> Region {
    let prefix: String = label
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase();
    let prefix = prefix.trim_end_matches('Z');
    match prefix {
        "N" | "I" => Region::MidlineExtension,
        "FP" | "AF" | "F" => Region::Frontal,
        "FC" | "C" => Region::Central,
        "FT" | "T" | "TP" => Region::Temporal,
        "CP" | "P" => Region::Parietal,
        "PO" | "O" => Region::Occipital,
        other => unreachable!("reference label prefix `{other}`"),
    }
}

/// The reference montage. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Montage {
    labels: Vec<String>,
    index_of: HashMap<String, usize>,
    regions: Vec<Region>,
    hemispheres: Vec<Hemisphere>,
}

/// Builds the canonical 65-label montage.
pub fn build_reference_montage() -> Montage {
    let labels: Vec<String> = REFERENCE_LABELS.iter().map(|s| s.to_string()).collect();
    let index_of = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.to_ascii_uppercase(), i))
        .collect();
    let regions = labels.iter().map(|l| region_of_label(l)).collect();
    let hemispheres = labels
        .iter()
        .map(|l| hemisphere_of_label(l).expect("reference labels carry a hemisphere"))
        .collect();
    Montage {
        labels,
        index_of,
        regions,
        hemispheres,
    }
}

impl Default for Montage {
    fn default() -> Self {
        build_reference_montage()
    }
}

impl Montage {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Case-insensitive lookup of a label's reference index.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index_of.get(&label.to_ascii_uppercase()).copied()
    }

    /// Canonical capitalization of a label, if known.
    pub fn canonical(&self, label: &str) -> Option<&str> {
        self.index_of(label).map(|i| self.labels[i].as_str())
    }

    pub fn region(&self, index: usize) -> Region {
        self.regions[index]
    }

    pub fn hemisphere(&self, index: usize) -> Hemisphere {
        self.hemispheres[index]
    }

    /// Hemisphere for a label, looked up case-insensitively.
    pub fn hemisphere_of(&self, label: &str) -> Result<Hemisphere, MontageError> {
        self.index_of(label)
            .map(|i| self.hemispheres[i])
            .ok_or_else(|| MontageError::UnknownChannelLabel(label.to_string()))
    }

    /// Anterior-posterior row of a channel and its position within the row.
    pub fn grid_position(&self, index: usize) -> (usize, usize, usize) {
        let row = ROW_STARTS.windows(2).position(|w| index < w[1]).unwrap();
        let start = ROW_STARTS[row];
        let len = ROW_STARTS[row + 1] - start;
        (row, index - start, len)
    }

    pub fn n_rows(&self) -> usize {
        ROW_STARTS.len() - 1
    }

    /// Tab-separated table: index, label, region, hemisphere.
    pub fn to_table(&self) -> String {
        let mut out = String::from("index\tlabel\tregion\themisphere\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                i, self.labels[i], self.regions[i], self.hemispheres[i]
            ));
        }
        out
    }
}

/// Set of reference channels, one bit per montage index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelMask(pub u128);

impl ChannelMask {
    pub fn all() -> Self {
        ChannelMask((1u128 << N_CHANNELS) - 1)
    }

    pub fn contains(&self, index: usize) -> bool {
        index < 128 && self.0 >> index & 1 == 1
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1u128 << index;
    }

    pub fn count(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: ChannelMask) -> ChannelMask {
        ChannelMask(self.0 | other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..N_CHANNELS).filter(move |&i| self.contains(i))
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut m = ChannelMask::default();
        for i in indices {
            m.insert(i);
        }
        m
    }
}

/// One recording as delivered by a site, before alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub population_id: String,
    pub patient_id: String,
    pub label: u8,
    pub sample_rate_hz: f64,
    /// Channel label and samples, in site order.
    pub channels: Vec<(String, Vec<f32>)>,
}

impl RawRecording {
    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, |(_, s)| s.len())
    }
}

/// A recording projected onto the reference montage.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRecording {
    pub population_id: String,
    pub patient_id: String,
    pub label: u8,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    /// Row-major `N_CHANNELS x n_samples`.
    pub matrix: Vec<f32>,
    pub presence: ChannelMask,
}

impl AlignedRecording {
    pub fn row(&self, channel: usize) -> &[f32] {
        &self.matrix[channel * self.n_samples..(channel + 1) * self.n_samples]
    }

    /// Converts present rows back into a raw recording with canonical labels.
    pub fn to_raw(&self, montage: &Montage) -> RawRecording {
        RawRecording {
            population_id: self.population_id.clone(),
            patient_id: self.patient_id.clone(),
            label: self.label,
            sample_rate_hz: self.sample_rate_hz,
            channels: self
                .presence
                .iter()
                .map(|c| (montage.label(c).to_string(), self.row(c).to_vec()))
                .collect(),
        }
    }
}

/// Places each channel of `recording` at its reference row; absent rows are
/// zero. No interpolation is performed.
pub fn align(recording: &RawRecording, montage: &Montage) -> Result<AlignedRecording, MontageError> {
    let n_samples = recording.n_samples();
    let mut matrix = vec![0.0f32; montage.len() * n_samples];
    let mut presence = ChannelMask::default();
    for (label, samples) in &recording.channels {
        let idx = montage
            .index_of(label)
            .ok_or_else(|| MontageError::UnknownChannelLabel(label.clone()))?;
        if samples.len() != n_samples {
            return Err(MontageError::InconsistentChannelLengths {
                label: label.clone(),
                expected: n_samples,
                found: samples.len(),
            });
        }
        if presence.contains(idx) {
            return Err(MontageError::DuplicateChannel(montage.label(idx).to_string()));
        }
        presence.insert(idx);
        matrix[idx * n_samples..(idx + 1) * n_samples].copy_from_slice(samples);
    }
    Ok(AlignedRecording {
        population_id: recording.population_id.clone(),
        patient_id: recording.patient_id.clone(),
        label: recording.label,
        sample_rate_hz: recording.sample_rate_hz,
        n_samples,
        matrix,
        presence,
    })
}
