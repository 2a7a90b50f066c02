//! Binary recording files.
//!
//! ```text
//! magic        [u8; 4] = b"XREC"
//! version      u32     = 1
//! n_channels   u32
//! n_samples    u64
//! sample_rate  f64
//! labels       n_channels x (u16 byte length, UTF-8 bytes)
//! samples      n_channels x n_samples f32, channel-major
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::CohortError;
use crate::montage::RawRecording;

pub const RECORDING_MAGIC: [u8; 4] = *b"XREC";
pub const RECORDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingHeader {
    pub n_channels: usize,
    pub n_samples: usize,
    pub sample_rate_hz: f64,
    pub labels: Vec<String>,
}

impl RecordingHeader {
    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate_hz
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> CohortError {
    CohortError::RecordingFormat {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CohortError + '_ {
    move |source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_recording(rec: &RawRecording) -> Vec<u8> {
    let n = rec.n_samples();
    let mut out = Vec::with_capacity(28 + rec.channels.len() * (8 + 4 * n));
    out.extend_from_slice(&RECORDING_MAGIC);
    out.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(rec.channels.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&rec.sample_rate_hz.to_le_bytes());
    for (label, _) in &rec.channels {
        out.extend_from_slice(&(label.len() as u16).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    for (_, samples) in &rec.channels {
        for v in samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_recording(path: &Path, rec: &RawRecording) -> Result<(), CohortError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(&encode_recording(rec)).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_header_from<R: Read>(r: &mut R, path: &Path) -> Result<RecordingHeader, CohortError> {
    let mut fixed = [0u8; 28];
    r.read_exact(&mut fixed)
        .map_err(|_| format_err(path, "truncated header"))?;
    if fixed[..4] != RECORDING_MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    if version != RECORDING_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let n_channels = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
    let n_samples = u64::from_le_bytes(fixed[12..20].try_into().unwrap()) as usize;
    let sample_rate_hz = f64::from_le_bytes(fixed[20..28].try_into().unwrap());
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        return Err(format_err(path, "sample rate must be positive"));
    }
    let mut labels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)
            .map_err(|_| format_err(path, "truncated label block"))?;
        let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut bytes)
            .map_err(|_| format_err(path, "truncated label block"))?;
        labels.push(String::from_utf8(bytes).map_err(|_| format_err(path, "label is not UTF-8"))?);
    }
    Ok(RecordingHeader {
        n_channels,
        n_samples,
        sample_rate_hz,
        labels,
    })
}

pub fn read_header(path: &Path) -> Result<RecordingHeader, CohortError> {
    let file = File::open(path).map_err(|_| CohortError::MissingRecording(path.to_path_buf()))?;
    read_header_from(&mut BufReader::new(file), path)
}

/// Reads a full recording; identity fields are supplied by the manifest.
pub fn read_recording(
    path: &Path,
    population_id: &str,
    patient_id: &str,
    label: u8,
) -> Result<RawRecording, CohortError> {
    let file = File::open(path).map_err(|_| CohortError::MissingRecording(path.to_path_buf()))?;
    let mut r = BufReader::new(file);
    let header = read_header_from(&mut r, path)?;
    let mut raw = vec![0u8; header.n_channels * header.n_samples * 4];
    r.read_exact(&mut raw)
        .map_err(|_| format_err(path, "truncated sample block"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(io_err(path))? != 0 {
        return Err(format_err(path, "trailing bytes after sample block"));
    }
    let stride = header.n_samples * 4;
    let channels = header
        .labels
        .into_iter()
        .enumerate()
        .map(|(c, l)| {
            let s = raw[c * stride..(c + 1) * stride]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            (l, s)
        })
        .collect();
    Ok(RawRecording {
        population_id: population_id.to_string(),
        patient_id: patient_id.to_string(),
        label,
        sample_rate_hz: header.sample_rate_hz,
        channels,
    })
}
