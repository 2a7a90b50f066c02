use std::fs;
use std::path::Path;

use super::{ClassifierError, FrameModel, ModelKind, ModelSpec};

const MAGIC: &[u8; 4] = b"XCKP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

/// Parameter snapshot retained by training. Parameters are stored as f32,
/// which is also the precision they were validated at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub epoch: usize,
    pub params: Vec<f32>,
    pub val_accuracy: f64,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Box<dyn FrameModel>, ClassifierError> {
        let params: Vec<f64> = self.params.iter().map(|&p| p as f64).collect();
        self.spec.build_with(&params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let kind: u32 = match self.spec.kind {
            ModelKind::ReferenceConv => 0,
            ModelKind::BandLogistic => 1,
        };
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.val_accuracy.to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Decodes a checkpoint; the model spec is not stored in the file and
    /// must match the recorded kind and parameter count.
    pub fn from_bytes(bytes: &[u8], spec: &ModelSpec) -> Result<Self, ClassifierError> {
        let bad = |m: &str| ClassifierError::Checkpoint(m.to_string());
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if u32_at(4) != VERSION {
            return Err(bad("unsupported checkpoint version"));
        }
        let kind = match u32_at(8) {
            0 => ModelKind::ReferenceConv,
            1 => ModelKind::BandLogistic,
            _ => return Err(bad("unknown model kind")),
        };
        if kind != spec.kind {
            return Err(bad("model kind does not match spec"));
        }
        let epoch = u32_at(12) as usize;
        let n = u32_at(16) as usize;
        let val_accuracy = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if bytes.len() != HEADER_LEN + 4 * n {
            return Err(bad("parameter block has wrong length"));
        }
        let params: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ck = Checkpoint {
            spec: spec.clone(),
            epoch,
            params,
            val_accuracy,
        };
        ck.model()?;
        Ok(ck)
    }
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> std::io::Result<()> {
    fs::write(path, ck.to_bytes())
}

pub fn read_checkpoint(path: &Path, spec: &ModelSpec) -> Result<Checkpoint, ClassifierError> {
    let bytes = fs::read(path).map_err(|e| ClassifierError::Checkpoint(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes, spec)
}
