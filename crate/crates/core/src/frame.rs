//! Spectrogram frames and their flat binary container.
//!
//! Container layout (little-endian):
//!
//! ```text
//! magic   [u8; 4]  = b"XSPF"
//! rows    u32
//! cols    u32
//! channel u32
//! window  u32
//! absent  u8, then 3 zero bytes
//! values  rows * cols f32, row-major
//! ```

use std::io::{self, Read, Write};

pub const FRAME_MAGIC: [u8; 4] = *b"XSPF";

/// One normalized log-power window for one channel of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramFrame {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, frequency by time.
    pub values: Vec<f32>,
    pub channel_index: usize,
    pub patient_id: String,
    pub population_id: String,
    pub window_index: usize,
    pub absent: bool,
}

impl SpectrogramFrame {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &SpectrogramFrame) -> io::Result<()> {
    w.write_all(&FRAME_MAGIC)?;
    for v in [frame.rows, frame.cols, frame.channel_index, frame.window_index] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[frame.absent as u8, 0, 0, 0])?;
    let mut buf = Vec::with_capacity(frame.values.len() * 4);
    for v in &frame.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Reads one frame. Patient and population ids are not part of the
/// container and come back empty.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<SpectrogramFrame> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)?;
    if head[..4] != FRAME_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad frame magic"));
    }
    let word = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (rows, cols, channel_index, window_index) = (word(0), word(1), word(2), word(3));
    let absent = match head[20] {
        0 => false,
        1 => true,
        _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "bad absent flag")),
    };
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "frame too large"))?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SpectrogramFrame {
        rows,
        cols,
        values,
        channel_index,
        patient_id: String::new(),
        population_id: String::new(),
        window_index,
        absent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn container_round_trip(rows in 1usize..6, cols in 1usize..6, ch in 0usize..65,
                                win in 0usize..9, absent: bool, seed in any::<u32>()) {
            let values: Vec<f32> = (0..rows * cols)
                .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / u32::MAX as f32)
                .collect();
            let f = SpectrogramFrame { rows, cols, values, channel_index: ch, patient_id: String::new(),
                population_id: String::new(), window_index: win, absent };
            let mut buf = Vec::new();
            write_frame(&mut buf, &f).unwrap();
            prop_assert_eq!(buf.len(), 24 + rows * cols * 4);
            let g = read_frame(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(f, g);
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = vec![0u8; 28];
        buf[..4].copy_from_slice(b"NOPE");
        assert!(read_frame(&mut buf.as_slice()).is_err());
    }
}
