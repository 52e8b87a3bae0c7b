//! Per-recording label file: `"DPIP"`, version, `T`, `K`, then for each
//! STFT frame the azimuth in degrees and the `2K` interleaved cos/sin values,
//! all little-endian.

use std::path::Path;

use fnssl_core::features::{Direction, DpIpdVector};

use crate::binio::{write_atomic, Cursor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DPIP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub num_freqs: usize,
    pub azimuth: Vec<f32>,
    /// `[T x 2K]`, row-major.
    pub dpipd: Vec<f32>,
}

impl LabelFile {
    pub fn from_frames(num_freqs: usize, frames: &[(Direction, DpIpdVector)]) -> Self {
        let mut azimuth = Vec::with_capacity(frames.len());
        let mut dpipd = Vec::with_capacity(frames.len() * 2 * num_freqs);
        for (d, v) in frames {
            assert_eq!(v.num_freqs(), num_freqs);
            azimuth.push(d.azimuth() as f32);
            dpipd.extend(v.as_slice().iter().map(|&x| x as f32));
        }
        Self { num_freqs, azimuth, dpipd }
    }

    pub fn num_frames(&self) -> usize {
        self.azimuth.len()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let w = 2 * self.num_freqs;
        &self.dpipd[t * w..(t + 1) * w]
    }

    pub fn direction(&self, t: usize) -> Direction {
        Direction::new(self.azimuth[t] as f64).expect("azimuth validated on load")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * (self.azimuth.len() + self.dpipd.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.num_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_freqs as u32).to_le_bytes());
        for t in 0..self.num_frames() {
            out.extend_from_slice(&self.azimuth[t].to_le_bytes());
            for v in self.frame(t) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, String> {
        let mut c = Cursor::new(buf);
        if c.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let frames = c.u32()? as usize;
        let k = c.u32()? as usize;
        if k == 0 {
            return Err("zero frequencies".into());
        }
        let mut azimuth = Vec::with_capacity(frames.min(1 << 20));
        let mut dpipd = Vec::with_capacity((frames * 2 * k).min(1 << 26));
        for _ in 0..frames {
            let az = c.f32()?;
            if !(0.0..=180.0).contains(&az) {
                return Err(format!("azimuth {az} out of range"));
            }
            azimuth.push(az);
            for _ in 0..2 * k {
                dpipd.push(c.f32()?);
            }
        }
        c.finish()?;
        Ok(Self { num_freqs: k, azimuth, dpipd })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|m| Error::corrupt(path, m))
    }
}
