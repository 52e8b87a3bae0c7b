//! 16-bit PCM WAV files, samples scaled by 1/32768.

use std::path::Path;

use fnssl_core::dsp::AudioClip;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

const SCALE: f64 = 32768.0;

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::corrupt(path, other.to_string()),
    }
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::corrupt(path, "expected 16-bit integer PCM"));
    }
    let m = spec.channels as usize;
    if !(1..=2).contains(&m) {
        return Err(Error::corrupt(path, format!("unsupported channel count {m}")));
    }
    let mut channels = vec![Vec::with_capacity(reader.len() as usize / m); m];
    for (i, s) in reader.samples::<i16>().enumerate() {
        let s = s.map_err(|e| wav_err(path, e))?;
        channels[i % m].push(s as f64 / SCALE);
    }
    AudioClip::new(channels, spec.sample_rate as f64).map_err(|e| Error::corrupt(path, e.to_string()))
}

/// Writes `clip` as 16-bit PCM, rounding to the nearest code and saturating
/// at the ends of the range.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: clip.num_channels() as u16,
        sample_rate: clip.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for n in 0..clip.len() {
        for m in 0..clip.num_channels() {
            let code = (clip.channel(m)[n] * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64);
            w.write_sample(code as i16).map_err(|e| wav_err(path, e))?;
        }
    }
    w.finalize().map_err(|e| wav_err(path, e))
}
