//! Turning recordings and label files into network inputs and targets.

use std::path::Path;

use fnssl_core::dsp::{stft, AudioClip, Spectrogram, StftConfig};
use fnssl_core::features::{normalize_offline, normalize_online, pooled_label_frame, NormState};
use fnssl_core::nn::{network_input, Head, NetworkConfig, Real, Target};

use crate::error::{Error, Result};
use crate::labels::LabelFile;
use crate::wav::read_wav;

/// Reads a two-channel recording and checks its sample rate.
pub fn read_recording(path: &Path, stft_cfg: &StftConfig, num_mics: usize) -> Result<AudioClip> {
    let clip = read_wav(path)?;
    if clip.num_channels() != num_mics {
        return Err(Error::Data(format!(
            "{}: expected {num_mics} channels, found {}",
            path.display(),
            clip.num_channels()
        )));
    }
    if clip.sample_rate() != stft_cfg.sample_rate {
        return Err(Error::Data(format!(
            "{}: expected {} Hz, found {} Hz",
            path.display(),
            stft_cfg.sample_rate,
            clip.sample_rate()
        )));
    }
    Ok(clip)
}

pub fn spectrogram(clip: &AudioClip, stft_cfg: &StftConfig) -> Result<Spectrogram> {
    stft(clip, stft_cfg).map_err(|e| Error::Data(e.to_string()))
}

/// Normalized network input `[T x K x C]` of a whole recording: recursive
/// normalization for causal networks, global otherwise.
pub fn prepare_input<R: Real>(spec: &Spectrogram, net: &NetworkConfig, norm_window: f64) -> Result<Vec<R>> {
    let normalized = if net.causal {
        let state = NormState::with_window(norm_window).map_err(|e| Error::Config(e.to_string()))?;
        normalize_online(spec, state).0
    } else {
        normalize_offline(spec)
    };
    network_input(&normalized, net).map_err(|e| Error::Data(e.to_string()))
}

/// Class index of an azimuth for `n` equal bins over `[0, 180)`.
pub fn azimuth_class(azimuth: f64, n: usize) -> usize {
    ((azimuth / (180.0 / n as f64)).floor() as usize).min(n - 1)
}

/// Targets for pooled frames `p0 .. p0 + count`, taken at the center frame
/// of each pooling window.
pub fn pooled_targets(labels: &LabelFile, net: &NetworkConfig, p0: usize, count: usize) -> Result<Target> {
    let frames: Vec<usize> = (p0..p0 + count).map(|p| pooled_label_frame(p, net.pool_stride)).collect();
    if frames.last().is_some_and(|&t| t >= labels.num_frames()) {
        return Err(Error::Data("label file is shorter than the recording".into()));
    }
    Ok(match net.head {
        Head::DpIpd => {
            if labels.num_freqs != net.num_freqs {
                return Err(Error::Data(format!(
                    "labels have {} frequencies, network expects {}",
                    labels.num_freqs, net.num_freqs
                )));
            }
            Target::DpIpd(frames.iter().flat_map(|&t| labels.frame(t).iter().map(|&v| v as f64)).collect())
        }
        Head::Classification { num_classes } => Target::Class(
            frames
                .iter()
                .map(|&t| azimuth_class(labels.azimuth[t] as f64, num_classes))
                .collect(),
        ),
        Head::Regression => Target::Regression(
            frames
                .iter()
                .flat_map(|&t| {
                    let a = (labels.azimuth[t] as f64).to_radians();
                    [a.cos(), a.sin()]
                })
                .collect(),
        ),
    })
}
