//! Direct-path inter-channel phase difference (DP-IPD) vectors, candidate
//! templates, ground-truth labels and input normalization.
//!
//! A DP-IPD vector holds `K = fft_size / 2` frequencies (bins `1..=K`, DC
//! dropped) as interleaved `[cos phi_1, sin phi_1, ..., cos phi_K, sin phi_K]`
//! with `phi_k = -2 pi f_k tau` and `tau` the direct-path arrival time at
//! microphone 2 minus that at microphone 1.

use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::dsp::{Spectrogram, StftConfig};
use crate::geometry::Vec3;
use crate::math::{acos, cos, sin, PI};
use crate::sim::{tdoa, ArrayGeometry, SimError, Trajectory};
use crate::SPEED_OF_SOUND;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("azimuth {0} outside [0, 180]")]
    AzimuthOutOfRange(f64),
    #[error("resolution {0} does not divide 180 degrees")]
    BadResolution(f64),
    #[error("invalid smoothing window {0}")]
    BadWindow(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Azimuth in degrees, `[0, 180]`, measured from the array axis (microphone
/// 2 towards microphone 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Direction(f64);

impl Direction {
    pub fn new(azimuth: f64) -> Result<Self, FeatureError> {
        if !(0.0..=180.0).contains(&azimuth) {
            return Err(FeatureError::AzimuthOutOfRange(azimuth));
        }
        Ok(Direction(azimuth))
    }

    pub fn azimuth(&self) -> f64 {
        self.0
    }
}

/// Interleaved cos/sin DP-IPD of length `2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpIpdVector(pub Vec<f64>);

impl DpIpdVector {
    /// Unit phasors for the given per-bin phases.
    pub fn from_phases(phases: impl Iterator<Item = f64>) -> Self {
        DpIpdVector(phases.flat_map(|p| [cos(p), sin(p)]).collect())
    }

    pub fn num_freqs(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// Number of frequencies used by features and the network: bins `1..=K`.
pub fn num_freqs(config: &StftConfig) -> usize {
    config.fft_size / 2
}

/// DP-IPD for a given TDOA (seconds).
pub fn dp_ipd_from_tdoa(tau: f64, config: &StftConfig) -> DpIpdVector {
    DpIpdVector::from_phases(
        (1..=num_freqs(config)).map(|k| -2.0 * PI * config.bin_frequency(k) * tau),
    )
}

/// Far-field template for azimuth `theta`: `tau = spacing cos(theta) / c`.
pub fn dp_ipd_far_field(theta: Direction, config: &StftConfig, spacing: f64) -> DpIpdVector {
    let tau = spacing * cos(theta.azimuth().to_radians()) / SPEED_OF_SOUND;
    dp_ipd_from_tdoa(tau, config)
}

/// Candidate directions `0, r, 2r, ..., 180` and their far-field templates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub resolution: f64,
    pub directions: Vec<Direction>,
    /// Row-major `[J x 2K]`.
    pub templates: Vec<f64>,
    pub dim: usize,
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.templates[j * self.dim..(j + 1) * self.dim]
    }
}

pub fn build_candidate_grid(
    resolution: f64,
    config: &StftConfig,
    spacing: f64,
) -> Result<CandidateGrid, FeatureError> {
    let steps = 180.0 / resolution;
    if !(resolution > 0.0) || (steps - crate::math::round(steps)).abs() > 1e-9 {
        return Err(FeatureError::BadResolution(resolution));
    }
    let count = crate::math::round(steps) as usize + 1;
    let directions: Vec<Direction> = (0..count)
        .map(|j| Direction((j as f64 * resolution).min(180.0)))
        .collect();
    let dim = 2 * num_freqs(config);
    let mut templates = Vec::with_capacity(count * dim);
    for d in &directions {
        templates.extend_from_slice(dp_ipd_far_field(*d, config, spacing).as_slice());
    }
    Ok(CandidateGrid { resolution, directions, templates, dim })
}

/// Azimuth of `source` relative to the array axis.
pub fn azimuth_of(source: &Vec3, array: &ArrayGeometry) -> Direction {
    let rel = *source - array.center();
    let n = rel.norm();
    if n == 0.0 {
        return Direction(90.0);
    }
    let c = (rel.dot(&array.axis()) / n).clamp(-1.0, 1.0);
    Direction(acos(c).to_degrees().clamp(0.0, 180.0))
}

/// Per-frame direction and DP-IPD label from the exact (near-field) TDOA at
/// the interpolated source position.
pub fn ground_truth_labels(
    trajectory: &Trajectory,
    array: &ArrayGeometry,
    frame_times: &[f64],
    config: &StftConfig,
) -> Result<Vec<(Direction, DpIpdVector)>, FeatureError> {
    frame_times
        .iter()
        .map(|&t| {
            let s = trajectory.position_at(t)?;
            Ok((azimuth_of(&s, array), dp_ipd_from_tdoa(tdoa(&s, array), config)))
        })
        .collect()
}

/// Mean magnitude over all channels and the used bins `1..=K` of frames
/// `t0..t1`.
fn mean_amplitude(spec: &Spectrogram, t0: usize, t1: usize) -> f64 {
    let k = num_freqs(spec.config());
    let mut acc = 0.0;
    for m in 0..spec.num_channels() {
        for t in t0..t1 {
            acc += spec.frame(m, t)[1..=k].iter().map(|c| c.norm()).sum::<f64>();
        }
    }
    acc / (spec.num_channels() * (t1 - t0) * k) as f64
}

const NORM_EPS: f64 = 1e-8;

fn scale_frame(spec: &mut Spectrogram, t: usize, mu: f64) {
    let inv = 1.0 / mu.max(NORM_EPS);
    for m in 0..spec.num_channels() {
        for c in spec.frame_mut(m, t) {
            *c = Complex64::new(c.re * inv, c.im * inv);
        }
    }
}

/// Divides every coefficient by the global mean magnitude (shared across
/// channels).
pub fn normalize_offline(spec: &Spectrogram) -> Spectrogram {
    let mut out = spec.clone();
    if spec.num_frames() == 0 {
        return out;
    }
    let mu = mean_amplitude(spec, 0, spec.num_frames());
    for t in 0..spec.num_frames() {
        scale_frame(&mut out, t, mu);
    }
    out
}

/// Recursive mean-magnitude tracker for causal normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormState {
    /// Running mean; `None` until the first frame initializes it.
    pub mu: Option<f64>,
    pub alpha: f64,
}

impl NormState {
    /// Smoothing weight `(L - 1) / (L + 1)` for a window of `L` frames.
    pub fn with_window(frames: f64) -> Result<Self, FeatureError> {
        if !(frames >= 1.0 && frames.is_finite()) {
            return Err(FeatureError::BadWindow(frames));
        }
        Ok(Self { mu: None, alpha: (frames - 1.0) / (frames + 1.0) })
    }

    pub fn with_alpha(alpha: f64) -> Result<Self, FeatureError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(FeatureError::BadWindow(alpha));
        }
        Ok(Self { mu: None, alpha })
    }

    /// Folds in one frame's mean magnitude and returns the updated mean.
    pub fn update(&mut self, frame_mean: f64) -> f64 {
        let prev = self.mu.unwrap_or(frame_mean);
        let mu = self.alpha * prev + (1.0 - self.alpha) * frame_mean;
        self.mu = Some(mu);
        mu
    }
}

impl Default for NormState {
    fn default() -> Self {
        Self::with_window(125.0).expect("valid default window")
    }
}

/// Causal normalization: frame `t` is divided by
/// `mu(t) = alpha mu(t-1) + (1 - alpha) mean_t |X|`.
pub fn normalize_online(spec: &Spectrogram, state: NormState) -> (Spectrogram, NormState) {
    let mut out = spec.clone();
    let mut state = state;
    for t in 0..spec.num_frames() {
        let mu = state.update(mean_amplitude(spec, t, t + 1));
        scale_frame(&mut out, t, mu);
    }
    (out, state)
}

/// Index of the frame whose label represents pooled window `p`.
pub fn pooled_label_frame(p: usize, stride: usize) -> usize {
    p * stride + stride / 2
}
