//! Direction decoding, voice-activity masking and localization metrics.

use alloc::vec::Vec;

use crate::dsp::{Spectrogram, StftConfig};
use crate::features::{num_freqs, CandidateGrid, Direction, DpIpdVector};
use crate::math::{atan2, log10, sqrt};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("posterior is not a probability distribution")]
    InvalidDistribution,
    #[error("direction vector is too close to zero")]
    NearZeroVector,
    #[error("no active frames")]
    NoActiveFrames,
}

/// Candidate with the largest inner product against `estimate`. Ties go
/// to the smaller azimuth.
pub fn decode_inner_product(estimate: &[f64], grid: &CandidateGrid) -> Result<Direction, EvalError> {
    if estimate.len() != grid.dim {
        return Err(EvalError::DimensionMismatch { expected: grid.dim, got: estimate.len() });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..grid.len() {
        let s: f64 = grid.row(j).iter().zip(estimate).map(|(a, b)| a * b).sum();
        if s > best.1 {
            best = (j, s);
        }
    }
    Ok(grid.directions[best.0])
}

/// Center of the most probable bin; bins split `[0, 180)` evenly, so with
/// 180 classes bin `b` maps to `b + 0.5` degrees.
pub fn decode_classification(probs: &[f64]) -> Result<Direction, EvalError> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
        return Err(EvalError::InvalidDistribution);
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    let width = 180.0 / probs.len() as f64;
    Ok(Direction::new((best as f64 + 0.5) * width).expect("bin center within range"))
}

/// Azimuth of a `(cos, sin)` vector, folded into `[0, 180]`.
pub fn decode_regression(v: [f64; 2]) -> Result<Direction, EvalError> {
    if !(sqrt(v[0] * v[0] + v[1] * v[1]) > 1e-6) {
        return Err(EvalError::NearZeroVector);
    }
    let deg = atan2(v[1], v[0]).to_degrees().abs();
    Ok(Direction::new(deg.min(180.0)).expect("folded angle within range"))
}

/// Pooled frames whose source energy is within `threshold_db` of the
/// loudest pooled frame.
///
/// `source` is the clean signal at the reference microphone; pooled frame
/// `p` covers the samples of STFT frames `p*stride .. (p+1)*stride`.
pub fn vad_mask(source: &[f64], config: &StftConfig, stride: usize, pooled: usize, threshold_db: f64) -> Vec<bool> {
    let energies: Vec<f64> = (0..pooled)
        .map(|p| {
            let start = p * stride * config.hop;
            let end = (((p + 1) * stride - 1) * config.hop + config.fft_size).min(source.len());
            source.get(start..end).map_or(0.0, |s| s.iter().map(|x| x * x).sum())
        })
        .collect();
    let max = energies.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return alloc::vec![false; pooled];
    }
    let floor = 10.0 * log10(max) - threshold_db;
    energies.iter().map(|&e| e > 0.0 && 10.0 * log10(e) > floor).collect()
}

/// Absolute azimuth errors of the frames selected by `mask`.
pub fn masked_errors(est: &[Direction], truth: &[Direction], mask: &[bool]) -> Result<Vec<f64>, EvalError> {
    if est.len() != truth.len() || truth.len() != mask.len() {
        return Err(EvalError::DimensionMismatch { expected: truth.len(), got: est.len().min(mask.len()) });
    }
    Ok(est
        .iter()
        .zip(truth)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((e, t), _)| (e.azimuth() - t.azimuth()).abs())
        .collect())
}

/// Mean absolute error in degrees over active frames.
pub fn mae(est: &[Direction], truth: &[Direction], mask: &[bool]) -> Result<f64, EvalError> {
    mean_error(&masked_errors(est, truth, mask)?)
}

/// Percentage of active frames with error strictly below `tolerance`.
pub fn acc_at(est: &[Direction], truth: &[Direction], mask: &[bool], tolerance: f64) -> Result<f64, EvalError> {
    accuracy(&masked_errors(est, truth, mask)?, tolerance)
}

pub fn mean_error(errors: &[f64]) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::NoActiveFrames);
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Percentage of `errors` strictly below `tolerance`.
pub fn accuracy(errors: &[f64], tolerance: f64) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::NoActiveFrames);
    }
    Ok(100.0 * errors.iter().filter(|&&e| e < tolerance).count() as f64 / errors.len() as f64)
}

/// Summary metrics over a set of frames; accuracies are percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub frames: usize,
    pub mae_deg: f64,
    pub acc5: f64,
    pub acc10: f64,
    pub acc15: f64,
}

impl MetricReport {
    pub fn from_errors(errors: &[f64]) -> Result<Self, EvalError> {
        Ok(Self {
            frames: errors.len(),
            mae_deg: mean_error(errors)?,
            acc5: accuracy(errors, 5.0)?,
            acc10: accuracy(errors, 10.0)?,
            acc15: accuracy(errors, 15.0)?,
        })
    }
}

/// Observed interchannel phasors per pooled frame: the phase of
/// `sum_t X2 conj(X1)` over the frames of each window, for bins `1..=K`.
pub fn observed_ipd(spec: &Spectrogram, stride: usize) -> Vec<DpIpdVector> {
    assert!(spec.num_channels() >= 2, "needs two channels");
    let k = num_freqs(spec.config());
    (0..spec.num_frames() / stride)
        .map(|p| {
            let mut v = Vec::with_capacity(2 * k);
            for f in 1..=k {
                let (mut re, mut im) = (0.0, 0.0);
                for t in p * stride..(p + 1) * stride {
                    let c = spec.get(1, t, f) * spec.get(0, t, f).conj();
                    re += c.re;
                    im += c.im;
                }
                let n = sqrt(re * re + im * im);
                if n > 0.0 {
                    v.extend_from_slice(&[re / n, im / n]);
                } else {
                    v.extend_from_slice(&[0.0, 0.0]);
                }
            }
            DpIpdVector(v)
        })
        .collect()
}

/// Non-learned reference: matches observed phasors against the candidate
/// templates, one estimate per pooled frame.
pub fn baseline_ipd_localize(spec: &Spectrogram, grid: &CandidateGrid, stride: usize) -> Vec<Direction> {
    observed_ipd(spec, stride)
        .iter()
        .map(|v| decode_inner_product(v.as_slice(), grid).expect("observed vectors match the grid"))
        .collect()
}
