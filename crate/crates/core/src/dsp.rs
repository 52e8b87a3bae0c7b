//! Windowing, STFT analysis/synthesis and fractional-delay FIR design.

use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::fft::Fft;
use crate::math::{cos, floor, sinc, PI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("unsupported window kind `{0}`")]
    UnsupportedWindow(alloc::string::String),
    #[error("window length {0} is too short")]
    WindowTooShort(usize),
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("clip has {len} samples, shorter than one {fft_size}-sample frame")]
    ClipTooShort { len: usize, fft_size: usize },
    #[error("spectrogram was produced with a different STFT configuration")]
    ConfigMismatch,
    #[error("invalid audio clip: {0}")]
    InvalidClip(&'static str),
    #[error("fractional delay {delay} not representable with {taps} taps")]
    DelayOutOfRange { delay: f64, taps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Hann,
}

impl FromStr for WindowKind {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hann" | "hanning" => Ok(WindowKind::Hann),
            other => Err(DspError::UnsupportedWindow(other.into())),
        }
    }
}

/// Periodic window of length `n`.
pub fn make_window(kind: WindowKind, n: usize) -> Result<Vec<f64>, DspError> {
    if n < 2 {
        return Err(DspError::WindowTooShort(n));
    }
    Ok(match kind {
        WindowKind::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * cos(2.0 * PI * i as f64 / n as f64))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            hop: 256,
            window: WindowKind::Hann,
            sample_rate: 16000.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(DspError::InvalidConfig("fft_size must be an even power of two"));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(DspError::InvalidConfig("hop must be in 1..=fft_size"));
        }
        if !self.fft_size.is_multiple_of(self.hop) {
            return Err(DspError::InvalidConfig("fft_size must be a multiple of hop"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(DspError::InvalidConfig("sample rate must be positive"));
        }
        Ok(())
    }

    /// Number of retained bins, `fft_size/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a clip of `len` samples (left-aligned, no padding).
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.fft_size as f64
    }

    /// Time of the center of frame `t` in seconds.
    pub fn frame_center_time(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate + self.fft_size as f64 / (2.0 * self.sample_rate)
    }
}

/// Multichannel time-domain samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self, DspError> {
        if channels.is_empty() {
            return Err(DspError::InvalidClip("no channels"));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(DspError::InvalidClip("empty channel"));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(DspError::InvalidClip("channels differ in length"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DspError::InvalidClip("non-finite sample"));
        }
        if !(sample_rate > 0.0) {
            return Err(DspError::InvalidClip("sample rate must be positive"));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: f64) -> Result<Self, DspError> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: f64) -> Self {
        Self {
            channels: vec![vec![0.0; len]; num_channels],
            sample_rate,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Mean power over all channels and samples.
    pub fn power(&self) -> f64 {
        let n = (self.num_channels() * self.len()) as f64;
        self.channels.iter().flatten().map(|v| v * v).sum::<f64>() / n
    }

    /// First `len` samples of every channel.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            channels: self.channels.iter().map(|c| c[..len.min(c.len())].to_vec()).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Complex STFT coefficients, laid out `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    coeffs: Vec<Complex64>,
    channels: usize,
    frames: usize,
    bins: usize,
    config: StftConfig,
}

impl Spectrogram {
    pub fn from_raw(
        coeffs: Vec<Complex64>,
        channels: usize,
        frames: usize,
        config: StftConfig,
    ) -> Self {
        let bins = config.num_bins();
        assert_eq!(coeffs.len(), channels * frames * bins);
        Self { coeffs, channels, frames, bins, config }
    }

    pub fn zeros(channels: usize, frames: usize, config: StftConfig) -> Self {
        let bins = config.num_bins();
        Self::from_raw(
            vec![Complex64::new(0.0, 0.0); channels * frames * bins],
            channels,
            frames,
            config,
        )
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }
    pub fn num_frames(&self) -> usize {
        self.frames
    }
    pub fn num_bins(&self) -> usize {
        self.bins
    }
    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    #[inline]
    pub fn get(&self, m: usize, t: usize, k: usize) -> Complex64 {
        self.coeffs[(m * self.frames + t) * self.bins + k]
    }

    #[inline]
    pub fn set(&mut self, m: usize, t: usize, k: usize, v: Complex64) {
        self.coeffs[(m * self.frames + t) * self.bins + k] = v;
    }

    /// All bins of one frame of one channel.
    pub fn frame(&self, m: usize, t: usize) -> &[Complex64] {
        let start = (m * self.frames + t) * self.bins;
        &self.coeffs[start..start + self.bins]
    }

    pub fn frame_mut(&mut self, m: usize, t: usize) -> &mut [Complex64] {
        let start = (m * self.frames + t) * self.bins;
        &mut self.coeffs[start..start + self.bins]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// The first `frames` frames.
    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames);
        let mut out = Spectrogram::zeros(self.channels, frames, self.config);
        for m in 0..self.channels {
            for t in 0..frames {
                out.frame_mut(m, t).copy_from_slice(self.frame(m, t));
            }
        }
        out
    }

    /// Frames `start..start+len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.frames);
        let mut out = Spectrogram::zeros(self.channels, len, self.config);
        for m in 0..self.channels {
            for t in 0..len {
                out.frame_mut(m, t).copy_from_slice(self.frame(m, start + t));
            }
        }
        out
    }
}

pub fn stft(clip: &AudioClip, config: &StftConfig) -> Result<Spectrogram, DspError> {
    config.validate()?;
    let n = config.fft_size;
    if clip.len() < n {
        return Err(DspError::ClipTooShort { len: clip.len(), fft_size: n });
    }
    let window = make_window(config.window, n)?;
    let fft = Fft::new(n);
    let frames = config.num_frames(clip.len());
    let mut spec = Spectrogram::zeros(clip.num_channels(), frames, *config);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..clip.num_channels() {
        let x = clip.channel(m);
        for t in 0..frames {
            let start = t * config.hop;
            for i in 0..n {
                buf[i] = Complex64::new(x[start + i] * window[i], 0.0);
            }
            fft.forward(&mut buf);
            spec.frame_mut(m, t).copy_from_slice(&buf[..config.num_bins()]);
        }
    }
    Ok(spec)
}

/// Weighted overlap-add inverse: each frame is windowed again and the sum is
/// divided by the overlapped squared window wherever that sum is nonzero.
pub fn istft(spec: &Spectrogram, config: &StftConfig) -> Result<AudioClip, DspError> {
    if spec.config() != config {
        return Err(DspError::ConfigMismatch);
    }
    config.validate()?;
    let n = config.fft_size;
    let window = make_window(config.window, n)?;
    let fft = Fft::new(n);
    let frames = spec.num_frames();
    if frames == 0 {
        return Err(DspError::InvalidClip("spectrogram has no frames"));
    }
    let len = (frames - 1) * config.hop + n;
    let mut norm = vec![0.0; len];
    for t in 0..frames {
        for i in 0..n {
            norm[t * config.hop + i] += window[i] * window[i];
        }
    }
    let mut channels = Vec::with_capacity(spec.num_channels());
    for m in 0..spec.num_channels() {
        let mut out = vec![0.0; len];
        for t in 0..frames {
            let frame = fft.inverse_real(spec.frame(m, t));
            for i in 0..n {
                out[t * config.hop + i] += frame[i] * window[i];
            }
        }
        for (o, &w) in out.iter_mut().zip(&norm) {
            *o = if w > 1e-10 { *o / w } else { 0.0 };
        }
        channels.push(out);
    }
    AudioClip::new(channels, config.sample_rate)
}

/// FIR filter with its nominal group delay in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub group_delay: f64,
}

impl FirFilter {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        crate::fft::convolve(x, &self.taps)
    }
}

/// Hann-windowed sinc delaying by `delay` samples (measured from tap 0).
///
/// The window is centered on the delay, so integer delays give an exact unit
/// impulse. Taps are scaled to unit DC gain.
pub fn design_fractional_delay(delay: f64, taps: usize) -> Result<FirFilter, DspError> {
    if taps.is_multiple_of(2) || taps < 17 {
        return Err(DspError::DelayOutOfRange { delay, taps });
    }
    if !delay.is_finite() || (delay - taps as f64 / 2.0).abs() >= taps as f64 / 4.0 {
        return Err(DspError::DelayOutOfRange { delay, taps });
    }
    let mut h = vec![0.0; taps];
    fill_fractional_delay(delay, &mut h);
    Ok(FirFilter { taps: h, group_delay: delay })
}

/// Writes the windowed-sinc taps for `delay` into `out` (length = tap count).
pub(crate) fn fill_fractional_delay(delay: f64, out: &mut [f64]) {
    let taps = out.len();
    let half_width = (taps - 1) as f64 / 2.0;
    let frac = delay - floor(delay);
    if frac == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        let idx = delay as isize;
        if idx >= 0 && (idx as usize) < taps {
            out[idx as usize] = 1.0;
        }
        return;
    }
    let mut sum = 0.0;
    for (n, v) in out.iter_mut().enumerate() {
        let x = n as f64 - delay;
        *v = if x.abs() <= half_width {
            0.5 * (1.0 + cos(PI * x / half_width)) * sinc(PI * x)
        } else {
            0.0
        };
        sum += *v;
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}
