use alloc::vec;
use alloc::vec::Vec;

use super::{simulate_rir, RirConfig, SceneSpec, SimError, Trajectory};
use crate::dsp::AudioClip;
use crate::fft::convolve;
use crate::geometry::Vec3;
use crate::math::ceil;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub rir: RirConfig,
    /// Samples between RIR updates for moving sources.
    pub block: usize,
    /// Reflection order cap; `None` uses [`super::RoomSpec::default_max_order`].
    pub max_order: Option<usize>,
    /// For moving sources, RIR taps before this time (seconds) are recomputed
    /// at every block; later taps come from one RIR at the trajectory
    /// midpoint.
    pub early_time: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { rir: RirConfig::default(), block: 256, max_order: None, early_time: 0.1 }
    }
}

/// Source positions at the block boundaries `b * block`, `b = 0..=ceil(len/block)`.
fn anchor_positions(
    trajectory: &Trajectory,
    len: usize,
    block: usize,
    fs: f64,
) -> Result<Vec<Vec3>, SimError> {
    let needed = (len - 1) as f64 / fs;
    let end = trajectory.end_time();
    if end + 1e-9 < needed {
        return Err(SimError::TrajectoryTooShort { covered: end, needed });
    }
    let anchors = len.div_ceil(block) + 1;
    (0..anchors)
        .map(|b| trajectory.position_at(((b * block) as f64 / fs).min(end)))
        .collect()
}

/// Convolves `x` with a filter that changes every `block` samples, linearly
/// interpolating between the outputs of adjacent anchor filters.
fn crossfade_convolve(x: &[f64], filters: &[Vec<f64>], block: usize) -> Vec<f64> {
    let len = x.len();
    let mut y = vec![0.0; len];
    let first_nz: Vec<usize> = filters
        .iter()
        .map(|h| h.iter().position(|v| *v != 0.0).unwrap_or(h.len()))
        .collect();
    let filtered_at = |b: usize, n: usize| -> f64 {
        let h = &filters[b];
        let hi = h.len().min(n + 1);
        let mut acc = 0.0;
        for j in first_nz[b]..hi {
            acc += h[j] * x[n - j];
        }
        acc
    };
    for (n, out) in y.iter_mut().enumerate() {
        let b = n / block;
        let lambda = (n - b * block) as f64 / block as f64;
        let mut v = (1.0 - lambda) * filtered_at(b, n);
        if lambda > 0.0 {
            v += lambda * filtered_at(b + 1, n);
        }
        *out = v;
    }
    y
}

fn check_signal(signal: &AudioClip, scene: &SceneSpec, cfg: &RenderConfig) -> Result<(), SimError> {
    if signal.num_channels() != 1 || signal.sample_rate() != cfg.rir.sample_rate {
        return Err(SimError::ShapeMismatch);
    }
    if cfg.block == 0 {
        return Err(SimError::InvalidRanges("block must be positive"));
    }
    scene.room.validate()
}

/// Reverberant microphone signals for a mono source following the scene
/// trajectory.
pub fn render_moving_source(
    signal: &AudioClip,
    scene: &SceneSpec,
    cfg: &RenderConfig,
) -> Result<AudioClip, SimError> {
    check_signal(signal, scene, cfg)?;
    let x = signal.channel(0);
    let len = x.len();
    let fs = cfg.rir.sample_rate;
    let max_order = cfg.max_order.unwrap_or_else(|| scene.room.default_max_order());
    let anchors = anchor_positions(&scene.trajectory, len, cfg.block, fs)?;
    let is_static = anchors.iter().all(|p| *p == anchors[0]);
    let mut channels = Vec::with_capacity(scene.array.num_mics());
    if is_static {
        let rir = simulate_rir(&scene.room, &anchors[0], &scene.array, max_order, &cfg.rir)?;
        for h in &rir.taps {
            let mut y = convolve(x, h);
            y.truncate(len);
            channels.push(y);
        }
        return Ok(AudioClip::new(channels, fs)?);
    }

    let split = ceil(cfg.early_time * fs) as usize;
    let early_cfg = RirConfig { length: Some(split), ..cfg.rir };
    let early: Vec<_> = anchors
        .iter()
        .map(|p| simulate_rir(&scene.room, p, &scene.array, max_order, &early_cfg))
        .collect::<Result<_, _>>()?;
    let mid = anchors[anchors.len() / 2];
    let late = simulate_rir(&scene.room, &mid, &scene.array, max_order, &cfg.rir)?;
    for m in 0..scene.array.num_mics() {
        let filters: Vec<Vec<f64>> = early.iter().map(|r| r.taps[m].clone()).collect();
        let mut y = crossfade_convolve(x, &filters, cfg.block);
        let mut tail = late.taps[m].clone();
        let cut = split.min(tail.len());
        tail[..cut].iter_mut().for_each(|v| *v = 0.0);
        if tail.len() > split {
            let reverb = convolve(x, &tail);
            for (o, r) in y.iter_mut().zip(reverb) {
                *o += r;
            }
        }
        channels.push(y);
    }
    Ok(AudioClip::new(channels, fs)?)
}

/// Direct-path-only microphone signals (reflection order 0), the reference
/// for voice-activity masking and direct-path labels.
pub fn render_direct_path(
    signal: &AudioClip,
    scene: &SceneSpec,
    cfg: &RenderConfig,
) -> Result<AudioClip, SimError> {
    check_signal(signal, scene, cfg)?;
    let x = signal.channel(0);
    let len = x.len();
    let fs = cfg.rir.sample_rate;
    let anchors = anchor_positions(&scene.trajectory, len, cfg.block, fs)?;
    let longest = anchors
        .iter()
        .flat_map(|p| scene.array.mics.iter().map(move |m| p.distance(m)))
        .fold(0.0, f64::max);
    let rir_cfg = RirConfig {
        length: Some(ceil(longest / crate::SPEED_OF_SOUND * fs) as usize + cfg.rir.fd_taps),
        ..cfg.rir
    };
    let rirs: Vec<_> = anchors
        .iter()
        .map(|p| simulate_rir(&scene.room, p, &scene.array, 0, &rir_cfg))
        .collect::<Result<_, _>>()?;
    let mut channels = Vec::with_capacity(scene.array.num_mics());
    for m in 0..scene.array.num_mics() {
        let filters: Vec<Vec<f64>> = rirs.iter().map(|r| r.taps[m].clone()).collect();
        channels.push(crossfade_convolve(x, &filters, cfg.block));
    }
    Ok(AudioClip::new(channels, fs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::sim::{tdoa, ArrayGeometry, NoiseKind, RoomSpec};

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        (0..len)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    fn scene(rt60: f64, trajectory: Trajectory) -> SceneSpec {
        SceneSpec {
            room: RoomSpec::new([6.0, 6.0, 2.5], rt60).unwrap(),
            array: ArrayGeometry::pair(Vec3::new(3.0, 3.0, 1.5), 0.08, 0.0).unwrap(),
            trajectory,
            snr_db: 10.0,
            noise_kind: NoiseKind::White,
            seed: 1,
        }
    }

    /// Lag (in samples) maximizing the cross-correlation, refined by a
    /// parabolic fit, over lags in [-8, 8].
    fn xcorr_lag(a: &[f64], b: &[f64], lo: usize, hi: usize) -> f64 {
        let score = |lag: i64| -> f64 {
            (lo..hi).map(|n| a[n] * b[(n as i64 + lag) as usize]).sum()
        };
        let mut best = (0i64, f64::MIN);
        for lag in -8..=8 {
            let s = score(lag);
            if s > best.1 {
                best = (lag, s);
            }
        }
        let (l, c) = best;
        let (p, n) = (score(l - 1), score(l + 1));
        l as f64 + 0.5 * (p - n) / (p - 2.0 * c + n)
    }

    #[test]
    fn static_anechoic_delay_and_tdoa() {
        let src = Vec3::new(4.5, 4.0, 1.5);
        let sc = scene(0.0, Trajectory::fixed(src));
        // Band-limited source: low-pass by moving average.
        let raw = noise(16000, 5);
        let x: Vec<f64> = (0..raw.len()).map(|n| raw[n.saturating_sub(3)..=n].iter().sum::<f64>() / 4.0).collect();
        let clip = AudioClip::mono(x, 16000.0).unwrap();
        let y = render_moving_source(&clip, &sc, &RenderConfig::default()).unwrap();
        let lag = xcorr_lag(y.channel(0), y.channel(1), 200, 15000);
        let want = tdoa(&src, &sc.array) * 16000.0;
        assert!((lag - want).abs() < 0.1, "lag {lag} want {want}");
    }

    #[test]
    fn zero_in_zero_out() {
        let sc = scene(0.4, Trajectory::fixed(Vec3::new(4.5, 4.0, 1.5)));
        let y = render_moving_source(&AudioClip::zeros(1, 3000, 16000.0), &sc, &RenderConfig::default()).unwrap();
        assert!(y.channels().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn moving_source_sweeps_tdoa() {
        // Broadside (perpendicular to the axis) to endfire (on the axis, mic-1 side).
        let center = Vec3::new(3.0, 3.0, 1.5);
        let wps: Vec<(f64, Vec3)> = (0..=40)
            .map(|i| {
                let a = core::f64::consts::FRAC_PI_2 * (1.0 - i as f64 / 40.0);
                let p = center + Vec3::new(crate::math::cos(a), crate::math::sin(a), 0.0) * 1.5;
                (i as f64 * 0.1, p)
            })
            .collect();
        let sc = scene(0.0, Trajectory::new(wps, true).unwrap());
        let raw = noise(64000, 9);
        let x: Vec<f64> = (0..raw.len()).map(|n| raw[n.saturating_sub(3)..=n].iter().sum::<f64>() / 4.0).collect();
        let y = render_moving_source(&AudioClip::mono(x, 16000.0).unwrap(), &sc, &RenderConfig::default()).unwrap();
        let mut lags = Vec::new();
        for seg in 0..8 {
            let lo = 400 + seg * 7900;
            lags.push(xcorr_lag(y.channel(0), y.channel(1), lo, lo + 7000));
        }
        assert!(lags.windows(2).all(|w| w[1] >= w[0] - 0.05), "{lags:?}");
        assert!(lags[0].abs() < 0.4, "{lags:?}");
        assert!((lags[7] - 3.73).abs() < 0.3, "{lags:?}");
    }

    #[test]
    fn direct_path_matches_anechoic_render() {
        let src = Vec3::new(1.2, 4.0, 1.5);
        let x = noise(5000, 2);
        let clip = AudioClip::mono(x, 16000.0).unwrap();
        let a = render_direct_path(&clip, &scene(0.7, Trajectory::fixed(src)), &RenderConfig::default()).unwrap();
        let b = render_moving_source(&clip, &scene(0.0, Trajectory::fixed(src)), &RenderConfig::default()).unwrap();
        for m in 0..2 {
            for n in 0..5000 {
                assert!((a.channel(m)[n] - b.channel(m)[n]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn short_trajectory_rejected() {
        let tr = Trajectory::new(
            alloc::vec![(0.0, Vec3::new(1.0, 1.0, 1.5)), (0.1, Vec3::new(1.05, 1.0, 1.5))],
            true,
        )
        .unwrap();
        let err = render_moving_source(&AudioClip::zeros(1, 16000, 16000.0), &scene(0.0, tr), &RenderConfig::default());
        assert!(matches!(err, Err(SimError::TrajectoryTooShort { .. })));
    }
}
