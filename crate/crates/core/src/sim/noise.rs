use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ArrayGeometry, SimError};
use crate::dsp::AudioClip;
use crate::fft::Fft;
use crate::geometry::Vec3;
use crate::math::{cos, exp, powf, round, sin, sqrt, PI};
use crate::SPEED_OF_SOUND;

/// Spectral envelope of the diffuse noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoiseKind {
    /// Flat spectrum.
    #[default]
    White,
    /// Speech-shaped: high-passed at 100 Hz, first-order roll-off above 800 Hz.
    BabbleLike,
    /// Broadband floor with emphasized bands around 1 kHz and 3 kHz.
    FactoryLike,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::BabbleLike, NoiseKind::FactoryLike];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::BabbleLike => "babble_like",
            NoiseKind::FactoryLike => "factory_like",
        }
    }

    /// Amplitude envelope at frequency `f` (Hz).
    pub fn envelope(&self, f: f64) -> f64 {
        match self {
            NoiseKind::White => 1.0,
            NoiseKind::BabbleLike => (f / (f + 100.0)) / sqrt(1.0 + (f / 800.0) * (f / 800.0)),
            NoiseKind::FactoryLike => {
                let bump = |fc: f64, bw: f64| exp(-((f - fc) / bw) * ((f - fc) / bw));
                0.3 + bump(1000.0, 400.0) + 0.7 * bump(3000.0, 800.0)
            }
        }
    }
}

impl FromStr for NoiseKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "white" => Ok(NoiseKind::White),
            "babble_like" => Ok(NoiseKind::BabbleLike),
            "factory_like" => Ok(NoiseKind::FactoryLike),
            _ => Err(SimError::InvalidRanges("unknown noise kind")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sample_rate: f64,
    /// Number of independent plane waves (at least 64).
    pub num_waves: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sample_rate: 16000.0, num_waves: 128 }
    }
}

/// Spherically diffuse noise at the array microphones.
///
/// Each plane wave carries independent Gaussian noise shaped by `kind` and
/// arrives from a direction drawn uniformly on the sphere. Microphone delays
/// are applied exactly as phase ramps in one long FFT frame. The output is
/// scaled so that the mean channel variance is 1.
pub fn generate_diffuse_noise(
    duration: f64,
    array: &ArrayGeometry,
    kind: NoiseKind,
    seed: u64,
    cfg: &NoiseConfig,
) -> Result<AudioClip, SimError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SimError::InvalidDuration(duration));
    }
    let fs = cfg.sample_rate;
    let len = round(duration * fs) as usize;
    if len == 0 {
        return Err(SimError::InvalidDuration(duration));
    }
    let nfft = len.next_power_of_two().max(2);
    let bins = nfft / 2 + 1;
    let num_waves = cfg.num_waves.max(64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = array.center();
    let mics = array.num_mics();
    let env: Vec<f64> = (0..bins)
        .map(|k| kind.envelope(k as f64 * fs / nfft as f64))
        .collect();
    let mut spectra = vec![vec![Complex64::new(0.0, 0.0); bins]; mics];
    let mut wave = vec![Complex64::new(0.0, 0.0); bins];
    let rotation = random_rotation(&mut rng);
    let golden = PI * (3.0 - sqrt(5.0));
    for i in 0..num_waves {
        // Fibonacci lattice under a random rotation: evenly spread directions
        // whose projection on any axis is close to uniform.
        let u = 1.0 - (2 * i + 1) as f64 / num_waves as f64;
        let phi = golden * i as f64;
        let r = sqrt(1.0 - u * u);
        let dir = rotate(&rotation, Vec3::new(r * cos(phi), r * sin(phi), u));
        for (k, w) in wave.iter_mut().enumerate() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *w = Complex64::new(re, im) * env[k];
        }
        for (m, spec) in spectra.iter_mut().enumerate() {
            // A wave from `dir` reaches microphones farther along `dir` earlier.
            let tau = -(array.mics[m] - center).dot(&dir) / SPEED_OF_SOUND;
            let step_angle = -2.0 * PI * fs / nfft as f64 * tau;
            let step = Complex64::new(cos(step_angle), sin(step_angle));
            let mut rot = Complex64::new(1.0, 0.0);
            for (s, w) in spec.iter_mut().zip(&wave) {
                *s += w * rot;
                rot *= step;
            }
        }
    }
    let fft = Fft::new(nfft);
    let mut channels = Vec::with_capacity(mics);
    for spec in spectra.iter_mut() {
        spec[0].im = 0.0;
        spec[bins - 1].im = 0.0;
        let mut x = fft.inverse_real(spec);
        x.truncate(len);
        channels.push(x);
    }
    let power = channels.iter().flatten().map(|v| v * v).sum::<f64>() / (mics * len) as f64;
    let scale = if power > 0.0 { 1.0 / sqrt(power) } else { 1.0 };
    for v in channels.iter_mut().flatten() {
        *v *= scale;
    }
    Ok(AudioClip::new(channels, fs)?)
}

/// Uniformly distributed unit quaternion `[w, x, y, z]`.
fn random_rotation(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = core::array::from_fn(|_| rng.sample(StandardNormal));
        let n = sqrt(q.iter().map(|v| v * v).sum::<f64>());
        if n > 1e-12 {
            return q.map(|v| v / n);
        }
    }
}

fn rotate(q: &[f64; 4], v: Vec3) -> Vec3 {
    let [w, x, y, z] = *q;
    let u = Vec3::new(x, y, z);
    let t = u.cross(&v) * 2.0;
    v + t * w + u.cross(&t)
}

/// Noise gain that makes the channel-averaged power ratio equal `snr_db`.
pub fn snr_gain(clean: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<f64, SimError> {
    if clean.num_channels() != noise.num_channels()
        || clean.len() != noise.len()
        || clean.sample_rate() != noise.sample_rate()
    {
        return Err(SimError::ShapeMismatch);
    }
    if !snr_db.is_finite() {
        return Err(SimError::InvalidRanges("snr must be finite"));
    }
    let pc = clean.power();
    let pn = noise.power();
    if pc <= 0.0 || pn <= 0.0 {
        return Err(SimError::ZeroPower);
    }
    Ok(sqrt(pc / (pn * powf(10.0, snr_db / 10.0))))
}

/// `clean + g * noise` with `g` from [`snr_gain`].
pub fn mix_at_snr(clean: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip, SimError> {
    let g = snr_gain(clean, noise, snr_db)?;
    let channels = clean
        .channels()
        .iter()
        .zip(noise.channels())
        .map(|(c, n)| c.iter().zip(n).map(|(a, b)| a + g * b).collect())
        .collect();
    Ok(AudioClip::new(channels, clean.sample_rate())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log10;

    fn clip(ch: Vec<Vec<f64>>) -> AudioClip {
        AudioClip::new(ch, 16000.0).unwrap()
    }

    #[test]
    fn gain_examples() {
        let a = clip(vec![vec![1.0, -1.0, 1.0, -1.0]]);
        let b = clip(vec![vec![-1.0, 1.0, 1.0, -1.0]]);
        assert!((snr_gain(&a, &b, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((snr_gain(&a, &b, 20.0).unwrap() - 0.1).abs() < 1e-15);
        let c = clip(vec![vec![0.3, 0.1, -0.2, 0.4], vec![0.0, 0.2, 0.1, -0.1]]);
        let n = clip(vec![vec![1.0, 2.0, -1.0, 0.5], vec![0.7, -0.2, 0.1, 1.1]]);
        let pc: f64 = c.channels().iter().flatten().map(|v| v * v).sum::<f64>() / 8.0;
        let pn: f64 = n.channels().iter().flatten().map(|v| v * v).sum::<f64>() / 8.0;
        let want = sqrt(pc / pn) * powf(10.0, 5.0 / 20.0);
        assert!((snr_gain(&c, &n, -5.0).unwrap() - want).abs() < 1e-12);
        let mixed = mix_at_snr(&c, &n, -5.0).unwrap();
        let g = want;
        let residual: f64 = mixed
            .channels()
            .iter()
            .zip(c.channels())
            .flat_map(|(m, c)| m.iter().zip(c).map(|(a, b)| (a - b) * (a - b)))
            .sum::<f64>()
            / 8.0;
        let snr = 10.0 * log10(pc / residual);
        assert!((snr + 5.0).abs() < 0.01);
        assert!((residual - g * g * pn).abs() < 1e-12);
    }

    #[test]
    fn zero_power_and_shape_errors() {
        let z = clip(vec![vec![0.0; 4]]);
        let n = clip(vec![vec![1.0; 4]]);
        assert_eq!(snr_gain(&z, &n, 0.0), Err(SimError::ZeroPower));
        let n2 = clip(vec![vec![1.0; 5]]);
        assert_eq!(snr_gain(&n, &n2, 0.0), Err(SimError::ShapeMismatch));
    }

    #[test]
    fn noise_deterministic_and_unit_variance() {
        let arr = ArrayGeometry::pair(Vec3::new(2.0, 2.0, 1.5), 0.08, 0.4).unwrap();
        let cfg = NoiseConfig::default();
        let a = generate_diffuse_noise(0.5, &arr, NoiseKind::BabbleLike, 7, &cfg).unwrap();
        let b = generate_diffuse_noise(0.5, &arr, NoiseKind::BabbleLike, 7, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8000);
        for m in 0..2 {
            let p = a.channel(m).iter().map(|v| v * v).sum::<f64>() / 8000.0;
            assert!((p - 1.0).abs() < 0.1, "{p}");
        }
        assert!(generate_diffuse_noise(0.0, &arr, NoiseKind::White, 1, &cfg).is_err());
    }
}
