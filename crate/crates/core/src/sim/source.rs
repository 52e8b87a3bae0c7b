use alloc::vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SimError;
use crate::dsp::AudioClip;
use crate::math::{round, sin, sqrt, PI};

/// Stand-in talker: talk spurts of amplitude-modulated colored noise plus a
/// gliding harmonic series, separated by exact silences.
///
/// Spurts last 0.3-1.5 s, gaps 0.1-0.5 s; syllable-rate modulation is
/// 3-6 Hz and the fundamental 90-220 Hz. The result is scaled to an RMS of
/// 0.1 over the whole clip.
pub fn synth_speech_like(duration: f64, sample_rate: f64, seed: u64) -> Result<AudioClip, SimError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SimError::InvalidDuration(duration));
    }
    let len = round(duration * sample_rate) as usize;
    if len == 0 {
        return Err(SimError::InvalidDuration(duration));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut pos = 0usize;
    let mut talking = true;
    let mut lp = 0.0;
    while pos < len {
        let seg = if talking { rng.gen_range(0.3..1.5) } else { rng.gen_range(0.1..0.5) };
        let seg_len = ((seg * sample_rate) as usize).min(len - pos);
        if talking {
            let rate: f64 = rng.gen_range(3.0..6.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let f0_start: f64 = rng.gen_range(90.0..220.0);
            let f0_end: f64 = f0_start * rng.gen_range(0.8..1.25);
            let voiced: f64 = rng.gen_range(0.3..0.8);
            let ramp = (0.02 * sample_rate) as usize;
            let mut f0_phase = 0.0;
            for i in 0..seg_len {
                let t = i as f64 / sample_rate;
                let m = 0.5 + 0.5 * sin(2.0 * PI * rate * t + phase);
                let edge = (i.min(seg_len - 1 - i) as f64 / ramp as f64).min(1.0);
                let white: f64 = rng.sample(StandardNormal);
                lp = 0.85 * lp + 0.15 * white;
                let noise = 0.6 * lp + 0.4 * white;
                let f0 = f0_start + (f0_end - f0_start) * i as f64 / seg_len as f64;
                f0_phase += 2.0 * PI * f0 / sample_rate;
                let mut harm = 0.0;
                let mut h = 1;
                while (h as f64) * f0 < 0.45 * sample_rate && h <= 30 {
                    harm += sin(h as f64 * f0_phase) / h as f64;
                    h += 1;
                }
                let v = (1.0 - voiced) * noise + voiced * 0.5 * harm;
                out[pos + i] = v * m * m * edge;
            }
        }
        pos += seg_len;
        talking = !talking;
    }
    let rms = sqrt(out.iter().map(|v| v * v).sum::<f64>() / len as f64);
    if rms > 0.0 {
        for v in out.iter_mut() {
            *v *= 0.1 / rms;
        }
    }
    Ok(AudioClip::mono(out, sample_rate)?)
}
