use alloc::vec;
use alloc::vec::Vec;

use super::{ArrayGeometry, RoomSpec, SimError};
use crate::geometry::Vec3;
use crate::math::{ceil, cos, exp, floor, powi, sin, PI};
use crate::SPEED_OF_SOUND;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirConfig {
    pub sample_rate: f64,
    /// Fractional-delay filter length (odd).
    pub fd_taps: usize,
    /// RIR length in samples; `None` picks `rt60 * fs` plus the longest
    /// direct path and the filter length.
    pub length: Option<usize>,
    /// Cutoff of the DC-blocking high-pass applied to the reflections (the
    /// direct path is left untouched). `None` disables it.
    pub highpass_hz: Option<f64>,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self { sample_rate: 16000.0, fd_taps: 81, length: None, highpass_hz: Some(100.0) }
    }
}

/// Second-order Allen-Berkley high-pass, in place.
fn highpass(x: &mut [f64], cutoff: f64, fs: f64) {
    let w = 2.0 * PI * cutoff / fs;
    let r1 = exp(-w);
    let (b1, b2, a1) = (2.0 * r1 * cos(w), -r1 * r1, -(1.0 + r1));
    let mut y = [0.0; 3];
    for v in x.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Per-microphone room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<Vec<f64>>,
    /// Direct-path delay in (fractional) samples.
    pub direct_delay: Vec<f64>,
    /// Tap holding the direct-path peak.
    pub direct_index: Vec<usize>,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Adds `gain` times a windowed-sinc impulse delayed by `delay` samples.
///
/// Same filter as [`crate::dsp::design_fractional_delay`], evaluated with
/// one `sin` per impulse: `sin(pi (n - d))` only flips sign with `n`, and the
/// window cosine advances by a fixed rotation.
pub(crate) fn add_impulse(out: &mut [f64], delay: f64, gain: f64, taps: usize, scratch: &mut [f64]) {
    let half = (taps - 1) / 2;
    let base = floor(delay) as isize - half as isize;
    let frac = delay - floor(delay);
    let h = &mut scratch[..taps];
    if frac == 0.0 {
        let idx = base + half as isize;
        if idx >= 0 && (idx as usize) < out.len() {
            out[idx as usize] += gain;
        }
        return;
    }
    let hw = half as f64;
    // x_n = n - (half + frac) for n in 0..taps
    let s = sin(PI * frac);
    let step = PI / hw;
    let (cs, ss) = (cos(step), sin(step));
    let a0 = PI * (-(hw + frac)) / hw;
    let (mut c, mut sn) = (cos(a0), sin(a0));
    let mut sum = 0.0;
    for (n, v) in h.iter_mut().enumerate() {
        let x = n as f64 - hw - frac;
        *v = if x.abs() <= hw {
            // sin(pi x) = sin(pi (n - half) - pi frac) = -(-1)^(n-half) sin(pi frac)
            let sign = if (n + half).is_multiple_of(2) { -1.0 } else { 1.0 };
            0.5 * (1.0 + c) * sign * s / (PI * x)
        } else {
            0.0
        };
        sum += *v;
        let nc = c * cs - sn * ss;
        sn = sn * cs + c * ss;
        c = nc;
    }
    let scale = gain / sum;
    for (n, v) in h.iter().enumerate() {
        let idx = base + n as isize;
        if idx >= 0 && (idx as usize) < out.len() {
            out[idx as usize] += v * scale;
        }
    }
}

/// Enumerates image sources of `source` with reflection order at most
/// `max_order` and path length at most `max_dist`, calling
/// `visit(image_position, reflection_order)`.
pub(crate) fn for_each_image(
    room: &RoomSpec,
    source: &Vec3,
    max_order: usize,
    max_dist: f64,
    center: &Vec3,
    mut visit: impl FnMut(Vec3, usize),
) {
    let l = room.dims;
    let nmax: [i64; 3] = core::array::from_fn(|a| ceil(max_dist / (2.0 * l[a])) as i64 + 1);
    for qx in 0..2i64 {
        for qy in 0..2i64 {
            for qz in 0..2i64 {
                let q = [qx, qy, qz];
                let base: [f64; 3] = core::array::from_fn(|a| (1 - 2 * q[a]) as f64 * source.0[a]);
                for nx in -nmax[0]..=nmax[0] {
                    let px = base[0] + 2.0 * nx as f64 * l[0];
                    let ox = (nx - qx).unsigned_abs() + nx.unsigned_abs();
                    let dx = px - center.0[0];
                    if ox as usize > max_order || dx.abs() > max_dist {
                        continue;
                    }
                    for ny in -nmax[1]..=nmax[1] {
                        let py = base[1] + 2.0 * ny as f64 * l[1];
                        let oy = (ny - qy).unsigned_abs() + ny.unsigned_abs();
                        let dy = py - center.0[1];
                        if (ox + oy) as usize > max_order || dx * dx + dy * dy > max_dist * max_dist {
                            continue;
                        }
                        for nz in -nmax[2]..=nmax[2] {
                            let pz = base[2] + 2.0 * nz as f64 * l[2];
                            let oz = (nz - qz).unsigned_abs() + nz.unsigned_abs();
                            let dz = pz - center.0[2];
                            let order = (ox + oy + oz) as usize;
                            if order > max_order || dx * dx + dy * dy + dz * dz > max_dist * max_dist {
                                continue;
                            }
                            visit(Vec3::new(px, py, pz), order);
                        }
                    }
                }
            }
        }
    }
}

/// Image-source room impulse response from `source` to every microphone.
///
/// Each image contributes `beta^order / (4 pi r)` at delay `r / c`, placed
/// with a Hann-windowed sinc fractional-delay filter. The summed
/// reflections are high-passed to remove the DC build-up of the all-positive
/// image gains. Taps are restricted to
/// `[0, length)` and images farther than the RIR length are skipped.
pub fn simulate_rir(
    room: &RoomSpec,
    source: &Vec3,
    array: &ArrayGeometry,
    max_order: usize,
    cfg: &RirConfig,
) -> Result<Rir, SimError> {
    room.validate()?;
    if !room.contains(source, 0.0) {
        return Err(SimError::SourceOutsideRoom(*source));
    }
    let beta = room.reflection()?;
    let fs = cfg.sample_rate;
    let direct: Vec<f64> = array
        .mics
        .iter()
        .map(|m| source.distance(m) / SPEED_OF_SOUND * fs)
        .collect();
    let longest = direct.iter().cloned().fold(0.0, f64::max);
    let length = cfg
        .length
        .unwrap_or_else(|| ceil(room.rt60 * fs + longest) as usize + cfg.fd_taps);
    let max_order = if beta == 0.0 { 0 } else { max_order };
    let max_dist = (length as f64 + (cfg.fd_taps / 2) as f64) / fs * SPEED_OF_SOUND;
    let mut scratch = vec![0.0; cfg.fd_taps];
    let mut taps = Vec::with_capacity(array.num_mics());
    for mic in &array.mics {
        let mut h = vec![0.0; length];
        let mut refl = vec![0.0; length];
        for_each_image(room, source, max_order, max_dist, mic, |img, order| {
            let dist = img.distance(mic);
            let gain = powi(beta, order as i32) / (4.0 * PI * dist);
            let out = if order == 0 { &mut h } else { &mut refl };
            add_impulse(out, dist / SPEED_OF_SOUND * fs, gain, cfg.fd_taps, &mut scratch);
        });
        if max_order > 0 {
            if let Some(fc) = cfg.highpass_hz {
                highpass(&mut refl, fc, fs);
            }
            for (a, b) in h.iter_mut().zip(&refl) {
                *a += b;
            }
        }
        taps.push(h);
    }
    let direct_index = direct.iter().map(|d| crate::math::round(*d) as usize).collect();
    Ok(Rir { taps, direct_delay: direct, direct_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::design_fractional_delay;
    use crate::math::{ln, log10};

    fn one_mic(p: Vec3) -> ArrayGeometry {
        ArrayGeometry::new(vec![p]).unwrap()
    }

    #[test]
    fn fast_impulse_matches_designed_filter() {
        for &delay in &[40.0, 40.5, 43.7318, 57.01] {
            let mut out = vec![0.0; 200];
            let mut scratch = vec![0.0; 81];
            add_impulse(&mut out, delay, 1.0, 81, &mut scratch);
            let f = design_fractional_delay(40.0 + (delay - floor(delay)), 81).unwrap();
            let shift = floor(delay) as usize - 40;
            for (n, v) in f.taps.iter().enumerate() {
                assert!((out[n + shift] - v).abs() < 1e-12, "{delay} {n}");
            }
        }
    }

    #[test]
    fn anechoic_single_pulse() {
        let room = RoomSpec::new([6.0, 6.0, 2.5], 0.0).unwrap();
        let mic = Vec3::new(2.0, 3.0, 1.2);
        let src = Vec3::new(3.0, 3.0, 1.2);
        let rir = simulate_rir(&room, &src, &one_mic(mic), 10, &RirConfig::default()).unwrap();
        let expect = 16000.0 / 343.0;
        assert!((rir.direct_delay[0] - expect).abs() < 1e-12);
        assert!((expect - 46.6472).abs() < 1e-4);
        assert_eq!(rir.direct_index[0], 47);
        // Energy concentrated around the pulse with total gain 1/(4 pi).
        let sum: f64 = rir.taps[0].iter().sum();
        assert!((sum - 1.0 / (4.0 * PI)).abs() < 1e-12);
        let peak = rir.taps[0]
            .iter()
            .enumerate()
            .fold((0, 0.0), |a, (i, &v)| if v.abs() > a.1 { (i, v.abs()) } else { a });
        assert!(peak.0 == 46 || peak.0 == 47);
        // Measured centroid of the symmetric-ish pulse near the delay.
        let taps = &rir.taps[0][6..87];
        let mut re = 0.0;
        let mut im = 0.0;
        let w = 1e-3;
        for (n, h) in taps.iter().enumerate() {
            re += h * cos(w * n as f64);
            im -= h * sin(w * n as f64);
        }
        let gd = -crate::math::atan2(im, re) / w + 6.0;
        assert!((gd - expect).abs() < 0.01, "{gd}");
    }

    #[test]
    fn order_zero_ignores_rt60() {
        let src = Vec3::new(3.0, 3.0, 1.2);
        let mic = one_mic(Vec3::new(2.0, 2.5, 1.3));
        let cfg = RirConfig { length: Some(4000), ..Default::default() };
        let a = simulate_rir(&RoomSpec::new([6.0, 6.0, 2.5], 0.0).unwrap(), &src, &mic, 0, &cfg).unwrap();
        let b = simulate_rir(&RoomSpec::new([6.0, 6.0, 2.5], 0.8).unwrap(), &src, &mic, 0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    fn t30(energy: &[f64], fs: f64) -> f64 {
        let mut edc = vec![0.0; energy.len()];
        let mut acc = 0.0;
        for i in (0..energy.len()).rev() {
            acc += energy[i];
            edc[i] = acc;
        }
        let at = |level: f64| edc.iter().position(|e| 10.0 * log10(e / edc[0]) < level).unwrap() as f64;
        2.0 * (at(-35.0) - at(-5.0)) / fs
    }

    /// Energy arrival histogram of the image lattice, without any filtering.
    fn lattice_energy(dims: [f64; 3], src: Vec3, mic: Vec3, alpha: f64, len: usize, fs: f64) -> Vec<f64> {
        let mut e = vec![0.0; len];
        let reach = len as f64 / fs * crate::SPEED_OF_SOUND;
        let n: [i64; 3] = core::array::from_fn(|a| (reach / (2.0 * dims[a])) as i64 + 2);
        for qx in 0..2 { for qy in 0..2 { for qz in 0..2 {
            for nx in -n[0]..=n[0] { for ny in -n[1]..=n[1] { for nz in -n[2]..=n[2] {
                let (q, m) = ([qx, qy, qz], [nx, ny, nz]);
                let mut d2 = 0.0;
                let mut order = 0;
                for a in 0..3 {
                    let p = (1 - 2 * q[a]) as f64 * src.0[a] + 2.0 * m[a] as f64 * dims[a];
                    d2 += (p - mic.0[a]) * (p - mic.0[a]);
                    order += (m[a] - q[a]).abs() + m[a].abs();
                }
                let idx = crate::math::round(crate::math::sqrt(d2) / crate::SPEED_OF_SOUND * fs) as usize;
                if idx < len {
                    e[idx] += powi(1.0 - alpha, order as i32) / d2;
                }
            }}}
        }}}
        e
    }

    #[test]
    fn schroeder_decay_time() {
        // Uniform absorption in a flat room decays slower than the diffuse
        // prediction, so besides the loose band the estimate must sit between
        // the Eyring time and the axial bound and match the lattice energy.
        let room = RoomSpec::new([6.0, 6.0, 2.5], 0.5).unwrap();
        let cfg = RirConfig { length: Some(16000), ..Default::default() };
        let (src, mic) = (Vec3::new(2.1, 3.7, 1.4), Vec3::new(4.2, 2.2, 1.1));
        let rir = simulate_rir(&room, &src, &one_mic(mic), room.default_max_order() * 2, &cfg).unwrap();
        let energy: Vec<f64> = rir.taps[0].iter().map(|x| x * x).collect();
        let measured = t30(&energy, 16000.0);
        assert!((0.35..=0.65).contains(&measured), "T60 {measured}");

        let alpha = room.absorption().unwrap();
        let eyring = 0.161 * room.volume() / (-room.surface() * ln(1.0 - alpha));
        let per_reflection_db = -10.0 * log10(1.0 - alpha);
        let axial = 60.0 / (per_reflection_db * crate::SPEED_OF_SOUND / 6.0);
        assert!(measured > eyring && measured < axial, "T60 {measured} outside [{eyring}, {axial}]");

        let predicted = t30(&lattice_energy(room.dims, src, mic, alpha, 16000, 16000.0), 16000.0);
        assert!((measured / predicted - 1.0).abs() < 0.1, "T60 {measured} vs lattice {predicted}");
    }

    #[test]
    fn rejects_source_outside() {
        let room = RoomSpec::new([6.0, 6.0, 2.5], 0.3).unwrap();
        let err = simulate_rir(&room, &Vec3::new(7.0, 1.0, 1.0), &one_mic(Vec3::new(1.0, 1.0, 1.0)), 3, &RirConfig::default());
        assert!(matches!(err, Err(SimError::SourceOutsideRoom(_))));
    }
}
