use fnssl_core::dsp::{stft, Spectrogram, StftConfig};
use fnssl_core::eval::{baseline_ipd_localize, vad_mask};
use fnssl_core::features::build_candidate_grid;
use fnssl_core::geometry::Vec3;
use fnssl_core::sim::{
    generate_diffuse_noise, point_at_azimuth, render_direct_path, render_moving_source, synth_speech_like,
    ArrayGeometry, NoiseConfig, NoiseKind, RenderConfig, RoomSpec, SceneSpec, Trajectory,
};
use fnssl_core::SPEED_OF_SOUND;

fn array() -> ArrayGeometry {
    ArrayGeometry::pair(Vec3::new(5.0, 4.0, 1.5), 0.08, 0.3).unwrap()
}

/// Real part of the Welch coherence estimate at bin `k`.
fn coherence(spec: &Spectrogram, k: usize) -> f64 {
    let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
    for t in 0..spec.num_frames() {
        let (a, b) = (spec.get(0, t, k), spec.get(1, t, k));
        s11 += a.norm_sqr();
        s22 += b.norm_sqr();
        s12 += (a * b.conj()).re;
    }
    s12 / (s11 * s22).sqrt()
}

#[test]
fn diffuse_noise_coherence_follows_sinc() {
    let cfg = StftConfig::default();
    for seed in 0..4 {
        for kind in [NoiseKind::White, NoiseKind::BabbleLike] {
            let noise = generate_diffuse_noise(20.0, &array(), kind, seed, &NoiseConfig::default()).unwrap();
            let spec = stft(&noise, &cfg).unwrap();
            // 1000 Hz is bin 32.
            let x = 2.0 * std::f64::consts::PI * 1000.0 * 0.08 / SPEED_OF_SOUND;
            assert!((x - 1.4655).abs() < 1e-4);
            let c = coherence(&spec, 32);
            assert!((c - x.sin() / x).abs() <= 0.1, "seed {seed} {kind:?}: {c}");
            assert!((c - 0.679).abs() <= 0.1);
            let low = coherence(&spec, 1);
            assert!((low - 1.0).abs() <= 0.05, "seed {seed} {kind:?}: {low}");
        }
    }
}

fn anechoic_scene(source: Vec3) -> SceneSpec {
    SceneSpec {
        room: RoomSpec::new([10.0, 8.0, 3.0], 0.0).unwrap(),
        array: array(),
        trajectory: Trajectory::fixed(source),
        snr_db: f64::INFINITY,
        noise_kind: NoiseKind::White,
        seed: 0,
    }
}

/// Baseline estimates of the active pooled frames of an anechoic noiseless
/// static recording.
fn baseline_run(azimuth: f64) -> Vec<f64> {
    let cfg = StftConfig::default();
    let scene = anechoic_scene(point_at_azimuth(&array(), azimuth, 3.5));
    let src = synth_speech_like(4.79, 16000.0, 21).unwrap();
    let mix = render_moving_source(&src, &scene, &RenderConfig::default()).unwrap();
    let direct = render_direct_path(&src, &scene, &RenderConfig::default()).unwrap();
    let grid = build_candidate_grid(5.0, &cfg, 0.08).unwrap();
    let est = baseline_ipd_localize(&stft(&mix, &cfg).unwrap(), &grid, 12);
    let mask = vad_mask(direct.channel(0), &cfg, 12, est.len(), 40.0);
    est.iter().zip(mask).filter(|(_, m)| *m).map(|(d, _)| d.azimuth()).collect()
}

#[test]
fn baseline_finds_a_static_source_at_sixty_degrees() {
    let est = baseline_run(60.0);
    assert!(!est.is_empty());
    let hits = est.iter().filter(|a| (*a - 60.0).abs() <= 2.5).count();
    assert!(hits as f64 >= 0.95 * est.len() as f64, "{est:?}");
}

#[test]
fn baseline_places_a_broadside_source_at_ninety_degrees() {
    let est = baseline_run(90.0);
    assert!(!est.is_empty());
    assert!(est.iter().all(|&a| a == 90.0), "{est:?}");
}
