use fnssl_core::dsp::{Spectrogram, StftConfig, WindowKind};
use fnssl_core::features::{normalize_online, NormState};
use fnssl_core::nn::{infer, init_params, network_input, Head, NetworkConfig, ParamStore, StreamingNetwork};
use fnssl_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_stft() -> StftConfig {
    StftConfig { fft_size: 16, hop: 8, window: WindowKind::Hann, sample_rate: 16000.0 }
}

fn causal_config(head: Head) -> NetworkConfig {
    NetworkConfig {
        num_mics: 2,
        num_blocks: 2,
        hidden: 8,
        num_freqs: 8,
        causal: true,
        head,
        pool_kernel: 12,
        pool_stride: 12,
    }
}

fn random_spec(frames: usize, seed: u64) -> Spectrogram {
    let cfg = small_stft();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..2 * frames * cfg.num_bins())
        .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
        .collect();
    Spectrogram::from_raw(coeffs, 2, frames, cfg)
}

fn batch_online<R: fnssl_core::math::Real>(params: &ParamStore<R>, cfg: &NetworkConfig, spec: &Spectrogram) -> Vec<R> {
    let (norm, _) = normalize_online(spec, NormState::default());
    let x = network_input::<R>(&norm, cfg).unwrap();
    infer(params, cfg, &x, spec.num_frames()).unwrap().values
}

#[test]
fn streaming_matches_batch_bit_for_bit() {
    for head in [Head::DpIpd, Head::classification(), Head::Regression] {
        let cfg = causal_config(head);
        let params = init_params::<f32>(&cfg, 5).unwrap();
        let spec = random_spec(40, 9);
        let batch = batch_online(&params, &cfg, &spec);
        let mut stream = StreamingNetwork::new(&params, cfg, NormState::default()).unwrap();
        let mut streamed = Vec::new();
        for t in 0..spec.num_frames() {
            if let Some(row) = stream.push_stft_frame(&[spec.frame(0, t), spec.frame(1, t)]).unwrap() {
                streamed.extend(row);
            }
        }
        assert_eq!(streamed.len(), 3 * cfg.output_dim());
        assert_eq!(streamed, batch, "{head:?}");
    }
}

#[test]
fn streaming_rejects_offline_networks() {
    let cfg = NetworkConfig { causal: false, ..causal_config(Head::DpIpd) };
    let params = init_params::<f64>(&cfg, 1).unwrap();
    assert!(StreamingNetwork::new(&params, cfg, NormState::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn future_frames_do_not_change_past_outputs(
        seed in any::<u64>(),
        p in 0usize..3,
        scale in 1e-3f64..1e3,
    ) {
        let cfg = causal_config(Head::DpIpd);
        let params = init_params::<f64>(&cfg, seed % 7).unwrap();
        let spec = random_spec(36, seed);
        let mut perturbed = spec.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for m in 0..2 {
            for t in (p + 1) * 12..36 {
                for c in perturbed.frame_mut(m, t) {
                    *c = Complex64::new(rng.gen_range(-1.0..1.0) * scale, rng.gen_range(-1.0..1.0) * scale);
                }
            }
        }
        let a = batch_online(&params, &cfg, &spec);
        let b = batch_online(&params, &cfg, &perturbed);
        let keep = (p + 1) * cfg.output_dim();
        prop_assert_eq!(&a[..keep], &b[..keep]);
        if keep < a.len() {
            prop_assert_ne!(&a[keep..], &b[keep..]);
        }
    }
}
