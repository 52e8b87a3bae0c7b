//! Central-difference gradient check shared by the network tests and the
//! acceptance suite.

use fnssl_core::nn::{init_params, loss, loss_and_grad, forward, Head, NetworkConfig, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(head: Head, causal: bool) -> NetworkConfig {
    NetworkConfig {
        num_mics: 2,
        num_blocks: 2,
        hidden: 8,
        num_freqs: 4,
        causal,
        head,
        pool_kernel: 3,
        pool_stride: 3,
    }
}

pub fn random_target(cfg: &NetworkConfig, pooled: usize, rng: &mut ChaCha8Rng) -> Target {
    match cfg.head {
        Head::DpIpd => Target::DpIpd(
            (0..pooled * cfg.num_freqs)
                .flat_map(|_| {
                    let a: f64 = rng.gen_range(-3.0..3.0);
                    [a.cos(), a.sin()]
                })
                .collect(),
        ),
        Head::Classification { num_classes } => {
            Target::Class((0..pooled).map(|_| rng.gen_range(0..num_classes)).collect())
        }
        Head::Regression => Target::Regression(
            (0..pooled)
                .flat_map(|_| {
                    let a: f64 = rng.gen_range(0.0..3.1);
                    [a.cos(), a.sin()]
                })
                .collect(),
        ),
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter.
///
/// The denominator is floored at `1e-6 * max(1, |loss|)`: a central
/// difference of a loss of that size carries rounding noise of order
/// `ulp(loss) / step`, so smaller gradients are compared absolutely.
pub fn max_relative_error(cfg: &NetworkConfig, frames: usize, seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params::<f64>(cfg, seed).unwrap();
    let x: Vec<f64> = (0..frames * cfg.num_freqs * cfg.input_channels())
        .map(|_| rng.gen_range(-1.5..1.5))
        .collect();
    let target = random_target(cfg, cfg.pooled_frames(frames), &mut rng);
    let (l0, grads) = loss_and_grad(&params, cfg, &x, frames, &target).unwrap();
    let floor = 1e-6 * l0.abs().max(1.0);
    let eval = |p: &fnssl_core::nn::ParamStore<f64>| {
        let (out, _) = forward(p, cfg, &x, frames).unwrap();
        loss(cfg, &out, &target).unwrap()
    };
    let mut worst: f64 = 0.0;
    for ti in 0..params.tensors().len() {
        for j in 0..params.tensors()[ti].len() {
            let orig = params.tensors()[ti].data[j];
            params.tensors_mut()[ti].data[j] = orig + step;
            let up = eval(&params);
            params.tensors_mut()[ti].data[j] = orig - step;
            let down = eval(&params);
            params.tensors_mut()[ti].data[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.tensors()[ti].data[j];
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}
