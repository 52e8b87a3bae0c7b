use fnssl_core::nn::{
    adam_step, backward, forward, infer, init_params, loss, loss_and_grad, lr_at_epoch, AdamConfig, Axis,
    Head, LstmDirection, NetworkConfig, OptimizerState, Output, Target,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAMES: usize = 5;
const FREQS: usize = 6;
const INPUT: usize = 3;
const HALF: usize = 4;

struct Weights {
    w_ih: Vec<f64>,
    w_hh: Vec<f64>,
    bias: Vec<f64>,
}

fn weights(seed: u64, scale: f64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    Weights { w_ih: draw(INPUT * 4 * HALF), w_hh: draw(HALF * 4 * HALF), bias: draw(4 * HALF) }
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// One recurrent layer over `[frames x freqs x INPUT]`: bidirectional
/// (`HALF` units per direction) or forward only.
fn layer(x: &[f64], frames: usize, freqs: usize, axis: Axis, both: bool, w: &[Weights; 2]) -> Vec<f64> {
    let dirs = if both { 2 } else { 1 };
    let stride = dirs * HALF;
    let mut out = vec![0.0; frames * freqs * stride];
    for (d, wd) in w.iter().enumerate().take(dirs) {
        let dir = LstmDirection {
            w_ih: &wd.w_ih,
            w_hh: &wd.w_hh,
            bias: &wd.bias,
            input: INPUT,
            hidden: HALF,
            axis,
            reverse: d == 1,
        };
        dir.forward(x, frames, freqs, &mut out, stride, d * HALF, None);
    }
    out
}

fn row(v: &[f64], width: usize, t: usize, k: usize, freqs: usize) -> &[f64] {
    let r = t * freqs + k;
    &v[r * width..(r + 1) * width]
}

fn permute(x: &[f64], width: usize, frames: usize, freqs: usize, tp: &[usize], kp: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for &t in &tp[..frames] {
        for &k in &kp[..freqs] {
            out.extend_from_slice(row(x, width, t, k, freqs));
        }
    }
    out
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn full_band_layer_treats_frames_independently() {
    let w = [weights(1, 0.5), weights(2, 0.5)];
    let x = random(FRAMES * FREQS * INPUT, 3);
    let y = layer(&x, FRAMES, FREQS, Axis::Freq, true, &w);
    let tp = [3, 0, 4, 1, 2];
    let ident: Vec<usize> = (0..FREQS).collect();
    let yp = layer(&permute(&x, INPUT, FRAMES, FREQS, &tp, &ident), FRAMES, FREQS, Axis::Freq, true, &w);
    assert_close(&yp, &permute(&y, 2 * HALF, FRAMES, FREQS, &tp, &ident), 1e-12);

    // A single frame run alone equals its slice of the batch.
    for t in 0..FRAMES {
        let xs = &x[t * FREQS * INPUT..(t + 1) * FREQS * INPUT];
        let ys = layer(xs, 1, FREQS, Axis::Freq, true, &w);
        assert_close(&ys, &y[t * FREQS * 2 * HALF..(t + 1) * FREQS * 2 * HALF], 1e-12);
    }
}

#[test]
fn zero_input_and_zero_weights_give_zero_output() {
    let w = [weights(1, 0.0), weights(2, 0.0)];
    for axis in [Axis::Freq, Axis::Time] {
        let y = layer(&vec![0.0; FRAMES * FREQS * INPUT], FRAMES, FREQS, axis, true, &w);
        assert!(y.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn narrow_band_layer_treats_frequencies_independently() {
    let w = [weights(4, 0.5), weights(5, 0.5)];
    let x = random(FRAMES * FREQS * INPUT, 6);
    let kp = [5, 2, 0, 4, 1, 3];
    let ident: Vec<usize> = (0..FRAMES).collect();
    for both in [false, true] {
        let width = if both { 2 * HALF } else { HALF };
        let y = layer(&x, FRAMES, FREQS, Axis::Time, both, &w);
        let yp = layer(&permute(&x, INPUT, FRAMES, FREQS, &ident, &kp), FRAMES, FREQS, Axis::Time, both, &w);
        assert_close(&yp, &permute(&y, width, FRAMES, FREQS, &ident, &kp), 1e-12);
    }
}

#[test]
fn narrow_band_causality() {
    let w = [weights(7, 0.5), weights(8, 0.5)];
    let x = random(FRAMES * FREQS * INPUT, 9);
    let mut future = x.clone();
    let cut = 2;
    for v in &mut future[(cut + 1) * FREQS * INPUT..] {
        *v += 1.0;
    }
    let split = (cut + 1) * FREQS;
    let causal = layer(&x, FRAMES, FREQS, Axis::Time, false, &w);
    let causal_f = layer(&future, FRAMES, FREQS, Axis::Time, false, &w);
    assert_eq!(causal[..split * HALF], causal_f[..split * HALF]);
    assert_ne!(causal[split * HALF..], causal_f[split * HALF..]);
    let both = layer(&x, FRAMES, FREQS, Axis::Time, true, &w);
    let both_f = layer(&future, FRAMES, FREQS, Axis::Time, true, &w);
    assert_ne!(both[..split * 2 * HALF], both_f[..split * 2 * HALF]);
}

fn net(head: Head) -> NetworkConfig {
    NetworkConfig { num_blocks: 1, hidden: 8, head, ..NetworkConfig::default() }
}

#[test]
fn full_clip_output_shapes_and_ranges() {
    let frames = 298;
    for head in [Head::DpIpd, Head::Classification { num_classes: 180 }, Head::Regression] {
        let cfg = net(head);
        let p = init_params::<f32>(&cfg, 3).unwrap();
        let x: Vec<f32> = random(frames * 256 * 4, 1).into_iter().map(|v| v as f32).collect();
        let out = infer(&p, &cfg, &x, frames).unwrap();
        assert_eq!(out.frames, 24);
        match head {
            Head::DpIpd => {
                assert_eq!(out.dim, 512);
                assert!(out.values.iter().all(|v| v.abs() <= 1.0));
            }
            Head::Classification { .. } => {
                for r in 0..24 {
                    let s: f32 = out.row(r).iter().sum();
                    assert!((s - 1.0).abs() < 1e-5 && out.row(r).iter().all(|&v| v >= 0.0));
                }
            }
            Head::Regression => {
                for r in 0..24 {
                    let n = out.row(r).iter().map(|v| v * v).sum::<f32>().sqrt();
                    assert!((n - 1.0).abs() < 1e-5);
                }
            }
        }
    }
}

#[test]
fn loss_examples() {
    let cfg = NetworkConfig { num_freqs: 4, ..net(Head::DpIpd) };
    let target: Vec<f64> = (0..2 * 4 * 2).map(|i| if i % 2 == 0 { (i as f64).cos() } else { (i as f64).sin() }).collect();
    let pairs: Vec<f64> = (0..2 * 4).flat_map(|i| [(i as f64).cos(), (i as f64).sin()]).collect();
    let same = Output { frames: 2, dim: 8, values: pairs.clone() };
    assert_eq!(loss(&cfg, &same, &Target::DpIpd(pairs.clone())).unwrap(), 0.0);
    let zero = Output { frames: 2, dim: 8, values: vec![0.0; 16] };
    assert!((loss(&cfg, &zero, &Target::DpIpd(pairs)).unwrap() - 0.5).abs() < 1e-15);
    assert!(loss(&cfg, &zero, &Target::DpIpd(target[..8].to_vec())).is_err());

    let cls = net(Head::Classification { num_classes: 180 });
    let uniform = Output { frames: 3, dim: 180, values: vec![1.0 / 180.0; 540] };
    let ce = loss(&cls, &uniform, &Target::Class(vec![0, 90, 179])).unwrap();
    assert!((ce - 180f64.ln()).abs() < 1e-12 && (ce - 5.193).abs() < 1e-3);
}

fn tiny(head: Head) -> NetworkConfig {
    NetworkConfig { num_blocks: 2, hidden: 6, num_freqs: 4, head, pool_kernel: 3, pool_stride: 3, ..NetworkConfig::default() }
}

#[test]
fn gradients_vanish_at_a_zero_loss_point() {
    let cfg = tiny(Head::DpIpd);
    let p = init_params::<f64>(&cfg, 2).unwrap();
    let x = random(6 * 4 * 4, 3);
    let (out, cache) = forward(&p, &cfg, &x, 6).unwrap();
    let target = Target::DpIpd(out.values.clone());
    assert_eq!(loss(&cfg, &out, &target).unwrap(), 0.0);
    let g = backward(&p, &cfg, &cache, &out, &target).unwrap();
    assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
}

#[test]
fn batch_gradient_is_the_sum_of_item_gradients() {
    let cfg = tiny(Head::Regression);
    let mut p = init_params::<f64>(&cfg, 4).unwrap();
    let xs = [random(6 * 4 * 4, 5), random(6 * 4 * 4, 6)];
    let targets = [Target::Regression(vec![0.6, 0.8, 1.0, 0.0]), Target::Regression(vec![-0.8, 0.6, 0.0, 1.0])];
    let mut sum = p.zeros_like();
    for (x, t) in xs.iter().zip(&targets) {
        sum.add_assign(&loss_and_grad(&p, &cfg, x, 6, t).unwrap().1);
    }
    let total = |p: &fnssl_core::nn::ParamStore<f64>| -> f64 {
        xs.iter().zip(&targets).map(|(x, t)| loss(&cfg, &forward(p, &cfg, x, 6).unwrap().0, t).unwrap()).sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..40 {
        let ti = rng.gen_range(0..p.tensors().len());
        let j = rng.gen_range(0..p.tensors()[ti].len());
        let orig = p.tensors()[ti].data[j];
        p.tensors_mut()[ti].data[j] = orig + 1e-5;
        let up = total(&p);
        p.tensors_mut()[ti].data[j] = orig - 1e-5;
        let down = total(&p);
        p.tensors_mut()[ti].data[j] = orig;
        let numeric = (up - down) / 2e-5;
        let analytic = sum.tensors()[ti].data[j];
        assert!((numeric - analytic).abs() <= 1e-5 * analytic.abs().max(1.0), "{numeric} vs {analytic}");
    }
}

#[test]
fn adam_examples() {
    let cfg = tiny(Head::DpIpd);
    let p0 = init_params::<f64>(&cfg, 1).unwrap();
    let mut p = p0.clone();
    let mut st = OptimizerState::new(&p, AdamConfig::default());
    adam_step(&mut p, &p0.zeros_like(), &mut st, 0.001).unwrap();
    assert_eq!(p, p0);

    // Two steps with gradients 1 then -1, traced by hand.
    let mut g = p0.zeros_like();
    let mut p = p0.clone();
    let mut st = OptimizerState::new(&p, AdamConfig::default());
    let (b1, b2, eps, lr): (f64, f64, f64, f64) = (0.9, 0.999, 1e-8, 0.001);
    let (mut m, mut v, mut want) = (0.0, 0.0, p0.tensors()[0].data[0]);
    for (step, gv) in [(1, 1.0), (2, -1.0)] {
        for t in g.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = gv);
        }
        adam_step(&mut p, &g, &mut st, lr).unwrap();
        m = b1 * m + (1.0 - b1) * gv;
        v = b2 * v + (1.0 - b2) * gv * gv;
        let mh = m / (1.0 - b1.powi(step));
        let vh = v / (1.0 - b2.powi(step));
        want -= lr * mh / (vh.sqrt() + eps);
        if step == 1 {
            assert!((p.tensors()[0].data[0] - (p0.tensors()[0].data[0] - 0.001)).abs() < 1e-9);
        }
        assert!((p.tensors()[0].data[0] - want).abs() < 1e-15);
    }
}

#[test]
fn learning_rate_schedule() {
    assert_eq!(lr_at_epoch(0), 0.001);
    assert_eq!(lr_at_epoch(1), 0.0008988);
    assert!((lr_at_epoch(14) - 0.001 * 0.8988f64.powi(14)).abs() < 1e-18);
    assert!((lr_at_epoch(14) - 2.24e-4).abs() < 1e-6);
}
