use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{gemm, View};
use super::lstm::{Axis, LstmCache, LstmDirection, LstmGrads};
use super::params::{fb_name, layer_shapes, nb_name, ParamStore, DIRS};
use super::{Head, NetworkConfig, NnError};
use crate::dsp::Spectrogram;
use crate::math::{ln, Real};

/// Training target for one clip, one entry per pooled frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `[P x 2K]` interleaved cos/sin.
    DpIpd(Vec<f64>),
    /// Class index per pooled frame.
    Class(Vec<usize>),
    /// `[P x 2]` unit vectors.
    Regression(Vec<f64>),
}

/// Network output: `[frames x dim]`, where `frames` counts pooled frames.
///
/// Holds tanh DP-IPD estimates, class probabilities or unit direction
/// vectors depending on the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Output<R> {
    pub frames: usize,
    pub dim: usize,
    pub values: Vec<R>,
}

impl<R: Real> Output<R> {
    pub fn row(&self, p: usize) -> &[R] {
        &self.values[p * self.dim..(p + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
struct BlockCache<R> {
    /// Full-band input; empty for the first block, whose input is `x`.
    fb_in: Vec<R>,
    fb_out: Vec<R>,
    fb: Vec<LstmCache<R>>,
    nb_in: Vec<R>,
    nb_out: Vec<R>,
    nb: Vec<LstmCache<R>>,
}

#[derive(Debug, Clone)]
pub(crate) enum HeadCache<R> {
    DpIpd,
    Class { fm: Vec<R>, h1: Vec<R> },
    Regression { fm: Vec<R>, norm: Vec<R> },
}

/// Intermediate activations of [`forward`], consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<R> {
    frames: usize,
    x: Vec<R>,
    blocks: Vec<BlockCache<R>>,
    pooled: Vec<R>,
    head: HeadCache<R>,
}

/// Flattens bins `1..=K` of every channel into `[T x K x 2M]` real inputs.
pub fn network_input<R: Real>(spec: &Spectrogram, cfg: &NetworkConfig) -> Result<Vec<R>, NnError> {
    let k = cfg.num_freqs;
    if spec.num_channels() != cfg.num_mics || spec.num_bins() < k + 1 {
        return Err(NnError::Shape(format!(
            "spectrogram has {} channels and {} bins, network expects {} and {}",
            spec.num_channels(),
            spec.num_bins(),
            cfg.num_mics,
            k + 1
        )));
    }
    let c = cfg.input_channels();
    let t_len = spec.num_frames();
    let mut x = vec![R::ZERO; t_len * k * c];
    for m in 0..cfg.num_mics {
        for t in 0..t_len {
            let frame = spec.frame(m, t);
            for f in 0..k {
                let v = frame[f + 1];
                let base = (t * k + f) * c + 2 * m;
                x[base] = R::from_f64(v.re);
                x[base + 1] = R::from_f64(v.im);
            }
        }
    }
    Ok(x)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Fb,
    Nb,
}

pub(crate) fn direction<'a, R: Real>(
    params: &'a ParamStore<R>,
    cfg: &NetworkConfig,
    b: usize,
    kind: Kind,
    dir: usize,
) -> Result<LstmDirection<'a, R>, NnError> {
    let (fb, nb) = layer_shapes(cfg, b);
    let ((input, hidden, _), name, axis) = match kind {
        Kind::Fb => (fb, fb_name as fn(usize, &str, &str) -> String, Axis::Freq),
        Kind::Nb => (nb, nb_name as fn(usize, &str, &str) -> String, Axis::Time),
    };
    Ok(LstmDirection {
        w_ih: params.data(&name(b, DIRS[dir], "w_ih"))?,
        w_hh: params.data(&name(b, DIRS[dir], "w_hh"))?,
        bias: params.data(&name(b, DIRS[dir], "bias"))?,
        input,
        hidden,
        axis,
        reverse: dir == 1,
    })
}

fn num_dirs(cfg: &NetworkConfig, b: usize, kind: Kind) -> usize {
    let (fb, nb) = layer_shapes(cfg, b);
    match kind {
        Kind::Fb => fb.2,
        Kind::Nb => nb.2,
    }
}

fn run_layer<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    b: usize,
    kind: Kind,
    x: &[R],
    frames: usize,
) -> Result<(Vec<R>, Vec<LstmCache<R>>), NnError> {
    let (d, k) = (cfg.hidden, cfg.num_freqs);
    let mut out = vec![R::ZERO; frames * k * d];
    let mut caches = Vec::new();
    for dir in 0..num_dirs(cfg, b, kind) {
        let lstm = direction(params, cfg, b, kind, dir)?;
        let (cache, _) = lstm.forward(x, frames, k, &mut out, d, dir * lstm.hidden, None);
        caches.push(cache);
    }
    Ok((out, caches))
}

#[allow(clippy::too_many_arguments)]
fn layer_backward<R: Real>(
    params: &ParamStore<R>,
    grads: &mut ParamStore<R>,
    cfg: &NetworkConfig,
    b: usize,
    kind: Kind,
    x: &[R],
    out: &[R],
    dout: &[R],
    frames: usize,
    caches: &[LstmCache<R>],
    mut dx: Option<&mut [R]>,
) -> Result<(), NnError> {
    let name = match kind {
        Kind::Fb => fb_name,
        Kind::Nb => nb_name,
    };
    for (dir, cache) in caches.iter().enumerate() {
        let lstm = direction(params, cfg, b, kind, dir)?;
        let names = ["w_ih", "w_hh", "bias"].map(|p| name(b, DIRS[dir], p));
        let mut w_ih = core::mem::take(&mut grads.get_mut(&names[0])?.data);
        let mut w_hh = core::mem::take(&mut grads.get_mut(&names[1])?.data);
        let mut bias = core::mem::take(&mut grads.get_mut(&names[2])?.data);
        lstm.backward(
            x,
            frames,
            cfg.num_freqs,
            out,
            dout,
            cfg.hidden,
            dir * lstm.hidden,
            cache,
            LstmGrads { w_ih: &mut w_ih, w_hh: &mut w_hh, bias: &mut bias },
            dx.as_deref_mut(),
        );
        grads.get_mut(&names[0])?.data = w_ih;
        grads.get_mut(&names[1])?.data = w_hh;
        grads.get_mut(&names[2])?.data = bias;
    }
    Ok(())
}

pub(crate) fn add<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub(crate) fn add_into<R: Real>(acc: &mut [R], v: &[R]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Mean over non-overlapping windows of `stride` frames; trailing frames
/// that do not fill a window are dropped.
pub fn pool_time<R: Real>(y: &[R], frames: usize, row: usize, stride: usize) -> Vec<R> {
    let p_len = frames / stride;
    let inv = R::from_f64(1.0 / stride as f64);
    let mut out = vec![R::ZERO; p_len * row];
    for p in 0..p_len {
        let dst = &mut out[p * row..(p + 1) * row];
        for t in p * stride..(p + 1) * stride {
            add_into(dst, &y[t * row..(t + 1) * row]);
        }
        for v in dst.iter_mut() {
            *v *= inv;
        }
    }
    out
}

fn check_input<R>(cfg: &NetworkConfig, x: &[R], frames: usize) -> Result<(), NnError> {
    cfg.validate()?;
    let want = frames * cfg.num_freqs * cfg.input_channels();
    if x.len() != want {
        return Err(NnError::Shape(format!("input has {} values, expected {want}", x.len())));
    }
    Ok(())
}

/// Runs the recurrent blocks and returns the last narrow-band output
/// `[T x K x D]`, plus caches when `keep` is set.
fn trunk<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    x: &[R],
    frames: usize,
    keep: bool,
) -> Result<(Vec<R>, Vec<BlockCache<R>>), NnError> {
    let (k, d, c) = (cfg.num_freqs, cfg.hidden, cfg.input_channels());
    let rows = frames * k;
    let mut blocks: Vec<BlockCache<R>> = Vec::new();
    let mut prev: Option<(Vec<R>, Vec<R>)> = None;
    for b in 0..cfg.num_blocks {
        let fb_in = match &prev {
            None => Vec::new(),
            Some((f, n)) => add(n, f),
        };
        let (fb_out, fb) = run_layer(params, cfg, b, Kind::Fb, if b == 0 { x } else { &fb_in }, frames)?;
        let nb_in = match &prev {
            None => {
                let mut v = vec![R::ZERO; rows * (d + c)];
                for r in 0..rows {
                    v[r * (d + c)..r * (d + c) + d].copy_from_slice(&fb_out[r * d..(r + 1) * d]);
                    v[r * (d + c) + d..(r + 1) * (d + c)].copy_from_slice(&x[r * c..(r + 1) * c]);
                }
                v
            }
            Some((_, n)) => add(&fb_out, n),
        };
        let (nb_out, nb) = run_layer(params, cfg, b, Kind::Nb, &nb_in, frames)?;
        if keep {
            if let Some((f, n)) = prev.take() {
                let last = blocks.last_mut().expect("previous block cached");
                last.fb_out = f;
                last.nb_out = n;
            }
            blocks.push(BlockCache { fb_in, fb_out: Vec::new(), fb, nb_in, nb_out: Vec::new(), nb });
        }
        prev = Some((fb_out, nb_out));
    }
    let (f, n) = prev.expect("at least one block");
    if keep {
        let last = blocks.last_mut().expect("block cached");
        last.fb_out = f;
        last.nb_out = n.clone();
    }
    Ok((n, blocks))
}

/// Mean over the frequency axis: `[P x K x D] -> [P x D]`.
fn freq_mean<R: Real>(pooled: &[R], p_len: usize, k: usize, d: usize) -> Vec<R> {
    let inv = R::from_f64(1.0 / k as f64);
    let mut fm = vec![R::ZERO; p_len * d];
    for p in 0..p_len {
        let dst = &mut fm[p * d..(p + 1) * d];
        for f in 0..k {
            add_into(dst, &pooled[(p * k + f) * d..(p * k + f + 1) * d]);
        }
        for v in dst.iter_mut() {
            *v *= inv;
        }
    }
    fm
}

fn affine<R: Real>(x: &[R], rows: usize, w: &[R], b: &[R]) -> Vec<R> {
    let (n_out, n_in) = (b.len(), w.len() / b.len());
    let mut z = vec![R::ZERO; rows * n_out];
    for r in 0..rows {
        z[r * n_out..(r + 1) * n_out].copy_from_slice(b);
    }
    gemm(R::ONE, x, View::dense(0, rows, n_in), w, View::dense(0, n_in, n_out), R::ONE, &mut z, View::dense(0, rows, n_out));
    z
}

const NORM_FLOOR: f64 = 1e-12;

pub(crate) fn head_forward<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    pooled: &[R],
    p_len: usize,
) -> Result<(Output<R>, HeadCache<R>), NnError> {
    let (k, d) = (cfg.num_freqs, cfg.hidden);
    match cfg.head {
        Head::DpIpd => {
            let mut z = affine(pooled, p_len * k, params.data("head.w")?, params.data("head.b")?);
            for v in &mut z {
                *v = v.tanh();
            }
            Ok((Output { frames: p_len, dim: 2 * k, values: z }, HeadCache::DpIpd))
        }
        Head::Classification { num_classes } => {
            let fm = freq_mean(pooled, p_len, k, d);
            let mut h1 = affine(&fm, p_len, params.data("head.w1")?, params.data("head.b1")?);
            for v in &mut h1 {
                *v = v.tanh();
            }
            let mut z = affine(&h1, p_len, params.data("head.w2")?, params.data("head.b2")?);
            for p in 0..p_len {
                let row = &mut z[p * num_classes..(p + 1) * num_classes];
                let mx = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
                let mut sum = R::ZERO;
                for v in row.iter_mut() {
                    *v = (*v - mx).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v = *v / sum;
                }
            }
            Ok((Output { frames: p_len, dim: num_classes, values: z }, HeadCache::Class { fm, h1 }))
        }
        Head::Regression => {
            let fm = freq_mean(pooled, p_len, k, d);
            let mut z = affine(&fm, p_len, params.data("head.w")?, params.data("head.b")?);
            let mut norm = vec![R::ZERO; p_len];
            for p in 0..p_len {
                let n = (z[2 * p] * z[2 * p] + z[2 * p + 1] * z[2 * p + 1]).sqrt();
                let n = if n.to_f64() > NORM_FLOOR { n } else { R::from_f64(NORM_FLOOR) };
                norm[p] = n;
                z[2 * p] = z[2 * p] / n;
                z[2 * p + 1] = z[2 * p + 1] / n;
            }
            Ok((Output { frames: p_len, dim: 2, values: z }, HeadCache::Regression { fm, norm }))
        }
    }
}

/// Full forward pass keeping the activations needed by [`backward`].
///
/// `x` is `[frames x K x 2M]` as produced by [`network_input`].
pub fn forward<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    x: &[R],
    frames: usize,
) -> Result<(Output<R>, ForwardCache<R>), NnError> {
    check_input(cfg, x, frames)?;
    let (y, blocks) = trunk(params, cfg, x, frames, true)?;
    let row = cfg.num_freqs * cfg.hidden;
    let pooled = pool_time(&y, frames, row, cfg.pool_stride);
    let p_len = cfg.pooled_frames(frames);
    let (out, head) = head_forward(params, cfg, &pooled, p_len)?;
    Ok((out, ForwardCache { frames, x: x.to_vec(), blocks, pooled, head }))
}

/// Forward pass without caches, for inference.
pub fn infer<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    x: &[R],
    frames: usize,
) -> Result<Output<R>, NnError> {
    check_input(cfg, x, frames)?;
    let (y, _) = trunk(params, cfg, x, frames, false)?;
    let pooled = pool_time(&y, frames, cfg.num_freqs * cfg.hidden, cfg.pool_stride);
    Ok(head_forward(params, cfg, &pooled, cfg.pooled_frames(frames))?.0)
}

fn check_target<R: Real>(cfg: &NetworkConfig, out: &Output<R>, target: &Target) -> Result<(), NnError> {
    let p = out.frames;
    let ok = match (cfg.head, target) {
        (Head::DpIpd, Target::DpIpd(v)) => v.len() == p * 2 * cfg.num_freqs,
        (Head::Regression, Target::Regression(v)) => v.len() == p * 2,
        (Head::Classification { num_classes }, Target::Class(v)) => {
            v.len() == p && v.iter().all(|&c| c < num_classes)
        }
        _ => return Err(NnError::HeadMismatch),
    };
    if ok {
        Ok(())
    } else {
        Err(NnError::Shape(String::from("target length does not match pooled frames")))
    }
}

/// Mean squared error (DP-IPD and regression heads) or mean cross-entropy
/// (classification head) of an output against its target.
pub fn loss<R: Real>(cfg: &NetworkConfig, out: &Output<R>, target: &Target) -> Result<f64, NnError> {
    check_target(cfg, out, target)?;
    if out.frames == 0 {
        return Ok(0.0);
    }
    Ok(match target {
        Target::DpIpd(t) | Target::Regression(t) => {
            let s: f64 = out.values.iter().zip(t).map(|(&o, &y)| (o.to_f64() - y) * (o.to_f64() - y)).sum();
            s / t.len() as f64
        }
        Target::Class(labels) => {
            let s: f64 = labels
                .iter()
                .enumerate()
                .map(|(p, &c)| -ln(out.row(p)[c].to_f64().max(f64::MIN_POSITIVE)))
                .sum();
            s / labels.len() as f64
        }
    })
}

/// Gradient of [`loss`] with respect to every parameter.
pub fn backward<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    cache: &ForwardCache<R>,
    out: &Output<R>,
    target: &Target,
) -> Result<ParamStore<R>, NnError> {
    check_target(cfg, out, target)?;
    let mut grads = params.zeros_like();
    let (k, d, c) = (cfg.num_freqs, cfg.hidden, cfg.input_channels());
    let frames = cache.frames;
    let p_len = out.frames;
    let rows = frames * k;

    // Head.
    let mut dpooled = vec![R::ZERO; p_len * k * d];
    if p_len > 0 {
        match (&cache.head, target) {
            (HeadCache::DpIpd, Target::DpIpd(t)) => {
                let scale = 2.0 / t.len() as f64;
                let da: Vec<R> = out
                    .values
                    .iter()
                    .zip(t)
                    .map(|(&o, &y)| R::from_f64(scale * (o.to_f64() - y)) * (R::ONE - o * o))
                    .collect();
                affine_backward(&cache.pooled, p_len * k, &da, params.data("head.w")?, &mut grads, "head.w", "head.b", Some(&mut dpooled))?;
            }
            (HeadCache::Class { fm, h1 }, Target::Class(labels)) => {
                let nc = out.dim;
                let inv = R::from_f64(1.0 / p_len as f64);
                let mut dz: Vec<R> = out.values.iter().map(|&v| v * inv).collect();
                for (p, &l) in labels.iter().enumerate() {
                    dz[p * nc + l] -= inv;
                }
                let mut dh1 = vec![R::ZERO; p_len * d];
                affine_backward(h1, p_len, &dz, params.data("head.w2")?, &mut grads, "head.w2", "head.b2", Some(&mut dh1))?;
                for (g, &h) in dh1.iter_mut().zip(h1) {
                    *g *= R::ONE - h * h;
                }
                let mut dfm = vec![R::ZERO; p_len * d];
                affine_backward(fm, p_len, &dh1, params.data("head.w1")?, &mut grads, "head.w1", "head.b1", Some(&mut dfm))?;
                spread_freq_mean(&dfm, &mut dpooled, p_len, k, d);
            }
            (HeadCache::Regression { fm, norm }, Target::Regression(t)) => {
                let scale = 2.0 / t.len() as f64;
                let mut dz = vec![R::ZERO; p_len * 2];
                for p in 0..p_len {
                    let u = [out.values[2 * p], out.values[2 * p + 1]];
                    let g = [
                        R::from_f64(scale * (u[0].to_f64() - t[2 * p])),
                        R::from_f64(scale * (u[1].to_f64() - t[2 * p + 1])),
                    ];
                    let proj = u[0] * g[0] + u[1] * g[1];
                    dz[2 * p] = (g[0] - u[0] * proj) / norm[p];
                    dz[2 * p + 1] = (g[1] - u[1] * proj) / norm[p];
                }
                let mut dfm = vec![R::ZERO; p_len * d];
                affine_backward(fm, p_len, &dz, params.data("head.w")?, &mut grads, "head.w", "head.b", Some(&mut dfm))?;
                spread_freq_mean(&dfm, &mut dpooled, p_len, k, d);
            }
            _ => return Err(NnError::HeadMismatch),
        }
    }

    // Un-pool.
    let row = k * d;
    let inv = R::from_f64(1.0 / cfg.pool_stride as f64);
    let mut dn = vec![R::ZERO; rows * d];
    for p in 0..p_len {
        let src = &dpooled[p * row..(p + 1) * row];
        for t in p * cfg.pool_stride..(p + 1) * cfg.pool_stride {
            for (g, &s) in dn[t * row..(t + 1) * row].iter_mut().zip(src) {
                *g = s * inv;
            }
        }
    }

    // Blocks in reverse. `dn`/`df` hold gradients of the current block's
    // narrow-band and full-band outputs.
    let mut df = vec![R::ZERO; rows * d];
    for b in (0..cfg.num_blocks).rev() {
        let bc = &cache.blocks[b];
        let nb_w = if b == 0 { d + c } else { d };
        let mut dnb_in = vec![R::ZERO; rows * nb_w];
        layer_backward(params, &mut grads, cfg, b, Kind::Nb, &bc.nb_in, &bc.nb_out, &dn, frames, &bc.nb, Some(&mut dnb_in))?;
        if b == 0 {
            for r in 0..rows {
                add_into(&mut df[r * d..(r + 1) * d], &dnb_in[r * nb_w..r * nb_w + d]);
            }
            layer_backward(params, &mut grads, cfg, b, Kind::Fb, &cache.x, &bc.fb_out, &df, frames, &bc.fb, None)?;
        } else {
            add_into(&mut df, &dnb_in);
            let mut dfb_in = vec![R::ZERO; rows * d];
            layer_backward(params, &mut grads, cfg, b, Kind::Fb, &bc.fb_in, &bc.fb_out, &df, frames, &bc.fb, Some(&mut dfb_in))?;
            // Both skip paths feed the previous block's outputs.
            let mut dn_prev = dnb_in;
            add_into(&mut dn_prev, &dfb_in);
            dn = dn_prev;
            df = dfb_in;
        }
    }
    Ok(grads)
}

/// Backward through `z = x W + b`: accumulates `dW`, `db` and optionally `dx`.
#[allow(clippy::too_many_arguments)]
fn affine_backward<R: Real>(
    x: &[R],
    rows: usize,
    dz: &[R],
    w: &[R],
    grads: &mut ParamStore<R>,
    w_name: &str,
    b_name: &str,
    dx: Option<&mut [R]>,
) -> Result<(), NnError> {
    let n_out = dz.len() / rows;
    let n_in = w.len() / n_out;
    {
        let gw = &mut grads.get_mut(w_name)?.data;
        gemm(R::ONE, x, View::dense(0, rows, n_in).t(), dz, View::dense(0, rows, n_out), R::ONE, gw, View::dense(0, n_in, n_out));
    }
    {
        let gb = &mut grads.get_mut(b_name)?.data;
        for r in 0..rows {
            add_into(gb, &dz[r * n_out..(r + 1) * n_out]);
        }
    }
    if let Some(dx) = dx {
        gemm(R::ONE, dz, View::dense(0, rows, n_out), w, View::dense(0, n_in, n_out).t(), R::ONE, dx, View::dense(0, rows, n_in));
    }
    Ok(())
}

fn spread_freq_mean<R: Real>(dfm: &[R], dpooled: &mut [R], p_len: usize, k: usize, d: usize) {
    let inv = R::from_f64(1.0 / k as f64);
    for p in 0..p_len {
        for f in 0..k {
            for j in 0..d {
                dpooled[(p * k + f) * d + j] += dfm[p * d + j] * inv;
            }
        }
    }
}

/// Forward, loss and backward in one call.
pub fn loss_and_grad<R: Real>(
    params: &ParamStore<R>,
    cfg: &NetworkConfig,
    x: &[R],
    frames: usize,
    target: &Target,
) -> Result<(f64, ParamStore<R>), NnError> {
    let (out, cache) = forward(params, cfg, x, frames)?;
    let l = loss(cfg, &out, target)?;
    let g = backward(params, cfg, &cache, &out, target)?;
    Ok((l, g))
}
