//! Frame-by-frame inference for causal networks.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::lstm::LstmState;
use super::network::{add, add_into, direction, head_forward, Kind};
use super::params::ParamStore;
use super::{NetworkConfig, NnError};
use crate::features::NormState;
use crate::math::Real;

/// Streaming wrapper around a causal network.
///
/// Each call consumes one STFT frame and returns an output row every
/// `pool_stride` frames. The result is identical to running the batch
/// forward pass over the whole clip with online normalization.
#[derive(Debug, Clone)]
pub struct StreamingNetwork<'a, R: Real> {
    params: &'a ParamStore<R>,
    cfg: NetworkConfig,
    norm: NormState,
    states: Vec<Option<LstmState<R>>>,
    pool_acc: Vec<R>,
    pooled_count: usize,
}

impl<'a, R: Real> StreamingNetwork<'a, R> {
    pub fn new(params: &'a ParamStore<R>, cfg: NetworkConfig, norm: NormState) -> Result<Self, NnError> {
        cfg.validate()?;
        if !cfg.causal {
            return Err(NnError::InvalidConfig("streaming requires a causal network"));
        }
        Ok(Self {
            params,
            cfg,
            norm,
            states: vec![None; cfg.num_blocks],
            pool_acc: vec![R::ZERO; cfg.num_freqs * cfg.hidden],
            pooled_count: 0,
        })
    }

    pub fn norm_state(&self) -> &NormState {
        &self.norm
    }

    /// Normalizes one raw STFT frame (one slice of `fft_size/2 + 1` bins
    /// per channel) and feeds it through the network.
    pub fn push_stft_frame(&mut self, channels: &[&[Complex64]]) -> Result<Option<Vec<R>>, NnError> {
        let k = self.cfg.num_freqs;
        if channels.len() != self.cfg.num_mics || channels.iter().any(|c| c.len() < k + 1) {
            return Err(NnError::Shape("frame does not match the network input".into()));
        }
        let mut acc = 0.0;
        for ch in channels {
            acc += ch[1..=k].iter().map(|c| c.norm()).sum::<f64>();
        }
        let mu = self.norm.update(acc / (channels.len() * k) as f64);
        let inv = 1.0 / mu.max(1e-8);
        let c = self.cfg.input_channels();
        let mut x = vec![R::ZERO; k * c];
        for (m, ch) in channels.iter().enumerate() {
            for f in 0..k {
                let v = ch[f + 1];
                x[f * c + 2 * m] = R::from_f64(v.re * inv);
                x[f * c + 2 * m + 1] = R::from_f64(v.im * inv);
            }
        }
        self.push_input_frame(&x)
    }

    /// Feeds one already-normalized input frame `[K x 2M]`.
    pub fn push_input_frame(&mut self, x: &[R]) -> Result<Option<Vec<R>>, NnError> {
        let (k, d, c) = (self.cfg.num_freqs, self.cfg.hidden, self.cfg.input_channels());
        if x.len() != k * c {
            return Err(NnError::Shape("input frame length".into()));
        }
        let mut prev: Option<(Vec<R>, Vec<R>)> = None;
        for b in 0..self.cfg.num_blocks {
            let fb_in = match &prev {
                None => x.to_vec(),
                Some((f, n)) => add(n, f),
            };
            let mut fb_out = vec![R::ZERO; k * d];
            for dir in 0..2 {
                let lstm = direction(self.params, &self.cfg, b, Kind::Fb, dir)?;
                lstm.forward(&fb_in, 1, k, &mut fb_out, d, dir * lstm.hidden, None);
            }
            let nb_in = match &prev {
                None => {
                    let mut v = vec![R::ZERO; k * (d + c)];
                    for r in 0..k {
                        v[r * (d + c)..r * (d + c) + d].copy_from_slice(&fb_out[r * d..(r + 1) * d]);
                        v[r * (d + c) + d..(r + 1) * (d + c)].copy_from_slice(&x[r * c..(r + 1) * c]);
                    }
                    v
                }
                Some((_, n)) => add(&fb_out, n),
            };
            let mut nb_out = vec![R::ZERO; k * d];
            let lstm = direction(self.params, &self.cfg, b, Kind::Nb, 0)?;
            let (_, state) = lstm.forward(&nb_in, 1, k, &mut nb_out, d, 0, self.states[b].as_ref());
            self.states[b] = Some(state);
            prev = Some((fb_out, nb_out));
        }
        let (_, y) = prev.expect("at least one block");
        add_into(&mut self.pool_acc, &y);
        self.pooled_count += 1;
        if self.pooled_count < self.cfg.pool_stride {
            return Ok(None);
        }
        let inv = R::from_f64(1.0 / self.cfg.pool_stride as f64);
        let pooled: Vec<R> = self.pool_acc.iter().map(|&v| v * inv).collect();
        self.pool_acc.iter_mut().for_each(|v| *v = R::ZERO);
        self.pooled_count = 0;
        let (out, _) = head_forward(self.params, &self.cfg, &pooled, 1)?;
        Ok(Some(out.values))
    }
}
