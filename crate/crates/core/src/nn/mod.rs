//! The full-band/narrow-band recurrent network.
//!
//! Activations are stored as `[T x K x D]` tensors (frame-major, then
//! frequency, then feature). A full-band layer runs a bidirectional LSTM
//! along the frequency axis of every frame; a narrow-band layer runs a
//! unidirectional (online) or bidirectional (offline) LSTM along the time
//! axis of every frequency. One of each forms a block:
//!
//! ```text
//! x -> FB1 -> [FB1 | x] -> NB1 -> (+FB1) FB2 -> (+NB1) NB2 -> ... -> pool -> head
//! ```
//!
//! Everything is generic over [`Real`] so that gradient checks run in `f64`
//! and long training runs can use `f32`.

mod adam;
mod linalg;
mod lstm;
mod network;
mod params;
mod stream;

pub use adam::{adam_step, clip_grad_norm, lr_at_epoch, AdamConfig, OptimizerState};
pub use lstm::{Axis, LstmCache, LstmDirection, LstmState};
pub use network::{
    backward, forward, infer, loss, loss_and_grad, network_input, pool_time, ForwardCache, Output,
    Target,
};
pub use params::{closed_form_param_count, count_params, init_params, ParamStore, Tensor};
pub use stream::StreamingNetwork;

use alloc::string::String;
use thiserror::Error;

pub use crate::math::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("target does not match the network head")]
    HeadMismatch,
}

/// Output head of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Head {
    /// Per-frequency affine `D -> 2` with tanh, giving interleaved cos/sin.
    #[default]
    DpIpd,
    /// Frequency mean, `D -> D` tanh, `D -> classes` softmax.
    Classification { num_classes: usize },
    /// Frequency mean, `D -> 2`, scaled to unit length.
    Regression,
}

impl Head {
    pub fn classification() -> Self {
        Head::Classification { num_classes: 180 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub num_mics: usize,
    pub num_blocks: usize,
    /// Output width of every recurrent layer (bidirectional layers split it
    /// in two halves).
    pub hidden: usize,
    pub num_freqs: usize,
    /// Unidirectional narrow-band layers when true.
    pub causal: bool,
    pub head: Head,
    pub pool_kernel: usize,
    pub pool_stride: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_mics: 2,
            num_blocks: 3,
            hidden: 256,
            num_freqs: 256,
            causal: true,
            head: Head::DpIpd,
            pool_kernel: 12,
            pool_stride: 12,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.num_mics == 0 || self.num_blocks == 0 || self.num_freqs == 0 {
            return Err(NnError::InvalidConfig("mics, blocks and freqs must be positive"));
        }
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return Err(NnError::InvalidConfig("hidden width must be even and positive"));
        }
        if self.pool_kernel == 0 || self.pool_kernel != self.pool_stride {
            return Err(NnError::InvalidConfig("pool kernel must equal pool stride"));
        }
        if let Head::Classification { num_classes } = self.head {
            if num_classes < 2 {
                return Err(NnError::InvalidConfig("need at least two classes"));
            }
        }
        Ok(())
    }

    /// Input channels `C = 2M` (real and imaginary parts).
    pub fn input_channels(&self) -> usize {
        2 * self.num_mics
    }

    /// Pooled output frames for `frames` input frames.
    pub fn pooled_frames(&self, frames: usize) -> usize {
        frames / self.pool_stride
    }

    /// Width of one pooled output frame.
    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::DpIpd => 2 * self.num_freqs,
            Head::Classification { num_classes } => num_classes,
            Head::Regression => 2,
        }
    }
}
