//! Sound source localization with a full-band/narrow-band recurrent network.
//!
//! The crate is split along the processing chain:
//!
//! * [`dsp`] - windows, STFT/ISTFT and fractional-delay FIR design,
//! * [`sim`] - image-source room simulation, moving-source rendering,
//!   spherically diffuse noise and scene sampling,
//! * [`features`] - direct-path IPD templates, ground-truth labels and the
//!   offline/online amplitude normalization of the network input,
//! * [`nn`] - the recurrent network itself with hand-written
//!   back-propagation, Adam and the learning-rate schedule,
//! * [`eval`] - direction decoders, VAD masking, MAE/ACC metrics and a
//!   non-learned IPD matching baseline.
//!
//! Everything here is pure computation on owned buffers. File formats, the
//! training loop and the command line live in the `fnssl` companion crate.
//! The crate is `no_std` (it needs `alloc`); the `std` feature only adds
//! `std::error::Error` plumbing through `thiserror`.

#![no_std]
#![allow(clippy::too_many_arguments, clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod dsp;
pub mod eval;
pub mod features;
pub mod fft;
pub mod geometry;
pub mod math;
pub mod nn;
pub mod sim;

pub use num_complex::Complex64;

/// Speed of sound in m/s used by every propagation computation.
pub const SPEED_OF_SOUND: f64 = 343.0;
