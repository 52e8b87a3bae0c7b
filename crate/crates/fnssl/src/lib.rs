//! Files, dataset pipeline, training loop and command-line front end around
//! [`fnssl_core`].
//!
//! * [`wav`], [`labels`], [`checkpoint`], [`manifest`] - on-disk formats,
//! * [`config`] - the TOML run configuration with `key=value` overrides,
//! * [`simulate`], [`train`], [`evaluate`], [`infer`] - the four commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod infer;
pub mod labels;
pub mod manifest;
pub mod simulate;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
