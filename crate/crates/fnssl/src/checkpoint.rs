//! Checkpoint file.
//!
//! Layout (little-endian): `"FNSS"`, version `u32`, a config block, the
//! parameter table `{name_len u16, name, rank u8, dims u32 x rank,
//! payload}` and an optional block of Adam moments. The config block stores
//! the parameter precision (4 or 8 bytes per value); payloads use it, and
//! moments are always `f64`.

use std::path::Path;

use fnssl_core::nn::{init_params, AdamConfig, Head, NetworkConfig, OptimizerState, ParamStore, Real};

use crate::binio::{write_atomic, Cursor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FNSS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    F32(ParamStore<f32>),
    F64(ParamStore<f64>),
}

impl Weights {
    pub fn precision(&self) -> Precision {
        match self {
            Weights::F32(_) => Precision::F32,
            Weights::F64(_) => Precision::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

pub trait Store: Real {
    fn wrap(p: ParamStore<Self>) -> Weights;
    fn unwrap(w: &Weights) -> Option<&ParamStore<Self>>;
}

impl Store for f32 {
    fn wrap(p: ParamStore<f32>) -> Weights {
        Weights::F32(p)
    }
    fn unwrap(w: &Weights) -> Option<&ParamStore<f32>> {
        match w {
            Weights::F32(p) => Some(p),
            Weights::F64(_) => None,
        }
    }
}

impl Store for f64 {
    fn wrap(p: ParamStore<f64>) -> Weights {
        Weights::F64(p)
    }
    fn unwrap(w: &Weights) -> Option<&ParamStore<f64>> {
        match w {
            Weights::F64(p) => Some(p),
            Weights::F32(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    /// Smoothing window `L` of the online normalization, in frames.
    pub norm_window: f64,
    /// Number of completed training epochs.
    pub epoch: u32,
    pub weights: Weights,
    pub optimizer: Option<OptimizerState>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn head_code(h: Head) -> (u8, usize) {
    match h {
        Head::DpIpd => (0, 0),
        Head::Classification { num_classes } => (1, num_classes),
        Head::Regression => (2, 0),
    }
}

fn write_tensors<R: Real>(out: &mut Vec<u8>, p: &ParamStore<R>) {
    put_u32(out, p.tensors().len());
    for t in p.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            put_u32(out, d);
        }
        for &v in &t.data {
            if R::BYTES == 4 {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_f64().to_le_bytes());
            }
        }
    }
}

fn read_tensors<R: Real>(c: &mut Cursor, cfg: &NetworkConfig) -> Result<ParamStore<R>, String> {
    let expected = init_params::<R>(cfg, 0).map_err(|e| e.to_string())?;
    let n = c.u32()? as usize;
    if n != expected.tensors().len() {
        return Err(format!("expected {} tensors, found {n}", expected.tensors().len()));
    }
    let mut store = ParamStore::new();
    for want in expected.tensors() {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|_| "tensor name is not UTF-8".to_string())?;
        let rank = c.u8()? as usize;
        let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != want.name || dims != want.dims {
            return Err(format!("unexpected tensor `{name}` {dims:?}"));
        }
        let count: usize = dims.iter().product();
        let data = (0..count)
            .map(|_| if R::BYTES == 4 { c.f32().map(|v| R::from_f64(v as f64)) } else { c.f64().map(R::from_f64) })
            .collect::<Result<Vec<R>, _>>()?;
        store.push(name, &dims, data).map_err(|e| e.to_string())?;
    }
    Ok(store)
}

impl Checkpoint {
    pub fn params<R: Store>(&self) -> Option<&ParamStore<R>> {
        R::unwrap(&self.weights)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize);
        out.push(match self.weights.precision() {
            Precision::F32 => 4,
            Precision::F64 => 8,
        });
        out.push(cfg.causal as u8);
        for v in [cfg.num_mics, cfg.num_blocks, cfg.hidden, cfg.num_freqs] {
            put_u32(&mut out, v);
        }
        let (head, classes) = head_code(cfg.head);
        out.push(head);
        put_u32(&mut out, classes);
        put_u32(&mut out, cfg.pool_kernel);
        put_u32(&mut out, cfg.pool_stride);
        out.extend_from_slice(&self.norm_window.to_le_bytes());
        put_u32(&mut out, self.epoch as usize);
        match &self.weights {
            Weights::F32(p) => write_tensors(&mut out, p),
            Weights::F64(p) => write_tensors(&mut out, p),
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                for v in [opt.config.beta1, opt.config.beta2, opt.config.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&opt.step.to_le_bytes());
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    for x in m.iter().chain(v) {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, String> {
        let mut c = Cursor::new(buf);
        if c.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let precision = c.u8()?;
        let causal = match c.u8()? {
            0 => false,
            1 => true,
            v => return Err(format!("bad online flag {v}")),
        };
        let [num_mics, num_blocks, hidden, num_freqs] = [c.u32()?, c.u32()?, c.u32()?, c.u32()?].map(|v| v as usize);
        let head = match (c.u8()?, c.u32()? as usize) {
            (0, _) => Head::DpIpd,
            (1, num_classes) => Head::Classification { num_classes },
            (2, _) => Head::Regression,
            (h, _) => return Err(format!("unknown head {h}")),
        };
        let pool_kernel = c.u32()? as usize;
        let pool_stride = c.u32()? as usize;
        let config = NetworkConfig { num_mics, num_blocks, hidden, num_freqs, causal, head, pool_kernel, pool_stride };
        config.validate().map_err(|e| e.to_string())?;
        let norm_window = c.f64()?;
        if !(norm_window >= 1.0 && norm_window.is_finite()) {
            return Err(format!("bad normalization window {norm_window}"));
        }
        let epoch = c.u32()?;
        let weights = match precision {
            4 => Weights::F32(read_tensors(&mut c, &config)?),
            8 => Weights::F64(read_tensors(&mut c, &config)?),
            p => return Err(format!("bad precision {p}")),
        };
        let sizes: Vec<usize> = match &weights {
            Weights::F32(p) => p.tensors().iter().map(|t| t.len()).collect(),
            Weights::F64(p) => p.tensors().iter().map(|t| t.len()).collect(),
        };
        let optimizer = match c.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig { beta1: c.f64()?, beta2: c.f64()?, eps: c.f64()? };
                let step = c.u64()?;
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for &n in &sizes {
                    m.push((0..n).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?);
                    v.push((0..n).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?);
                }
                Some(OptimizerState { config, step, m, v })
            }
            f => return Err(format!("bad optimizer flag {f}")),
        };
        c.finish()?;
        Ok(Self { config, norm_window, epoch, weights, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|m| Error::corrupt(path, format!("corrupt checkpoint: {m}")))
    }
}
