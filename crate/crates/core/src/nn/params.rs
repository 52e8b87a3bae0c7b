use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Head, NetworkConfig, NnError};
use crate::math::{sqrt, Real};

/// A named dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<R>,
}

impl<R> Tensor<R> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of named tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<R> {
    tensors: Vec<Tensor<R>>,
    index: BTreeMap<String, usize>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self { tensors: Vec::new(), index: BTreeMap::new() }
    }

    pub fn push(&mut self, name: &str, dims: &[usize], data: Vec<R>) -> Result<(), NnError> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!("{name}: dims {dims:?} vs {} values", data.len())));
        }
        if self.index.contains_key(name) {
            return Err(NnError::Shape(format!("duplicate tensor `{name}`")));
        }
        self.index.insert(name.into(), self.tensors.len());
        self.tensors.push(Tensor { name: name.into(), dims: dims.to_vec(), data });
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor<R>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<R>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<R>, NnError> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| NnError::MissingParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<R>, NnError> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.tensors[i]),
            None => Err(NnError::MissingParam(name.into())),
        }
    }

    pub(crate) fn data(&self, name: &str) -> Result<&[R], NnError> {
        self.get(name).map(|t| &t.data[..])
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for t in &self.tensors {
            out.index.insert(t.name.clone(), out.tensors.len());
            out.tensors.push(Tensor { name: t.name.clone(), dims: t.dims.clone(), data: vec![R::ZERO; t.len()] });
        }
        out
    }

    /// Checks that both stores hold the same names and shapes in order.
    pub fn same_layout<S>(&self, other: &ParamStore<S>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.dims == b.dims)
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_layout(other));
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: R) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x *= s;
            }
        }
    }

    /// Euclidean norm of all values, accumulated in `f64`.
    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        for t in &self.tensors {
            for x in &t.data {
                let v = x.to_f64();
                s += v * v;
            }
        }
        sqrt(s)
    }

    /// Converts every value to another precision.
    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    dims: t.dims.clone(),
                    data: t.data.iter().map(|x| S::from_f64(x.to_f64())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

pub(crate) fn fb_name(block: usize, dir: &str, part: &str) -> String {
    format!("block{}.fb.{dir}.{part}", block + 1)
}

pub(crate) fn nb_name(block: usize, dir: &str, part: &str) -> String {
    format!("block{}.nb.{dir}.{part}", block + 1)
}

/// `(input, hidden per direction, directions)` of the full-band and
/// narrow-band layers of block `b`.
pub(crate) fn layer_shapes(cfg: &NetworkConfig, b: usize) -> ((usize, usize, usize), (usize, usize, usize)) {
    let c = cfg.input_channels();
    let d = cfg.hidden;
    let fb_in = if b == 0 { c } else { d };
    let nb_in = if b == 0 { d + c } else { d };
    let nb = if cfg.causal { (nb_in, d, 1) } else { (nb_in, d / 2, 2) };
    ((fb_in, d / 2, 2), nb)
}

pub(crate) const DIRS: [&str; 2] = ["fwd", "bwd"];

/// Names and shapes of every tensor, in storage order.
pub(crate) fn param_specs(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    let mut specs = Vec::new();
    for b in 0..cfg.num_blocks {
        let (fb, nb) = layer_shapes(cfg, b);
        for (shape, name) in [(fb, fb_name as fn(usize, &str, &str) -> String), (nb, nb_name)] {
            let (input, h, dirs) = shape;
            for dir in &DIRS[..dirs] {
                specs.push((name(b, dir, "w_ih"), vec![input, 4 * h]));
                specs.push((name(b, dir, "w_hh"), vec![h, 4 * h]));
                specs.push((name(b, dir, "bias"), vec![4 * h]));
            }
        }
    }
    let d = cfg.hidden;
    match cfg.head {
        Head::DpIpd | Head::Regression => {
            specs.push(("head.w".into(), vec![d, 2]));
            specs.push(("head.b".into(), vec![2]));
        }
        Head::Classification { num_classes } => {
            specs.push(("head.w1".into(), vec![d, d]));
            specs.push(("head.b1".into(), vec![d]));
            specs.push(("head.w2".into(), vec![d, num_classes]));
            specs.push(("head.b2".into(), vec![num_classes]));
        }
    }
    specs
}

/// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, biases
/// zero except the LSTM forget gate, which starts at one.
pub fn init_params<R: Real>(cfg: &NetworkConfig, seed: u64) -> Result<ParamStore<R>, NnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, dims) in param_specs(cfg) {
        let n: usize = dims.iter().product();
        let data: Vec<R> = if dims.len() == 2 {
            let bound = 1.0 / sqrt(dims[0] as f64);
            (0..n).map(|_| R::from_f64(rng.gen_range(-bound..bound))).collect()
        } else if name.ends_with(".bias") {
            let h = n / 4;
            (0..n).map(|i| if (h..2 * h).contains(&i) { R::ONE } else { R::ZERO }).collect()
        } else {
            vec![R::ZERO; n]
        };
        store.push(&name, &dims, data)?;
    }
    Ok(store)
}

/// Parameter count of a configuration, from the tensor shapes.
pub fn count_params(cfg: &NetworkConfig) -> usize {
    param_specs(cfg).iter().map(|(_, d)| d.iter().product::<usize>()).sum()
}

/// Parameter count from the layer formulas alone.
pub fn closed_form_param_count(cfg: &NetworkConfig) -> usize {
    let lstm = |input: usize, h: usize| 4 * ((input + h) * h + h);
    let (c, d) = (cfg.input_channels(), cfg.hidden);
    let mut total = 0;
    for b in 0..cfg.num_blocks {
        let fb_in = if b == 0 { c } else { d };
        let nb_in = if b == 0 { d + c } else { d };
        total += 2 * lstm(fb_in, d / 2);
        total += if cfg.causal { lstm(nb_in, d) } else { 2 * lstm(nb_in, d / 2) };
    }
    total
        + match cfg.head {
            Head::DpIpd | Head::Regression => 2 * d + 2,
            Head::Classification { num_classes } => d * d + d + d * num_classes + num_classes,
        }
}
