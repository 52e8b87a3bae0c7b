//! One direction of an LSTM layer run over many sequences of a
//! `[T x K x features]` tensor at once.
//!
//! Gate order is input, forget, cell, output. Weights are stored
//! input-major (`w_ih: [in x 4h]`, `w_hh: [h x 4h]`) so that a batch of rows
//! multiplies from the left.

use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{gemm, View};
use crate::math::Real;

/// Which axis of the `[T x K]` grid the recurrence runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along frequency, one sequence per frame (full-band layers).
    Freq,
    /// Along time, one sequence per frequency (narrow-band layers).
    Time,
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    nseq: usize,
    nsteps: usize,
    seq_stride: usize,
    step_stride: usize,
}

impl Grid {
    fn new(axis: Axis, frames: usize, freqs: usize) -> Self {
        match axis {
            Axis::Freq => Grid { nseq: frames, nsteps: freqs, seq_stride: freqs, step_stride: 1 },
            Axis::Time => Grid { nseq: freqs, nsteps: frames, seq_stride: 1, step_stride: freqs },
        }
    }

    #[inline]
    fn row(&self, seq: usize, step: usize) -> usize {
        seq * self.seq_stride + step * self.step_stride
    }
}

/// Hidden and cell state of every sequence, `[nseq x h]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<R> {
    pub h: Vec<R>,
    pub c: Vec<R>,
}

impl<R: Real> LstmState<R> {
    pub fn zeros(nseq: usize, hidden: usize) -> Self {
        Self { h: vec![R::ZERO; nseq * hidden], c: vec![R::ZERO; nseq * hidden] }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache<R> {
    /// Post-activation gates, `[rows x 4h]`.
    gates: Vec<R>,
    cells: Vec<R>,
    tanh_c: Vec<R>,
    init: Option<LstmState<R>>,
}

/// Activates the gate pre-activations `z` in place and advances one cell.
#[inline]
fn cell_forward<R: Real>(z: &mut [R], c_prev: &[R], c: &mut [R], tc: &mut [R], h_out: &mut [R]) {
    let h = c.len();
    let (z, c_prev, tc, h_out) = (&mut z[..4 * h], &c_prev[..h], &mut tc[..h], &mut h_out[..h]);
    for v in z[..2 * h].iter_mut() {
        *v = v.sigmoid();
    }
    for v in z[2 * h..3 * h].iter_mut() {
        *v = v.tanh();
    }
    for v in z[3 * h..].iter_mut() {
        *v = v.sigmoid();
    }
    let (i, rest) = z.split_at(h);
    let (f, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);
    for j in 0..h {
        let cj = f[j] * c_prev[j] + i[j] * g[j];
        c[j] = cj;
        tc[j] = cj.tanh();
        h_out[j] = o[j] * tc[j];
    }
}

/// Gate pre-activation gradients of one cell. `dh_rec`/`dc_rec` carry the
/// recurrent gradients in; `dc_rec` is updated to the gradient of `c_prev`.
#[inline]
fn cell_backward<R: Real>(
    gates: &[R],
    tc: &[R],
    c_prev: &[R],
    dh_out: &[R],
    dz: &mut [R],
    dh_rec: &[R],
    dc_rec: &mut [R],
) {
    let h = tc.len();
    let (c_prev, dh_out, dh_rec, dc_rec) = (&c_prev[..h], &dh_out[..h], &dh_rec[..h], &mut dc_rec[..h]);
    let (i, rest) = gates[..4 * h].split_at(h);
    let (f, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);
    let (dzi, rest) = dz[..4 * h].split_at_mut(h);
    let (dzf, rest) = rest.split_at_mut(h);
    let (dzg, dzo) = rest.split_at_mut(h);
    for j in 0..h {
        let dh = dh_out[j] + dh_rec[j];
        let t = tc[j];
        let dc = dc_rec[j] + dh * o[j] * (R::ONE - t * t);
        dzi[j] = dc * g[j] * i[j] * (R::ONE - i[j]);
        dzf[j] = dc * c_prev[j] * f[j] * (R::ONE - f[j]);
        dzg[j] = dc * i[j] * (R::ONE - g[j] * g[j]);
        dzo[j] = dh * t * o[j] * (R::ONE - o[j]);
        dc_rec[j] = dc * f[j];
    }
}

/// Borrowed parameters of one direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirection<'a, R> {
    pub w_ih: &'a [R],
    pub w_hh: &'a [R],
    pub bias: &'a [R],
    pub input: usize,
    pub hidden: usize,
    pub axis: Axis,
    pub reverse: bool,
}

/// Gradient buffers matching an [`LstmDirection`].
pub(crate) struct LstmGrads<'a, R> {
    pub w_ih: &'a mut [R],
    pub w_hh: &'a mut [R],
    pub bias: &'a mut [R],
}

impl<'a, R: Real> LstmDirection<'a, R> {
    fn check(&self) {
        let g = 4 * self.hidden;
        assert_eq!(self.w_ih.len(), self.input * g);
        assert_eq!(self.w_hh.len(), self.hidden * g);
        assert_eq!(self.bias.len(), g);
    }

    /// Step indices in processing order.
    fn steps(&self, n: usize) -> impl Iterator<Item = usize> {
        let rev = self.reverse;
        (0..n).map(move |i| if rev { n - 1 - i } else { i })
    }

    fn prev_step(&self, s: usize, n: usize) -> Option<usize> {
        if self.reverse {
            (s + 1 < n).then_some(s + 1)
        } else {
            s.checked_sub(1)
        }
    }

    /// Runs the recurrence over `x: [frames*freqs x input]` and writes the
    /// hidden states to columns `col..col+h` of `out` (row stride `out_stride`).
    ///
    /// `init` seeds the state of the first step; the final state of each
    /// sequence is returned alongside the cache.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        x: &[R],
        frames: usize,
        freqs: usize,
        out: &mut [R],
        out_stride: usize,
        col: usize,
        init: Option<&LstmState<R>>,
    ) -> (LstmCache<R>, LstmState<R>) {
        self.check();
        let h = self.hidden;
        let g4 = 4 * h;
        let rows = frames * freqs;
        let grid = Grid::new(self.axis, frames, freqs);
        assert_eq!(x.len(), rows * self.input);
        assert!(out.len() >= rows * out_stride && col + h <= out_stride);
        if let Some(s) = init {
            assert_eq!(s.h.len(), grid.nseq * h);
            assert_eq!(s.c.len(), grid.nseq * h);
        }

        let mut gates = vec![R::ZERO; rows * g4];
        for r in 0..rows {
            gates[r * g4..(r + 1) * g4].copy_from_slice(self.bias);
        }
        gemm(
            R::ONE,
            x,
            View::dense(0, rows, self.input),
            self.w_ih,
            View::dense(0, self.input, g4),
            R::ONE,
            &mut gates,
            View::dense(0, rows, g4),
        );

        let mut cells = vec![R::ZERO; rows * h];
        let mut tanh_c = vec![R::ZERO; rows * h];
        let mut last = LstmState::zeros(grid.nseq, h);
        let zero_c = vec![R::ZERO; h];
        let mut cp = vec![R::ZERO; h];

        for s in self.steps(grid.nsteps) {
            let prev = self.prev_step(s, grid.nsteps);
            let zrow0 = grid.row(0, s) * g4;
            let zview = View::strided(zrow0, grid.nseq, g4, grid.seq_stride * g4);
            match prev {
                Some(p) => gemm(
                    R::ONE,
                    out,
                    View::strided(grid.row(0, p) * out_stride + col, grid.nseq, h, grid.seq_stride * out_stride),
                    self.w_hh,
                    View::dense(0, h, g4),
                    R::ONE,
                    &mut gates,
                    zview,
                ),
                None => {
                    if let Some(st) = init {
                        gemm(R::ONE, &st.h, View::dense(0, grid.nseq, h), self.w_hh, View::dense(0, h, g4), R::ONE, &mut gates, zview);
                    }
                }
            }
            for n in 0..grid.nseq {
                let r = grid.row(n, s);
                let src: &[R] = match (prev, init) {
                    (Some(p), _) => {
                        let rp = grid.row(n, p);
                        &cells[rp * h..(rp + 1) * h]
                    }
                    (None, Some(st)) => &st.c[n * h..(n + 1) * h],
                    (None, None) => &zero_c,
                };
                cp.copy_from_slice(src);
                let c_prev = &cp;
                let orow = &mut out[r * out_stride + col..r * out_stride + col + h];
                cell_forward(
                    &mut gates[r * g4..(r + 1) * g4],
                    c_prev,
                    &mut cells[r * h..(r + 1) * h],
                    &mut tanh_c[r * h..(r + 1) * h],
                    orow,
                );
            }
        }

        let final_step = if self.reverse { 0 } else { grid.nsteps.saturating_sub(1) };
        if grid.nsteps > 0 {
            for n in 0..grid.nseq {
                let r = grid.row(n, final_step);
                last.h[n * h..(n + 1) * h].copy_from_slice(&out[r * out_stride + col..r * out_stride + col + h]);
                last.c[n * h..(n + 1) * h].copy_from_slice(&cells[r * h..(r + 1) * h]);
            }
        } else if let Some(st) = init {
            last = st.clone();
        }
        (LstmCache { gates, cells, tanh_c, init: init.cloned() }, last)
    }

    /// Backpropagates `dout` (same layout as `out`) through the recurrence.
    ///
    /// Parameter gradients are accumulated into `grads`; the input gradient
    /// is accumulated into `dx` when given.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        x: &[R],
        frames: usize,
        freqs: usize,
        out: &[R],
        dout: &[R],
        out_stride: usize,
        col: usize,
        cache: &LstmCache<R>,
        grads: LstmGrads<'_, R>,
        dx: Option<&mut [R]>,
    ) {
        self.check();
        let h = self.hidden;
        let g4 = 4 * h;
        let rows = frames * freqs;
        let grid = Grid::new(self.axis, frames, freqs);
        assert_eq!(dout.len(), out.len());

        let mut dz = vec![R::ZERO; rows * g4];
        let mut dh_rec = vec![R::ZERO; grid.nseq * h];
        let mut dc_rec = vec![R::ZERO; grid.nseq * h];
        let zero_c = vec![R::ZERO; h];
        let order: Vec<usize> = self.steps(grid.nsteps).collect();

        for &s in order.iter().rev() {
            let prev = self.prev_step(s, grid.nsteps);
            for n in 0..grid.nseq {
                let r = grid.row(n, s);
                let c_prev: &[R] = match (prev, &cache.init) {
                    (Some(p), _) => {
                        let rp = grid.row(n, p);
                        &cache.cells[rp * h..(rp + 1) * h]
                    }
                    (None, Some(st)) => &st.c[n * h..(n + 1) * h],
                    (None, None) => &zero_c,
                };
                cell_backward(
                    &cache.gates[r * g4..(r + 1) * g4],
                    &cache.tanh_c[r * h..(r + 1) * h],
                    c_prev,
                    &dout[r * out_stride + col..r * out_stride + col + h],
                    &mut dz[r * g4..(r + 1) * g4],
                    &dh_rec[n * h..(n + 1) * h],
                    &mut dc_rec[n * h..(n + 1) * h],
                );
            }
            // Gradient flowing into the previous hidden state.
            let zview = View::strided(grid.row(0, s) * g4, grid.nseq, g4, grid.seq_stride * g4);
            gemm(R::ONE, &dz, zview, self.w_hh, View::dense(0, h, g4).t(), R::ZERO, &mut dh_rec, View::dense(0, grid.nseq, h));
        }

        // Shifted hidden states: row r holds the state that fed step r.
        let mut h_prev = vec![R::ZERO; rows * h];
        for s in 0..grid.nsteps {
            let prev = self.prev_step(s, grid.nsteps);
            for n in 0..grid.nseq {
                let r = grid.row(n, s);
                let src: Option<&[R]> = match (prev, &cache.init) {
                    (Some(p), _) => {
                        let rp = grid.row(n, p);
                        Some(&out[rp * out_stride + col..rp * out_stride + col + h])
                    }
                    (None, Some(st)) => Some(&st.h[n * h..(n + 1) * h]),
                    (None, None) => None,
                };
                if let Some(src) = src {
                    h_prev[r * h..(r + 1) * h].copy_from_slice(src);
                }
            }
        }
        gemm(R::ONE, &h_prev, View::dense(0, rows, h).t(), &dz, View::dense(0, rows, g4), R::ONE, grads.w_hh, View::dense(0, h, g4));
        gemm(R::ONE, x, View::dense(0, rows, self.input).t(), &dz, View::dense(0, rows, g4), R::ONE, grads.w_ih, View::dense(0, self.input, g4));
        for r in 0..rows {
            let row = &dz[r * g4..(r + 1) * g4];
            for (b, &d) in grads.bias.iter_mut().zip(row) {
                *b += d;
            }
        }
        if let Some(dx) = dx {
            assert_eq!(dx.len(), rows * self.input);
            gemm(R::ONE, &dz, View::dense(0, rows, g4), self.w_ih, View::dense(0, self.input, g4).t(), R::ONE, dx, View::dense(0, rows, self.input));
        }
    }
}
