//! Iterative radix-2 FFT.
//!
//! Forward transforms are unnormalized, inverse transforms scale by `1/n`.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::math::{cos, sin, PI};

/// Precomputed twiddles and bit-reversal table for one power-of-two size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    rev: Vec<u32>,
}

impl Fft {
    /// Panics if `n` is not a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT size {n} is not a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(cos(a), sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let rev = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        Self { n, twiddles, rev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n);
        for i in 0..n {
            let j = self.rev[i] as usize;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let w = self.twiddles[j * step];
                    let w = if inverse { w.conj() } else { w };
                    let u = buf[start + j];
                    let v = buf[start + j + half] * w;
                    buf[start + j] = u + v;
                    buf[start + j + half] = u - v;
                }
            }
            len <<= 1;
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Spectrum bins `0..=n/2` of a real input of length `n`.
    pub fn forward_real(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = input.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        buf.resize(self.n, Complex64::new(0.0, 0.0));
        self.forward(&mut buf);
        buf.truncate(self.n / 2 + 1);
        buf
    }

    /// Real signal of length `n` from its half spectrum (`n/2 + 1` bins),
    /// assuming Hermitian symmetry.
    pub fn inverse_real(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(half.len(), n / 2 + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..=n / 2].copy_from_slice(half);
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// Linear convolution of two real sequences through a zero-padded FFT.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let fft = Fft::new(n);
    let fa = fft.forward_real(a);
    let fb = fft.forward_real(b);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = fft.inverse_real(&prod);
    out.truncate(out_len);
    out
}
