//! Bounds-checked strided GEMM on slices.

use crate::math::Real;

/// Strided matrix view description: `rows x cols` starting at `offset`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct View {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl View {
    pub fn dense(offset: usize, rows: usize, cols: usize) -> Self {
        Self { offset, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn strided(offset: usize, rows: usize, cols: usize, row_stride: usize) -> Self {
        Self { offset, rows, cols, row_stride, col_stride: 1 }
    }

    pub fn t(self) -> Self {
        Self {
            offset: self.offset,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn last(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            self.offset
        } else {
            self.offset + (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride
        }
    }
}

/// `C = alpha * A * B + beta * C`.
pub(crate) fn gemm<R: Real>(
    alpha: R,
    a: &[R],
    av: View,
    b: &[R],
    bv: View,
    beta: R,
    c: &mut [R],
    cv: View,
) {
    assert_eq!(av.cols, bv.rows, "inner dimensions");
    assert_eq!(av.rows, cv.rows, "row count");
    assert_eq!(bv.cols, cv.cols, "column count");
    if cv.rows == 0 || cv.cols == 0 {
        return;
    }
    if av.cols == 0 {
        for i in 0..cv.rows {
            for j in 0..cv.cols {
                let idx = cv.offset + i * cv.row_stride + j * cv.col_stride;
                c[idx] = beta * c[idx];
            }
        }
        return;
    }
    assert!(av.last() < a.len() && bv.last() < b.len() && cv.last() < c.len());
    // SAFETY: all addressed elements were bounds-checked above; `c` is a
    // unique borrow so it cannot alias `a` or `b`.
    unsafe {
        R::gemm_raw(
            cv.rows,
            av.cols,
            cv.cols,
            alpha,
            a.as_ptr().add(av.offset),
            av.row_stride as isize,
            av.col_stride as isize,
            b.as_ptr().add(bv.offset),
            bv.row_stride as isize,
            bv.col_stride as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.row_stride as isize,
            cv.col_stride as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn strided_product_matches_naive() {
        let a: alloc::vec::Vec<f64> = (0..30).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: alloc::vec::Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        // A: rows 0,2,4 of a 6x5 matrix, cols 0..4
        let av = View::strided(0, 3, 4, 10);
        let bv = View::dense(0, 4, 5);
        let mut c = vec![1.0; 15];
        gemm(2.0, &a, av, &b, bv, 1.0, &mut c, View::dense(0, 3, 5));
        for i in 0..3 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a[i * 10 + k] * b[k * 5 + j];
                }
                assert!((c[i * 5 + j] - (1.0 + 2.0 * s)).abs() < 1e-12);
            }
        }
        // B^T (5x4) times the 4x3 block of A starting at row 1, col 1
        let mut d = vec![0.0; 5 * 3];
        gemm(1.0, &b, bv.t(), &a, View::strided(6, 4, 3, 5), 0.0, &mut d, View::dense(0, 5, 3));
        for i in 0..5 {
            for j in 0..3 {
                let s: f64 = (0..4).map(|k| b[k * 5 + i] * a[6 + k * 5 + j]).sum();
                assert!((d[i * 3 + j] - s).abs() < 1e-12);
            }
        }
    }
}
