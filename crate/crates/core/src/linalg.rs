//! Dense row-major matrix with the handful of kernels the model needs.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// New matrix made of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

impl<T: Real> Matrix<T> {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out = x · wᵀ + b` where `w` is `n_out × n_in` row-major.
pub fn affine<T: Real>(x: &Matrix<T>, w: &[T], b: &[T], n_out: usize) -> Matrix<T> {
    let n_in = x.cols();
    debug_assert_eq!(w.len(), n_out * n_in);
    let mut out = Matrix::zeros(x.rows(), n_out);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let orow = out.row_mut(r);
        for (o, ov) in orow.iter_mut().enumerate() {
            let wr = &w[o * n_in..(o + 1) * n_in];
            *ov = b[o] + dot(xr, wr);
        }
    }
    out
}

/// Backward of [`affine`]: accumulates `dw += dyᵀ·x`, `db += Σ dy`, returns `dx = dy·w`.
pub fn affine_backward<T: Real>(
    x: &Matrix<T>,
    w: &[T],
    dy: &Matrix<T>,
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Matrix<T>> {
    let n_in = x.cols();
    let n_out = dy.cols();
    for r in 0..x.rows() {
        let xr = x.row(r);
        let dyr = dy.row(r);
        for o in 0..n_out {
            let g = dyr[o];
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            let dwr = &mut dw[o * n_in..(o + 1) * n_in];
            for (d, &xv) in dwr.iter_mut().zip(xr) {
                *d += g * xv;
            }
        }
    }
    if !need_dx {
        return None;
    }
    let mut dx = Matrix::zeros(x.rows(), n_in);
    for r in 0..x.rows() {
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for o in 0..n_out {
            let g = dyr[o];
            if g == T::zero() {
                continue;
            }
            let wr = &w[o * n_in..(o + 1) * n_in];
            for (d, &wv) in dxr.iter_mut().zip(wr) {
                *d += g * wv;
            }
        }
    }
    Some(dx)
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Numerically stable `ln Σ exp(xᵢ)`; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}
