use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{affine, affine_backward, Matrix};
use crate::scalar::Real;

pub(crate) const NORM_EPS: f64 = 1e-5;
pub(crate) const NORM_MOMENTUM: f64 = 0.1;

/// Affine layer, `w` is `n_out × n_in` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![T::zero(); n_in * n_out],
            b: vec![T::zero(); n_out],
        }
    }

    /// Uniform fan-in initialisation, `U(-1/√n_in, 1/√n_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in.max(1) as f64).sqrt();
        let mut draw = || T::lit(rng.random_range(-bound..=bound));
        let w = (0..n_in * n_out).map(|_| draw()).collect();
        let b = (0..n_out).map(|_| draw()).collect();
        Self { n_in, n_out, w, b }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        affine(x, &self.w, &self.b, self.n_out)
    }
}

/// Per-feature standardisation with learnable scale/shift and running
/// statistics for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> Norm<T> {
    pub fn new(n: usize) -> Self {
        Self {
            gamma: vec![T::one(); n],
            beta: vec![T::zero(); n],
            running_mean: vec![T::zero(); n],
            running_var: vec![T::one(); n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            gamma: vec![T::zero(); n],
            beta: vec![T::zero(); n],
            running_mean: vec![T::zero(); n],
            running_var: vec![T::zero(); n],
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }
}

/// Batch statistics observed by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub n: usize,
}

impl<T: Real> Norm<T> {
    /// Exponential moving average update; variance stored unbiased.
    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = T::lit(NORM_MOMENTUM);
        let unbias = if stats.n > 1 {
            T::from_usize_lossy(stats.n) / T::from_usize_lossy(stats.n - 1)
        } else {
            T::one()
        };
        for k in 0..self.width() {
            self.running_mean[k] = (T::one() - m) * self.running_mean[k] + m * stats.mean[k];
            self.running_var[k] = (T::one() - m) * self.running_var[k] + m * stats.var[k] * unbias;
        }
    }
}

/// Two-layer MLP head: affine → norm → ReLU → affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head<T> {
    pub fc1: Dense<T>,
    pub norm: Norm<T>,
    pub fc2: Dense<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct HeadCache<T> {
    input: Matrix<T>,
    xhat: Matrix<T>,
    inv_std: Vec<T>,
    pre_relu: Matrix<T>,
    hidden: Matrix<T>,
    pub(crate) stats: Option<BatchStats<T>>,
}

impl<T: Real> Head<T> {
    pub fn init<R: Rng + ?Sized>(n_in: usize, hidden: usize, n_out: usize, rng: &mut R) -> Self {
        Self {
            fc1: Dense::init(n_in, hidden, rng),
            norm: Norm::new(hidden),
            fc2: Dense::init(hidden, n_out, rng),
        }
    }

    pub fn zeros(n_in: usize, hidden: usize, n_out: usize) -> Self {
        Self {
            fc1: Dense::zeros(n_in, hidden),
            norm: Norm::zeros(hidden),
            fc2: Dense::zeros(hidden, n_out),
        }
    }

    /// `train` selects batch statistics; otherwise running statistics are used.
    pub(crate) fn forward(&self, x: &Matrix<T>, train: bool) -> (Matrix<T>, HeadCache<T>) {
        let u = self.fc1.forward(x);
        let (n, h) = (u.rows(), u.cols());
        let eps = T::lit(NORM_EPS);
        let (mean, var, stats) = if train {
            let nf = T::from_usize_lossy(n);
            let mut mean = vec![T::zero(); h];
            for r in 0..n {
                for (m, &v) in mean.iter_mut().zip(u.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nf);
            let mut var = vec![T::zero(); h];
            for r in 0..n {
                for ((s, &v), &m) in var.iter_mut().zip(u.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= nf);
            let stats = BatchStats { mean: mean.clone(), var: var.clone(), n };
            (mean, var, Some(stats))
        } else {
            (self.norm.running_mean.clone(), self.norm.running_var.clone(), None)
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Matrix::zeros(n, h);
        let mut pre = Matrix::zeros(n, h);
        let mut hidden = Matrix::zeros(n, h);
        for r in 0..n {
            for k in 0..h {
                let xh = (u.get(r, k) - mean[k]) * inv_std[k];
                let v = self.norm.gamma[k] * xh + self.norm.beta[k];
                xhat.set(r, k, xh);
                pre.set(r, k, v);
                hidden.set(r, k, v.max(T::zero()));
            }
        }
        let y = self.fc2.forward(&hidden);
        let cache = HeadCache {
            input: x.clone(),
            xhat,
            inv_std,
            pre_relu: pre,
            hidden,
            stats,
        };
        (y, cache)
    }

    /// Accumulates parameter gradients into `grad`, returns the input gradient.
    pub(crate) fn backward(&self, cache: &HeadCache<T>, dy: &Matrix<T>, grad: &mut Head<T>) -> Matrix<T> {
        let dhidden = affine_backward(&cache.hidden, &self.fc2.w, dy, &mut grad.fc2.w, &mut grad.fc2.b, true)
            .expect("dx requested");
        let (n, h) = (dhidden.rows(), dhidden.cols());
        let mut dxhat = Matrix::zeros(n, h);
        for r in 0..n {
            for k in 0..h {
                let dv = if cache.pre_relu.get(r, k) > T::zero() {
                    dhidden.get(r, k)
                } else {
                    T::zero()
                };
                grad.norm.gamma[k] += dv * cache.xhat.get(r, k);
                grad.norm.beta[k] += dv;
                dxhat.set(r, k, dv * self.norm.gamma[k]);
            }
        }
        let mut du = Matrix::zeros(n, h);
        if cache.stats.is_some() {
            let nf = T::from_usize_lossy(n);
            for k in 0..h {
                let mut sum = T::zero();
                let mut sum_x = T::zero();
                for r in 0..n {
                    sum += dxhat.get(r, k);
                    sum_x += dxhat.get(r, k) * cache.xhat.get(r, k);
                }
                for r in 0..n {
                    let g = cache.inv_std[k] / nf
                        * (nf * dxhat.get(r, k) - sum - cache.xhat.get(r, k) * sum_x);
                    du.set(r, k, g);
                }
            }
        } else {
            for r in 0..n {
                for k in 0..h {
                    du.set(r, k, dxhat.get(r, k) * cache.inv_std[k]);
                }
            }
        }
        affine_backward(&cache.input, &self.fc1.w, &du, &mut grad.fc1.w, &mut grad.fc1.b, true)
            .expect("dx requested")
    }
}
