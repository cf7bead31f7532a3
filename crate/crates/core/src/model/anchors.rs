use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;
use crate::rng::rng_for;
use crate::scalar::Real;
use crate::{Error, Result};

/// One fixed unit-norm Gaussian vector per class, used as the embedding
/// target of that class's annotation anchor. Never updated during training.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorVectors<T> {
    pub a: Matrix<T>,
    pub seed: u64,
}

impl<T: Real> AnchorVectors<T> {
    pub fn n_classes(&self) -> usize {
        self.a.rows()
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn vector(&self, class: usize) -> &[T] {
        self.a.row(class)
    }

    pub fn fingerprint(&self) -> String {
        super::fingerprint_slices(&[self.a.as_slice()])
    }
}

pub fn init_anchor_vectors<T: Real>(n_classes: usize, dim: usize, seed: u64) -> Result<AnchorVectors<T>> {
    if dim < 2 {
        return Err(Error::Argument(format!("anchor dimension must be >= 2, got {dim}")));
    }
    let mut rng = rng_for(seed, &[0xA4C4]);
    let mut a = Matrix::zeros(n_classes, dim);
    for c in 0..n_classes {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (dst, v) in a.row_mut(c).iter_mut().zip(g) {
            *dst = T::lit(v / n);
        }
    }
    Ok(AnchorVectors { a, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};

    #[test]
    fn rows_unit_norm_and_reproducible() {
        let a: AnchorVectors<f64> = init_anchor_vectors(3, 128, 11).unwrap();
        for c in 0..3 {
            assert!((norm(a.vector(c)) - 1.0).abs() < 1e-9);
        }
        let b: AnchorVectors<f64> = init_anchor_vectors(3, 128, 11).unwrap();
        assert_eq!(a, b);
        let c: AnchorVectors<f64> = init_anchor_vectors(3, 128, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn near_orthogonal_in_high_dimension() {
        let mut good = 0;
        for seed in 0..100 {
            let a: AnchorVectors<f64> = init_anchor_vectors(3, 128, seed).unwrap();
            let worst = (0..3)
                .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
                .map(|(i, j)| dot(a.vector(i), a.vector(j)).abs())
                .fold(0.0, f64::max);
            good += usize::from(worst < 0.5);
        }
        assert!(good >= 99, "{good}/100 seeds near-orthogonal");
    }

    #[test]
    fn dimension_too_small() {
        assert!(init_anchor_vectors::<f64>(3, 1, 0).is_err());
    }
}
