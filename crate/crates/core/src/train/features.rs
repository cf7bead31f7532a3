use std::collections::HashMap;

use rayon::prelude::*;

use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::siggen::{featurize, FeatureConfig, Segment};
use crate::{Error, Result};

/// Featurized segments: one row of `x` per segment, keyed by segment id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet<T> {
    pub ids: Vec<u64>,
    pub x: Matrix<T>,
    pub labels: Vec<Option<usize>>,
    pub stations: Vec<usize>,
    row_of: HashMap<u64, usize>,
}

/// Per-dimension affine map `(x − mean)·scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> FeatureSet<T> {
    pub fn from_parts(ids: Vec<u64>, x: Matrix<T>, labels: Vec<Option<usize>>, stations: Vec<usize>) -> Result<Self> {
        let n = ids.len();
        if x.rows() != n || labels.len() != n || stations.len() != n {
            return Err(Error::Argument(format!(
                "feature set parts disagree: {n} ids, {} rows, {} labels, {} stations",
                x.rows(),
                labels.len(),
                stations.len()
            )));
        }
        let mut row_of = HashMap::with_capacity(n);
        for (r, &id) in ids.iter().enumerate() {
            if row_of.insert(id, r).is_some() {
                return Err(Error::Argument(format!("duplicate segment id {id}")));
            }
        }
        Ok(Self { ids, x, labels, stations, row_of })
    }

    /// Featurize segments in parallel; row order follows `segments`.
    pub fn from_segments(segments: &[Segment], cfg: &FeatureConfig) -> Result<Self> {
        let rows: Vec<Vec<T>> = segments
            .par_iter()
            .map(|s| featurize::<T>(s, cfg))
            .collect::<Result<_>>()?;
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Argument("segments featurize to different lengths".into()));
            }
            data.extend(r);
        }
        Self::from_parts(
            segments.iter().map(|s| s.seg_id).collect(),
            Matrix::from_vec(segments.len(), dim, data),
            segments.iter().map(|s| s.label).collect(),
            segments.iter().map(|s| s.stream.station).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn row(&self, id: u64) -> Option<usize> {
        self.row_of.get(&id).copied()
    }

    /// Labeled rows whose station is in `stations`.
    pub fn labeled_rows(&self, stations: &[usize]) -> Vec<usize> {
        (0..self.len())
            .filter(|&r| self.labels[r].is_some() && stations.contains(&self.stations[r]))
            .collect()
    }

    pub fn labels_of(&self, rows: &[usize]) -> Result<Vec<usize>> {
        rows.iter()
            .map(|&r| self.labels[r].ok_or_else(|| Error::Argument(format!("row {r} is unlabeled"))))
            .collect()
    }

    /// Column means and inverse standard deviations; near-constant columns
    /// get scale 1.
    pub fn fit_standardizer(&self) -> Standardizer<T> {
        let (n, d) = (self.x.rows(), self.x.cols());
        let mut mean = vec![T::zero(); d];
        let mut var = vec![T::zero(); d];
        if n > 0 {
            let nf = T::from_usize_lossy(n);
            for r in 0..n {
                for (m, &v) in mean.iter_mut().zip(self.x.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nf);
            for r in 0..n {
                for ((s, &v), &m) in var.iter_mut().zip(self.x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= nf);
        }
        let floor = T::lit(1e-6);
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > floor { T::one() / v.sqrt() } else { T::one() })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn standardize(&mut self, s: &Standardizer<T>) -> Result<()> {
        if s.mean.len() != self.dim() {
            return Err(Error::Argument(format!(
                "standardizer has {} dims, features have {}",
                s.mean.len(),
                self.dim()
            )));
        }
        for r in 0..self.x.rows() {
            for ((v, &m), &k) in self.x.row_mut(r).iter_mut().zip(&s.mean).zip(&s.scale) {
                *v = (*v - m) * k;
            }
        }
        Ok(())
    }

    /// Rows `rows` as a new set, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::from_parts(
            rows.iter().map(|&r| self.ids[r]).collect(),
            self.x.select_rows(rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
            rows.iter().map(|&r| self.stations[r]).collect(),
        )
    }
}
