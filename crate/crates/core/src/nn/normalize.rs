use serde::{Deserialize, Serialize};

use super::tensor::DenseArray;
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-8;

/// Per-feature running mean / variance (Welford), applied as a z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    count: u64,
    mean: DenseArray,
    m2: DenseArray,
    enabled: bool,
}

impl RunningNormalizer {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self {
            count: 0,
            mean: DenseArray::zeros(1, dim),
            m2: DenseArray::zeros(1, dim),
            enabled,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.data()
    }

    /// Sample variance per feature (zero while `count <= 1`).
    pub fn variance(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![0.0; self.dim()];
        }
        let d = (self.count - 1) as f64;
        self.m2.data().iter().map(|m| m / d).collect()
    }

    /// The divisor used by [`apply`](Self::apply): 1 when inactive, the
    /// floored sample std otherwise.
    pub fn scale(&self) -> Vec<f64> {
        if !self.active() {
            return vec![1.0; self.dim()];
        }
        self.variance().into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect()
    }

    fn active(&self) -> bool {
        self.enabled && self.count > 1
    }

    pub fn update(&mut self, batch: &DenseArray) -> Result<()> {
        if batch.cols() != self.dim() {
            return Err(Error::dim("normalizer_update", self.dim(), batch.cols()));
        }
        batch.check_finite("normalizer_update")?;
        for r in 0..batch.rows() {
            self.count += 1;
            let n = self.count as f64;
            let row = batch.row(r);
            let mean = self.mean.data_mut();
            let m2 = self.m2.data_mut();
            for j in 0..row.len() {
                let delta = row[j] - mean[j];
                mean[j] += delta / n;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
        Ok(())
    }

    pub fn update_scalars(&mut self, values: &[f64]) -> Result<()> {
        self.update(&DenseArray::column_vector(values)?)
    }

    pub fn apply(&self, batch: &DenseArray) -> Result<DenseArray> {
        if batch.cols() != self.dim() {
            return Err(Error::dim("normalizer_apply", self.dim(), batch.cols()));
        }
        if !self.active() {
            return Ok(batch.clone());
        }
        let scale = self.scale();
        let mut out = batch.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean.data()[j]) / scale[j];
            }
        }
        Ok(out)
    }

    /// Scalar form for one-dimensional normalizers.
    pub fn apply_scalar(&self, value: f64) -> f64 {
        if !self.active() {
            return value;
        }
        (value - self.mean.data()[0]) / self.scale()[0]
    }

    pub fn invert_scalar(&self, value: f64) -> f64 {
        if !self.active() {
            return value;
        }
        value * self.scale()[0] + self.mean.data()[0]
    }
}
