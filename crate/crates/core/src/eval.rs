//! Field evaluation, residual reports and CSV serialization.

use crate::error::{HlError, Result};

/// A scalar field sampled on a space-time product grid, stored t-major
/// (values[it * x.len() + ix]).
#[derive(Clone, Debug)]
pub struct Field {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(x: Vec<f64>, t: Vec<f64>) -> Self {
        let values = vec![0.0; x.len() * t.len()];
        Field { x, t, values }
    }

    pub fn at(&self, ix: usize, it: usize) -> f64 {
        self.values[it * self.x.len() + ix]
    }

    pub fn set(&mut self, ix: usize, it: usize, v: f64) {
        let nx = self.x.len();
        self.values[it * nx + ix] = v;
    }

    /// Sup and L2 differences against another field on the same grid.
    pub fn compare(&self, other: &Field) -> Result<(f64, f64)> {
        if self.x != other.x || self.t != other.t {
            return Err(HlError::GridMismatch);
        }
        let mut sup = 0.0f64;
        let mut l2 = 0.0f64;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            let d = (a - b).abs();
            sup = sup.max(d);
            l2 += d * d;
        }
        Ok((sup, (l2 / self.values.len().max(1) as f64).sqrt()))
    }
}
