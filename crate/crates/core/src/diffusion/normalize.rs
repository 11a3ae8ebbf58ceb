use serde::{Deserialize, Serialize};

use super::policy::PairTable;
use crate::{Error, Result};

/// Spans narrower than this are treated as constant dimensions.
const MIN_SPAN: f64 = 1e-9;

/// Per-dimension min-max map onto `[-1, 1]`. Vectors longer than `dim` are
/// treated as concatenations of `dim`-sized records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn identity(dim: usize) -> Self {
        Self {
            min: vec![-1.0; dim],
            max: vec![1.0; dim],
        }
    }

    pub fn fit(values: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::config("cannot fit normalizer to empty or ragged data"));
        }
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for rec in values.chunks_exact(dim) {
            for d in 0..dim {
                min[d] = min[d].min(rec[d]);
                max[d] = max[d].max(rec[d]);
            }
        }
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite value in normalizer data"));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn scale_offset(&self, d: usize) -> (f64, f64) {
        let span = self.max[d] - self.min[d];
        let center = 0.5 * (self.max[d] + self.min[d]);
        if span < MIN_SPAN {
            (1.0, center)
        } else {
            (0.5 * span, center)
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let (half, center) = self.scale_offset(i % dim);
                (v - center) / half
            })
            .collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let (half, center) = self.scale_offset(i % dim);
                v * half + center
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub obs: MinMax,
    pub action: MinMax,
}

impl Normalizer {
    pub fn identity((obs_dim, action_dim): (usize, usize)) -> Self {
        Self {
            obs: MinMax::identity(obs_dim),
            action: MinMax::identity(action_dim),
        }
    }

    pub fn fit(table: &PairTable, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::config("cannot fit normalizer to an empty dataset"));
        }
        Ok(Self {
            obs: MinMax::fit(&table.obs, obs_dim)?,
            action: MinMax::fit(&table.actions, action_dim)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_data_lands_in_unit_box() {
        let data = [0.0, 10.0, 2.0, -10.0, 1.0, 0.0];
        let m = MinMax::fit(&data, 2).unwrap();
        let n = m.normalize(&data);
        assert_eq!(n, vec![-1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        let back = m.denormalize(&n);
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_dimension_is_centered_not_scaled() {
        let m = MinMax::fit(&[3.0, 3.0, 3.0], 1).unwrap();
        assert_eq!(m.normalize(&[3.0, 4.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn empty_fit_is_config_error() {
        assert!(matches!(MinMax::fit(&[], 2), Err(Error::Config(_))));
    }
}
