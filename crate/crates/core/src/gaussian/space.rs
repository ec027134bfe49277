use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 8;
pub const MAX_DIM: usize = 64;

/// `R^d` with the standard Gaussian `N(0, I_d)`. The Cameron-Martin norm is
/// the Euclidean norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianSpace {
    dim: usize,
}

impl GaussianSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::DimensionOverflow { dim, max: MAX_DIM });
        }
        Ok(GaussianSpace { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for GaussianSpace {
    fn default() -> Self {
        GaussianSpace { dim: DEFAULT_DIM }
    }
}

/// Squared Cameron-Martin norm of a displacement.
pub fn cm_norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
