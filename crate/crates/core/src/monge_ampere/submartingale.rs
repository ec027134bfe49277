use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::SampleCloud;
use crate::stats::{weighted_estimate, Estimate};

/// Potentials whose conditional expectations on the first `n` coordinates
/// are known in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase")]
pub enum ConditionedPotential {
    Zero { dim: usize },
    /// `1/2 (x, B x)` with `B >= -I`.
    Quadratic { b: Vec<f64>, dim: usize },
    /// `|x_index|`.
    Abs { index: usize, dim: usize },
}

impl ConditionedPotential {
    /// `zero`, `quadratic:b11,b12,..,bdd` (row-major) or `abs:i` with a
    /// 1-based coordinate.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
        let p = match name {
            "zero" => ConditionedPotential::Zero { dim },
            "quadratic" => {
                let b = body
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| Error::preset(spec, format!("`{s}` is not a number"))))
                    .collect::<Result<Vec<f64>>>()?;
                ConditionedPotential::Quadratic { b, dim }
            }
            "abs" => {
                let i: usize = body.trim().parse().map_err(|_| Error::preset(spec, "expected a coordinate"))?;
                if i == 0 {
                    return Err(Error::preset(spec, "coordinates are numbered from 1"));
                }
                ConditionedPotential::Abs { index: i - 1, dim }
            }
            _ => return Err(Error::preset(spec, format!("unknown potential `{name}`"))),
        };
        p.validate().map_err(|e| Error::preset(spec, e.to_string()))?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConditionedPotential::Zero { dim }
            | ConditionedPotential::Quadratic { dim, .. }
            | ConditionedPotential::Abs { dim, .. } => *dim,
        }
    }

    fn matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            ConditionedPotential::Quadratic { b, dim } => Some(DMatrix::from_row_slice(*dim, *dim, b)),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        match self {
            ConditionedPotential::Zero { .. } => Ok(()),
            ConditionedPotential::Abs { index, .. } => {
                if *index < d {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("coordinate {} beyond dimension {d}", index + 1)))
                }
            }
            ConditionedPotential::Quadratic { b, .. } => {
                if b.len() != d * d {
                    return Err(Error::DimensionMismatch {
                        expected: d * d,
                        got: b.len(),
                    });
                }
                let m = self.matrix().expect("quadratic");
                if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                    return Err(Error::InvalidArgument("matrix is not symmetric".into()));
                }
                let min = SymmetricEigen::new(m).eigenvalues.min();
                if min < -1.0 - 1e-9 {
                    return Err(Error::NotOneConvex {
                        eigenvalue: min,
                        point: Vec::new(),
                    });
                }
                Ok(())
            }
        }
    }

    /// `X_n = L_a F_n(x)` with `F_n = E[phi | x_1..x_n]`, using only the
    /// absolutely continuous part of the Hessian.
    pub fn level_value(&self, n: usize, x: &[f64]) -> f64 {
        match self {
            ConditionedPotential::Zero { .. } => 0.0,
            ConditionedPotential::Quadratic { b, dim } => {
                // F_n = 1/2 (x_n, B_nn x_n) + const, so L F_n = (B_nn x_n, x_n) - tr B_nn.
                let mut v = 0.0;
                for i in 0..n {
                    v -= b[i * dim + i];
                    for j in 0..n {
                        v += b[i * dim + j] * x[i] * x[j];
                    }
                }
                v
            }
            ConditionedPotential::Abs { index, .. } => {
                if *index < n {
                    x[*index].abs()
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[X_m | x_1..x_n]` for `m >= n`.
    pub fn conditional(&self, m: usize, n: usize, x: &[f64]) -> f64 {
        match self {
            ConditionedPotential::Zero { .. } | ConditionedPotential::Quadratic { .. } => self.level_value(n, x),
            ConditionedPotential::Abs { index, .. } => {
                if *index < n {
                    x[*index].abs()
                } else if *index < m {
                    (2.0 / std::f64::consts::PI).sqrt()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmartingaleTrace {
    pub levels: Vec<usize>,
    /// `X_n` per level, one value per cloud point.
    pub samples: Vec<Vec<f64>>,
    /// `E[X_{next} | V_n]` per consecutive pair of levels, per point.
    pub conditional: Vec<Vec<f64>>,
    /// Smallest pointwise gap `E[X_{next} | V_n] - X_n` per transition.
    pub min_gaps: Vec<f64>,
    /// Monte Carlo mean of `X_{next} - X_n` per transition.
    pub mean_increments: Vec<Estimate>,
    pub tol: f64,
    pub submartingale: bool,
}

pub fn submartingale_trace(
    phi: &ConditionedPotential,
    levels: &[usize],
    cloud: &SampleCloud,
    tol: f64,
) -> Result<SubmartingaleTrace> {
    let d = phi.dim();
    if cloud.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cloud.dim(),
        });
    }
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) || *levels.last().expect("nonempty") > d {
        return Err(Error::InvalidArgument(format!(
            "levels {levels:?} must be increasing, at least two, and at most {d}"
        )));
    }
    let samples: Vec<Vec<f64>> = levels
        .iter()
        .map(|&n| cloud.rows().map(|x| phi.level_value(n, x)).collect())
        .collect();
    let mut conditional = Vec::new();
    let mut min_gaps = Vec::new();
    let mut mean_increments = Vec::new();
    for (k, w) in levels.windows(2).enumerate() {
        let cond: Vec<f64> = cloud.rows().map(|x| phi.conditional(w[1], w[0], x)).collect();
        let gap = cond
            .iter()
            .zip(&samples[k])
            .map(|(c, x)| c - x)
            .fold(f64::INFINITY, f64::min);
        let incr: Vec<f64> = samples[k + 1].iter().zip(&samples[k]).map(|(a, b)| a - b).collect();
        mean_increments.push(weighted_estimate(&incr, cloud.weights()));
        min_gaps.push(gap);
        conditional.push(cond);
    }
    Ok(SubmartingaleTrace {
        levels: levels.to_vec(),
        submartingale: min_gaps.iter().all(|g| *g >= -tol),
        samples,
        conditional,
        min_gaps,
        mean_increments,
        tol,
    })
}
