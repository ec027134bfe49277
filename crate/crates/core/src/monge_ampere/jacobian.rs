use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{dot, DensityField, SampleCloud};
use crate::maps::{potential_of, AffineTransport, Potential};

/// Eigenvalues this far below `-1` are rounding and are clamped to `-1`.
pub const CLAMP_TOL: f64 = 1e-9;

/// Modified Carleman-Fredholm determinant `det_2(I + A) = prod (1 + l) e^{-l}`
/// from the eigenvalues of `A`. Exactly zero when some `l = -1`.
pub fn det2(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|&l| (1.0 + l) * (-l).exp()).product()
}

/// `log det_2(I + A)`, `-inf` when some `l = -1`.
pub fn log_det2(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|&l| (1.0 + l).ln() - l).sum()
}

/// Sorted eigenvalues of a Hessian, with values in `[-1 - CLAMP_TOL, -1)`
/// moved to `-1`. Anything lower means the potential is not 1-convex at `x`.
pub fn hessian_eigenvalues(h: &DMatrix<f64>, x: &[f64]) -> Result<Vec<f64>> {
    let mut eig: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    for l in &mut eig {
        if *l < -1.0 {
            if *l < -1.0 - CLAMP_TOL {
                return Err(Error::NotOneConvex {
                    eigenvalue: *l,
                    point: x.to_vec(),
                });
            }
            *l = -1.0;
        }
    }
    Ok(eig)
}

/// The factors of the Gaussian Jacobian at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianPoint {
    pub x: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub det2: f64,
    /// `L phi (x) = (grad phi(x), x) - trace Hess phi(x)`.
    pub ou_phi: f64,
    pub grad_sq: f64,
    pub lambda: f64,
}

/// Jacobian of `t phi`, reusing the derivatives of `phi`.
fn scaled_jacobian(grad: &[f64], hess: &DMatrix<f64>, x: &[f64], t: f64) -> Result<JacobianPoint> {
    let scaled = hess * t;
    let eigenvalues = hessian_eigenvalues(&scaled, x)?;
    let d2 = det2(&eigenvalues);
    let ou_phi = t * (dot(grad, x) - hess.trace());
    let grad_sq = t * t * dot(grad, grad);
    Ok(JacobianPoint {
        x: x.to_vec(),
        eigenvalues,
        det2: d2,
        ou_phi,
        grad_sq,
        lambda: d2 * (-ou_phi - 0.5 * grad_sq).exp(),
    })
}

/// `Lambda(x) = det_2(I + Hess phi) exp(-L phi - |grad phi|^2 / 2)`.
pub fn gaussian_jacobian(phi: &dyn Potential, x: &[f64]) -> Result<JacobianPoint> {
    interpolated_jacobian(phi, x, 1.0)
}

/// Jacobian of `T_t = I + t grad phi`.
pub fn interpolated_jacobian(phi: &dyn Potential, x: &[f64], t: f64) -> Result<JacobianPoint> {
    if x.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            got: x.len(),
        });
    }
    scaled_jacobian(&phi.gradient(x), &phi.hessian(x), x, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianRecord {
    #[serde(flatten)]
    pub point: JacobianPoint,
    /// `L(T(x))`.
    pub density_at_image: f64,
    /// `Lambda(x) L(T(x)) - 1`, absent when `L(T(x))` is not positive.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianSummary {
    pub points: usize,
    pub max_abs_residual: f64,
    pub mean_abs_residual: f64,
    /// Indices where `L(T(x)) <= 0`.
    pub invalid_points: Vec<usize>,
    pub det2_min: f64,
    pub det2_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub records: Vec<JacobianRecord>,
    pub summary: JacobianSummary,
}

impl JacobianReport {
    /// CSV with header `point,det2,ou_phi,lambda,residual`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["point", "det2", "ou_phi", "lambda", "residual"])?;
        for (i, r) in self.records.iter().enumerate() {
            out.write_record(&[
                i.to_string(),
                format!("{:e}", r.point.det2),
                format!("{:e}", r.point.ou_phi),
                format!("{:e}", r.point.lambda),
                r.residual.map_or_else(|| "nan".into(), |v| format!("{v:e}")),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.summary)?;
        Ok(())
    }
}

/// `Lambda . (L o T) - 1` on a cloud, for the transport `T` of `mu` onto
/// `L . mu`.
pub fn jacobian_residual(l: &DensityField, t: &AffineTransport, cloud: &SampleCloud) -> Result<JacobianReport> {
    if l.dim() != t.dim() || cloud.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: if l.dim() != t.dim() { l.dim() } else { cloud.dim() },
        });
    }
    let pair = potential_of(t)?;
    let phi = pair.phi.as_ref();
    let rows: Vec<&[f64]> = cloud.rows().collect();
    let records = rows
        .par_iter()
        .map(|x| {
            let point = gaussian_jacobian(phi, x)?;
            let density_at_image = l.value(&t.apply(x));
            let residual = (density_at_image > 0.0 && density_at_image.is_finite())
                .then(|| point.lambda * density_at_image - 1.0);
            Ok(JacobianRecord {
                point,
                density_at_image,
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let valid: Vec<f64> = records.iter().filter_map(|r| r.residual.map(f64::abs)).collect();
    let summary = JacobianSummary {
        points: records.len(),
        max_abs_residual: valid.iter().copied().fold(0.0, f64::max),
        mean_abs_residual: if valid.is_empty() {
            0.0
        } else {
            crate::stats::pairwise_sum(&valid) / valid.len() as f64
        },
        invalid_points: records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.residual.is_none())
            .map(|(i, _)| i)
            .collect(),
        det2_min: records.iter().map(|r| r.point.det2).fold(f64::INFINITY, f64::min),
        det2_max: records.iter().map(|r| r.point.det2).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(JacobianReport { records, summary })
}
