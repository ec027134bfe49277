use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jacobian::{interpolated_jacobian, log_det2};
use crate::error::{Error, Result};
use crate::gaussian::{DensityField, GaussianLaw, SampleCloud};
use crate::maps::{potential_of, AffineTransport, Potential};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpolationConfig {
    /// Random directions per point for the monotonicity test.
    pub directions: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        InterpolationConfig {
            directions: 8,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Witness of a failed monotonicity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityWitness {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationLevel {
    pub t: f64,
    /// Smallest `((I + t Hess phi) h, h) / |h|^2` seen.
    pub min_monotonicity: f64,
    /// `min_monotonicity >= 1 - t - tol`.
    pub monotone: bool,
    pub witness: Option<MonotonicityWitness>,
    pub min_lambda: f64,
    pub lambda_positive: bool,
    /// `max |Lambda_t (L_t o T_t) - 1|` for affine transports.
    pub max_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub levels: Vec<InterpolationLevel>,
    /// Largest increase of `t -> log det_2(I + t Hess phi)` between
    /// consecutive grid times, over all points.
    pub worst_log_det2_increase: f64,
    pub log_det2_nonincreasing: bool,
}

/// Law of `T_t = I + t (T - I)` applied to `mu`.
fn interpolated_law(t: f64, transport: &AffineTransport) -> Result<GaussianLaw> {
    let d = transport.dim();
    let eye = DMatrix::identity(d, d);
    let a = transport.matrix() * t + &eye * (1.0 - t);
    let k = transport.offset() - transport.matrix() * transport.source_mean();
    let tt = AffineTransport::new(a, k * t, DVector::zeros(d))?;
    tt.push_law(&GaussianLaw::standard(d))
}

/// Checks along `T_t = I + t grad phi` on `[0, 1)`: `(1 - t)`-monotonicity,
/// positivity of `Lambda_t`, monotonicity of `log det_2` in `t`, and for
/// affine transports the residual against the exact density of `T_t . mu`.
pub fn interpolation_check(
    phi: &dyn Potential,
    transport: Option<&AffineTransport>,
    ts: &[f64],
    cloud: &SampleCloud,
    cfg: &InterpolationConfig,
) -> Result<InterpolationReport> {
    if ts.is_empty() || ts.iter().any(|t| !(0.0..1.0).contains(t)) || ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("times {ts:?} must be increasing in [0, 1)")));
    }
    if cloud.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            got: cloud.dim(),
        });
    }
    let d = phi.dim();
    let densities: Option<Vec<DensityField>> = transport
        .map(|tr| {
            ts.iter()
                .map(|&t| Ok(DensityField::from_law(interpolated_law(t, tr)?)))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let maps: Option<Vec<AffineTransport>> = transport
        .map(|tr| {
            ts.iter()
                .map(|&t| {
                    let eye = DMatrix::identity(d, d);
                    let k = tr.offset() - tr.matrix() * tr.source_mean();
                    AffineTransport::new(tr.matrix() * t + eye * (1.0 - t), k * t, DVector::zeros(d))
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    if let Some(tr) = transport {
        // The affine path uses the potential of `tr`; insist they agree.
        let own = potential_of(tr)?;
        if let Some(x) = cloud.rows().next() {
            let g1 = own.phi.gradient(x);
            let g2 = phi.gradient(x);
            if g1.iter().zip(&g2).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
                return Err(Error::InvalidArgument("potential does not match the transport".into()));
            }
        }
    }

    struct PointResult {
        per_t: Vec<(f64, Option<MonotonicityWitness>, f64, Option<f64>)>,
        log_det_increase: f64,
    }
    let rows: Vec<(usize, &[f64])> = cloud.rows().enumerate().collect();
    let results = rows
        .par_iter()
        .map(|&(i, x)| {
            let mut rng = rng::stream(rng::derive_seed(cfg.seed, "interpolation-directions"), i as u64);
            let dirs: Vec<DVector<f64>> = (0..cfg.directions)
                .map(|_| DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal))))
                .collect();
            let hess = phi.hessian(x);
            let mut per_t = Vec::with_capacity(ts.len());
            let mut prev_log = f64::INFINITY;
            let mut increase = f64::NEG_INFINITY;
            for (k, &t) in ts.iter().enumerate() {
                let m = DMatrix::identity(d, d) + &hess * t;
                let mut worst = f64::INFINITY;
                let mut witness = None;
                for h in &dirs {
                    let n2 = h.norm_squared();
                    if n2 == 0.0 {
                        continue;
                    }
                    let ratio = h.dot(&(&m * h)) / n2;
                    if ratio < worst {
                        worst = ratio;
                        if ratio < 1.0 - t - cfg.tol {
                            witness = Some(MonotonicityWitness {
                                x: x.to_vec(),
                                h: h.as_slice().to_vec(),
                                t,
                            });
                        }
                    }
                }
                let j = interpolated_jacobian(phi, x, t)?;
                let residual = match (&densities, &maps) {
                    (Some(ls), Some(ms)) => Some((j.lambda * ls[k].value(&ms[k].apply(x)) - 1.0).abs()),
                    _ => None,
                };
                let ld = log_det2(&j.eigenvalues);
                if k > 0 {
                    increase = increase.max(ld - prev_log);
                }
                prev_log = ld;
                per_t.push((worst, witness, j.lambda, residual));
            }
            Ok(PointResult {
                per_t,
                log_det_increase: increase,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let levels = ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut min_mono = f64::INFINITY;
            let mut witness = None;
            let mut min_lambda = f64::INFINITY;
            let mut max_res: Option<f64> = None;
            for r in &results {
                let (mono, w, lam, res) = &r.per_t[k];
                if *mono < min_mono {
                    min_mono = *mono;
                }
                if witness.is_none() {
                    witness = w.clone();
                }
                min_lambda = min_lambda.min(*lam);
                if let Some(v) = res {
                    max_res = Some(max_res.map_or(*v, |m: f64| m.max(*v)));
                }
            }
            InterpolationLevel {
                t,
                min_monotonicity: min_mono,
                monotone: witness.is_none(),
                witness,
                min_lambda,
                lambda_positive: min_lambda > 0.0,
                max_residual: max_res,
            }
        })
        .collect();
    let worst = results
        .iter()
        .map(|r| r.log_det_increase)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = if ts.len() < 2 { 0.0 } else { worst };
    Ok(InterpolationReport {
        levels,
        worst_log_det2_increase: worst,
        log_det2_nonincreasing: worst <= 1e-10,
    })
}
