use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::InequalityReport;
use crate::error::{Error, Result};
use crate::gaussian::{dist_sq, dot, sample_standard, GaussianSpace};
use crate::quadrature::integrate_line;
use crate::stats::{mean_estimate, normal_cdf, normal_pdf, Estimate};

/// A set `A` whose Cameron-Martin gauge `q_A(x) = inf {|h| : x + h in A}` has
/// a closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "lowercase")]
pub enum Region {
    /// `{x : (u, x) >= a}`.
    Halfspace { u: Vec<f64>, a: f64 },
    /// `{x : |x - center| >= r}`.
    Ballc { center: Vec<f64>, r: f64 },
}

impl Region {
    /// `halfspace:u1,...,ud,a` or `ballc:c1,...,cd,r`; short direction or
    /// center lists are padded with zeros to `dim`.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let (name, body) = spec
            .split_once(':')
            .ok_or_else(|| Error::preset(spec, "expected `halfspace:...` or `ballc:...`"))?;
        let mut nums = body
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::preset(spec, format!("`{s}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        let last = nums.pop().ok_or_else(|| Error::preset(spec, "missing values"))?;
        if nums.is_empty() && name == "halfspace" {
            return Err(Error::preset(spec, "missing direction"));
        }
        if nums.len() > dim {
            return Err(Error::preset(spec, format!("{} coordinates for dimension {dim}", nums.len())));
        }
        nums.resize(dim, 0.0);
        match name {
            "halfspace" => {
                if dot(&nums, &nums) == 0.0 {
                    return Err(Error::preset(spec, "direction must be nonzero"));
                }
                Ok(Region::Halfspace { u: nums, a: last })
            }
            "ballc" => {
                if !(last > 0.0) {
                    return Err(Error::preset(spec, "radius must be positive"));
                }
                Ok(Region::Ballc { center: nums, r: last })
            }
            _ => Err(Error::preset(spec, format!("unknown region `{name}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Halfspace { u, .. } => u.len(),
            Region::Ballc { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.gauge(x) == 0.0
    }

    pub fn gauge(&self, x: &[f64]) -> f64 {
        match self {
            Region::Halfspace { u, a } => (a - dot(u, x)).max(0.0) / dot(u, u).sqrt(),
            Region::Ballc { center, r } => (r - dist_sq(x, center).sqrt()).max(0.0),
        }
    }

    /// Points at gauge distance more than `eps`: the complement of the
    /// `eps`-enlargement of `A`.
    pub fn beyond(&self, x: &[f64], eps: f64) -> bool {
        self.gauge(x) > eps
    }

    /// `(mu(A), E[q_A^2], mu(B_eps))` by one-dimensional quadrature, when the
    /// gauge depends on one Gaussian variable.
    pub fn oracle(&self, eps: f64) -> Option<(f64, f64, f64)> {
        match self {
            Region::Halfspace { u, a } => {
                let b = a / dot(u, u).sqrt();
                let q2 = integrate_line(|z| (b - z).max(0.0).powi(2) * normal_pdf(z), 12.0, 1e-13);
                Some((normal_cdf(-b), q2, normal_cdf(b - eps)))
            }
            Region::Ballc { center, r } if center.iter().all(|&c| c == 0.0) => {
                // |x| has the chi law with d degrees of freedom.
                let d = center.len() as f64;
                let log_norm = (1.0 - d / 2.0) * std::f64::consts::LN_2 - libm::lgamma(d / 2.0);
                let pdf = |s: f64| {
                    if s <= 0.0 {
                        0.0
                    } else {
                        (log_norm + (d - 1.0) * s.ln() - s * s / 2.0).exp()
                    }
                };
                let inside = |rad: f64| {
                    if rad <= 0.0 {
                        0.0
                    } else {
                        crate::quadrature::simpson(&pdf, 0.0, rad, 1e-14)
                    }
                };
                let q2 = crate::quadrature::simpson(&|s: f64| (r - s).powi(2) * pdf(s), 0.0, *r, 1e-14);
                Some((1.0 - inside(*r), q2, inside(r - eps)))
            }
            Region::Ballc { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    /// `mu(A) <= exp(-E[q_A^2] / 2)`.
    pub bound: InequalityReport,
    /// `mu(A) mu(B) <= exp(-eps^2 / 4)` for `B` at gauge distance beyond `eps`.
    pub separation: InequalityReport,
    pub measure_a: Estimate,
    pub measure_b: Estimate,
    pub gauge_sq: Estimate,
    /// Quadrature values of `(mu(A), E[q_A^2], mu(B))` when available.
    pub oracle: Option<(f64, f64, f64)>,
    /// No sample fell in `A`.
    pub degenerate: bool,
}

fn indicator_estimate(hits: &[f64]) -> Estimate {
    mean_estimate(hits)
}

/// Monte Carlo check of both gauge concentration bounds.
pub fn gauge_report(region: &Region, eps: f64, n: usize, seed: u64) -> Result<GaugeReport> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument("separation must be nonnegative".into()));
    }
    let space = GaussianSpace::new(region.dim())?;
    let cloud = sample_standard(&space, n, seed)?;
    let q: Vec<f64> = cloud.rows().map(|x| region.gauge(x)).collect();
    let in_a: Vec<f64> = q.iter().map(|&v| if v == 0.0 { 1.0 } else { 0.0 }).collect();
    let in_b: Vec<f64> = q.iter().map(|&v| if v > eps { 1.0 } else { 0.0 }).collect();
    let q2: Vec<f64> = q.iter().map(|v| v * v).collect();
    let measure_a = indicator_estimate(&in_a);
    let measure_b = indicator_estimate(&in_b);
    let gauge_sq = mean_estimate(&q2);
    let bound_rhs = {
        let v = (-gauge_sq.value / 2.0).exp();
        Estimate::new(v, v * gauge_sq.stderr / 2.0)
    };
    // Product of two estimates from the same cloud; the delta method ignores
    // their (negative) correlation, which only widens the band.
    let prod = measure_a.value * measure_b.value;
    let prod_se = (measure_b.value * measure_a.stderr).hypot(measure_a.value * measure_b.stderr);
    let params = json!({ "region": region, "eps": eps, "n": n, "seed": seed });
    Ok(GaugeReport {
        bound: InequalityReport::new(measure_a, bound_rhs, params.clone()),
        separation: InequalityReport::new(Estimate::new(prod, prod_se), Estimate::exact((-eps * eps / 4.0).exp()), params),
        measure_a,
        measure_b,
        gauge_sq,
        oracle: region.oracle(eps),
        degenerate: measure_a.value == 0.0,
    })
}
