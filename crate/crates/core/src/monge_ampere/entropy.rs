use serde::{Deserialize, Serialize};
use serde_json::json;

use super::jacobian::gaussian_jacobian;
use crate::error::{Error, Result};
use crate::gaussian::{dist_sq, dot, sample_standard, DensityField, GaussianSpace, SampleCloud};
use crate::inequalities::InequalityReport;
use crate::maps::{gaussian_brenier, Potential};
use crate::stats::{mean_estimate, normal_cdf, weighted_estimate, Estimate};

/// `1/2 E|grad phi|^2 <= E[-log K + log L o T]` under `K . mu`, where `T`
/// is the Brenier map of the Gaussian laws `K . mu -> L . mu`.
pub fn entropy_transport_check(k: &DensityField, l: &DensityField, n: usize, seed: u64) -> Result<InequalityReport> {
    if k.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            got: l.dim(),
        });
    }
    let unsupported = |f: &DensityField| Error::Unsupported(format!("`{}` is not a Gaussian law", f.spec()));
    let source = k.gaussian_law().ok_or_else(|| unsupported(k))?;
    let target = l.gaussian_law().ok_or_else(|| unsupported(l))?;
    let t = gaussian_brenier(source.mean(), source.cov(), target.mean(), target.cov())?;
    let cloud = sample_standard(&GaussianSpace::new(k.dim())?, n, seed)?;
    let mut lhs = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for z in cloud.rows() {
        let x = source.push(z);
        let y = t.apply(&x);
        lhs.push(0.5 * dist_sq(&x, &y));
        rhs.push(-k.log_value(&x) + l.log_value(&y));
    }
    let exact_if_constant = |e: Estimate| if e.stderr < 1e-14 * (1.0 + e.value.abs()) { Estimate::exact(e.value) } else { e };
    Ok(InequalityReport::new(
        exact_if_constant(mean_estimate(&lhs)),
        exact_if_constant(mean_estimate(&rhs)),
        json!({ "source": k.spec(), "target": l.spec(), "dim": k.dim(), "n": n, "seed": seed }),
    ))
}

/// Bounded test functions with closed-form Gaussian expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `clamp(x_i, -c, c)`.
    ClippedCoordinate { index: usize, clip: f64 },
    /// `exp(-a |x - center|^2)`.
    Bump { center: Vec<f64>, a: f64 },
    /// Indicator of `(u, x) >= b`.
    HalfSpace { u: Vec<f64>, b: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::ClippedCoordinate { index, clip } => x[*index].clamp(-clip, *clip),
            TestFunction::Bump { center, a } => (-a * dist_sq(x, center)).exp(),
            TestFunction::HalfSpace { u, b } => {
                if dot(u, x) >= *b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Expectation under `N(0, I)`.
    pub fn gaussian_mean(&self, dim: usize) -> f64 {
        match self {
            TestFunction::ClippedCoordinate { .. } => 0.0,
            TestFunction::Bump { center, a } => {
                let s = 1.0 + 2.0 * a;
                s.powf(-(dim as f64) / 2.0) * (-a * dot(center, center) / s).exp()
            }
            TestFunction::HalfSpace { u, b } => normal_cdf(-b / dot(u, u).sqrt()),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            TestFunction::ClippedCoordinate { index, clip } => *index < dim && *clip > 0.0,
            TestFunction::Bump { center, a } => center.len() == dim && *a > 0.0,
            TestFunction::HalfSpace { u, .. } => u.len() == dim && dot(u, u) > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("test function {self:?} invalid in dimension {dim}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    pub function: TestFunction,
    /// `E[f(T x) Lambda(x)]` on the cloud.
    pub transported: Estimate,
    /// `E[f]` in closed form.
    pub reference: f64,
    pub defect: f64,
    pub within_3_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    /// `E[Lambda]`, which must be 1 for the change of variables to close.
    pub lambda_mean: Estimate,
    pub entries: Vec<DefectEntry>,
}

/// `|E[f o T Lambda] - E[f]|` per test function with `T = I + grad phi`.
pub fn pushforward_defect(phi: &dyn Potential, cloud: &SampleCloud, tests: &[TestFunction]) -> Result<DefectReport> {
    let d = phi.dim();
    if cloud.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cloud.dim(),
        });
    }
    for f in tests {
        f.validate(d)?;
    }
    let mut lambdas = Vec::with_capacity(cloud.len());
    let mut images = Vec::with_capacity(cloud.len());
    for x in cloud.rows() {
        lambdas.push(gaussian_jacobian(phi, x)?.lambda);
        images.push(x.iter().zip(phi.gradient(x)).map(|(a, g)| a + g).collect::<Vec<f64>>());
    }
    let lambda_mean = weighted_estimate(&lambdas, cloud.weights());
    let entries = tests
        .iter()
        .map(|f| {
            let vals: Vec<f64> = images.iter().zip(&lambdas).map(|(y, lam)| f.eval(y) * lam).collect();
            let transported = weighted_estimate(&vals, cloud.weights());
            let reference = f.gaussian_mean(d);
            let defect = (transported.value - reference).abs();
            DefectEntry {
                function: f.clone(),
                transported,
                reference,
                defect,
                within_3_sigma: defect <= 3.0 * transported.stderr + 1e-12,
            }
        })
        .collect();
    Ok(DefectReport { lambda_mean, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::Verdict;
    use crate::maps::{brenier_from_standard, potential_of, QuadraticPotential};
    use crate::quadrature::integrate_line;
    use crate::stats::normal_pdf;

    #[test]
    fn unit_to_unit_is_zero() {
        let u = DensityField::unit(2).unwrap();
        let r = entropy_transport_check(&u, &u, 128, 1).unwrap();
        assert_eq!((r.lhs.value, r.rhs.value), (0.0, 0.0));
        assert_eq!(r.verdict, Verdict::HoldsWithEquality);
    }

    #[test]
    fn shift_saturates() {
        let u = DensityField::unit(2).unwrap();
        let l = DensityField::parse("shift:0.6,0.8", 2).unwrap();
        let r = entropy_transport_check(&u, &l, 4096, 2).unwrap();
        assert!((r.lhs.value - 0.5).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::HoldsWithEquality, "{r:?}");
    }

    #[test]
    fn scaling_has_strict_slack() {
        let u = DensityField::unit(1).unwrap();
        let l = DensityField::parse("scale:2", 1).unwrap();
        let r = entropy_transport_check(&u, &l, 20_000, 3).unwrap();
        assert!(r.lhs.within(0.5, 4.0));
        assert!(r.rhs.within(1.5 - 2f64.ln(), 4.0));
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn non_gaussian_rejected() {
        let u = DensityField::unit(1).unwrap();
        let h = DensityField::parse("hermite-poly:0,0.5", 1).unwrap();
        assert!(matches!(entropy_transport_check(&u, &h, 8, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn closed_form_means_match_quadrature() {
        let bump = TestFunction::Bump { center: vec![0.5], a: 1.0 };
        let q = integrate_line(|x| bump.eval(&[x]) * normal_pdf(x), 12.0, 1e-13);
        assert!((bump.gaussian_mean(1) - q).abs() < 1e-12);
        let hs = TestFunction::HalfSpace { u: vec![2.0], b: 1.0 };
        assert!((hs.gaussian_mean(1) - normal_cdf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn defects_vanish_in_law() {
        let cloud = sample_standard(&GaussianSpace::new(1).unwrap(), 20_000, 7).unwrap();
        let zero = QuadraticPotential::zero(1);
        let tests = vec![
            TestFunction::Bump { center: vec![0.0], a: 1.0 },
            TestFunction::HalfSpace { u: vec![1.0], b: 0.3 },
            TestFunction::ClippedCoordinate { index: 0, clip: 1.0 },
        ];
        let r = pushforward_defect(&zero, &cloud, &tests).unwrap();
        assert_eq!(r.lambda_mean.value, 1.0);
        for f in ["scale:2", "shift:0.7"] {
            let l = DensityField::parse(f, 1).unwrap();
            let t = brenier_from_standard(&l.gaussian_law().unwrap()).unwrap();
            let p = potential_of(&t).unwrap();
            let r = pushforward_defect(p.phi.as_ref(), &cloud, &tests).unwrap();
            assert!(r.lambda_mean.within(1.0, 3.0), "{f}: {:?}", r.lambda_mean);
            for e in &r.entries {
                assert!(e.within_3_sigma, "{f}: {e:?}");
            }
        }
    }
}
