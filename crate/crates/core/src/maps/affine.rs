use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianLaw, SampleCloud};

/// Eigenvalues below this are treated as zero in matrix square roots.
const EIGEN_FLOOR: f64 = 1e-12;

/// `f(S)` for symmetric `S` through its eigendecomposition.
fn spectral_map(s: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    let m = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    symmetrize(&m)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root with eigenvalues floored at `1e-12`.
pub fn sqrt_psd(s: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(s, |l| l.max(EIGEN_FLOOR).sqrt())
}

fn check_pd(name: &str, s: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() {
        return Err(Error::InvalidArgument(format!("{name} is not square")));
    }
    let scale = s.abs().max().max(1.0);
    if (s - s.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("{name} is not symmetric")));
    }
    let min = SymmetricEigen::new(s.clone()).eigenvalues.min();
    if !(min > EIGEN_FLOOR * scale) {
        return Err(Error::NotPositiveDefinite(format!("{name} has eigenvalue {min:e}")));
    }
    Ok(())
}

/// `T(x) = b + A (x - m)` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransport {
    a: DMatrix<f64>,
    b: DVector<f64>,
    m: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct AffineRepr {
    m1: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
}

impl Serialize for AffineTransport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AffineRepr {
            m1: self.m.iter().copied().collect(),
            b: self.b.iter().copied().collect(),
            a: crate::gaussian::row_major(&self.a),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AffineTransport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = AffineRepr::deserialize(d)?;
        let n = r.m1.len();
        if r.b.len() != n || r.a.len() != n * n {
            return Err(serde::de::Error::custom("inconsistent affine transport dimensions"));
        }
        AffineTransport::new(DMatrix::from_row_slice(n, n, &r.a), DVector::from_vec(r.b), DVector::from_vec(r.m1))
            .map_err(serde::de::Error::custom)
    }
}

impl AffineTransport {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, m: DVector<f64>) -> Result<Self> {
        let d = m.len();
        if a.nrows() != d || a.ncols() != d || b.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.nrows().max(b.len()),
            });
        }
        let scale = a.abs().max().max(1.0);
        if (&a - a.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::InvalidArgument("transport matrix must be symmetric".into()));
        }
        let min = SymmetricEigen::new(a.clone()).eigenvalues.min();
        if min < -1e-12 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "transport matrix has eigenvalue {min:e}"
            )));
        }
        Ok(AffineTransport { a, b, m })
    }

    pub fn identity(dim: usize) -> Self {
        AffineTransport {
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            m: DVector::zeros(dim),
        }
    }

    /// `x + h`.
    pub fn shift(h: &[f64]) -> Self {
        let d = h.len();
        AffineTransport {
            a: DMatrix::identity(d, d),
            b: DVector::from_column_slice(h),
            m: DVector::zeros(d),
        }
    }

    /// `diag(s) x`.
    pub fn diagonal(s: &[f64]) -> Result<Self> {
        let d = s.len();
        AffineTransport::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(s)),
            DVector::zeros(d),
            DVector::zeros(d),
        )
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn source_mean(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.b + &self.a * (x - &self.m)).iter().copied().collect()
    }

    /// `T(x) - x`.
    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(x).map(|(t, xi)| t - xi).collect()
    }

    /// Smallest eigenvalue of `A`.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.a.clone()).eigenvalues.min()
    }

    /// `T^{-1}(y) = m + A^{-1} (y - b)`, for strictly positive definite `A`.
    pub fn inverse(&self) -> Result<AffineTransport> {
        let scale = self.a.abs().max().max(f64::MIN_POSITIVE);
        let min = self.min_eigenvalue();
        if min <= EIGEN_FLOOR * scale {
            return Err(Error::NotInvertible(format!(
                "transport matrix has eigenvalue {min:e}; the map is degenerate"
            )));
        }
        let inv = spectral_map(&self.a, |l| 1.0 / l);
        Ok(AffineTransport {
            a: inv,
            b: self.m.clone(),
            m: self.b.clone(),
        })
    }

    /// Image of `N(mean, cov)`.
    pub fn push_law(&self, law: &GaussianLaw) -> Result<GaussianLaw> {
        let mean = &self.b + &self.a * (law.mean() - &self.m);
        let cov = symmetrize(&(&self.a * law.cov() * &self.a));
        GaussianLaw::new(mean, cov)
    }

    pub fn compose(&self, inner: &AffineTransport) -> DMatrix<f64> {
        &self.a * &inner.a
    }
}

/// Brenier map from `N(m1, s1)` to `N(m2, s2)`:
/// `A = s1^{-1/2} (s1^{1/2} s2 s1^{1/2})^{1/2} s1^{-1/2}`.
pub fn gaussian_brenier(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<AffineTransport> {
    let d = m1.len();
    if s1.nrows() != d || s2.nrows() != d || m2.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s1.nrows().max(s2.nrows()).max(m2.len()),
        });
    }
    check_pd("source covariance", s1)?;
    check_pd("target covariance", s2)?;
    let r = sqrt_psd(s1);
    let r_inv = spectral_map(s1, |l| 1.0 / l.max(EIGEN_FLOOR).sqrt());
    let middle = sqrt_psd(&symmetrize(&(&r * s2 * &r)));
    let a = symmetrize(&(&r_inv * middle * &r_inv));
    AffineTransport::new(a, m2.clone(), m1.clone())
}

/// Brenier map from the standard Gaussian onto a Gaussian law.
pub fn brenier_from_standard(target: &GaussianLaw) -> Result<AffineTransport> {
    let d = target.dim();
    gaussian_brenier(&DVector::zeros(d), &DMatrix::identity(d, d), target.mean(), target.cov())
}

/// Worst round-trip errors of a map and its inverse over a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    /// `max |T^{-1}(T(x)) - x|`.
    pub forward: f64,
    /// `max |T(T^{-1}(y)) - y|`.
    pub backward: f64,
}

pub fn invert_on_samples(t: &AffineTransport, cloud: &SampleCloud) -> Result<RoundTripReport> {
    if cloud.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: cloud.dim(),
        });
    }
    let inv = t.inverse()?;
    let err = |a: &[f64], b: &[f64]| crate::gaussian::dist_sq(a, b).sqrt();
    let mut report = RoundTripReport {
        forward: 0.0,
        backward: 0.0,
    };
    for x in cloud.rows() {
        report.forward = report.forward.max(err(&inv.apply(&t.apply(x)), x));
        report.backward = report.backward.max(err(&t.apply(&inv.apply(x)), x));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{sample_standard, GaussianSpace, Provenance};
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn shift_between_unit_covariances() {
        let d = 3;
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let t = gaussian_brenier(&DVector::zeros(d), &DMatrix::identity(d, d), &h, &DMatrix::identity(d, d)).unwrap();
        assert_eq!(t.apply(&[0.1, 0.2, 0.3]), vec![1.1, -1.8, 0.8]);
    }

    #[test]
    fn one_dimensional_scaling() {
        let t = gaussian_brenier(&DVector::zeros(1), &diag(&[1.0]), &DVector::zeros(1), &diag(&[4.0])).unwrap();
        assert_relative_eq!(t.apply(&[1.5])[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn anisotropic_target_pushes_covariance() {
        let t = gaussian_brenier(&DVector::zeros(2), &diag(&[1.0, 1.0]), &DVector::zeros(2), &diag(&[4.0, 9.0])).unwrap();
        assert_relative_eq!(t.matrix().clone(), diag(&[2.0, 3.0]), epsilon = 1e-12);
        let c = sample_standard(&GaussianSpace::new(2).unwrap(), 10_000, 3).unwrap();
        let y = c.map_points(2, Provenance::Pushforward, |x| t.apply(x)).unwrap();
        let var = |k: usize| y.rows().map(|r| r[k] * r[k]).sum::<f64>() / 10_000.0;
        assert!((var(0) / 4.0 - 1.0).abs() < 0.05);
        assert!((var(1) / 9.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn brenier_map_pushes_general_laws() {
        let s1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s2 = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 3.0]);
        let m1 = DVector::from_vec(vec![1.0, 0.0]);
        let m2 = DVector::from_vec(vec![0.0, 2.0]);
        let t = gaussian_brenier(&m1, &s1, &m2, &s2).unwrap();
        let pushed = t.push_law(&GaussianLaw::new(m1.clone(), s1.clone()).unwrap()).unwrap();
        assert_relative_eq!(pushed.cov().clone(), s2, epsilon = 1e-12);
        assert_relative_eq!(pushed.mean().clone(), m2, epsilon = 1e-12);
        assert!(t.min_eigenvalue() > 0.0);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let bad = diag(&[1.0, -1.0]);
        assert!(gaussian_brenier(&DVector::zeros(2), &bad, &DVector::zeros(2), &diag(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn round_trips() {
        let c = sample_standard(&GaussianSpace::new(2).unwrap(), 500, 1).unwrap();
        let id = invert_on_samples(&AffineTransport::identity(2), &c).unwrap();
        assert_eq!((id.forward, id.backward), (0.0, 0.0));
        let sh = invert_on_samples(&AffineTransport::shift(&[0.5, -1.0]), &c).unwrap();
        assert!(sh.forward <= 1e-12 && sh.backward <= 1e-12);
        let dg = invert_on_samples(&AffineTransport::diagonal(&[2.0, 3.0]).unwrap(), &c).unwrap();
        assert!(dg.forward <= 1e-10 && dg.backward <= 1e-10);
        let singular = AffineTransport::diagonal(&[1.0, 0.0]).unwrap();
        assert!(matches!(invert_on_samples(&singular, &c), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn json_round_trip() {
        let t = AffineTransport::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        )
        .unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"m1":[0.0,-1.0],"b":[1.0,2.0],"a":[2.0,0.5,0.5,1.0]}"#);
        let back: AffineTransport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
