//! Radon-Nikodym densities `L = d nu / d mu` against the standard Gaussian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cloud::SampleCloud;
use super::hermite::{hermite_all, HermiteExpansion};
use super::space::{GaussianSpace, MAX_DIM};
use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_pdf, weighted_estimate, Estimate};

/// Eigenvalue tolerance for treating a covariance direction as untouched.
const NEUTRAL_TOL: f64 = 1e-12;

/// Non-degenerate Gaussian law `N(mean, cov)` with cached factorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    sqrt_cov: DMatrix<f64>,
    log_det: f64,
    eigenvalues: DVector<f64>,
    rotated_mean: DVector<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(Error::NotPositiveDefinite("covariance is not symmetric".into()));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!(
                "covariance eigenvalues {:?}",
                eig.eigenvalues.as_slice()
            )));
        }
        let v = &eig.eigenvectors;
        let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let sqrt_cov = v * sqrt_diag * v.transpose();
        let precision = v * inv_diag * v.transpose();
        let log_det = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        let rotated_mean = v.transpose() * &mean;
        Ok(GaussianLaw {
            mean,
            cov: sym,
            precision,
            sqrt_cov,
            log_det,
            eigenvalues: eig.eigenvalues,
            rotated_mean,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity is PD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sqrt_cov(&self) -> &DMatrix<f64> {
        &self.sqrt_cov
    }

    /// `log dN(m, S)/dN(0, I)` at `x`.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let r = &xv - &self.mean;
        -0.5 * self.log_det - 0.5 * r.dot(&(&self.precision * &r)) + 0.5 * xv.norm_squared()
    }

    /// Gradient of the log-ratio: `x - P (x - m)`.
    pub fn grad_log_ratio(&self, x: &[f64]) -> DVector<f64> {
        let xv = DVector::from_column_slice(x);
        let r = &xv - &self.mean;
        &xv - &self.precision * r
    }

    /// Hessian of the log-ratio: `I - P`.
    pub fn hess_log_ratio(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.precision
    }

    /// `m + S^{1/2} z`, the monotone (Brenier) map from `N(0, I)`.
    pub fn push(&self, z: &[f64]) -> Vec<f64> {
        let zv = DVector::from_column_slice(z);
        (&self.mean + &self.sqrt_cov * zv).as_slice().to_vec()
    }

    /// Relative entropy `KL(N(m, S) || N(0, I)) = E[L log L]`.
    pub fn kl_from_standard(&self) -> f64 {
        0.5 * (self.cov.trace() + self.mean.norm_squared() - self.dim() as f64 - self.log_det)
    }

    /// Per eigen-direction extremum of the log-ratio. `upper` selects sup.
    fn log_ratio_bound(&self, upper: bool) -> Option<f64> {
        let mut total = 0.0;
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let m = self.rotated_mean[k];
            if (l - 1.0).abs() <= NEUTRAL_TOL {
                if m.abs() > NEUTRAL_TOL {
                    return None;
                }
                continue;
            }
            if upper && l > 1.0 || !upper && l < 1.0 {
                return None;
            }
            total += -0.5 * l.ln() + m * m / (2.0 * (1.0 - l));
        }
        Some(total)
    }
}

impl Serialize for GaussianLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            mean: &'a [f64],
            cov: Vec<f64>,
        }
        Repr {
            mean: self.mean.as_slice(),
            cov: row_major(&self.cov),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianLaw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            mean: Vec<f64>,
            cov: Vec<f64>,
        }
        let r = Repr::deserialize(d)?;
        let n = r.mean.len();
        if r.cov.len() != n * n {
            return Err(serde::de::Error::custom("covariance must be d*d row-major"));
        }
        GaussianLaw::new(DVector::from_vec(r.mean), DMatrix::from_row_slice(n, n, &r.cov))
            .map_err(serde::de::Error::custom)
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Component `weight * N(mean, scale^2 I)` of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub scale: f64,
    pub mean: Vec<f64>,
}

impl MixtureComponent {
    fn log_ratio(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let s2 = self.scale * self.scale;
        let mut q = 0.0;
        let mut n = 0.0;
        for (xi, mi) in x.iter().zip(&self.mean) {
            q += (xi - mi) * (xi - mi);
            n += xi * xi;
        }
        -d * self.scale.ln() - q / (2.0 * s2) + 0.5 * n
    }

    fn grad_log_ratio(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.scale * self.scale;
        x.iter().zip(&self.mean).map(|(xi, mi)| xi - (xi - mi) / s2).collect()
    }

    fn law(&self) -> GaussianLaw {
        let d = self.mean.len();
        GaussianLaw::new(
            DVector::from_column_slice(&self.mean),
            DMatrix::identity(d, d) * (self.scale * self.scale),
        )
        .expect("positive scale")
    }
}

/// A one-variable factor `f(x) = 1 + sum_{k>=1} c_k h_k(x)` of a Hermite
/// polynomial density, stored as `[1, c_1, ..., c_K]`.
#[derive(Debug, Clone, PartialEq)]
struct HermiteFactor {
    coeffs: Vec<f64>,
    min_value: f64,
}

impl HermiteFactor {
    fn new(tail: &[f64], spec: &str) -> Result<Self> {
        let mut coeffs = vec![1.0];
        coeffs.extend_from_slice(tail);
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        let deg = coeffs.len() - 1;
        if deg > 8 {
            return Err(Error::preset(spec, "Hermite factors are limited to degree 8"));
        }
        if deg % 2 == 1 || coeffs[deg] < 0.0 {
            return Err(Error::preset(spec, "factor polynomial takes negative values"));
        }
        let mut factor = HermiteFactor { coeffs, min_value: 1.0 };
        if deg > 0 {
            // Grid search; the polynomial grows outside the window.
            let mut min = f64::INFINITY;
            let mut x = -20.0;
            while x <= 20.0 {
                min = min.min(factor.value(x));
                x += 1e-3;
            }
            if !(min > 0.0) {
                return Err(Error::preset(spec, format!("factor is not positive (min {min:.3e})")));
            }
            factor.min_value = min;
        }
        Ok(factor)
    }

    fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn is_trivial(&self) -> bool {
        self.degree() == 0
    }

    fn value(&self, x: f64) -> f64 {
        hermite_all(self.degree(), x)
            .iter()
            .zip(&self.coeffs)
            .map(|(h, c)| h * c)
            .sum()
    }

    /// `(f, f', f'')` using `h_k' = sqrt(k) h_{k-1}`.
    fn derivatives(&self, x: f64) -> (f64, f64, f64) {
        let h = hermite_all(self.degree(), x);
        let mut f = 0.0;
        let mut f1 = 0.0;
        let mut f2 = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            f += c * h[k];
            if k >= 1 {
                f1 += c * (k as f64).sqrt() * h[k - 1];
            }
            if k >= 2 {
                f2 += c * ((k * (k - 1)) as f64).sqrt() * h[k - 2];
            }
        }
        (f, f1, f2)
    }

    /// `g` with `F(x) = Phi(x) - phi(x) g(x)`.
    fn cdf_correction(&self, x: f64) -> f64 {
        let h = hermite_all(self.degree(), x);
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * h[k - 1] / (k as f64).sqrt())
            .sum()
    }

    /// Monotone rearrangement `F^{-1}(Phi(z))` of a standard normal draw.
    fn quantile_of_normal(&self, z: f64) -> f64 {
        if self.is_trivial() {
            return z;
        }
        // Work with the lower or upper tail, whichever keeps precision.
        let upper = z > 0.0;
        let target = normal_cdf(-z.abs());
        let tail = |y: f64| -> f64 {
            let g = self.cdf_correction(y) * normal_pdf(y);
            if upper {
                normal_cdf(-y) + g
            } else {
                normal_cdf(y) - g
            }
        };
        // Residual increasing in y.
        let resid = |y: f64| if upper { target - tail(y) } else { tail(y) - target };
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        let mut y = z;
        for _ in 0..200 {
            let r = resid(y);
            if r > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let dens = self.value(y) * normal_pdf(y);
            let mut next = if dens > 0.0 { y - r / dens } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 1e-14 * (1.0 + y.abs()) {
                return next;
            }
            y = next;
        }
        y
    }
}

/// Which preset family a density belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DensityKind {
    Unit,
    /// `exp((h, x) - |h|^2 / 2)`: law `N(h, I)`.
    Shift { h: Vec<f64> },
    /// Product of one-variable scalings: law `N(0, diag(sigma^2))`.
    Scale { sigma: Vec<f64> },
    /// Product of positive one-variable Hermite polynomials; `factors[i]`
    /// holds `[c_1, ..., c_K]` for coordinate `i`.
    HermitePoly { factors: Vec<Vec<f64>> },
    /// General Gaussian law.
    Gaussian { law: GaussianLaw },
    /// Finite mixture of isotropic Gaussians.
    GaussMixture { components: Vec<MixtureComponent> },
}

/// A density `L >= 0` against `N(0, I_d)` with `E[L] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    dim: usize,
    spec: String,
    kind: DensityKind,
    #[serde(skip)]
    law: Option<GaussianLaw>,
    #[serde(skip)]
    factors: Vec<HermiteFactor>,
    normalization: Option<Estimate>,
}

impl<'de> Deserialize<'de> for DensityField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            dim: usize,
            spec: String,
            kind: DensityKind,
            normalization: Option<Estimate>,
        }
        let r = Repr::deserialize(d)?;
        let mut field = DensityField::from_kind(r.dim, r.kind, &r.spec).map_err(serde::de::Error::custom)?;
        field.normalization = r.normalization;
        Ok(field)
    }
}

fn parse_list(spec: &str, body: &str) -> Result<Vec<f64>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::preset(spec, format!("`{s}` is not a number")))
        })
        .collect()
}

fn pad(spec: &str, mut v: Vec<f64>, dim: usize, fill: f64) -> Result<Vec<f64>> {
    if v.len() > dim {
        return Err(Error::preset(spec, format!("{} values for dimension {dim}", v.len())));
    }
    v.resize(dim, fill);
    Ok(v)
}

impl DensityField {
    /// Preset names understood by [`DensityField::parse`].
    pub const PRESETS: &'static [(&'static str, &'static str)] = &[
        ("unit", "L = 1"),
        ("shift:h1,...,hk", "Cameron-Martin shift, law N(h, I); missing entries are 0"),
        ("scale:s1,...,sk", "coordinate scalings, law N(0, diag(s^2)); missing entries are 1"),
        (
            "hermite-poly:c1,c2,..;c1,..",
            "product of positive factors 1 + sum_k c_k h_k(x_i), one ';'-separated list per coordinate",
        ),
        ("gaussian:m1,..,md/v11,v12,..,vdd", "general Gaussian law, covariance row-major"),
        (
            "gauss-mixture:w,s,m1,..,mk/w,s,..",
            "mixture of w * N(m, s^2 I); components separated by '/'",
        ),
    ];

    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        GaussianSpace::new(dim)?;
        let spec = spec.trim();
        let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
        let kind = match name {
            "unit" => DensityKind::Unit,
            "shift" => DensityKind::Shift {
                h: pad(spec, parse_list(spec, body)?, dim, 0.0)?,
            },
            "scale" => {
                let sigma = pad(spec, parse_list(spec, body)?, dim, 1.0)?;
                DensityKind::Scale { sigma }
            }
            "hermite-poly" => {
                let mut factors = body
                    .split(';')
                    .map(|f| parse_list(spec, f))
                    .collect::<Result<Vec<_>>>()?;
                if factors.len() > dim {
                    return Err(Error::preset(spec, "more factors than coordinates"));
                }
                factors.resize(dim, Vec::new());
                DensityKind::HermitePoly { factors }
            }
            "gaussian" => {
                let (m, c) = body
                    .split_once('/')
                    .ok_or_else(|| Error::preset(spec, "expected mean/covariance"))?;
                let mean = pad(spec, parse_list(spec, m)?, dim, 0.0)?;
                let cov = parse_list(spec, c)?;
                if cov.len() != dim * dim {
                    return Err(Error::preset(spec, format!("covariance needs {} entries", dim * dim)));
                }
                let law = GaussianLaw::new(DVector::from_vec(mean), DMatrix::from_row_slice(dim, dim, &cov))
                    .map_err(|e| Error::preset(spec, e.to_string()))?;
                DensityKind::Gaussian { law }
            }
            "gauss-mixture" => {
                let mut components = Vec::new();
                for part in body.split('/') {
                    let v = parse_list(spec, part)?;
                    if v.len() < 2 {
                        return Err(Error::preset(spec, "component needs weight and scale"));
                    }
                    components.push(MixtureComponent {
                        weight: v[0],
                        scale: v[1],
                        mean: pad(spec, v[2..].to_vec(), dim, 0.0)?,
                    });
                }
                DensityKind::GaussMixture { components }
            }
            _ => return Err(Error::preset(spec, "unknown preset name")),
        };
        Self::from_kind(dim, kind, spec)
    }

    pub fn from_kind(dim: usize, kind: DensityKind, spec: &str) -> Result<Self> {
        GaussianSpace::new(dim)?;
        let mut factors = Vec::new();
        let law = match &kind {
            DensityKind::Unit => None,
            DensityKind::Shift { h } => {
                check_len(spec, h.len(), dim)?;
                if h.iter().any(|x| !x.is_finite()) {
                    return Err(Error::preset(spec, "shift must be finite"));
                }
                Some(GaussianLaw::new(DVector::from_column_slice(h), DMatrix::identity(dim, dim))?)
            }
            DensityKind::Scale { sigma } => {
                check_len(spec, sigma.len(), dim)?;
                if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::preset(spec, "scales must be positive"));
                }
                let var = DVector::from_iterator(dim, sigma.iter().map(|s| s * s));
                Some(GaussianLaw::new(DVector::zeros(dim), DMatrix::from_diagonal(&var))?)
            }
            DensityKind::HermitePoly { factors: fs } => {
                check_len(spec, fs.len(), dim)?;
                for f in fs {
                    factors.push(HermiteFactor::new(f, spec)?);
                }
                None
            }
            DensityKind::Gaussian { law } => {
                check_len(spec, law.dim(), dim)?;
                Some(law.clone())
            }
            DensityKind::GaussMixture { components } => {
                if components.is_empty() {
                    return Err(Error::preset(spec, "mixture needs a component"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                for c in components {
                    check_len(spec, c.mean.len(), dim)?;
                    if !(c.weight > 0.0 && c.scale > 0.0) {
                        return Err(Error::preset(spec, "weights and scales must be positive"));
                    }
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::preset(spec, format!("mixture weights sum to {total}")));
                }
                None
            }
        };
        Ok(DensityField {
            dim,
            spec: spec.to_string(),
            kind,
            law,
            factors,
            normalization: None,
        })
    }

    /// `L = dN(law)/dN(0, I)`.
    pub fn from_law(law: GaussianLaw) -> Self {
        let dim = law.dim();
        Self::from_kind(dim, DensityKind::Gaussian { law }, "gaussian").expect("valid law")
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::from_kind(dim, DensityKind::Unit, "unit")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn normalization(&self) -> Option<Estimate> {
        self.normalization
    }

    pub fn log_value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            DensityKind::Unit => 0.0,
            DensityKind::HermitePoly { .. } => self.value(x).ln(),
            DensityKind::GaussMixture { components } => {
                let logs: Vec<f64> = components.iter().map(|c| c.weight.ln() + c.log_ratio(x)).collect();
                let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
            }
            _ => self.law.as_ref().expect("law").log_ratio(x),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Unit => 1.0,
            DensityKind::HermitePoly { .. } => self
                .factors
                .iter()
                .zip(x)
                .filter(|(f, _)| !f.is_trivial())
                .map(|(f, &xi)| f.value(xi))
                .product(),
            _ => self.log_value(x).exp(),
        }
    }

    /// `L(x)`, rejecting negative or non-finite values.
    pub fn checked_value(&self, x: &[f64]) -> Result<f64> {
        let v = self.value(x);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::InvalidDensityValue {
                value: v,
                point: x.to_vec(),
            })
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DensityKind::Unit => vec![0.0; self.dim],
            DensityKind::HermitePoly { .. } => {
                let d: Vec<(f64, f64, f64)> =
                    self.factors.iter().zip(x).map(|(f, &xi)| f.derivatives(xi)).collect();
                (0..self.dim)
                    .map(|i| {
                        d.iter()
                            .enumerate()
                            .map(|(j, t)| if i == j { t.1 } else { t.0 })
                            .product()
                    })
                    .collect()
            }
            DensityKind::GaussMixture { components } => {
                let mut g = vec![0.0; self.dim];
                for c in components {
                    let r = c.weight * c.log_ratio(x).exp();
                    for (gi, di) in g.iter_mut().zip(c.grad_log_ratio(x)) {
                        *gi += r * di;
                    }
                }
                g
            }
            _ => {
                let law = self.law.as_ref().expect("law");
                let l = law.log_ratio(x).exp();
                law.grad_log_ratio(x).iter().map(|g| g * l).collect()
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.kind {
            DensityKind::Unit => DMatrix::zeros(d, d),
            DensityKind::HermitePoly { .. } => {
                let t: Vec<(f64, f64, f64)> =
                    self.factors.iter().zip(x).map(|(f, &xi)| f.derivatives(xi)).collect();
                DMatrix::from_fn(d, d, |i, j| {
                    t.iter()
                        .enumerate()
                        .map(|(k, v)| match (k == i, k == j) {
                            (true, true) => v.2,
                            (true, false) | (false, true) => v.1,
                            (false, false) => v.0,
                        })
                        .product()
                })
            }
            DensityKind::GaussMixture { components } => {
                let mut h = DMatrix::zeros(d, d);
                for c in components {
                    let r = c.weight * c.log_ratio(x).exp();
                    let g = DVector::from_vec(c.grad_log_ratio(x));
                    let k = 1.0 - 1.0 / (c.scale * c.scale);
                    h += (&g * g.transpose() + DMatrix::identity(d, d) * k) * r;
                }
                h
            }
            _ => {
                let law = self.law.as_ref().expect("law");
                let l = law.log_ratio(x).exp();
                let g = law.grad_log_ratio(x);
                (&g * g.transpose() + law.hess_log_ratio()) * l
            }
        }
    }

    /// Known `b` with `L <= b`.
    pub fn upper_bound(&self) -> Option<f64> {
        match &self.kind {
            DensityKind::Unit => Some(1.0),
            DensityKind::HermitePoly { .. } => {
                if self.factors.iter().all(HermiteFactor::is_trivial) {
                    Some(1.0)
                } else {
                    None
                }
            }
            DensityKind::GaussMixture { components } => components
                .iter()
                .map(|c| c.law().log_ratio_bound(true).map(|b| c.weight * b.exp()))
                .sum(),
            _ => self.law.as_ref().and_then(|l| l.log_ratio_bound(true)).map(f64::exp),
        }
    }

    /// Known `a > 0` with `L >= a`.
    pub fn lower_bound(&self) -> Option<f64> {
        match &self.kind {
            DensityKind::Unit => Some(1.0),
            DensityKind::HermitePoly { .. } => Some(self.factors.iter().map(|f| f.min_value).product()),
            DensityKind::GaussMixture { components } => components
                .iter()
                .map(|c| c.law().log_ratio_bound(false).map(|a| c.weight * a.exp()))
                .sum(),
            _ => self.law.as_ref().and_then(|l| l.log_ratio_bound(false)).map(f64::exp),
        }
    }

    /// Law of `L . mu` when it is Gaussian.
    pub fn gaussian_law(&self) -> Option<GaussianLaw> {
        match &self.kind {
            DensityKind::Unit => Some(GaussianLaw::standard(self.dim)),
            _ => self.law.clone(),
        }
    }

    /// Hermite expansion of `L` for polynomial presets.
    pub fn hermite_expansion(&self) -> Option<HermiteExpansion> {
        match &self.kind {
            DensityKind::Unit => Some(HermiteExpansion::constant(self.dim, 1.0)),
            DensityKind::HermitePoly { .. } => {
                let fs: Vec<Vec<f64>> = self.factors.iter().map(|f| f.coeffs.clone()).collect();
                HermiteExpansion::from_product(&fs).ok()
            }
            _ => None,
        }
    }

    /// Coordinate blocks on which `L . mu` differs from `mu`, such that
    /// `L . mu` is the product of its block marginals with `mu` on the
    /// remaining coordinates.
    pub fn factor_blocks(&self) -> Vec<Vec<usize>> {
        let d = self.dim;
        match &self.kind {
            DensityKind::Unit => Vec::new(),
            DensityKind::Shift { h } => (0..d).filter(|&i| h[i] != 0.0).map(|i| vec![i]).collect(),
            DensityKind::Scale { sigma } => (0..d).filter(|&i| sigma[i] != 1.0).map(|i| vec![i]).collect(),
            DensityKind::HermitePoly { .. } => (0..d)
                .filter(|&i| !self.factors[i].is_trivial())
                .map(|i| vec![i])
                .collect(),
            DensityKind::Gaussian { law } => gaussian_blocks(law),
            DensityKind::GaussMixture { components } => {
                let block: Vec<usize> = if components.iter().any(|c| c.scale != 1.0) {
                    (0..d).collect()
                } else {
                    (0..d)
                        .filter(|&i| components.iter().any(|c| c.mean[i] != 0.0))
                        .collect()
                };
                if block.is_empty() {
                    Vec::new()
                } else {
                    vec![block]
                }
            }
        }
    }

    /// True when `L . mu` is a product of one-variable marginals.
    pub fn is_product(&self) -> bool {
        self.factor_blocks().iter().all(|b| b.len() == 1)
    }

    /// Whether [`DensityField::push_standard`] is available.
    pub fn has_pushforward(&self) -> bool {
        !matches!(self.kind, DensityKind::GaussMixture { .. })
    }

    /// Monotone transport of a standard normal point `z` onto `L . mu`:
    /// the symmetric affine map for Gaussian laws, the coordinatewise
    /// rearrangement `F_i^{-1}(Phi(z_i))` for Hermite products.
    pub fn push_standard(&self, z: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            DensityKind::Unit => Some(z.to_vec()),
            DensityKind::Shift { h } => Some(z.iter().zip(h).map(|(a, b)| a + b).collect()),
            DensityKind::Scale { sigma } => Some(z.iter().zip(sigma).map(|(a, s)| a * s).collect()),
            DensityKind::HermitePoly { .. } => Some(
                z.iter()
                    .zip(&self.factors)
                    .map(|(&zi, f)| f.quantile_of_normal(zi))
                    .collect(),
            ),
            DensityKind::Gaussian { law } => Some(law.push(z)),
            DensityKind::GaussMixture { .. } => None,
        }
    }

    /// Mixture components, when the preset is a mixture.
    pub fn mixture_components(&self) -> Option<&[MixtureComponent]> {
        match &self.kind {
            DensityKind::GaussMixture { components } => Some(components),
            _ => None,
        }
    }

    /// Closed-form `E[L log L]` when available.
    pub fn entropy_closed_form(&self) -> Option<f64> {
        match &self.kind {
            DensityKind::Unit => Some(0.0),
            _ => self.law.as_ref().map(GaussianLaw::kl_from_standard),
        }
    }

    /// One-variable marginal CDF of `L . mu` on coordinate `i`, for product
    /// presets.
    pub fn marginal_cdf(&self, i: usize, x: f64) -> Option<f64> {
        match &self.kind {
            DensityKind::Unit => Some(normal_cdf(x)),
            DensityKind::Shift { h } => Some(normal_cdf(x - h[i])),
            DensityKind::Scale { sigma } => Some(normal_cdf(x / sigma[i])),
            DensityKind::HermitePoly { .. } => {
                Some(normal_cdf(x) - normal_pdf(x) * self.factors[i].cdf_correction(x))
            }
            _ => None,
        }
    }

    /// Monte Carlo certificate `|E[L] - 1| <= 3 stderr` on a Gaussian cloud.
    pub fn normalize(&mut self, cloud: &SampleCloud) -> Result<Estimate> {
        if cloud.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: cloud.dim(),
            });
        }
        let values = cloud.rows().map(|x| self.checked_value(x)).collect::<Result<Vec<f64>>>()?;
        let est = weighted_estimate(&values, cloud.weights());
        if !est.within(1.0, 3.0) {
            return Err(Error::NotNormalized {
                mean: est.value,
                stderr: est.stderr,
            });
        }
        self.normalization = Some(est);
        Ok(est)
    }
}

fn check_len(spec: &str, got: usize, dim: usize) -> Result<()> {
    if dim > MAX_DIM {
        return Err(Error::DimensionOverflow { dim, max: MAX_DIM });
    }
    if got != dim {
        return Err(Error::preset(spec, format!("{got} parameters for dimension {dim}")));
    }
    Ok(())
}

/// Connected components of the covariance sparsity graph, keeping only those
/// on which the law differs from the standard one.
fn gaussian_blocks(law: &GaussianLaw) -> Vec<Vec<usize>> {
    let d = law.dim();
    let cov = law.cov();
    let mut label: Vec<usize> = (0..d).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if cov[(i, j)] != 0.0 {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; d];
    for i in 0..d {
        let r = find(&mut label, i);
        match root_of[r] {
            Some(b) => blocks[b].push(i),
            None => {
                root_of[r] = Some(blocks.len());
                blocks.push(vec![i]);
            }
        }
    }
    blocks
        .into_iter()
        .filter(|b| {
            b.iter().any(|&i| law.mean()[i] != 0.0)
                || b.iter()
                    .any(|&i| b.iter().any(|&j| cov[(i, j)] != if i == j { 1.0 } else { 0.0 }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(l: &DensityField, x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (l.value(&a) - l.value(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn parses_every_preset_family() {
        for (spec, d) in [
            ("unit", 3),
            ("shift:1,0", 2),
            ("scale:2", 1),
            ("scale:2,2,2", 8),
            ("hermite-poly:0,0.7071067811865476", 1),
            ("hermite-poly:0.2,0.3;;0,0.1", 3),
            ("gaussian:1,0/2,0.5,0.5,1", 2),
            ("gauss-mixture:0.5,1,1/0.5,1,-1", 2),
        ] {
            DensityField::parse(spec, d).unwrap_or_else(|e| panic!("{spec}: {e}"));
        }
    }

    #[test]
    fn rejects_bad_presets() {
        assert!(matches!(DensityField::parse("bogus", 2), Err(Error::InvalidPreset { .. })));
        assert!(DensityField::parse("scale:-1", 1).is_err());
        assert!(DensityField::parse("shift:1,2,3", 2).is_err());
        assert!(DensityField::parse("hermite-poly:1", 1).is_err());
        assert!(DensityField::parse("hermite-poly:0,-2", 1).is_err());
        assert!(DensityField::parse("gauss-mixture:0.4,1,1/0.4,1,-1", 1).is_err());
        assert!(matches!(DensityField::parse("unit", 65), Err(Error::DimensionOverflow { .. })));
    }

    #[test]
    fn closed_form_values() {
        let shift = DensityField::parse("shift:1,0", 2).unwrap();
        let x = [0.3, -0.4];
        assert!((shift.value(&x) - (0.3f64 - 0.5).exp()).abs() < 1e-14);

        let scale = DensityField::parse("scale:2", 1).unwrap();
        let y: f64 = 1.1;
        assert!((scale.value(&[y]) - 0.5 * (3.0 * y * y / 8.0).exp()).abs() < 1e-14);

        let herm = DensityField::parse("hermite-poly:0,0.7071067811865476", 1).unwrap();
        assert!((herm.value(&[y]) - (0.5 + 0.5 * y * y)).abs() < 1e-14);

        let mix = DensityField::parse("gauss-mixture:0.25,1,1/0.75,1,-1", 1).unwrap();
        let expected = 0.25 * (y - 0.5).exp() + 0.75 * (-y - 0.5).exp();
        assert!((mix.value(&[y]) - expected).abs() < 1e-14);
    }

    #[test]
    fn gradients_and_hessians_match_finite_differences() {
        let x = [0.4, -0.7];
        for spec in [
            "shift:0.5,-1",
            "scale:1.5,0.8",
            "hermite-poly:0.2,0.3;0,0.2",
            "gaussian:0.3,0/1.5,0.2,0.2,0.8",
            "gauss-mixture:0.3,0.9,1,0/0.7,1.2,-0.5,0.5",
        ] {
            let l = DensityField::parse(spec, 2).unwrap();
            let g = l.gradient(&x);
            let fd = fd_gradient(&l, &x);
            for i in 0..2 {
                assert!((g[i] - fd[i]).abs() < 1e-7, "{spec}: {g:?} vs {fd:?}");
            }
            let h = l.hessian(&x);
            for i in 0..2 {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += 1e-5;
                b[i] -= 1e-5;
                let (ga, gb) = (l.gradient(&a), l.gradient(&b));
                for j in 0..2 {
                    let fd = (ga[j] - gb[j]) / 2e-5;
                    assert!((h[(i, j)] - fd).abs() < 1e-6, "{spec}: H[{i},{j}]");
                }
            }
        }
    }

    #[test]
    fn bounds_are_valid_where_claimed() {
        let l = DensityField::parse("scale:0.5,0.8", 2).unwrap();
        let b = l.upper_bound().unwrap();
        assert!((b - 1.0 / (0.5 * 0.8)).abs() < 1e-12);
        assert!(l.lower_bound().is_none());
        assert!(DensityField::parse("shift:1", 1).unwrap().upper_bound().is_none());
        assert!(DensityField::parse("scale:2", 1).unwrap().upper_bound().is_none());
        assert!((DensityField::parse("scale:2", 1).unwrap().lower_bound().unwrap() - 0.5).abs() < 1e-14);

        let g = DensityField::parse("gaussian:0.5/0.25", 1).unwrap();
        let b = g.upper_bound().unwrap();
        let mut max: f64 = 0.0;
        let mut x = -10.0;
        while x < 10.0 {
            max = max.max(g.value(&[x]));
            x += 1e-4;
        }
        assert!(max <= b * (1.0 + 1e-9));
        assert!((max - b).abs() < 1e-6 * b);
    }

    #[test]
    fn factor_blocks_isolate_active_coordinates() {
        assert!(DensityField::unit(4).unwrap().factor_blocks().is_empty());
        let l = DensityField::parse("scale:2,1,2", 4).unwrap();
        assert_eq!(l.factor_blocks(), vec![vec![0], vec![2]]);
        let g = DensityField::parse("gaussian:0,0,1/2,0.5,0,0.5,1,0,0,0,1", 3).unwrap();
        assert_eq!(g.factor_blocks(), vec![vec![0, 1], vec![2]]);
        let m = DensityField::parse("gauss-mixture:0.5,1,1/0.5,1,-1", 3).unwrap();
        assert_eq!(m.factor_blocks(), vec![vec![0]]);
        assert!(l.is_product() && !g.is_product());
    }

    #[test]
    fn hermite_quantile_inverts_marginal_cdf() {
        let l = DensityField::parse("hermite-poly:0.3,0.4,0,0.1", 1).unwrap();
        for &z in &[-6.0, -2.0, -0.3, 0.0, 0.8, 3.5, 7.0] {
            let y = l.push_standard(&[z]).unwrap()[0];
            let f = l.marginal_cdf(0, y).unwrap();
            let target = normal_cdf(z);
            assert!((f - target).abs() <= 1e-12 + 1e-9 * target, "z={z}: F(y)={f}, Phi(z)={target}");
        }
    }

    #[test]
    fn hermite_expansion_agrees_with_value() {
        let l = DensityField::parse("hermite-poly:0.2,0.3;0,0.25", 2).unwrap();
        let e = l.hermite_expansion().unwrap();
        for x in [[0.1, 0.2], [-1.5, 2.0], [3.0, -0.7]] {
            assert!((e.eval(&x) - l.value(&x)).abs() < 1e-12);
        }
        assert!((e.mean() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shift_entropy_closed_form() {
        let l = DensityField::parse("shift:1,0", 2).unwrap();
        assert!((l.entropy_closed_form().unwrap() - 0.5).abs() < 1e-14);
        let s = DensityField::parse("scale:2", 1).unwrap();
        let expected = 0.5 * (4.0 - 1.0 - 2.0 * 2f64.ln());
        assert!((s.entropy_closed_form().unwrap() - expected).abs() < 1e-14);
    }
}
