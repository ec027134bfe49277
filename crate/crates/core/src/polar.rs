//! Factorization of a linear change of Gaussian law into a transport and a
//! measure-preserving rotation, with the energy minimality of the rotation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{row_major, sample_standard, GaussianLaw, GaussianSpace, SampleCloud};
use crate::maps::{brenier_from_standard, AffineTransport};
use crate::rng;
use crate::stats::{ks_one_sample, mean_estimate, normal_cdf, Estimate};

/// Largest `|Q^T Q - I|` entry accepted as orthogonal.
const ORTHO_TOL: f64 = 1e-10;

/// `V(x) = M x + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    shift: DVector<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != shift.len() {
            return Err(Error::DimensionMismatch {
                expected: shift.len(),
                got: matrix.nrows(),
            });
        }
        Ok(LinearMap { matrix, shift })
    }

    /// `scale * R x + h` with `R` the rotation by `angle_deg` in the plane of
    /// the first two coordinates.
    pub fn planar(dim: usize, angle_deg: f64, scale: f64, shift: &[f64]) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument("a planar rotation needs two coordinates".into()));
        }
        let mut h = shift.to_vec();
        if h.len() > dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h.len(),
            });
        }
        h.resize(dim, 0.0);
        LinearMap::new(planar_rotation(dim, angle_deg) * scale, DVector::from_vec(h))
    }

    /// `T0 o R` for a transport `T0` and an orthogonal `R`.
    pub fn composed(t0: &AffineTransport, r: &DMatrix<f64>) -> Result<Self> {
        let a = t0.matrix();
        LinearMap::new(a * r, t0.offset() - a * t0.source_mean())
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x) + &self.shift).as_slice().to_vec()
    }

    /// `v(x) = V(x) - x`.
    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(x).map(|(a, b)| a - b).collect()
    }

    /// Law of `V` applied to `N(0, I)`.
    pub fn image_law(&self) -> Result<GaussianLaw> {
        let cov = &self.matrix * self.matrix.transpose();
        GaussianLaw::new(self.shift.clone(), (&cov + cov.transpose()) * 0.5)
            .map_err(|_| Error::NotInvertible("the image law is degenerate".into()))
    }
}

pub fn planar_rotation(dim: usize, angle_deg: f64) -> DMatrix<f64> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut r = DMatrix::identity(dim, dim);
    r[(0, 0)] = c;
    r[(0, 1)] = -s;
    r[(1, 0)] = s;
    r[(1, 1)] = c;
    r
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(dim: usize, seed: u64, index: u64) -> DMatrix<f64> {
    let mut g = rng::stream(rng::derive_seed(seed, "orthogonal"), index);
    let m = DMatrix::from_fn(dim, dim, |_, _| g.sample::<f64, _>(StandardNormal));
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn permutation_matrix(perm: &[usize]) -> Result<DMatrix<f64>> {
    let d = perm.len();
    let mut seen = vec![false; d];
    for &p in perm {
        if p >= d || seen[p] {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(DMatrix::from_fn(d, d, |i, j| if perm[i] == j { 1.0 } else { 0.0 }))
}

fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.nrows(), q.ncols())).amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    Orthogonal,
    Permutation,
    Composed,
}

/// Linear rotation `s(x) = Q x`, with displacement `alpha(x) = (Q - I) x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationCandidate {
    pub matrix: DMatrix<f64>,
    pub kind: CandidateKind,
}

impl RotationCandidate {
    pub fn new(matrix: DMatrix<f64>, kind: CandidateKind) -> Self {
        RotationCandidate { matrix, kind }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(x).map(|(a, b)| a - b).collect()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.matrix.is_square() && orthogonality_defect(&self.matrix) <= ORTHO_TOL
    }
}

/// Random orthogonal matrices, then all cyclic shifts of the coordinates,
/// then products of the two.
pub fn candidate_sweep(dim: usize, orthogonal: usize, seed: u64) -> Vec<RotationCandidate> {
    let mut out: Vec<RotationCandidate> = (0..orthogonal as u64)
        .map(|k| RotationCandidate::new(random_orthogonal(dim, seed, k), CandidateKind::Orthogonal))
        .collect();
    for shift in 1..dim {
        let perm: Vec<usize> = (0..dim).map(|i| (i + shift) % dim).collect();
        let p = permutation_matrix(&perm).expect("cyclic shift");
        if let Some(q) = out.first().map(|c| c.matrix.clone()) {
            out.push(RotationCandidate::new(&q * &p, CandidateKind::Composed));
        }
        out.push(RotationCandidate::new(p, CandidateKind::Permutation));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationStats {
    pub ks_statistics: Vec<f64>,
    pub ks_p_values: Vec<f64>,
    pub max_mean_deviation: f64,
    pub max_cov_deviation: f64,
    pub cov_threshold: f64,
    pub pass: bool,
}

/// Compare `s(X)` for a Gaussian cloud `X` with `N(0, I)`: Kolmogorov-Smirnov
/// per coordinate, mean and covariance deviations.
pub fn rotation_test(s: &dyn Fn(&[f64]) -> Vec<f64>, dim: usize, n: usize, seed: u64) -> Result<RotationStats> {
    let cloud = sample_standard(&GaussianSpace::new(dim)?, n, rng::derive_seed(seed, "rotation-test"))?;
    let image = cloud.map_points(dim, crate::gaussian::Provenance::Pushforward, s)?;
    let pts = image.points();
    let nf = n as f64;
    let mut ks_statistics = Vec::with_capacity(dim);
    let mut ks_p_values = Vec::with_capacity(dim);
    let mut means = vec![0.0; dim];
    for k in 0..dim {
        let col: Vec<f64> = pts.iter().skip(k).step_by(dim).copied().collect();
        let (stat, p) = ks_one_sample(&col, normal_cdf);
        ks_statistics.push(stat);
        ks_p_values.push(p);
        means[k] = crate::stats::pairwise_sum(&col) / nf;
    }
    let mut max_cov: f64 = 0.0;
    for i in 0..dim {
        for j in 0..=i {
            let prods: Vec<f64> = image.rows().map(|y| (y[i] - means[i]) * (y[j] - means[j])).collect();
            let c = crate::stats::pairwise_sum(&prods) / nf;
            let target = if i == j { 1.0 } else { 0.0 };
            max_cov = max_cov.max((c - target).abs());
        }
    }
    let cov_threshold = 5.0 / nf.sqrt();
    Ok(RotationStats {
        pass: ks_p_values.iter().all(|p| *p > 0.01) && max_cov <= cov_threshold,
        max_mean_deviation: means.iter().fold(0.0, |m, v| m.max(v.abs())),
        max_cov_deviation: max_cov,
        cov_threshold,
        ks_statistics,
        ks_p_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationResult {
    pub transport: AffineTransport,
    /// The rotation `s = T^{-1} o V`, row-major.
    pub rotation: Vec<f64>,
    pub dim: usize,
    /// `max |T(s(x)) - V(x)|` on the test cloud.
    pub identity_residual: f64,
    pub orthogonality_defect: f64,
    pub rotation_test: RotationStats,
    /// `M_v(alpha)` for the recovered rotation displacement.
    pub energy: Estimate,
}

impl FactorizationResult {
    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.rotation)
    }
}

/// `M_v(eta) = E[1/2 |eta|^2 - (v, eta)]` on a cloud.
pub fn rotation_energy(v: &LinearMap, eta: &RotationCandidate, cloud: &SampleCloud) -> Estimate {
    let vals: Vec<f64> = cloud
        .rows()
        .map(|x| {
            let e = eta.displacement(x);
            let w = v.displacement(x);
            e.iter().zip(&w).map(|(a, b)| 0.5 * a * a - a * b).sum()
        })
        .collect();
    mean_estimate(&vals)
}

/// `V = T o s` with `T` the Brenier map from `mu` onto `V . mu` and
/// `s = T^{-1} o V`.
pub fn factorize(v: &LinearMap, n: usize, seed: u64) -> Result<FactorizationResult> {
    let d = v.dim();
    let t = brenier_from_standard(&v.image_law()?)?;
    let inv = t.inverse()?;
    // T^{-1}(V x) = A^{-1} (M x + h - b) with b = h, so s is linear.
    let s = inv.matrix() * v.matrix();
    let cloud = sample_standard(&GaussianSpace::new(d)?, n, seed)?;
    let cand = RotationCandidate::new(s.clone(), CandidateKind::Orthogonal);
    let mut residual: f64 = 0.0;
    for x in cloud.rows() {
        let lhs = t.apply(&cand.apply(x));
        let rhs = v.apply(x);
        residual = residual.max(lhs.iter().zip(&rhs).fold(0.0, |m, (a, b)| m.max((a - b).abs())));
    }
    let s_fn = |x: &[f64]| cand.apply(x);
    Ok(FactorizationResult {
        rotation_test: rotation_test(&s_fn, d, n, seed)?,
        energy: rotation_energy(v, &cand, &cloud),
        orthogonality_defect: orthogonality_defect(&s),
        rotation: row_major(&s),
        identity_residual: residual,
        transport: t,
        dim: d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityRow {
    pub candidate: usize,
    pub kind: CandidateKind,
    pub energy: Estimate,
    /// `M_v(alpha) <= M_v(eta) + 3` pooled standard errors.
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityTable {
    pub alpha: Estimate,
    pub rows: Vec<MinimalityRow>,
    pub minimal: bool,
}

impl MinimalityTable {
    /// CSV with header `candidate,M_v,stderr`; the recovered rotation is
    /// listed first as candidate `alpha`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["candidate", "M_v", "stderr"])?;
        out.write_record(["alpha".to_string(), format!("{:e}", self.alpha.value), format!("{:e}", self.alpha.stderr)])?;
        for r in &self.rows {
            out.write_record(&[r.candidate.to_string(), format!("{:e}", r.energy.value), format!("{:e}", r.energy.stderr)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Compare `M_v(alpha)` with `M_v(eta)` over linear rotation candidates on a
/// common Gaussian cloud.
pub fn minimality_check(
    v: &LinearMap,
    alpha: &RotationCandidate,
    candidates: &[RotationCandidate],
    n: usize,
    seed: u64,
) -> Result<MinimalityTable> {
    let d = v.dim();
    for (k, c) in std::iter::once(alpha).chain(candidates).enumerate() {
        if c.matrix.nrows() != d || !c.is_orthogonal() {
            return Err(Error::InvalidArgument(format!(
                "candidate {k} is not an orthogonal {d}x{d} matrix, so it does not preserve the Gaussian measure"
            )));
        }
    }
    let cloud = sample_standard(&GaussianSpace::new(d)?, n, rng::derive_seed(seed, "minimality"))?;
    let a = rotation_energy(v, alpha, &cloud);
    let rows: Vec<MinimalityRow> = candidates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let e = rotation_energy(v, c, &cloud);
            let pooled = a.stderr.hypot(e.stderr);
            MinimalityRow {
                candidate: k,
                kind: c.kind,
                dominated: a.value <= e.value + 3.0 * pooled + 1e-12 * (1.0 + e.value.abs()),
                energy: e,
            }
        })
        .collect();
    Ok(MinimalityTable {
        minimal: rows.iter().all(|r| r.dominated),
        alpha: a,
        rows,
    })
}
