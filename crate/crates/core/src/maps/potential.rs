use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::affine::{symmetrize, AffineTransport};
use crate::error::{Error, Result};
use crate::gaussian::{dist_sq, dot};
use crate::ot::{CostOrder, DiscreteCoupling};
use crate::rng;

/// Finite-difference step for potentials given only by their values.
pub const FD_STEP: f64 = 1e-4;

/// A real function on `R^d` with gradient and Hessian.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
    /// False when derivatives are finite-difference approximations.
    fn analytic(&self) -> bool {
        true
    }
}

/// `1/2 (x, Q x) + (l, x) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    q: DMatrix<f64>,
    l: DVector<f64>,
    c: f64,
}

impl QuadraticPotential {
    pub fn new(q: DMatrix<f64>, l: DVector<f64>, c: f64) -> Result<Self> {
        if q.nrows() != l.len() || q.ncols() != l.len() {
            return Err(Error::DimensionMismatch {
                expected: l.len(),
                got: q.nrows(),
            });
        }
        Ok(QuadraticPotential { q: symmetrize(&q), l, c })
    }

    pub fn zero(dim: usize) -> Self {
        QuadraticPotential {
            q: DMatrix::zeros(dim, dim),
            l: DVector::zeros(dim),
            c: 0.0,
        }
    }

    /// `s/2 |x|^2`.
    pub fn isotropic(dim: usize, s: f64) -> Self {
        QuadraticPotential {
            q: DMatrix::identity(dim, dim) * s,
            l: DVector::zeros(dim),
            c: 0.0,
        }
    }

    pub fn quadratic_part(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear_part(&self) -> &DVector<f64> {
        &self.l
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn with_constant(&self, c: f64) -> Self {
        QuadraticPotential { c, ..self.clone() }
    }
}

impl Potential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.l.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.q * &xv)) + self.l.dot(&xv) + self.c
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        (&self.q * xv + &self.l).as_slice().to_vec()
    }

    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.q.clone()
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A potential known through its values; derivatives use central differences
/// with one Richardson extrapolation, and the Hessian is symmetrized.
#[derive(Clone)]
pub struct FnPotential {
    dim: usize,
    f: Arc<ValueFn>,
    step: f64,
}

impl fmt::Debug for FnPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPotential")
            .field("dim", &self.dim)
            .field("step", &self.step)
            .finish()
    }
}

impl FnPotential {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnPotential {
            dim,
            f: Arc::new(f),
            step: FD_STEP,
        }
    }

    fn shifted(&self, x: &[f64], moves: &[(usize, f64)]) -> f64 {
        let mut y = x.to_vec();
        for &(i, d) in moves {
            y[i] += d;
        }
        (self.f)(&y)
    }

    fn partial(&self, x: &[f64], i: usize, h: f64) -> f64 {
        (self.shifted(x, &[(i, h)]) - self.shifted(x, &[(i, -h)])) / (2.0 * h)
    }

    fn second(&self, x: &[f64], i: usize, j: usize, h: f64) -> f64 {
        if i == j {
            (self.shifted(x, &[(i, h)]) - 2.0 * (self.f)(x) + self.shifted(x, &[(i, -h)])) / (h * h)
        } else {
            (self.shifted(x, &[(i, h), (j, h)]) - self.shifted(x, &[(i, h), (j, -h)])
                - self.shifted(x, &[(i, -h), (j, h)])
                + self.shifted(x, &[(i, -h), (j, -h)]))
                / (4.0 * h * h)
        }
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = self.step;
        (0..self.dim)
            .map(|i| (4.0 * self.partial(x, i, h / 2.0) - self.partial(x, i, h)) / 3.0)
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let h = self.step;
        let m = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            (4.0 * self.second(x, i, j, h / 2.0) - self.second(x, i, j, h)) / 3.0
        });
        symmetrize(&m)
    }

    fn analytic(&self) -> bool {
        false
    }
}

/// Potentials `(phi, psi)` of a transport and its inverse.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub phi: Arc<dyn Potential>,
    pub psi: Arc<dyn Potential>,
}

impl PotentialPair {
    pub fn analytic(&self) -> bool {
        self.phi.analytic() && self.psi.analytic()
    }

    /// `phi(x) + psi(y) + 1/2 |x - y|^2`.
    pub fn gap(&self, x: &[f64], y: &[f64]) -> f64 {
        self.phi.value(x) + self.psi.value(y) + 0.5 * dist_sq(x, y)
    }
}

/// Potentials of an affine transport: `grad phi = T - I` and
/// `grad psi = T^{-1} - I`, with constants chosen so the gap vanishes on the
/// graph of `T`.
pub fn potential_of(t: &AffineTransport) -> Result<PotentialPair> {
    let d = t.dim();
    let a = t.matrix();
    let k = t.offset() - a * t.source_mean();
    let eye = DMatrix::identity(d, d);
    let phi = QuadraticPotential::new(a - &eye, k.clone(), 0.0)?;
    // psi(y) = 1/2 (y - k)' A^{-1} (y - k) - 1/2 |y|^2
    let inv = t.inverse()?.matrix().clone();
    let lin = -(&inv * &k);
    let c = 0.5 * k.dot(&(&inv * &k));
    let psi = QuadraticPotential::new(&inv - eye, lin, c)?;
    Ok(PotentialPair {
        phi: Arc::new(phi),
        psi: Arc::new(psi),
    })
}

/// Off-support sampling for the duality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualityConfig {
    /// Pairs drawn when there are more off-support pairs than this.
    pub off_support_samples: usize,
    pub seed: u64,
}

impl Default for DualityConfig {
    fn default() -> Self {
        DualityConfig {
            off_support_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// Constant subtracted from the gap so it vanishes at the first support pair.
    pub offset: f64,
    pub on_support_max_abs: f64,
    pub off_support_min: f64,
    pub off_support_checked: usize,
}

/// Gap `phi(x) + psi(y) + 1/2 |x - y|^2` on and off the support of a coupling.
pub fn duality_residual(pair: &PotentialPair, coupling: &DiscreteCoupling, cfg: &DualityConfig) -> Result<DualityReport> {
    let (src, tgt) = (coupling.source(), coupling.target());
    if pair.phi.dim() != src.dim() || pair.psi.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            got: pair.phi.dim(),
        });
    }
    let support: Vec<(usize, usize)> = coupling
        .entries()
        .iter()
        .filter(|e| e.weight > 0.0)
        .map(|e| (e.i, e.j))
        .collect();
    let first = *support
        .first()
        .ok_or_else(|| Error::InvalidArgument("coupling has empty support".into()))?;
    let gap = |i: usize, j: usize| pair.gap(src.point(i), tgt.point(j));
    let offset = gap(first.0, first.1);
    let on = support.iter().map(|&(i, j)| (gap(i, j) - offset).abs()).fold(0.0, f64::max);

    let in_support: HashSet<(usize, usize)> = support.iter().copied().collect();
    let (n, m) = (src.len(), tgt.len());
    let mut off_min = f64::INFINITY;
    let mut checked = 0usize;
    if n * m - in_support.len() <= cfg.off_support_samples {
        for i in 0..n {
            for j in 0..m {
                if !in_support.contains(&(i, j)) {
                    off_min = off_min.min(gap(i, j) - offset);
                    checked += 1;
                }
            }
        }
    } else {
        let mut r = rng::stream(rng::derive_seed(cfg.seed, "duality-off-support"), 0);
        while checked < cfg.off_support_samples {
            let (i, j) = (r.gen_range(0..n), r.gen_range(0..m));
            if !in_support.contains(&(i, j)) {
                off_min = off_min.min(gap(i, j) - offset);
                checked += 1;
            }
        }
    }
    Ok(DualityReport {
        offset,
        on_support_max_abs: on,
        off_support_min: if checked == 0 { 0.0 } else { off_min },
        off_support_checked: checked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub cost: f64,
    pub energy: f64,
    pub relative_gap: f64,
}

/// Compare the coupling cost with `sum_i w_i |grad phi(x_i)|^2`.
pub fn energy_identity_check(coupling: &DiscreteCoupling, phi: &dyn Potential) -> EnergyReport {
    let src = coupling.source();
    let cost = coupling.transport_cost(CostOrder::Two);
    let terms: Vec<f64> = src
        .rows()
        .zip(src.weights())
        .map(|(x, w)| {
            let g = phi.gradient(x);
            w * dot(&g, &g)
        })
        .collect();
    let energy = crate::stats::pairwise_sum(&terms);
    EnergyReport {
        cost,
        energy,
        relative_gap: (cost - energy).abs() / cost.max(1e-12),
    }
}

/// Worst midpoint-convexity defect of `t -> 1/2 |t h|^2 + phi(x + t h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub trials: usize,
    pub worst_violation: f64,
    /// `(x, h, t1, t2)` of the worst trial.
    pub witness: Option<(Vec<f64>, Vec<f64>, f64, f64)>,
    pub tol: f64,
    pub one_convex: bool,
}

pub fn one_convexity_check(phi: &dyn Potential, trials: usize, seed: u64, tol: f64) -> ConvexityReport {
    let d = phi.dim();
    let mut r = rng::stream(rng::derive_seed(seed, "one-convexity"), 0);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let h: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let (t1, t2): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let g = |t: f64| {
            let p: Vec<f64> = x.iter().zip(&h).map(|(xi, hi)| xi + t * hi).collect();
            0.5 * t * t * dot(&h, &h) + phi.value(&p)
        };
        let v = g(0.5 * (t1 + t2)) - 0.5 * (g(t1) + g(t2));
        if v > worst {
            worst = v;
            witness = Some((x.clone(), h.clone(), t1, t2));
        }
    }
    let worst = if trials == 0 { 0.0 } else { worst };
    ConvexityReport {
        trials,
        worst_violation: worst,
        witness: if worst > tol { witness } else { None },
        tol,
        one_convex: worst <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{sample_standard, GaussianSpace, Provenance, SampleCloud};
    use crate::ot::solve_exact;
    use approx::assert_relative_eq;

    #[test]
    fn identity_potentials_vanish() {
        let p = potential_of(&AffineTransport::identity(3)).unwrap();
        let x = [0.3, -1.0, 2.0];
        assert_eq!(p.phi.value(&x), 0.0);
        assert_eq!(p.phi.gradient(&x), vec![0.0; 3]);
        assert_eq!(p.psi.value(&x), 0.0);
    }

    #[test]
    fn shift_potential_is_linear() {
        let p = potential_of(&AffineTransport::shift(&[1.0, -2.0])).unwrap();
        assert_eq!(p.phi.gradient(&[5.0, 7.0]), vec![1.0, -2.0]);
        assert_eq!(p.phi.value(&[1.0, 1.0]), -1.0);
    }

    #[test]
    fn scaling_potentials_by_hand() {
        let p = potential_of(&AffineTransport::diagonal(&[2.0]).unwrap()).unwrap();
        for x in [-1.5, 0.0, 0.7, 3.0] {
            assert_relative_eq!(p.phi.value(&[x]), x * x / 2.0, epsilon = 1e-14);
            assert_relative_eq!(p.psi.value(&[x]), -x * x / 4.0, epsilon = 1e-14);
            assert_relative_eq!(p.psi.gradient(&[x])[0], -x / 2.0, epsilon = 1e-14);
            for y in [-2.0, 0.5, 4.0] {
                assert_relative_eq!(p.gap(&[x], &[y]), 0.25 * (y - 2.0 * x).powi(2), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn duality_on_identity_coupling() {
        let c = Arc::new(sample_standard(&GaussianSpace::new(2).unwrap(), 20, 1).unwrap());
        let k = solve_exact(c.clone(), c, CostOrder::Two).unwrap();
        let p = PotentialPair {
            phi: Arc::new(QuadraticPotential::zero(2)),
            psi: Arc::new(QuadraticPotential::zero(2)),
        };
        let r = duality_residual(&p, &k, &Default::default()).unwrap();
        assert_eq!(r.on_support_max_abs, 0.0);
        assert!(r.off_support_min > 0.0);
        assert_eq!(r.off_support_checked, 380);
    }

    #[test]
    fn duality_on_affine_pushforward() {
        let t = AffineTransport::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let x = Arc::new(sample_standard(&GaussianSpace::new(2).unwrap(), 200, 2).unwrap());
        let y = Arc::new(x.map_points(2, Provenance::Pushforward, |p| t.apply(p)).unwrap());
        let k = solve_exact(x, y, CostOrder::Two).unwrap();
        assert_eq!(k.as_permutation().unwrap(), (0..200).collect::<Vec<_>>());
        let p = potential_of(&t).unwrap();
        let r = duality_residual(&p, &k, &Default::default()).unwrap();
        assert!(r.on_support_max_abs <= 1e-9, "{r:?}");
        assert!(r.off_support_min >= -1e-9, "{r:?}");
        let e = energy_identity_check(&k, p.phi.as_ref());
        assert!(e.relative_gap <= 1e-10);
    }

    #[test]
    fn finite_differences_match_analytic() {
        let q = QuadraticPotential::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, -0.5]),
            DVector::from_vec(vec![0.2, 1.0]),
            3.0,
        )
        .unwrap();
        let qq = q.clone();
        let f = FnPotential::new(2, move |x| qq.value(x) + (x[0] * x[1]).sin());
        let x = [0.3, -0.8];
        let g = f.gradient(&x);
        let exact_g = [q.gradient(&x)[0] + x[1] * (x[0] * x[1]).cos(), q.gradient(&x)[1] + x[0] * (x[0] * x[1]).cos()];
        assert_relative_eq!(g[0], exact_g[0], epsilon = 1e-8);
        assert_relative_eq!(g[1], exact_g[1], epsilon = 1e-8);
        let h = f.hessian(&x);
        let s = (x[0] * x[1]).sin();
        let c = (x[0] * x[1]).cos();
        assert_relative_eq!(h[(0, 0)], 1.0 - x[1] * x[1] * s, epsilon = 1e-6);
        assert_relative_eq!(h[(0, 1)], 0.4 + c - x[0] * x[1] * s, epsilon = 1e-6);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
        assert!(!f.analytic());
    }

    #[test]
    fn one_convexity_cases() {
        let boundary = QuadraticPotential::isotropic(3, -1.0);
        let r = one_convexity_check(&boundary, 500, 1, 1e-10);
        assert!(r.one_convex && r.worst_violation <= 1e-10, "{r:?}");
        let concave = QuadraticPotential::isotropic(3, -2.0);
        let r = one_convexity_check(&concave, 500, 1, 1e-10);
        assert!(!r.one_convex && r.witness.is_some());
        let abs = FnPotential::new(2, |x| x[0].abs());
        assert!(one_convexity_check(&abs, 500, 1, 1e-10).one_convex);
    }

    #[test]
    fn weighted_clouds_use_their_weights_in_the_energy() {
        let x = Arc::new(SampleCloud::new(1, vec![0.0, 1.0], Some(vec![0.25, 0.75]), 0, Provenance::Density).unwrap());
        let y = Arc::new(x.map_points(1, Provenance::Pushforward, |p| vec![p[0] + 2.0]).unwrap());
        let k = DiscreteCoupling::paired(x, y, CostOrder::Two).unwrap();
        let p = potential_of(&AffineTransport::shift(&[2.0])).unwrap();
        let e = energy_identity_check(&k, p.phi.as_ref());
        assert_eq!((e.cost, e.energy), (4.0, 4.0));
    }
}
