//! Orthonormal Hermite polynomials and the Ornstein-Uhlenbeck operator on
//! truncated expansions.
//!
//! `h_n = He_n / sqrt(n!)` with `He_n` the probabilists' Hermite polynomials,
//! so `{h_alpha}` is an orthonormal basis of `L^2(N(0, I))` and the number
//! operator acts diagonally: `L h_alpha = |alpha| h_alpha`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-index `alpha` with one degree per coordinate.
pub type MultiIndex = Vec<u32>;

/// Orthonormal Hermite polynomial `h_n(x)`.
pub fn hermite_1d(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `[h_0(x), ..., h_max(x)]`.
pub fn hermite_all(max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    out.push(1.0);
    if max >= 1 {
        out.push(x);
    }
    for k in 1..max {
        let next = (x * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// Finite expansion `f = sum_alpha c_alpha h_alpha` in `d` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteExpansion {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl HermiteExpansion {
    pub fn zero(dim: usize) -> Self {
        HermiteExpansion {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut e = Self::zero(dim);
        e.add_term(vec![0; dim], c).expect("valid index");
        e
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut e = Self::zero(dim);
        for (alpha, c) in terms {
            e.add_term(alpha, c)?;
        }
        Ok(e)
    }

    /// Tensor product of one-variable expansions: `factors[i][k]` is the
    /// coefficient of `h_k(x_i)`. An empty factor means the constant 1.
    pub fn from_product(factors: &[Vec<f64>]) -> Result<Self> {
        let dim = factors.len();
        let mut terms: Vec<(MultiIndex, f64)> = vec![(Vec::with_capacity(dim), 1.0)];
        for factor in factors {
            let factor: &[f64] = if factor.is_empty() { &[1.0] } else { factor };
            let mut next = Vec::new();
            for (alpha, c) in &terms {
                for (k, &ck) in factor.iter().enumerate() {
                    if ck != 0.0 {
                        let mut a = alpha.clone();
                        a.push(k as u32);
                        next.push((a, c * ck));
                    }
                }
            }
            terms = next;
        }
        Self::from_terms(dim, terms)
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) -> Result<()> {
        if alpha.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: alpha.len(),
            });
        }
        if !c.is_finite() {
            return Err(Error::InvalidArgument("Hermite coefficients must be finite".into()));
        }
        let slot = self.coeffs.entry(alpha).or_insert(0.0);
        *slot += c;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, alpha: &[u32]) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(a, c)| (a, *c))
    }

    /// Largest total degree among the stored terms.
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|a| a.iter().sum()).max().unwrap_or(0)
    }

    fn max_partial_degree(&self) -> usize {
        self.coeffs
            .keys()
            .flat_map(|a| a.iter().copied())
            .max()
            .unwrap_or(0) as usize
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let m = self.max_partial_degree();
        let table: Vec<Vec<f64>> = x.iter().map(|&xi| hermite_all(m, xi)).collect();
        let mut s = 0.0;
        for (alpha, c) in &self.coeffs {
            let mut p = *c;
            for (i, &k) in alpha.iter().enumerate() {
                p *= table[i][k as usize];
            }
            s += p;
        }
        s
    }

    /// Coefficientwise `c_alpha -> scale(|alpha|) c_alpha`.
    fn map_by_degree(&self, scale: impl Fn(u32) -> f64) -> Self {
        HermiteExpansion {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .map(|(a, c)| (a.clone(), c * scale(a.iter().sum())))
                .collect(),
        }
    }

    /// The Ornstein-Uhlenbeck (number) operator.
    pub fn apply_ou(&self) -> Self {
        self.map_by_degree(|k| k as f64)
    }

    /// `(I + L)^{-1}`.
    pub fn ou_resolvent(&self) -> Self {
        self.map_by_degree(|k| 1.0 / (1.0 + k as f64))
    }

    /// `I + L`.
    pub fn apply_one_plus_ou(&self) -> Self {
        self.map_by_degree(|k| 1.0 + k as f64)
    }

    /// Mehler semigroup `P_t`, diagonal with eigenvalue `exp(-|alpha| t)`.
    pub fn apply_semigroup(&self, t: f64) -> Self {
        self.map_by_degree(|k| (-(k as f64) * t).exp())
    }

    /// `d/dx_i h_alpha = sqrt(alpha_i) h_{alpha - e_i}`.
    pub fn partial(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (alpha, c) in &self.coeffs {
            let k = alpha[i];
            if k > 0 {
                let mut beta = alpha.clone();
                beta[i] -= 1;
                *out.coeffs.entry(beta).or_insert(0.0) += c * (k as f64).sqrt();
            }
        }
        out
    }

    pub fn gradient(&self) -> HermiteField {
        HermiteField {
            components: (0..self.dim).map(|i| self.partial(i)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_by_degree(|_| s)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, c) in &other.coeffs {
            *out.coeffs.entry(a.clone()).or_insert(0.0) += c;
        }
        out
    }

    /// Integral of `f` against `N(0, I)`.
    pub fn mean(&self) -> f64 {
        self.coeff(&vec![0; self.dim])
    }

    /// One-variable expansions only: `F(x) = int_{-inf}^x f(t) phi(t) dt - E[f] Phi(x)`
    /// equals `-phi(x) * g(x)` with `g` returned here, using
    /// `int_{-inf}^x h_k phi = -h_{k-1}(x) phi(x) / sqrt(k)` for `k >= 1`.
    pub fn cdf_correction_1d(&self) -> Result<Self> {
        if self.dim != 1 {
            return Err(Error::Unsupported("CDF correction is one-dimensional".into()));
        }
        let mut out = Self::zero(1);
        for (alpha, c) in &self.coeffs {
            let k = alpha[0];
            if k > 0 {
                *out.coeffs.entry(vec![k - 1]).or_insert(0.0) += c / (k as f64).sqrt();
            }
        }
        Ok(out)
    }
}

/// Vector field with one Hermite expansion per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteField {
    pub components: Vec<HermiteExpansion>,
}

impl HermiteField {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Componentwise `(I + L)^{-1}`.
    pub fn ou_resolvent(&self) -> Self {
        HermiteField {
            components: self.components.iter().map(|c| c.ou_resolvent()).collect(),
        }
    }

    /// Gaussian divergence `delta(f e_i) = x_i f - d_i f`, which maps
    /// `h_beta e_i` to `sqrt(beta_i + 1) h_{beta + e_i}`.
    pub fn divergence(&self) -> HermiteExpansion {
        let dim = self.components.len();
        let mut out = HermiteExpansion::zero(dim);
        for (i, comp) in self.components.iter().enumerate() {
            for (beta, c) in &comp.coeffs {
                let mut alpha = beta.clone();
                alpha[i] += 1;
                *out.coeffs.entry(alpha).or_insert(0.0) += c * ((beta[i] + 1) as f64).sqrt();
            }
        }
        out
    }
}
