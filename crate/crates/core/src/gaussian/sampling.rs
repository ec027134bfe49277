use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::{Provenance, SampleCloud};
use super::density::DensityField;
use super::hermite::HermiteExpansion;
use super::space::GaussianSpace;
use crate::error::{Error, Result};
use crate::rng::{self, CHUNK_ROWS};
use crate::stats::{weighted_estimate, Estimate};

/// Abort rejection sampling below this acceptance rate.
const MIN_ACCEPTANCE: f64 = 1e-4;
/// Proposals inspected before the acceptance rate is judged.
const ACCEPTANCE_WINDOW: usize = 100_000;

/// How to draw from `L . mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    /// Envelope `b . mu` with the density's upper bound `b`.
    Rejection,
    /// Gaussian points with self-normalized weights proportional to `L`.
    Importance,
    /// Exact draws: monotone pushforward of Gaussian points, or component
    /// selection for mixtures.
    Direct,
    /// `Direct`, falling back to rejection and then importance sampling.
    #[default]
    Auto,
}

fn gaussian_rows(dim: usize, n: usize, seed: u64) -> Vec<f64> {
    let chunks = n.div_ceil(CHUNK_ROWS);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let rows = CHUNK_ROWS.min(n - k * CHUNK_ROWS);
            let mut r = rng::stream(seed, k as u64);
            (0..rows * dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    parts.concat()
}

/// `n` i.i.d. draws from `N(0, I_d)` with uniform weights.
pub fn sample_standard(space: &GaussianSpace, n: usize, seed: u64) -> Result<SampleCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    SampleCloud::new(space.dim(), gaussian_rows(space.dim(), n, seed), None, seed, Provenance::Gaussian)
}

/// Draw `n` points representing `L . mu`.
pub fn sample_density(l: &DensityField, n: usize, seed: u64, method: SamplingMethod) -> Result<SampleCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    match method {
        SamplingMethod::Rejection => rejection(l, n, seed),
        SamplingMethod::Importance => importance(l, n, seed),
        SamplingMethod::Direct => direct(l, n, seed),
        SamplingMethod::Auto => {
            if l.has_pushforward() || l.mixture_components().is_some() {
                direct(l, n, seed)
            } else if l.upper_bound().is_some() {
                rejection(l, n, seed)
            } else {
                importance(l, n, seed)
            }
        }
    }
}

fn direct(l: &DensityField, n: usize, seed: u64) -> Result<SampleCloud> {
    let d = l.dim();
    if l.has_pushforward() {
        let z = gaussian_rows(d, n, seed);
        let points: Vec<f64> = z
            .par_chunks(d)
            .flat_map_iter(|row| l.push_standard(row).expect("pushforward available"))
            .collect();
        return SampleCloud::new(d, points, None, seed, Provenance::Pushforward);
    }
    let components = l
        .mixture_components()
        .ok_or_else(|| Error::Sampling(format!("no direct sampler for `{}`", l.spec())))?;
    let z = gaussian_rows(d, n, seed);
    let mut pick = rng::stream(rng::derive_seed(seed, "mixture-component"), 0);
    let mut points = Vec::with_capacity(n * d);
    for row in z.chunks(d) {
        let u: f64 = pick.gen();
        let mut acc = 0.0;
        let mut chosen = &components[components.len() - 1];
        for c in components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        points.extend(row.iter().zip(&chosen.mean).map(|(zi, mi)| mi + chosen.scale * zi));
    }
    SampleCloud::new(d, points, None, seed, Provenance::Density)
}

fn rejection(l: &DensityField, n: usize, seed: u64) -> Result<SampleCloud> {
    let b = l.upper_bound().ok_or_else(|| {
        Error::Sampling(format!("rejection sampling needs an upper bound on `{}`", l.spec()))
    })?;
    if 1.0 / b < MIN_ACCEPTANCE {
        return Err(Error::Sampling(format!(
            "expected acceptance rate {:.2e} is below {MIN_ACCEPTANCE:e}",
            1.0 / b
        )));
    }
    let d = l.dim();
    let mut points = Vec::with_capacity(n * d);
    let mut proposed = 0usize;
    let mut accepted = 0usize;
    let mut chunk = 0u64;
    // Batches of chunks run in parallel; each chunk has its own stream so the
    // accepted sequence does not depend on the thread count.
    const BATCH: u64 = 16;
    while accepted < n {
        let batch: Vec<Result<(Vec<f64>, usize)>> = (chunk..chunk + BATCH)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, k);
                let mut out = Vec::new();
                for _ in 0..CHUNK_ROWS {
                    let z: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                    let u: f64 = r.gen();
                    let v = l.checked_value(&z)?;
                    if u * b < v {
                        out.extend(z);
                    }
                }
                Ok((out, CHUNK_ROWS))
            })
            .collect();
        chunk += BATCH;
        for part in batch {
            let (pts, tried) = part?;
            proposed += tried;
            accepted += pts.len() / d;
            points.extend(pts);
        }
        if proposed >= ACCEPTANCE_WINDOW && (accepted as f64) < MIN_ACCEPTANCE * proposed as f64 {
            return Err(Error::Sampling(format!(
                "acceptance rate {accepted}/{proposed} is below {MIN_ACCEPTANCE:e}"
            )));
        }
    }
    points.truncate(n * d);
    SampleCloud::new(d, points, None, seed, Provenance::Density)
}

fn importance(l: &DensityField, n: usize, seed: u64) -> Result<SampleCloud> {
    let d = l.dim();
    let points = gaussian_rows(d, n, seed);
    let weights = points
        .chunks(d)
        .map(|x| l.checked_value(x))
        .collect::<Result<Vec<f64>>>()?;
    SampleCloud::new(d, points, Some(weights), seed, Provenance::Density)
}

/// Monte Carlo estimate of `E[L log L]` with `0 log 0 = 0`.
///
/// A Gaussian cloud uses the integrand `L log L` directly. A cloud drawn from
/// `L . mu` (any other provenance, weighted or not) uses the identity
/// `E[L log L] = E_nu[log L]`, whose variance stays finite for the unbounded
/// scaling presets.
pub fn estimate_entropy(l: &DensityField, cloud: &SampleCloud) -> Result<Estimate> {
    if cloud.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            got: cloud.dim(),
        });
    }
    let from_reference = cloud.provenance() == Provenance::Gaussian;
    let values = cloud
        .rows()
        .map(|x| {
            let v = if from_reference {
                let lv = l.checked_value(x)?;
                if lv == 0.0 {
                    0.0
                } else {
                    lv * lv.ln()
                }
            } else {
                l.log_value(x)
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidDensityValue {
                    value: l.value(x),
                    point: x.to_vec(),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(weighted_estimate(&values, cloud.weights()))
}

/// `(I + L)^{-1}` on a truncated Hermite expansion.
pub fn ou_resolvent(f: &HermiteExpansion) -> HermiteExpansion {
    f.ou_resolvent()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean_estimate};

    fn space(d: usize) -> GaussianSpace {
        GaussianSpace::new(d).unwrap()
    }

    #[test]
    fn standard_moments() {
        let c = sample_standard(&space(1), 100_000, 7).unwrap();
        let e = mean_estimate(c.points());
        assert!(e.value.abs() < 0.02);
        let sq: Vec<f64> = c.points().iter().map(|x| x * x).collect();
        assert!((mean_estimate(&sq).value - 1.0).abs() < 0.05);

        let c2 = sample_standard(&space(2), 100_000, 11).unwrap();
        let norms: Vec<f64> = c2.rows().map(|r| r[0] * r[0] + r[1] * r[1]).collect();
        assert!((mean_estimate(&norms).value - 2.0).abs() < 0.05);
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let a = sample_standard(&space(3), 1, 42).unwrap();
        let b = sample_standard(&space(3), 1, 42).unwrap();
        assert_eq!(a.points(), b.points());
        let c = sample_standard(&space(3), 1, 43).unwrap();
        assert_ne!(a.points(), c.points());
        // The first rows do not depend on how many rows were requested.
        let big = sample_standard(&space(3), 5000, 42).unwrap();
        assert_eq!(big.point(0), a.point(0));
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(sample_standard(&space(1), 0, 1).is_err());
    }

    #[test]
    fn unit_density_matches_standard_sampler() {
        let l = DensityField::unit(1).unwrap();
        let reference = sample_standard(&space(1), 4000, 5).unwrap();
        for method in [SamplingMethod::Rejection, SamplingMethod::Direct] {
            let c = sample_density(&l, 4000, 99, method).unwrap();
            let (_, p) = ks_two_sample(c.points(), reference.points());
            assert!(p > 0.01, "{method:?}: p = {p}");
        }
        let imp = sample_density(&l, 100, 3, SamplingMethod::Importance).unwrap();
        assert!(imp.is_uniform());
    }

    #[test]
    fn shift_density_first_moment() {
        let l = DensityField::parse("shift:1,0", 2).unwrap();
        for method in [SamplingMethod::Direct, SamplingMethod::Importance] {
            let c = sample_density(&l, 100_000, 17, method).unwrap();
            let xs: Vec<f64> = c.rows().map(|r| r[0]).collect();
            let m = weighted_estimate(&xs, c.weights()).value;
            assert!((m - 1.0).abs() < 0.02, "{method:?}: {m}");
        }
    }

    #[test]
    fn rejection_requires_bound() {
        let l = DensityField::parse("shift:1", 1).unwrap();
        assert!(matches!(
            sample_density(&l, 10, 1, SamplingMethod::Rejection),
            Err(Error::Sampling(_))
        ));
        let tiny = DensityField::parse("scale:0.005,0.005", 2).unwrap();
        assert!(matches!(
            sample_density(&tiny, 10, 1, SamplingMethod::Rejection),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn rejection_matches_direct_for_bounded_scaling() {
        let l = DensityField::parse("scale:0.7", 1).unwrap();
        let a = sample_density(&l, 5000, 1, SamplingMethod::Rejection).unwrap();
        let b = sample_density(&l, 5000, 2, SamplingMethod::Direct).unwrap();
        let (_, p) = ks_two_sample(a.points(), b.points());
        assert!(p > 0.01);
    }

    #[test]
    fn entropy_of_unit_is_exactly_zero() {
        let l = DensityField::unit(2).unwrap();
        let c = sample_standard(&space(2), 100, 1).unwrap();
        let e = estimate_entropy(&l, &c).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn entropy_rejects_dimension_mismatch() {
        let l = DensityField::unit(2).unwrap();
        let c = sample_standard(&space(1), 10, 1).unwrap();
        assert!(estimate_entropy(&l, &c).is_err());
    }
}
