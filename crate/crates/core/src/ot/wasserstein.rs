use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coupling::CostOrder;
use super::solvers::{solve_entropic, solve_exact, SinkhornConfig};
use crate::error::{Error, Result};
use crate::gaussian::SampleCloud;
use crate::stats::{pairwise_sum, Estimate};

/// Which solver computes the minimal cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMethod {
    /// Quantile coupling in one dimension, the exact solver for equal uniform
    /// clouds, Sinkhorn otherwise.
    #[default]
    Auto,
    Exact,
    Entropic,
    /// Monotone rearrangement; one-dimensional clouds only.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WassersteinConfig {
    pub method: TransportMethod,
    pub sinkhorn: SinkhornConfig,
}

/// Minimal cost `J` with a sampling standard error, and the method used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportEstimate {
    pub cost: Estimate,
    pub method: TransportMethod,
    pub converged: bool,
}

impl TransportEstimate {
    /// `sqrt(J)` for order 2, `J` for order 1, with delta-method error.
    pub fn distance(&self, order: CostOrder) -> Estimate {
        match order {
            CostOrder::One => self.cost,
            CostOrder::Two => {
                let d = self.cost.value.max(0.0).sqrt();
                let se = if d > 0.0 { self.cost.stderr / (2.0 * d) } else { self.cost.stderr.sqrt() };
                Estimate::new(d, se)
            }
        }
    }
}

fn sorted_with_weights(c: &SampleCloud) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = c.points().iter().copied().zip(c.weights().iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Pieces `(mass, cost)` of the monotone coupling between two 1-D clouds.
pub fn quantile_pieces(source: &SampleCloud, target: &SampleCloud, order: CostOrder) -> Result<Vec<(f64, f64)>> {
    if source.dim() != 1 || target.dim() != 1 {
        return Err(Error::InvalidArgument("quantile coupling needs one-dimensional clouds".into()));
    }
    let xs = sorted_with_weights(source);
    let ys = sorted_with_weights(target);
    let mut pieces = Vec::with_capacity(xs.len() + ys.len());
    let (mut i, mut j) = (0, 0);
    let (mut rx, mut ry) = (xs[0].1, ys[0].1);
    // Both masses sum to one, so whatever remains when one side runs out is
    // rounding and is dropped.
    loop {
        let mass = rx.min(ry);
        if mass > 0.0 {
            pieces.push((mass, order.cost(&[xs[i].0], &[ys[j].0])));
        }
        if rx <= ry {
            ry -= rx;
            i += 1;
            if i == xs.len() {
                break;
            }
            rx = xs[i].1;
        } else {
            rx -= ry;
            j += 1;
            if j == ys.len() {
                break;
            }
            ry = ys[j].1;
        }
    }
    Ok(pieces)
}

/// Weighted mean of the piece costs with a standard error from their spread,
/// using `n_eff` independent draws.
fn piece_estimate(pieces: &[(f64, f64)], n_eff: usize) -> Estimate {
    let total = pairwise_sum(&pieces.iter().map(|p| p.0).collect::<Vec<_>>());
    let j = pairwise_sum(&pieces.iter().map(|p| p.0 * p.1).collect::<Vec<_>>()) / total;
    let var = pairwise_sum(&pieces.iter().map(|p| p.0 * (p.1 - j).powi(2)).collect::<Vec<_>>()) / total;
    Estimate::new(j, (var / n_eff.max(1) as f64).sqrt())
}

/// Minimal transport cost between two clouds.
pub fn transport_estimate(
    source: &Arc<SampleCloud>,
    target: &Arc<SampleCloud>,
    order: CostOrder,
    cfg: &WassersteinConfig,
) -> Result<TransportEstimate> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            got: target.dim(),
        });
    }
    let n_eff = source.len().min(target.len());
    let method = match cfg.method {
        TransportMethod::Auto if source.dim() == 1 => TransportMethod::Quantile,
        TransportMethod::Auto
            if source.len() == target.len() && source.is_uniform() && target.is_uniform() =>
        {
            TransportMethod::Exact
        }
        TransportMethod::Auto => TransportMethod::Entropic,
        m => m,
    };
    match method {
        TransportMethod::Quantile => {
            let pieces = quantile_pieces(source, target, order)?;
            Ok(TransportEstimate {
                cost: piece_estimate(&pieces, n_eff),
                method,
                converged: true,
            })
        }
        TransportMethod::Exact | TransportMethod::Entropic => {
            let k = if method == TransportMethod::Exact {
                solve_exact(source.clone(), target.clone(), order)?
            } else {
                solve_entropic(source.clone(), target.clone(), order, &cfg.sinkhorn)?
            };
            let (costs, weights) = k.entry_costs(order);
            let pieces: Vec<(f64, f64)> = weights.into_iter().zip(costs).collect();
            let mut est = piece_estimate(&pieces, n_eff);
            est.value = k.cost();
            Ok(TransportEstimate {
                cost: est,
                method,
                converged: k.solver().converged,
            })
        }
        TransportMethod::Auto => unreachable!("resolved above"),
    }
}

/// Order 2: the square root of the minimal quadratic cost. Order 1: the
/// minimal cost itself.
pub fn wasserstein(
    source: &Arc<SampleCloud>,
    target: &Arc<SampleCloud>,
    order: CostOrder,
    cfg: &WassersteinConfig,
) -> Result<f64> {
    Ok(transport_estimate(source, target, order, cfg)?.distance(order).value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{sample_standard, GaussianSpace, Provenance};

    fn cloud(dim: usize, n: usize, seed: u64) -> Arc<SampleCloud> {
        Arc::new(sample_standard(&GaussianSpace::new(dim).unwrap(), n, seed).unwrap())
    }

    #[test]
    fn same_cloud_is_at_distance_zero() {
        for d in [1, 3] {
            let x = cloud(d, 40, 1);
            assert_eq!(wasserstein(&x, &x, CostOrder::Two, &Default::default()).unwrap(), 0.0);
        }
    }

    #[test]
    fn gaussian_scaling_distance() {
        let x = cloud(1, 4096, 10);
        let y = Arc::new(cloud(1, 4096, 11).map_points(1, Provenance::Pushforward, |p| vec![2.0 * p[0]]).unwrap());
        let d = wasserstein(&x, &y, CostOrder::Two, &Default::default()).unwrap();
        assert!((d - 1.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn quantile_agrees_with_exact_in_one_dimension() {
        let x = cloud(1, 60, 2);
        let y = cloud(1, 60, 3);
        for order in [CostOrder::One, CostOrder::Two] {
            let q = transport_estimate(&x, &y, order, &Default::default()).unwrap();
            let e = transport_estimate(
                &x,
                &y,
                order,
                &WassersteinConfig {
                    method: TransportMethod::Exact,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(q.method, TransportMethod::Quantile);
            assert!((q.cost.value - e.cost.value).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_quantile_pieces_conserve_mass() {
        let x = Arc::new(SampleCloud::new(1, vec![0.0, 1.0, 2.0], Some(vec![0.2, 0.5, 0.3]), 0, Provenance::Density).unwrap());
        let y = cloud(1, 7, 4);
        let pieces = quantile_pieces(&x, &y, CostOrder::Two).unwrap();
        let mass: f64 = pieces.iter().map(|p| p.0).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        // Two point masses against each other: W2 between delta_0 and delta_3.
        let a = Arc::new(SampleCloud::new(1, vec![0.0], None, 0, Provenance::Density).unwrap());
        let b = Arc::new(SampleCloud::new(1, vec![3.0], None, 0, Provenance::Density).unwrap());
        assert_eq!(wasserstein(&a, &b, CostOrder::Two, &Default::default()).unwrap(), 3.0);
    }

    #[test]
    fn triangle_inequality_on_three_clouds() {
        let a = cloud(2, 50, 5);
        let b = Arc::new(cloud(2, 50, 6).map_points(2, Provenance::Pushforward, |p| vec![p[0] + 1.0, 0.5 * p[1]]).unwrap());
        let c = Arc::new(cloud(2, 50, 7).map_points(2, Provenance::Pushforward, |p| vec![1.5 * p[0], p[1] - 0.5]).unwrap());
        let cfg = WassersteinConfig::default();
        let ab = wasserstein(&a, &b, CostOrder::Two, &cfg).unwrap();
        let bc = wasserstein(&b, &c, CostOrder::Two, &cfg).unwrap();
        let ac = wasserstein(&a, &c, CostOrder::Two, &cfg).unwrap();
        assert!(ac <= ab + bc + 1e-12);
    }
}
