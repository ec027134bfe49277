use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::InequalityReport;
use crate::error::Result;
use crate::gaussian::{
    estimate_entropy, sample_density, sample_standard, DensityField, GaussianSpace, Provenance, SampleCloud,
    SamplingMethod,
};
use crate::ot::{transport_estimate, CostOrder, WassersteinConfig};
use crate::rng;
use crate::stats::{mean_estimate, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TalagrandConfig {
    pub transport: WassersteinConfig,
    /// Draw the target cloud as the monotone image of the Gaussian cloud when
    /// the preset has one; otherwise sample it independently.
    pub coupled: bool,
    /// Batches used for the transport-cost standard error.
    pub batches: usize,
}

impl Default for TalagrandConfig {
    fn default() -> Self {
        TalagrandConfig {
            transport: WassersteinConfig::default(),
            coupled: true,
            batches: 16,
        }
    }
}

/// Minimal quadratic cost between two clouds with a batch-means standard
/// error: the clouds are split into `batches` contiguous row ranges, each
/// solved on its own, and the spread of the batch costs is scaled to the
/// full sample size.
pub fn cost_with_batches(
    source: &Arc<SampleCloud>,
    target: &Arc<SampleCloud>,
    order: CostOrder,
    cfg: &WassersteinConfig,
    batches: usize,
) -> Result<Estimate> {
    let full = transport_estimate(source, target, order, cfg)?;
    let n = source.len().min(target.len());
    if batches < 2 || n < 2 * batches {
        return Ok(full.cost);
    }
    let mut costs = Vec::with_capacity(batches);
    for b in 0..batches {
        let (lo_s, hi_s) = (b * source.len() / batches, (b + 1) * source.len() / batches);
        let (lo_t, hi_t) = (b * target.len() / batches, (b + 1) * target.len() / batches);
        let s = Arc::new(source.rows_range(lo_s..hi_s)?);
        let t = Arc::new(target.rows_range(lo_t..hi_t)?);
        costs.push(transport_estimate(&s, &t, order, cfg)?.cost.value);
    }
    let spread = mean_estimate(&costs).stderr;
    Ok(Estimate::new(full.cost.value, spread))
}

/// `W_2(L . mu, mu)^2` against `2 E[L log L]`.
///
/// The transport side is computed block by block over the coordinates where
/// `L . mu` differs from `mu`; the measures agree as products elsewhere, so
/// the remaining coordinates contribute nothing to the optimal cost. The
/// entropy side uses an independent cloud from `L . mu`.
pub fn talagrand_report(l: &DensityField, n: usize, seed: u64, cfg: &TalagrandConfig) -> Result<InequalityReport> {
    let d = l.dim();
    let space = GaussianSpace::new(d)?;
    let source = sample_standard(&space, n, seed)?;
    let coupled = cfg.coupled && l.has_pushforward();
    let target = if coupled {
        source.map_points(d, Provenance::Pushforward, |z| {
            l.push_standard(z).expect("pushforward available")
        })?
    } else {
        sample_density(l, n, rng::derive_seed(seed, "talagrand-target"), SamplingMethod::Auto)?
    };
    let blocks = l.factor_blocks();
    let mut lhs = Estimate::exact(0.0);
    for block in &blocks {
        let s = Arc::new(source.project(block)?);
        let t = Arc::new(target.project(block)?);
        lhs = lhs.add(cost_with_batches(&s, &t, CostOrder::Two, &cfg.transport, cfg.batches)?);
    }
    let entropy_cloud = sample_density(l, n, rng::derive_seed(seed, "talagrand-entropy"), SamplingMethod::Auto)?;
    let rhs = estimate_entropy(l, &entropy_cloud)?.scale(2.0);
    Ok(InequalityReport::new(
        lhs,
        rhs,
        json!({
            "preset": l.spec(),
            "dim": d,
            "n": n,
            "seed": seed,
            "coupled": coupled,
            "blocks": blocks,
        }),
    ))
}
