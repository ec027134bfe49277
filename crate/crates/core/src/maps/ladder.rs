use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{sample_density, sample_standard, DensityField, GaussianSpace, Provenance, SamplingMethod};
use crate::ot::{transport_estimate, CostOrder, TransportMethod, WassersteinConfig};
use crate::quadrature::gauss_hermite;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    /// Build the target cloud by pushing the source points through the
    /// preset's monotone map, instead of drawing it independently.
    pub coupled: bool,
    /// Run non-product presets, whose truncated marginals are then only
    /// Monte Carlo approximations.
    pub allow_approximate: bool,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            coupled: true,
            allow_approximate: false,
        }
    }
}

/// Optimal costs of the truncated problems along increasing dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderResult {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Cost at the full dimension.
    pub reference: f64,
    /// Closed-form level costs for product presets.
    pub theoretical: Option<Vec<f64>>,
    pub exact_marginals: bool,
}

impl LadderResult {
    /// Nondecreasing up to `k` pooled standard errors between neighbours.
    pub fn is_monotone(&self, k: f64) -> bool {
        self.values.windows(2).zip(self.stderrs.windows(2)).all(|(v, s)| {
            let pooled = (s[0] * s[0] + s[1] * s[1]).sqrt();
            v[1] >= v[0] - k * pooled
        })
    }

    /// Largest relative deviation from the closed-form levels, skipping
    /// levels whose theoretical value is zero.
    pub fn max_relative_error(&self) -> Option<f64> {
        let th = self.theoretical.as_ref()?;
        Some(
            self.values
                .iter()
                .zip(th)
                .filter(|(_, t)| **t > 0.0)
                .map(|(v, t)| (v - t).abs() / t)
                .fold(0.0, f64::max),
        )
    }

    /// CSV with header `dim,J,stderr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dim", "J", "stderr"])?;
        for ((d, v), s) in self.dims.iter().zip(&self.values).zip(&self.stderrs) {
            out.write_record(&[d.to_string(), format!("{v:e}"), format!("{s:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `W_2^2` between coordinate `k` of a product preset and `N(0, 1)`, by
/// Gauss-Hermite quadrature of the squared monotone displacement.
pub fn coordinate_cost(l: &DensityField, k: usize) -> Option<f64> {
    if !l.is_product() || !l.has_pushforward() {
        return None;
    }
    let (nodes, weights) = gauss_hermite(96);
    let mut z = vec![0.0; l.dim()];
    let mut total = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        z[k] = *x;
        let y = l.push_standard(&z)?;
        total += w * (y[k] - x).powi(2);
    }
    Some(total)
}

/// Solve the exact problem on the first `dims[i]` coordinates of a source
/// Gaussian cloud and a target cloud from `L . mu`.
pub fn projection_ladder(
    l: &DensityField,
    dims: &[usize],
    n: usize,
    seed: u64,
    cfg: &LadderConfig,
) -> Result<LadderResult> {
    let d = l.dim();
    if dims.is_empty() || dims[0] == 0 || dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("ladder dims {dims:?} must be positive and increasing")));
    }
    if *dims.last().expect("nonempty") != d {
        return Err(Error::InvalidArgument(format!(
            "the last ladder level must be the full dimension {d}"
        )));
    }
    let exact_marginals = l.is_product();
    if !exact_marginals && !cfg.allow_approximate {
        return Err(Error::Unsupported(format!(
            "`{}` is not a product density; enable allow_approximate for Monte Carlo marginals",
            l.spec()
        )));
    }
    let space = GaussianSpace::new(d)?;
    let source = sample_standard(&space, n, seed)?;
    let target = if cfg.coupled && l.has_pushforward() {
        source.map_points(d, Provenance::Pushforward, |z| {
            l.push_standard(z).expect("pushforward available")
        })?
    } else {
        let t = sample_density(l, n, rng::derive_seed(seed, "ladder-target"), SamplingMethod::Auto)?;
        if !t.is_uniform() {
            return Err(Error::Unsupported(format!(
                "`{}` has no unweighted sampler; the exact solver needs uniform clouds",
                l.spec()
            )));
        }
        t
    };
    let wcfg = WassersteinConfig {
        method: TransportMethod::Exact,
        ..Default::default()
    };
    let levels: Vec<Result<(f64, f64)>> = dims
        .par_iter()
        .map(|&k| {
            let s = Arc::new(source.truncate(k)?);
            let t = Arc::new(target.truncate(k)?);
            let e = transport_estimate(&s, &t, CostOrder::Two, &wcfg)?;
            Ok((e.cost.value, e.cost.stderr))
        })
        .collect();
    let mut values = Vec::with_capacity(dims.len());
    let mut stderrs = Vec::with_capacity(dims.len());
    for lv in levels {
        let (v, s) = lv?;
        values.push(v);
        stderrs.push(s);
    }
    let theoretical = if exact_marginals {
        let per: Option<Vec<f64>> = (0..d).map(|k| coordinate_cost(l, k)).collect();
        per.map(|per| {
            dims.iter()
                .map(|&k| per[..k].iter().sum())
                .collect()
        })
    } else {
        None
    };
    Ok(LadderResult {
        dims: dims.to_vec(),
        reference: *values.last().expect("nonempty"),
        values,
        stderrs,
        theoretical,
        exact_marginals,
    })
}
