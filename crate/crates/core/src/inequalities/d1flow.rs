use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::InequalityReport;
use super::talagrand::cost_with_batches;
use crate::error::{Error, Result};
use crate::gaussian::{dot, sample_standard, DensityField, GaussianSpace, HermiteExpansion, HermiteField, Provenance};
use crate::ot::{CostOrder, TransportMethod, WassersteinConfig};
use crate::quadrature::integrate_line;
use crate::rng;
use crate::stats::{mean_estimate, normal_pdf, Estimate};

pub const MAX_FLOW_DIM: usize = 3;
pub const MAX_FACTOR_DEGREE: u32 = 4;

/// Smallest step before the integrator gives up on a trajectory.
const MIN_STEP: f64 = 1e-9;
/// Largest sample size handed to the assignment solver for the `d > 1` lhs.
const MAX_ASSIGNMENT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct D1FlowConfig {
    /// RK4 steps on `[0, 1]` before any halving.
    pub steps: usize,
    /// Flow start points, taken from an independent Gaussian cloud.
    pub start_points: usize,
    /// Keep every `trace_stride`-th grid time in the trace.
    pub trace_stride: usize,
    pub batches: usize,
}

impl Default for D1FlowConfig {
    fn default() -> Self {
        D1FlowConfig {
            steps: 1000,
            start_points: 100,
            trace_stride: 10,
            batches: 16,
        }
    }
}

/// Trajectories of `y' = -sigma(y) / (t + (1 - t) L(y))` from `t = 0` to `1`
/// with the accumulated Jacobian factor `Lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub dim: usize,
    pub times: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
    /// Per start point, one row-major block of `times.len()` positions.
    pub paths: Vec<Vec<f64>>,
    /// Per start point, `Lambda` at each recorded time.
    pub lambdas: Vec<Vec<f64>>,
    /// The drift `sigma = (I + L)^{-1} grad L` in the Hermite basis.
    pub drift: HermiteField,
}

impl FlowTrace {
    /// CSV with header `t,point,x1,...,xd,lambda`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "point".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        header.push("lambda".into());
        out.write_record(&header)?;
        for (p, (path, lam)) in self.paths.iter().zip(&self.lambdas).enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                let mut rec = vec![format!("{t:e}"), p.to_string()];
                rec.extend(path[k * self.dim..(k + 1) * self.dim].iter().map(|x| format!("{x:e}")));
                rec.push(format!("{:e}", lam[k]));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D1FlowReport {
    pub report: InequalityReport,
    pub trace: FlowTrace,
    /// `max |Lambda_{0,1}(x) - L(x)| / L(x)` over start points.
    pub endpoint_error: f64,
    /// `max |Lambda_{0,t} g_t - L(x)| / L(x)` over start points and recorded
    /// times, with `g_t = t + (1 - t) L`.
    pub constancy_error: f64,
    /// Some trajectory needed a step below the minimum or left the finite range.
    pub blow_up: bool,
    /// The lhs is the exact quantile integral rather than a sample estimate.
    pub exact_lhs: bool,
}

struct Flow {
    l: HermiteExpansion,
    grad_l: HermiteField,
    sigma: HermiteField,
    div_sigma: HermiteExpansion,
}

impl Flow {
    /// Time derivative of `(y, log Lambda)`.
    fn rhs(&self, t: f64, state: &[f64]) -> Vec<f64> {
        let d = state.len() - 1;
        let y = &state[..d];
        let g = t + (1.0 - t) * self.l.eval(y);
        let s = self.sigma.eval(y);
        let gl = self.grad_l.eval(y);
        let mut out: Vec<f64> = s.iter().map(|v| -v / g).collect();
        out.push(self.div_sigma.eval(y) / g + (1.0 - t) * dot(&gl, &s) / (g * g));
        out
    }

    fn rk4(&self, t: f64, state: &[f64], h: f64) -> Vec<f64> {
        let axpy = |a: &[f64], k: &[f64], c: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, v)| x + c * v).collect() };
        let k1 = self.rhs(t, state);
        let k2 = self.rhs(t + h / 2.0, &axpy(state, &k1, h / 2.0));
        let k3 = self.rhs(t + h / 2.0, &axpy(state, &k2, h / 2.0));
        let k4 = self.rhs(t + h, &axpy(state, &k3, h));
        (0..state.len())
            .map(|i| h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    /// Advance `state` by `h`, halving while an increment exceeds a tenth of
    /// the state size. Returns false on blow-up.
    fn advance(&self, t: f64, state: &mut Vec<f64>, h: f64) -> bool {
        let delta = self.rk4(t, state, h);
        let size = state.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let big = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !big.is_finite() {
            return false;
        }
        if big > 0.1 * size {
            if h / 2.0 < MIN_STEP {
                return false;
            }
            return self.advance(t, state, h / 2.0) && self.advance(t + h / 2.0, state, h / 2.0);
        }
        for (s, d) in state.iter_mut().zip(&delta) {
            *s += d;
        }
        true
    }
}

fn check_preset(l: &DensityField) -> Result<HermiteExpansion> {
    let e = l
        .hermite_expansion()
        .ok_or_else(|| Error::Unsupported(format!("`{}` is not a Hermite polynomial density", l.spec())))?;
    if l.dim() > MAX_FLOW_DIM {
        return Err(Error::Unsupported(format!(
            "the flow bound is checked for dimension at most {MAX_FLOW_DIM}, got {}",
            l.dim()
        )));
    }
    if e.terms().any(|(alpha, _)| alpha.iter().any(|&k| k > MAX_FACTOR_DEGREE)) {
        return Err(Error::Unsupported(format!(
            "`{}` has a factor of degree above {MAX_FACTOR_DEGREE}",
            l.spec()
        )));
    }
    if !l.lower_bound().is_some_and(|b| b > 0.0) {
        return Err(Error::Unsupported(format!(
            "`{}` is not bounded away from zero; the flow speed is undefined where L vanishes",
            l.spec()
        )));
    }
    Ok(e)
}

/// `d_1(L . mu, mu)` against `E|(I + L)^{-1} grad L|`, plus the flow whose
/// Jacobian factor must end at `L` itself.
pub fn d1_flow_report(l: &DensityField, n: usize, seed: u64, cfg: &D1FlowConfig) -> Result<D1FlowReport> {
    let expansion = check_preset(l)?;
    if cfg.steps == 0 || cfg.trace_stride == 0 {
        return Err(Error::InvalidArgument("steps and trace stride must be positive".into()));
    }
    let d = l.dim();
    let grad_l = expansion.gradient();
    let sigma = grad_l.ou_resolvent();
    let flow = Flow {
        div_sigma: sigma.divergence(),
        l: expansion.clone(),
        grad_l,
        sigma,
    };

    let space = GaussianSpace::new(d)?;
    let cloud = sample_standard(&space, n, seed)?;
    let norms: Vec<f64> = cloud.rows().map(|x| dot(&flow.sigma.eval(x), &flow.sigma.eval(x)).sqrt()).collect();
    let rhs = mean_estimate(&norms);

    let exact_lhs = d == 1;
    let lhs = if exact_lhs {
        // F_nu - Phi = -phi * g with g the CDF correction of L.
        let g = expansion.cdf_correction_1d()?;
        Estimate::exact(integrate_line(|x| normal_pdf(x) * g.eval(&[x]).abs(), 40.0, 1e-13))
    } else {
        let m = n.min(MAX_ASSIGNMENT);
        let source = cloud.rows_range(0..m)?;
        let target = source.map_points(d, Provenance::Pushforward, |z| {
            l.push_standard(z).expect("Hermite products have a pushforward")
        })?;
        let wcfg = WassersteinConfig {
            method: TransportMethod::Exact,
            ..Default::default()
        };
        cost_with_batches(&Arc::new(source), &Arc::new(target), CostOrder::One, &wcfg, cfg.batches)?
    };

    let starts_cloud = sample_standard(&space, cfg.start_points.max(1), rng::derive_seed(seed, "flow-start"))?;
    let starts: Vec<Vec<f64>> = starts_cloud.rows().map(<[f64]>::to_vec).collect();
    let h = 1.0 / cfg.steps as f64;
    let recorded: Vec<usize> = (0..=cfg.steps)
        .filter(|k| k % cfg.trace_stride == 0 || *k == cfg.steps)
        .collect();
    let times: Vec<f64> = recorded.iter().map(|&k| k as f64 * h).collect();
    struct Path {
        points: Vec<f64>,
        lambdas: Vec<f64>,
        endpoint: f64,
        constancy: f64,
        ok: bool,
    }
    let paths: Vec<Path> = starts
        .par_iter()
        .map(|x| {
            let lx = expansion.eval(x);
            let mut state = x.clone();
            state.push(0.0);
            let mut points = Vec::with_capacity(times.len() * d);
            let mut lambdas = Vec::with_capacity(times.len());
            let mut constancy = 0.0f64;
            let mut ok = true;
            let mut next = 0;
            for k in 0..=cfg.steps {
                let t = k as f64 * h;
                let lam = state[d].exp();
                let g = t + (1.0 - t) * expansion.eval(&state[..d]);
                constancy = constancy.max((lam * g - lx).abs() / lx);
                if next < recorded.len() && recorded[next] == k {
                    points.extend_from_slice(&state[..d]);
                    lambdas.push(lam);
                    next += 1;
                }
                if k == cfg.steps || !ok {
                    break;
                }
                ok = flow.advance(t, &mut state, h);
            }
            let endpoint = (state[d].exp() - lx).abs() / lx;
            if !ok {
                // Pad the trace so every path has one row per recorded time.
                while lambdas.len() < times.len() {
                    points.extend_from_slice(&state[..d]);
                    lambdas.push(f64::NAN);
                }
            }
            Path {
                points,
                lambdas,
                endpoint,
                constancy,
                ok,
            }
        })
        .collect();

    let blow_up = paths.iter().any(|p| !p.ok);
    let endpoint_error = paths.iter().map(|p| p.endpoint).fold(0.0, f64::max);
    let constancy_error = paths.iter().map(|p| p.constancy).fold(0.0, f64::max);
    let report = InequalityReport::new(
        lhs,
        rhs,
        json!({
            "preset": l.spec(),
            "dim": d,
            "n": n,
            "seed": seed,
            "steps": cfg.steps,
            "start_points": starts.len(),
            "exact_lhs": exact_lhs,
        }),
    );
    Ok(D1FlowReport {
        report,
        trace: FlowTrace {
            dim: d,
            times,
            starts,
            paths: paths.iter().map(|p| p.points.clone()).collect(),
            lambdas: paths.iter().map(|p| p.lambdas.clone()).collect(),
            drift: flow.sigma,
        },
        endpoint_error,
        constancy_error,
        blow_up,
        exact_lhs,
    })
}
