use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assignment::solve_assignment;
use super::coupling::{CostOrder, CouplingEntry, DiscreteCoupling, SolverInfo, SolverKind};
use crate::error::{Error, Result};
use crate::gaussian::SampleCloud;

/// Potentials beyond this magnitude are treated as divergence.
const POTENTIAL_GUARD: f64 = 1e6;
/// Plan entries below this weight are dropped from the sparse output.
const ENTRY_FLOOR: f64 = 1e-20;
/// Iteration cap for the warm-up stages of the epsilon schedule.
const STAGE_ITERS: usize = 500;

/// Dense `n x m` cost matrix, rows assembled in parallel.
pub fn cost_matrix(source: &SampleCloud, target: &SampleCloud, order: CostOrder) -> Vec<f64> {
    let m = target.len();
    let mut c = vec![0.0; source.len() * m];
    c.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let x = source.point(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = order.cost(x, target.point(j));
        }
    });
    c
}

fn check_dims(source: &SampleCloud, target: &SampleCloud) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            got: target.dim(),
        });
    }
    Ok(())
}

/// The monotone matching, when it is the unique optimal assignment: one
/// dimension, quadratic cost, and no repeated values on either side.
fn sorted_matching(source: &SampleCloud, target: &SampleCloud, order: CostOrder) -> Option<Vec<usize>> {
    if source.dim() != 1 || order != CostOrder::Two {
        return None;
    }
    let argsort = |c: &SampleCloud| {
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&a, &b| c.points()[a].total_cmp(&c.points()[b]));
        let distinct = idx.windows(2).all(|w| c.points()[w[0]] < c.points()[w[1]]);
        distinct.then_some(idx)
    };
    let xs = argsort(source)?;
    let ys = argsort(target)?;
    let mut perm = vec![0; xs.len()];
    for (i, j) in xs.into_iter().zip(ys) {
        perm[i] = j;
    }
    Some(perm)
}

/// Optimal permutation coupling between equal-size uniform clouds.
///
/// Ties between optimal assignments resolve to the lexicographically smallest
/// permutation.
pub fn solve_exact(source: Arc<SampleCloud>, target: Arc<SampleCloud>, order: CostOrder) -> Result<DiscreteCoupling> {
    check_dims(&source, &target)?;
    if source.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "exact solver needs equal sizes, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    if !source.is_uniform() || !target.is_uniform() {
        return Err(Error::InvalidArgument(
            "exact solver needs uniform weights; resample the weighted cloud".into(),
        ));
    }
    let n = source.len();
    let row_to_col = match sorted_matching(&source, &target, order) {
        Some(perm) => perm,
        None => solve_assignment(&cost_matrix(&source, &target, order), n).row_to_col,
    };
    let w = 1.0 / n as f64;
    let entries = row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| CouplingEntry { i, j, weight: w })
        .collect();
    DiscreteCoupling::new(
        source,
        target,
        entries,
        order,
        SolverInfo {
            kind: SolverKind::Exact,
            epsilon: None,
            iterations: n,
            converged: true,
        },
    )
}

/// Parameters of the entropic solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    /// Target L1 error of the source marginal.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: 0.01,
            max_iter: 50_000,
            tol: 1e-8,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

struct SinkhornState<'a> {
    c: &'a [f64],
    n: usize,
    m: usize,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl SinkhornState<'_> {
    fn update_f(&mut self, eps: f64) {
        let (c, m, g, log_b) = (self.c, self.m, &self.g, &self.log_b);
        self.f.par_iter_mut().enumerate().for_each(|(i, fi)| {
            let row = &c[i * m..(i + 1) * m];
            *fi = -eps * log_sum_exp((0..m).map(|j| log_b[j] + (g[j] - row[j]) / eps));
        });
    }

    fn update_g(&mut self, eps: f64) {
        let (c, n, m, f, log_a) = (self.c, self.n, self.m, &self.f, &self.log_a);
        self.g.par_iter_mut().enumerate().for_each(|(j, gj)| {
            *gj = -eps * log_sum_exp((0..n).map(|i| log_a[i] + (f[i] - c[i * m + j]) / eps));
        });
    }

    /// L1 error of the source marginal after a column update.
    fn row_error(&self, eps: f64) -> f64 {
        let (c, m) = (self.c, self.m);
        let errs: Vec<f64> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let row = &c[i * m..(i + 1) * m];
                let log_row = self.log_a[i]
                    + log_sum_exp((0..m).map(|j| self.log_b[j] + (self.f[i] + self.g[j] - row[j]) / eps));
                (log_row.exp() - self.log_a[i].exp()).abs()
            })
            .collect();
        crate::stats::pairwise_sum(&errs)
    }

    fn diverged(&self) -> bool {
        self.f.iter().chain(&self.g).any(|v| !v.is_finite() || v.abs() > POTENTIAL_GUARD)
    }
}

/// Log-domain Sinkhorn with the epsilon schedule `1, 1/2, 1/4, ...` down to
/// the target. Non-convergence returns the best iterate flagged unconverged.
pub fn solve_entropic(
    source: Arc<SampleCloud>,
    target: Arc<SampleCloud>,
    order: CostOrder,
    cfg: &SinkhornConfig,
) -> Result<DiscreteCoupling> {
    check_dims(&source, &target)?;
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if !(cfg.tol >= 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidArgument("tolerance must be nonnegative and max_iter positive".into()));
    }
    if source.weights().iter().chain(target.weights()).any(|&w| w <= 0.0) {
        return Err(Error::InvalidArgument("entropic solver needs positive weights".into()));
    }
    let (n, m) = (source.len(), target.len());
    let c = cost_matrix(&source, &target, order);
    let mut st = SinkhornState {
        c: &c,
        n,
        m,
        log_a: source.weights().iter().map(|w| w.ln()).collect(),
        log_b: target.weights().iter().map(|w| w.ln()).collect(),
        f: vec![0.0; n],
        g: vec![0.0; m],
    };

    let mut schedule = Vec::new();
    let mut e = 1.0;
    while e > cfg.epsilon {
        schedule.push(e);
        e *= 0.5;
    }
    schedule.push(cfg.epsilon);

    let mut iterations = 0usize;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut converged = false;
    let last = schedule.len() - 1;
    for (stage, &eps) in schedule.iter().enumerate() {
        let final_stage = stage == last;
        let stage_tol = if final_stage { cfg.tol } else { cfg.tol.max(1e-3) };
        let mut k = 0;
        loop {
            // Warm-up stages leave one iteration for the target epsilon so the
            // returned plan always matches its potentials.
            let exhausted = if final_stage {
                iterations >= cfg.max_iter.max(1) && k > 0
            } else {
                iterations + 1 >= cfg.max_iter || k >= STAGE_ITERS
            };
            if exhausted {
                break;
            }
            st.update_f(eps);
            st.update_g(eps);
            iterations += 1;
            k += 1;
            if st.diverged() {
                return Err(Error::Solver(format!(
                    "Sinkhorn potentials diverged at epsilon {eps} after {iterations} iterations"
                )));
            }
            let err = st.row_error(eps);
            if final_stage && best.as_ref().map_or(true, |b| err < b.0) {
                best = Some((err, st.f.clone(), st.g.clone()));
            }
            if err <= stage_tol {
                if final_stage {
                    converged = true;
                }
                break;
            }
        }
    }
    if let Some((_, f, g)) = best.filter(|_| !converged) {
        st.f = f;
        st.g = g;
    }

    let eps = cfg.epsilon;
    let rows: Vec<Vec<CouplingEntry>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .filter_map(|j| {
                    let w = (st.log_a[i] + st.log_b[j] + (st.f[i] + st.g[j] - c[i * m + j]) / eps).exp();
                    (w > ENTRY_FLOOR).then_some(CouplingEntry { i, j, weight: w })
                })
                .collect()
        })
        .collect();
    DiscreteCoupling::new(
        source,
        target,
        rows.concat(),
        order,
        SolverInfo {
            kind: SolverKind::Entropic,
            epsilon: Some(eps),
            iterations,
            converged,
        },
    )
}
