use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coupling::DiscreteCoupling;
use crate::error::{Error, Result};
use crate::gaussian::dot;
use crate::rng;

/// Settings for cycle certification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonotoneConfig {
    /// Enumerate every cycle when there are at most this many.
    pub cycle_budget: u64,
    pub max_cycle_len: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for MonotoneConfig {
    fn default() -> Self {
        MonotoneConfig {
            cycle_budget: 1_000_000,
            max_cycle_len: 8,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Outcome of a cycle search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub cycles_tested: u64,
    pub exhaustive: bool,
    pub worst_cycle_sum: f64,
    /// The cycle attaining the worst sum when it exceeds the tolerance.
    pub violating_cycle: Option<Vec<usize>>,
    pub tol: f64,
    pub monotone: bool,
}

/// Number of directed cycles of length `2..=max_len` on `n` labelled points,
/// saturating at `u64::MAX`.
pub fn cycle_count(n: usize, max_len: usize) -> u64 {
    let mut total: u128 = 0;
    for k in 2..=max_len.min(n) {
        // n! / (n - k)! / k
        let mut falling: u128 = 1;
        for t in 0..k {
            falling = falling.saturating_mul((n - t) as u128);
        }
        total = total.saturating_add(falling / k as u128);
        if total > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    total as u64
}

struct Pairs<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [Vec<f64>],
}

impl Pairs<'_> {
    /// `(y_i, x_j - x_i)`.
    fn step(&self, i: usize, j: usize) -> f64 {
        dot(&self.ys[i], &self.xs[j]) - dot(&self.ys[i], &self.xs[i])
    }

    fn cycle_sum(&self, cycle: &[usize]) -> f64 {
        let k = cycle.len();
        (0..k).map(|m| self.step(cycle[m], cycle[(m + 1) % k])).sum()
    }
}

struct Worst {
    sum: f64,
    cycle: Vec<usize>,
}

impl Worst {
    fn offer(&mut self, sum: f64, cycle: &[usize]) {
        if sum > self.sum {
            self.sum = sum;
            self.cycle = cycle.to_vec();
        }
    }
}

/// Certify `sum_m (y_m, x_{m+1} - x_m) <= tol` over cycles of the pairs.
///
/// Every cycle of length up to `max_cycle_len` is enumerated (each once, from
/// its smallest index) when their number fits the budget; otherwise
/// `cycle_budget` random cycles are drawn.
pub fn check_cyclic_monotone(pairs: &[(Vec<f64>, Vec<f64>)], cfg: &MonotoneConfig) -> Result<MonotonicityReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to certify".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
    }
    let dim = pairs[0].0.len();
    if pairs.iter().any(|(x, y)| x.len() != dim || y.len() != dim) {
        return Err(Error::InvalidArgument("pairs must share one dimension".into()));
    }
    let xs: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.clone()).collect();
    let ys: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
    let p = Pairs { xs: &xs, ys: &ys };
    let n = pairs.len();
    let max_len = cfg.max_cycle_len.min(n);
    let total = cycle_count(n, max_len);
    let mut worst = Worst {
        sum: f64::NEG_INFINITY,
        cycle: Vec::new(),
    };
    let exhaustive = total <= cfg.cycle_budget;
    let tested = if n < 2 || max_len < 2 {
        0
    } else if exhaustive {
        let step: Vec<f64> = (0..n * n).map(|k| p.step(k / n, k % n)).collect();
        let mut used = vec![false; n];
        let mut path = Vec::with_capacity(max_len);
        let mut count = 0u64;
        for start in 0..n {
            used[start] = true;
            path.push(start);
            extend(&step, n, max_len, start, 0.0, &mut used, &mut path, &mut worst, &mut count);
            path.pop();
            used[start] = false;
        }
        count
    } else {
        let mut r = rng::stream(rng::derive_seed(cfg.seed, "cycle-sample"), 0);
        let mut idx: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.cycle_budget {
            let k = r.gen_range(2..=max_len);
            for t in 0..k {
                let s = r.gen_range(t..n);
                idx.swap(t, s);
            }
            worst.offer(p.cycle_sum(&idx[..k]), &idx[..k]);
        }
        cfg.cycle_budget
    };
    let worst_sum = if tested == 0 { 0.0 } else { worst.sum };
    let monotone = worst_sum <= cfg.tol;
    Ok(MonotonicityReport {
        cycles_tested: tested,
        exhaustive,
        worst_cycle_sum: worst_sum,
        violating_cycle: (!monotone).then_some(worst.cycle),
        tol: cfg.tol,
        monotone,
    })
}

#[allow(clippy::too_many_arguments)]
fn extend(
    step: &[f64],
    n: usize,
    max_len: usize,
    start: usize,
    partial: f64,
    used: &mut [bool],
    path: &mut Vec<usize>,
    worst: &mut Worst,
    count: &mut u64,
) {
    let last = *path.last().expect("path holds the start");
    for next in start + 1..n {
        if used[next] {
            continue;
        }
        let s = partial + step[last * n + next];
        path.push(next);
        *count += 1;
        worst.offer(s + step[next * n + start], path);
        if path.len() < max_len {
            used[next] = true;
            extend(step, n, max_len, start, s, used, path, worst, count);
            used[next] = false;
        }
        path.pop();
    }
}

/// Support pairs `(x_i, y_j)` of a coupling, in entry order.
pub fn support_pairs(coupling: &DiscreteCoupling) -> Vec<(Vec<f64>, Vec<f64>)> {
    coupling
        .entries()
        .iter()
        .filter(|e| e.weight > 0.0)
        .map(|e| (coupling.source().point(e.i).to_vec(), coupling.target().point(e.j).to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(pairs: &[(f64, f64)]) -> Vec<(Vec<f64>, Vec<f64>)> {
        pairs.iter().map(|&(x, y)| (vec![x], vec![y])).collect()
    }

    #[test]
    fn counts_cycles() {
        assert_eq!(cycle_count(2, 2), 1);
        assert_eq!(cycle_count(3, 3), 3 + 2);
        assert_eq!(cycle_count(4, 4), 6 + 8 + 6);
        assert_eq!(cycle_count(100, 100), u64::MAX);
    }

    #[test]
    fn exhaustive_enumeration_visits_every_cycle() {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, k as f64 * 0.5)).collect();
        let r = check_cyclic_monotone(&one_d(&pts), &MonotoneConfig::default()).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.cycles_tested, cycle_count(5, 5));
        assert!(r.monotone);
    }

    #[test]
    fn identity_pairs_give_minus_squared_gap_on_swaps() {
        let pts = one_d(&[(0.0, 0.0), (1.5, 1.5)]);
        let r = check_cyclic_monotone(&pts, &MonotoneConfig::default()).unwrap();
        assert_eq!(r.worst_cycle_sum, -2.25);
        assert!(r.monotone);
    }

    #[test]
    fn reflection_is_flagged() {
        let pts = one_d(&[(-1.0, 1.0), (1.0, -1.0)]);
        let r = check_cyclic_monotone(&pts, &MonotoneConfig::default()).unwrap();
        assert_eq!(r.worst_cycle_sum, 4.0);
        assert!(!r.monotone);
        assert_eq!(r.violating_cycle, Some(vec![0, 1]));
    }

    #[test]
    fn random_mode_is_seeded() {
        let pts: Vec<(f64, f64)> = (0..40).map(|k| (k as f64, -(k as f64))).collect();
        let cfg = MonotoneConfig {
            cycle_budget: 500,
            ..Default::default()
        };
        let a = check_cyclic_monotone(&one_d(&pts), &cfg).unwrap();
        let b = check_cyclic_monotone(&one_d(&pts), &cfg).unwrap();
        assert!(!a.exhaustive);
        assert_eq!(a, b);
        assert!(!a.monotone);
    }

    #[test]
    fn single_pair_is_trivially_monotone() {
        let r = check_cyclic_monotone(&one_d(&[(1.0, 2.0)]), &MonotoneConfig::default()).unwrap();
        assert_eq!(r.cycles_tested, 0);
        assert!(r.monotone);
    }
}
