use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{dist_sq, SampleCloud};
use crate::stats::pairwise_sum;

/// Exponent of the distance in the transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CostOrder {
    /// `|x - y|`, the d1 metric.
    #[serde(rename = "1")]
    One,
    /// `|x - y|^2`, the quadratic cost.
    #[default]
    #[serde(rename = "2")]
    Two,
}

impl CostOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            1 => Ok(CostOrder::One),
            2 => Ok(CostOrder::Two),
            k => Err(Error::InvalidArgument(format!("cost order must be 1 or 2, got {k}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            CostOrder::One => 1,
            CostOrder::Two => 2,
        }
    }

    pub fn cost(self, x: &[f64], y: &[f64]) -> f64 {
        let sq = dist_sq(x, y);
        match self {
            CostOrder::One => sq.sqrt(),
            CostOrder::Two => sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Entropic,
    Given,
}

/// How a coupling was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub kind: SolverKind,
    pub epsilon: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverInfo {
    pub fn given() -> Self {
        SolverInfo {
            kind: SolverKind::Given,
            epsilon: None,
            iterations: 0,
            converged: true,
        }
    }
}

/// One nonzero entry `gamma_ij` of a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Sparse joint weights over a pair of clouds.
#[derive(Debug, Clone)]
pub struct DiscreteCoupling {
    source: Arc<SampleCloud>,
    target: Arc<SampleCloud>,
    entries: Vec<CouplingEntry>,
    order: CostOrder,
    cost: f64,
    solver: SolverInfo,
}

/// Row and column marginal errors in L1 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalResiduals {
    pub source: f64,
    pub target: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    cost: f64,
    order: u32,
    solver: &'a SolverInfo,
    entries: usize,
    marginal_residuals: MarginalResiduals,
}

impl DiscreteCoupling {
    /// Build a coupling from entries; the cost is recomputed from the clouds.
    pub fn new(
        source: Arc<SampleCloud>,
        target: Arc<SampleCloud>,
        entries: Vec<CouplingEntry>,
        order: CostOrder,
        solver: SolverInfo,
    ) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                got: target.dim(),
            });
        }
        for e in &entries {
            if e.i >= source.len() || e.j >= target.len() {
                return Err(Error::InvalidArgument(format!(
                    "coupling entry ({}, {}) out of range",
                    e.i, e.j
                )));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::InvalidArgument(format!("coupling weight {} is invalid", e.weight)));
            }
        }
        let mut c = DiscreteCoupling {
            source,
            target,
            entries,
            order,
            cost: 0.0,
            solver,
        };
        c.cost = c.transport_cost(order);
        Ok(c)
    }

    /// The coupling pairing point `i` of a cloud with point `i` of another of
    /// equal length, with the source weights.
    pub fn paired(source: Arc<SampleCloud>, target: Arc<SampleCloud>, order: CostOrder) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::InvalidArgument("paired clouds must have equal length".into()));
        }
        let entries = source
            .weights()
            .iter()
            .enumerate()
            .map(|(i, &w)| CouplingEntry { i, j: i, weight: w })
            .collect();
        DiscreteCoupling::new(source, target, entries, order, SolverInfo::given())
    }

    pub fn source(&self) -> &SampleCloud {
        &self.source
    }

    pub fn target(&self) -> &SampleCloud {
        &self.target
    }

    pub fn source_arc(&self) -> &Arc<SampleCloud> {
        &self.source
    }

    pub fn target_arc(&self) -> &Arc<SampleCloud> {
        &self.target
    }

    pub fn entries(&self) -> &[CouplingEntry] {
        &self.entries
    }

    pub fn order(&self) -> CostOrder {
        self.order
    }

    /// Cost under the order the coupling was solved for.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn solver(&self) -> &SolverInfo {
        &self.solver
    }

    /// `sum gamma_ij |x_i - y_j|^order`, accumulated pairwise.
    pub fn transport_cost(&self, order: CostOrder) -> f64 {
        let terms: Vec<f64> = self
            .entries
            .iter()
            .map(|e| e.weight * order.cost(self.source.point(e.i), self.target.point(e.j)))
            .collect();
        pairwise_sum(&terms)
    }

    /// Per-entry costs and weights, for standard errors.
    pub fn entry_costs(&self, order: CostOrder) -> (Vec<f64>, Vec<f64>) {
        self.entries
            .iter()
            .map(|e| (order.cost(self.source.point(e.i), self.target.point(e.j)), e.weight))
            .unzip()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); self.source.len()];
        for e in &self.entries {
            rows[e.i].push(e.weight);
        }
        rows.iter().map(|r| pairwise_sum(r)).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); self.target.len()];
        for e in &self.entries {
            cols[e.j].push(e.weight);
        }
        cols.iter().map(|c| pairwise_sum(c)).collect()
    }

    pub fn marginal_residuals(&self) -> MarginalResiduals {
        let l1 = |a: &[f64], b: &[f64]| pairwise_sum(&a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>());
        MarginalResiduals {
            source: l1(&self.row_sums(), self.source.weights()),
            target: l1(&self.col_sums(), self.target.weights()),
        }
    }

    /// For a permutation coupling, `perm[i]` is the target matched to source `i`.
    pub fn as_permutation(&self) -> Option<Vec<usize>> {
        let n = self.source.len();
        if self.entries.len() != n || self.target.len() != n {
            return None;
        }
        let mut perm = vec![usize::MAX; n];
        for e in &self.entries {
            if perm[e.i] != usize::MAX {
                return None;
            }
            perm[e.i] = e.j;
        }
        Some(perm)
    }

    /// Image of each source point: its paired point for permutation couplings,
    /// otherwise the weighted barycenter of its row.
    pub fn empirical_map(&self) -> Vec<Vec<f64>> {
        let d = self.source.dim();
        let mut acc = vec![vec![0.0; d]; self.source.len()];
        let mut mass = vec![0.0; self.source.len()];
        for e in &self.entries {
            let y = self.target.point(e.j);
            for k in 0..d {
                acc[e.i][k] += e.weight * y[k];
            }
            mass[e.i] += e.weight;
        }
        for (a, m) in acc.iter_mut().zip(&mass) {
            if *m > 0.0 {
                a.iter_mut().for_each(|v| *v /= m);
            }
        }
        acc
    }

    /// Entries as CSV triples `i,j,weight`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "weight"])?;
        for e in &self.entries {
            out.write_record(&[e.i.to_string(), e.j.to_string(), format!("{:e}", e.weight)])?;
        }
        out.flush()?;
        Ok(())
    }

    /// JSON sidecar: cost, solver metadata and marginal residuals.
    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            cost: self.cost,
            order: self.order.as_int(),
            solver: &self.solver,
            entries: self.entries.len(),
            marginal_residuals: self.marginal_residuals(),
        })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Provenance;

    fn cloud(points: Vec<f64>, dim: usize) -> Arc<SampleCloud> {
        Arc::new(SampleCloud::new(dim, points, None, 0, Provenance::Gaussian).unwrap())
    }

    #[test]
    fn identity_coupling_costs_nothing() {
        let c = cloud(vec![0.1, 0.2, -1.0, 3.0], 2);
        let k = DiscreteCoupling::paired(c.clone(), c, CostOrder::Two).unwrap();
        assert_eq!(k.cost(), 0.0);
        assert_eq!(k.transport_cost(CostOrder::One), 0.0);
    }

    #[test]
    fn constant_displacement_costs_its_square() {
        let x = cloud(vec![0.0, 0.0, 1.0, -2.0, 0.5, 0.25], 2);
        let y = Arc::new(
            x.map_points(2, Provenance::Pushforward, |p| vec![p[0] + 0.5, p[1] - 1.5])
                .unwrap(),
        );
        let k = DiscreteCoupling::paired(x, y, CostOrder::Two).unwrap();
        assert!((k.cost() - 2.5).abs() < 1e-14);
        assert!((k.transport_cost(CostOrder::One) - 2.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn marginals_and_serialization() {
        let x = cloud(vec![0.0, 1.0], 1);
        let y = cloud(vec![2.0, 3.0], 1);
        let entries = vec![
            CouplingEntry { i: 0, j: 0, weight: 0.25 },
            CouplingEntry { i: 0, j: 1, weight: 0.25 },
            CouplingEntry { i: 1, j: 0, weight: 0.25 },
            CouplingEntry { i: 1, j: 1, weight: 0.25 },
        ];
        let k = DiscreteCoupling::new(x, y, entries, CostOrder::Two, SolverInfo::given()).unwrap();
        let r = k.marginal_residuals();
        assert_eq!((r.source, r.target), (0.0, 0.0));
        assert!(k.as_permutation().is_none());
        assert_eq!(k.empirical_map(), vec![vec![2.5], vec![2.5]]);
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("i,j,weight\n0,0,2.5e-1"));
        let side: serde_json::Value = serde_json::from_str(&k.sidecar_json().unwrap()).unwrap();
        assert_eq!(side["solver"]["kind"], "given");
        assert_eq!(side["cost"], (4.0 + 9.0 + 1.0 + 4.0) / 4.0);
    }

    #[test]
    fn out_of_range_entries_rejected() {
        let x = cloud(vec![0.0], 1);
        let bad = vec![CouplingEntry { i: 0, j: 3, weight: 1.0 }];
        assert!(DiscreteCoupling::new(x.clone(), x, bad, CostOrder::Two, SolverInfo::given()).is_err());
    }
}
