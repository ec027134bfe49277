//! Discrete optimal couplings for the quadratic and linear costs.

mod assignment;
mod coupling;
mod monotone;
mod solvers;
mod wasserstein;

pub use assignment::{solve_assignment, Assignment};
pub use coupling::{CostOrder, CouplingEntry, DiscreteCoupling, MarginalResiduals, SolverInfo, SolverKind};
pub use monotone::{check_cyclic_monotone, cycle_count, support_pairs, MonotoneConfig, MonotonicityReport};
pub use solvers::{cost_matrix, solve_entropic, solve_exact, SinkhornConfig};
pub use wasserstein::{quantile_pieces, transport_estimate, wasserstein, TransportEstimate, TransportMethod, WassersteinConfig};
