//! Monte Carlo verifiers for the Talagrand transport-entropy bound, the
//! Cameron-Martin gauge concentration bounds and the flow bound on `d_1`.

mod d1flow;
mod gauge;
mod report;
mod talagrand;

pub use d1flow::{d1_flow_report, D1FlowConfig, D1FlowReport, FlowTrace, MAX_FACTOR_DEGREE, MAX_FLOW_DIM};
pub use gauge::{gauge_report, GaugeReport, Region};
pub use report::{InequalityReport, Verdict, SIGMA_BAND};
pub use talagrand::{cost_with_batches, talagrand_report, TalagrandConfig};
