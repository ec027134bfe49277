//! Affine Brenier maps, their potentials, and the dimension ladder.

mod affine;
mod ladder;
mod potential;

pub use affine::{brenier_from_standard, gaussian_brenier, invert_on_samples, sqrt_psd, AffineTransport, RoundTripReport};
pub use ladder::{coordinate_cost, projection_ladder, LadderConfig, LadderResult};
pub use potential::{
    duality_residual, energy_identity_check, one_convexity_check, potential_of, ConvexityReport, DualityConfig,
    DualityReport, EnergyReport, FnPotential, Potential, PotentialPair, QuadraticPotential, FD_STEP,
};
