//! Standard Gaussian reference measure, densities against it, sampling, and
//! Hermite / Ornstein-Uhlenbeck calculus.

mod cloud;
mod density;
mod hermite;
mod sampling;
mod space;

pub use cloud::{Provenance, SampleCloud};
pub use density::{DensityField, DensityKind, GaussianLaw, MixtureComponent};
pub(crate) use density::row_major;
pub use hermite::{hermite_1d, hermite_all, HermiteExpansion, HermiteField, MultiIndex};
pub use sampling::{estimate_entropy, ou_resolvent, sample_density, sample_standard, SamplingMethod};
pub use space::{cm_norm_sq, dist_sq, dot, GaussianSpace, DEFAULT_DIM, MAX_DIM};
