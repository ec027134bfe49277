//! Carleman-Fredholm determinants, the Gaussian Jacobian of a transport,
//! displacement interpolation, and the conditioning submartingale.

mod entropy;
mod interpolation;
mod jacobian;
mod submartingale;

pub use entropy::{entropy_transport_check, pushforward_defect, DefectEntry, DefectReport, TestFunction};
pub use interpolation::{interpolation_check, InterpolationConfig, InterpolationLevel, InterpolationReport, MonotonicityWitness};
pub use jacobian::{
    det2, gaussian_jacobian, hessian_eigenvalues, interpolated_jacobian, jacobian_residual, log_det2, JacobianPoint,
    JacobianRecord, JacobianReport, JacobianSummary, CLAMP_TOL,
};
pub use submartingale::{submartingale_trace, ConditionedPotential, SubmartingaleTrace};
