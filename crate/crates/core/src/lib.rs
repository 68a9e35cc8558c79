//! Numerical laboratory for feedback stabilisation of the Cahn-Hilliard
//! equation on Ω = (0,1)^d, d ∈ {1, 2}:
//!
//! * [`spectral`] — cosine eigenbasis of −Δ with Neumann conditions,
//!   transforms, differential operators, the cubic nonlinearity and
//!   piecewise-constant interpolation;
//! * [`feedback`] — finite-dimensional static output feedback operators
//!   (pointwise deltas, cell averages, weighted and nonlocal variants);
//! * [`gap`] — the stabilizability certificate: C*(R,ν), the smallest
//!   eigenvalue α_min of the feedback-augmented bi-Laplacian form, and
//!   parameter scans;
//! * [`dynamics`] — the fully discrete controlled system (implicit Euler +
//!   Galerkin + Newton), target trajectories, manufactured forcing, per-step
//!   energy diagnostics and decay-rate estimation.

pub mod dynamics;
pub mod feedback;
pub mod gap;
mod linalg;
pub mod spectral;

pub use dynamics::{
    decay_fit, decay_fit_samples, gamma_tilde, initial_tanh, manufacture_forcing, scheme_jacobian,
    scheme_residual, simulate, step, DecayFit, DynamicsError, LinearSolver, ModelParams,
    NewtonOptions, NewtonStats, Reference, StepRecord, Trajectory, TrajectoryRecord,
};
pub use feedback::{FeedbackError, FeedbackKind, FeedbackOperator};
pub use gap::{
    assemble_quadratic_form, certify, compute_cstar, compute_cstar_discrete, scan,
    smallest_eigenvalue, GapCertificate, GapError, GapParams, ScanRow,
};
pub use spectral::{Discretization, SpectralError, SpectralField};
