//! Stabilized BDF integrators (orders 1 to 4) for semilinear
//! reaction-diffusion problems on uniform 2-D grids.
//!
//! The implicit step is solved by a matrix-free Jacobi fixed-point sweep
//! whose contraction factor stays below one for every step size, and each
//! sweep is clamped to the model's bound interval. Dense oracles for small
//! grids live in [`reference`].

pub mod energy;
pub mod engine;
pub mod error;
pub mod grid;
pub mod model;
pub mod reference;
pub mod scheme;
pub mod snapshot;

pub use engine::{
    bootstrap, cutoff, fpi_update, history_term, step, step_with_observer, BootstrapReport,
    FixedPointMap, History, Integrator, IterateView, State, StepConfig, StepReport,
};
pub use error::{Result, SbdfError};
pub use grid::{
    apply_laplacian, grad_inner, grad_norm_sq, inner, l2_distance, l2_norm, linf_norm,
    neighbor_sum, BoundarySpec, EdgeCondition, Field, GridSpec,
};
pub use model::{
    ac_initial, ac_reaction, allen_cahn, Bounds, ComponentSpec, NonlinearModel, ReactionSystem,
};
pub use scheme::{
    backward_difference, contraction_factor, scheme_coeffs, stopping_tolerance, SchemeCoeffs,
};
