//! Pseudo-spectral simulation and decay analysis for the dissipative plate
//! equation `u_tt - Delta u_tt + sum_ij b^{ij}(d^2 u)_{x_i x_j} + u_t = 0` on a
//! periodic box.

pub mod analysis;
pub mod continuum;
pub mod error;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod solver;
pub mod symbols;

pub use analysis::{
    data_norms, fit_rate, linfty_integrals, optimal_decay_norms, profile_error, regularity_indices,
    weighted_energy_norms, DataNorms, NormDescriptor, NormKind, NormSeries, Quantity, RateFit,
    RegularityIndices,
};
pub use continuum::{continuum_norm_quadrature, DataProfile, Propagated};
pub use error::{Error, Result};
pub use grid::{GridSpec, LpNorm, SpectralField};
pub use model::{evaluate_nonlinear_term, FluxForm, MaterialModel, ValidationReport};
pub use solver::{
    energy_monitor, positivity_check, run, step_duhamel, Diagnostics, EnergyReport, Integrator,
    IntegratorConfig, RunAbort, Scheme, SimulationState, Trajectory,
};
pub use symbols::{eigenvalues, g0_symbol, SymbolTable};
