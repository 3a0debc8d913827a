//! Counting statistics and quantum-jump simulation for a driven three-level
//! lambda atom under continuous photon detection.
//!
//! The crate is organised around the conditional no-count evolution of the
//! amplitude vector (excited level plus the two lower levels):
//!
//! - [`model`] — system parameters, the drive Hamiltonian, and the
//!   non-Hermitian no-count generator;
//! - [`propagator`] — roots of the characteristic cubic, the residue
//!   (partial-fraction) decomposition of the propagator, and an adaptive
//!   integrator for degenerate corners;
//! - [`statistics`] — survival probabilities, waiting-time densities,
//!   emission and trapping weights, and the short/long decomposition that
//!   captures intermittent fluorescence;
//! - [`trajectory`] — a quantum-jump Monte Carlo sampler with deterministic
//!   parallel ensembles, interval classification, and trajectory densities.

pub mod error;
pub mod model;
pub mod propagator;
pub mod statistics;
pub mod trajectory;

pub use error::CoreError;
pub use model::{
    build_generator, build_hamiltonian, Channel, ComplexMatrix3, Level, SystemParams,
    DEFAULT_REGIME_RATIO,
};
pub use propagator::{
    approx_roots, characteristic_coefficients, characteristic_roots, equal_detuning_roots,
    evolve_analytic, evolve_analytic_or_ode, evolve_ode, Amplitudes, AnalyticPropagator,
    ApproxRoots, RootTriple, ODE_DEFAULT_TOL,
};
pub use statistics::{
    emission_probability, emission_probability_quadrature, in_default_regime, no_count_probability,
    pi_shelving_asymptotic, short_long_split, t_short_shelving_asymptotic, trapping_mass,
    waiting_density, waiting_pdf, SurvivalCurve, SurvivalEval, WaitingDecomposition,
    QUADRATURE_DEFAULT_TOL,
};
pub use trajectory::{
    classify_intervals, ensemble_records, ensemble_run, sample_waiting, simulate_trajectory,
    trajectory_density, CountEvent, CountRecord, EnsembleStats, GapStats, HistogramSpec,
    IntervalClasses, RngKey, SampleOutcome, WaitingHistogram, WaitingSampler,
};
