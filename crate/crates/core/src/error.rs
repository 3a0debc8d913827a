use thiserror::Error;

/// Failure modes shared across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// Parameter set rejected at construction.
    #[error("invalid {field}: {reason}")]
    InvalidParams {
        field: &'static str,
        reason: &'static str,
    },

    /// Two characteristic roots are closer than the degeneracy tolerance, so
    /// partial-fraction coefficients are unusable.
    #[error("characteristic roots nearly degenerate (min separation {min_separation:.3e}, scale {scale:.3e})")]
    DegenerateRoots { min_separation: f64, scale: f64 },

    /// The operation needs distinct detunings (the slow root must decay).
    #[error("equal detunings: {context}")]
    EqualDetunings { context: &'static str },

    /// The operation is defined only on the Raman-resonant line.
    #[error("detunings differ: {context}")]
    UnequalDetunings { context: &'static str },

    /// A non-decaying root carries weight in an integral that must converge.
    /// The dark-state residue should vanish identically; anything above
    /// 1e-12 signals a real inconsistency, not roundoff.
    #[error("non-vanishing dark residue |c| = {magnitude:.3e}")]
    NonVanishingDarkResidue { magnitude: f64 },

    /// Adaptive integrator drove the step below 1e-14 * t.
    #[error("step underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    /// Waiting-time inversion did not converge within the iteration budget.
    #[error("waiting-time inversion failed: {context}")]
    RootSolveFailure { context: &'static str },

    /// Count record violates strict time ordering or the horizon bound.
    #[error("count record invalid at event {index}: {reason}")]
    UnsortedRecord { index: usize, reason: &'static str },

    /// Catch-all for conditions that leave no finite result.
    #[error("numerical failure: {context}")]
    NumericalFailure { context: &'static str },
}
