//! Closed-form counting statistics for the no-count evolution: survival
//! probabilities, waiting-time densities, total emission probability,
//! trapping weights, and the decomposition of the waiting-time density into
//! a fast ("short") and a slow ("long") component.
//!
//! All quantities here describe the delay until the *next* detector click
//! given a start in a lower level. The survival probability is the squared
//! norm of the conditionally evolved amplitude vector, and the density of
//! clicks in channel j is gamma_j times the squared excited-state amplitude.
//! Everything is spanned by the three roots of the characteristic cubic, so
//! the closed forms below are finite sums over root pairs; degenerate root
//! configurations fall back to direct numerical integration.

use num_complex::Complex64 as C64;

use crate::error::CoreError;
use crate::model::{build_generator, Channel, Level, SystemParams, DEFAULT_REGIME_RATIO};
use crate::propagator::{rk45_integrate, AnalyticPropagator};

/// Roots whose real part is this small relative to the parameter scale are
/// treated as non-decaying when splitting the waiting-time density.
const DARK_RATE_TOLERANCE: f64 = 1e-15;

/// Residue magnitude below which a non-decaying root pair is accepted as an
/// exact dark state when integrating the click density.
const DARK_RESIDUE_TOLERANCE: f64 = 1e-12;

/// Default local-error tolerance for the quadrature fallback.
pub const QUADRATURE_DEFAULT_TOL: f64 = 1e-10;

/// Survival probability and click densities for one initial level, with the
/// root-pair sums precomputed. Construction fails on (numerically)
/// degenerate roots; use [`no_count_probability`] / [`waiting_density`] for
/// the variants that fall back to direct integration.
#[derive(Debug, Clone)]
pub struct SurvivalCurve {
    gamma: f64,
    roots: [C64; 3],
    /// Excited-amplitude coefficients: a0(t) = sum_i a0_coeff[i] exp(z_i t).
    a0_coeff: [C64; 3],
    /// Diagonal survival terms (2 Re z_i, G_ii) with G_ii >= 0.
    diag: [(f64, f64); 3],
    /// Off-diagonal survival terms (z_i + conj(z_l), G_il) for i < l,
    /// entering the curve as 2 Re(G exp(e t)).
    cross: [(C64, C64); 3],
    trapped: f64,
}

impl SurvivalCurve {
    pub fn new(p: &SystemParams, from: Level) -> Result<Self, CoreError> {
        let prop = AnalyticPropagator::new(p)?;
        Ok(Self::from_propagator(p, &prop, from))
    }

    /// Build from an existing propagator (shared root work when both initial
    /// levels are needed).
    pub fn from_propagator(p: &SystemParams, prop: &AnalyticPropagator, from: Level) -> Self {
        let roots = prop.roots();
        let k = from.index();
        let coeff = [
            prop.amplitude_coefficients(0, k),
            prop.amplitude_coefficients(1, k),
            prop.amplitude_coefficients(2, k),
        ];
        // G_il = sum over amplitude components j of C_j^i conj(C_j^l).
        let gram =
            |i: usize, l: usize| -> C64 { (0..3).map(|j| coeff[j][i] * coeff[j][l].conj()).sum() };
        let diag = [
            (2.0 * roots[0].re, gram(0, 0).re),
            (2.0 * roots[1].re, gram(1, 1).re),
            (2.0 * roots[2].re, gram(2, 2).re),
        ];
        let cross = [
            (roots[0] + roots[1].conj(), gram(0, 1)),
            (roots[0] + roots[2].conj(), gram(0, 2)),
            (roots[1] + roots[2].conj(), gram(1, 2)),
        ];
        SurvivalCurve {
            gamma: p.gamma_total(),
            roots,
            a0_coeff: coeff[0],
            diag,
            cross,
            trapped: trapping_mass(p, from),
        }
    }

    /// Probability that no click has occurred by time t.
    pub fn survival(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for &(rate, g) in &self.diag {
            s += g * (rate * t).exp();
        }
        for &(e, g) in &self.cross {
            s += 2.0 * (g * (e * t).exp()).re;
        }
        s.clamp(0.0, 1.0)
    }

    /// Conditional excited-state amplitude at time t.
    pub fn amplitude0(&self, t: f64) -> C64 {
        self.a0_coeff[0] * (self.roots[0] * t).exp()
            + self.a0_coeff[1] * (self.roots[1] * t).exp()
            + self.a0_coeff[2] * (self.roots[2] * t).exp()
    }

    /// Total waiting-time density (all channels) at t.
    pub fn waiting_pdf(&self, t: f64) -> f64 {
        self.gamma * self.amplitude0(t).norm_sqr()
    }

    /// Limit of the survival probability at infinite time: the weight left
    /// behind in non-decaying superpositions.
    pub fn trapped_mass(&self) -> f64 {
        self.trapped
    }

    /// Cumulative click probability by time t, i.e. 1 - survival(t).
    pub fn cumulative(&self, t: f64) -> f64 {
        (1.0 - self.survival(t)).clamp(0.0, 1.0)
    }
}

/// Evaluation route actually used for a survival/density query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalEval {
    /// Root-pair closed form.
    Closed,
    /// Adaptive integration fallback (degenerate roots).
    Ode,
}

/// Probability that no photon has been detected by time t starting from the
/// given lower level. Falls back to direct integration when the root
/// decomposition is degenerate.
pub fn no_count_probability(
    p: &SystemParams,
    from: Level,
    t: f64,
) -> Result<(f64, SurvivalEval), CoreError> {
    match SurvivalCurve::new(p, from) {
        Ok(curve) => Ok((curve.survival(t), SurvivalEval::Closed)),
        Err(CoreError::DegenerateRoots { .. }) => {
            let a = crate::propagator::evolve_analytic_or_ode(p, from, t)?;
            Ok((a.norm_sqr().clamp(0.0, 1.0), SurvivalEval::Ode))
        }
        Err(e) => Err(e),
    }
}

/// Density of the first click in the given channel at delay t.
pub fn waiting_density(
    p: &SystemParams,
    from: Level,
    channel: Channel,
    t: f64,
) -> Result<(f64, SurvivalEval), CoreError> {
    match SurvivalCurve::new(p, from) {
        Ok(curve) => Ok((
            p.gamma_of(channel) * curve.amplitude0(t).norm_sqr(),
            SurvivalEval::Closed,
        )),
        Err(CoreError::DegenerateRoots { .. }) => {
            let a = crate::propagator::evolve_analytic_or_ode(p, from, t)?;
            Ok((
                p.gamma_of(channel) * a.as_array()[0].norm_sqr(),
                SurvivalEval::Ode,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Density of the first click summed over channels.
pub fn waiting_pdf(
    p: &SystemParams,
    from: Level,
    t: f64,
) -> Result<(f64, SurvivalEval), CoreError> {
    let (mut d, eval) = waiting_density(p, from, Channel::Blue, t)?;
    // Same amplitude, different prefactor; rescale instead of re-evolving.
    d *= p.gamma_total() / p.gamma_of(Channel::Blue).max(f64::MIN_POSITIVE);
    if p.gamma_of(Channel::Blue) == 0.0 {
        let (r, _) = waiting_density(p, from, Channel::Red, t)?;
        return Ok((r, eval));
    }
    Ok((d, eval))
}

/// Weight of the initial state on the non-decaying (dark) stationary
/// superpositions: the probability that no click ever arrives.
///
/// For equal detunings the two driving fields share a dark superposition of
/// the lower levels; its overlap with a basis level is a ratio of squared
/// Rabi frequencies. For unequal detunings a dark state exists only when one
/// of the couplings vanishes, in which case the undriven level is itself
/// stationary.
pub fn trapping_mass(p: &SystemParams, from: Level) -> f64 {
    let (o1, o2) = (p.omega1(), p.omega2());
    if p.delta1() == p.delta2() {
        let osq = o1 * o1 + o2 * o2;
        if osq == 0.0 {
            return 1.0;
        }
        match from {
            Level::One => o2 * o2 / osq,
            Level::Two => o1 * o1 / osq,
        }
    } else {
        let own = match from {
            Level::One => o1,
            Level::Two => o2,
        };
        if own == 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Closed-form integral of the click density over all delays, given the
/// excited-amplitude coefficients and roots. Root pairs that do not decay
/// must carry negligible residue; otherwise the integral diverges and the
/// input is rejected.
fn emission_closed(gamma: f64, roots: &[C64; 3], coeff: &[C64; 3]) -> Result<f64, CoreError> {
    let mut total = 0.0f64;
    for i in 0..3 {
        for l in 0..3 {
            let denom = roots[i] + roots[l].conj();
            let weight = coeff[i] * coeff[l].conj();
            if denom.re >= 0.0 {
                // Non-decaying pair: admissible only as an exact dark state.
                let mag = weight.norm();
                if mag <= DARK_RESIDUE_TOLERANCE {
                    continue;
                }
                return Err(CoreError::NonVanishingDarkResidue { magnitude: mag });
            }
            total -= (weight / denom).re;
        }
    }
    Ok((gamma * total).clamp(0.0, 1.0))
}

/// Probability that a click ever arrives when starting from the given lower
/// level. Equals one minus the trapped mass. Uses the root-pair closed form;
/// degenerate root configurations are integrated numerically instead.
pub fn emission_probability(p: &SystemParams, from: Level) -> Result<f64, CoreError> {
    match AnalyticPropagator::new(p) {
        Ok(prop) => {
            let roots = prop.roots();
            let k = from.index();
            let coeff = prop.amplitude_coefficients(0, k);
            emission_closed(p.gamma_total(), &roots, &coeff)
        }
        Err(CoreError::DegenerateRoots { .. }) => {
            emission_probability_quadrature(p, from, QUADRATURE_DEFAULT_TOL)
        }
        Err(e) => Err(e),
    }
}

/// Click probability by direct integration of the density: the no-count
/// system is augmented with the running integral of gamma |a0|^2 and driven
/// to a horizon of 50 slowest-decay times, after which an exponential tail
/// estimate is added. Exposed for cross-checking the closed form.
pub fn emission_probability_quadrature(
    p: &SystemParams,
    from: Level,
    tol: f64,
) -> Result<f64, CoreError> {
    let roots = crate::propagator::characteristic_roots(p).as_array();
    let scale = p.scale();
    let decaying: Vec<f64> = roots
        .iter()
        .map(|z| z.re.abs())
        .filter(|r| *r > DARK_RATE_TOLERANCE * scale)
        .collect();
    let Some(slowest) = decaying.iter().cloned().reduce(f64::min) else {
        // Both couplings off: the excited level is never populated.
        return Ok(0.0);
    };
    let horizon = 50.0 / slowest;

    let k = build_generator(p);
    let gamma = p.gamma_total();
    // State layout: conditional amplitudes a0..a2, then the accumulated
    // click probability in the real part of the fourth component.
    let deriv = |y: &[C64; 4]| {
        let a = [y[0], y[1], y[2]];
        let v = k.mul_vec(&a);
        [-v[0], -v[1], -v[2], C64::new(gamma * y[0].norm_sqr(), 0.0)]
    };
    let mut init = [C64::new(0.0, 0.0); 4];
    init[from.index()] = C64::new(1.0, 0.0);
    let y = rk45_integrate(deriv, init, horizon, tol, k.max_abs() + gamma)?;
    // Residual density decays at least as fast as the slowest mode pair.
    let tail = gamma * y[0].norm_sqr() / (2.0 * slowest);
    Ok((y[3].re + tail).clamp(0.0, 1.0))
}

/// Split of the waiting-time density into a slow exponential tail carried by
/// the least-damped root and the fast remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingDecomposition {
    /// Total weight of the slow component: probability that the next click
    /// is delayed by a macroscopic dark period.
    pub pi: f64,
    /// Mean delay conditioned on the fast component.
    pub t_short: f64,
    /// Decay time of the slow component, 1 / rate_long.
    pub t_long: f64,
    /// Classification threshold between short and long delays.
    pub theta: f64,
    /// Decay rate of the slow component, 2 |Re z1|.
    pub rate_long: f64,
    /// Set when no threshold separates the fast and slow scales by the
    /// required margin, i.e. the parameters are outside the intermittent
    /// regime and the split is not meaningful.
    pub regime_warning: bool,
}

/// Margin demanded on both sides of the classification threshold.
const THETA_MARGIN: f64 = 10.0;

/// Decompose the waiting-time density from the given level into its slow
/// (least-damped root) and fast components.
///
/// Requires unequal detunings: with equal detunings the slow root does not
/// decay at all and the density has a genuinely trapped weight instead of a
/// long tail. Degenerate root configurations are rejected because the
/// residue decomposition is ill-conditioned there.
pub fn short_long_split(p: &SystemParams, from: Level) -> Result<WaitingDecomposition, CoreError> {
    if p.delta1() == p.delta2() {
        return Err(CoreError::EqualDetunings {
            context: "waiting-time split",
        });
    }
    let prop = AnalyticPropagator::new(p)?;
    let roots = prop.roots();
    let scale = p.scale();
    if roots[0].re.abs() <= DARK_RATE_TOLERANCE * scale {
        // A non-decaying slow root (e.g. an undriven level) leaves nothing
        // to split: the "long" component never terminates.
        return Err(CoreError::EqualDetunings {
            context: "slow root does not decay",
        });
    }
    let gamma = p.gamma_total();
    let coeff = prop.amplitude_coefficients(0, from.index());

    let rate_long = 2.0 * roots[0].re.abs();
    let pi = (gamma * coeff[0].norm_sqr() / rate_long).clamp(0.0, 1.0);
    let emission = emission_closed(gamma, &roots, &coeff)?;

    // First moment of the full density minus the slow part:
    // integral of t * gamma |a0|^2 = gamma sum_il Re[c_i conj(c_l) / (z_i + conj z_l)^2].
    let mut first_moment = 0.0f64;
    for i in 0..3 {
        for l in 0..3 {
            let denom = roots[i] + roots[l].conj();
            first_moment += (coeff[i] * coeff[l].conj() / (denom * denom)).re;
        }
    }
    first_moment *= gamma;
    let long_first_moment = gamma * coeff[0].norm_sqr() / (rate_long * rate_long);
    let short_first_moment = first_moment - long_first_moment;

    let short_weight = emission - pi;
    if short_weight.is_nan() || short_weight <= 0.0 {
        return Err(CoreError::NumericalFailure {
            context: "fast component carries no weight",
        });
    }
    let t_short = short_first_moment / short_weight;
    let t_long = 1.0 / rate_long;

    let t_fast = 1.0 / (2.0 * roots[1].re.abs());
    let lo = THETA_MARGIN * t_fast;
    let hi = t_long / THETA_MARGIN;
    let regime_warning = lo > hi;
    let theta = if regime_warning {
        (t_fast * t_long).sqrt()
    } else {
        (t_fast * t_long).sqrt().clamp(lo, hi)
    };

    Ok(WaitingDecomposition {
        pi,
        t_short,
        t_long,
        theta,
        rate_long,
        regime_warning,
    })
}

/// Leading-order estimate of the slow-component weight deep in the
/// intermittent regime (strong transition driven near resonance, weak
/// transition far slower than the strong decay).
pub fn pi_shelving_asymptotic(p: &SystemParams) -> f64 {
    let (o1, o2) = (p.omega1(), p.omega2());
    let d2 = p.delta2();
    let gamma = p.gamma_total();
    let a = o1 * o1 - 4.0 * d2 * d2;
    let denom = a * a + 4.0 * gamma * gamma * d2 * d2;
    if denom == 0.0 {
        return f64::INFINITY;
    }
    o1 * o1 * o2 * o2 / denom
}

/// Leading-order estimate of the fast-component mean delay in the same
/// regime: the strong transition's recycling time.
pub fn t_short_shelving_asymptotic(p: &SystemParams) -> f64 {
    let gamma = p.gamma_total();
    let o1 = p.omega1();
    if gamma == 0.0 || o1 == 0.0 {
        return f64::INFINITY;
    }
    gamma / (o1 * o1) + 2.0 / gamma
}

/// True when the parameters sit in the intermittent regime at the default
/// separation ratio.
pub fn in_default_regime(p: &SystemParams) -> bool {
    p.in_shelving_regime(DEFAULT_REGIME_RATIO)
}
