//! No-count propagator exp(-K t): characteristic roots, closed-form
//! partial-fraction evolution, and an adaptive ODE integrator as the
//! independent numerical route.
//!
//! The amplitudes a_j(t) of exp(-K t)|k> obey a'_j = -sum_l K[j][l] a_l.
//! Their Laplace transform is adj(sI + K)[j][k] / chi(s), with
//!
//!   chi(z) = (z + G/2)(z + i d1)(z + i d2)
//!          + (O1^2/4)(z + i d2) + (O2^2/4)(z + i d1),
//!
//! so every amplitude is a sum of three exponentials exp(z_i t) over the
//! roots of chi as long as the roots are distinct.

use num_complex::Complex64 as C64;

use crate::error::CoreError;
use crate::model::{build_generator, ComplexMatrix3, Level, SystemParams, DEFAULT_REGIME_RATIO};

/// Two roots closer than this fraction of the largest root magnitude mark
/// the triple as degenerate and disable the partial-fraction route.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Roots of the characteristic cubic, ordered so that `z1` is the slow
/// (metastable) root: smallest |Re z| first, ties broken by smaller |Im z|,
/// then by ascending Im z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootTriple {
    pub z1: C64,
    pub z2: C64,
    pub z3: C64,
    /// Smallest pairwise distance between roots.
    pub min_separation: f64,
    /// True when `min_separation` < 1e-6 * max |z_i|.
    pub degenerate: bool,
}

impl RootTriple {
    fn from_unordered(mut zs: [C64; 3]) -> Self {
        zs.sort_by(|a, b| {
            (a.re.abs(), a.im.abs(), a.im)
                .partial_cmp(&(b.re.abs(), b.im.abs(), b.im))
                .expect("root ordering: NaN root")
        });
        let min_separation = (zs[0] - zs[1])
            .norm()
            .min((zs[0] - zs[2]).norm())
            .min((zs[1] - zs[2]).norm());
        let scale = zs[0].norm().max(zs[1].norm()).max(zs[2].norm());
        let degenerate = min_separation < DEGENERACY_TOLERANCE * scale.max(f64::MIN_POSITIVE);
        RootTriple {
            z1: zs[0],
            z2: zs[1],
            z3: zs[2],
            min_separation,
            degenerate,
        }
    }

    pub fn as_array(&self) -> [C64; 3] {
        [self.z1, self.z2, self.z3]
    }
}

/// Monic coefficients of the characteristic cubic z^3 + c2 z^2 + c1 z + c0.
pub fn characteristic_coefficients(p: &SystemParams) -> (C64, C64, C64) {
    let g = p.gamma_total();
    let (d1, d2) = (p.delta1(), p.delta2());
    let (o1s, o2s) = (p.omega1() * p.omega1(), p.omega2() * p.omega2());
    let c2 = c(0.5 * g, d1 + d2);
    let c1 = c(-d1 * d2 + 0.25 * (o1s + o2s), 0.5 * g * (d1 + d2));
    let c0 = c(-0.5 * g * d1 * d2, 0.25 * (o1s * d2 + o2s * d1));
    (c2, c1, c0)
}

/// Evaluate the characteristic cubic at z (Horner form).
pub fn characteristic_value(p: &SystemParams, z: C64) -> C64 {
    let (c2, c1, c0) = characteristic_coefficients(p);
    ((z + c2) * z + c1) * z + c0
}

/// Stable roots of z^2 + b z + c: the root farther from cancellation is
/// taken from the quadratic formula, the other from the product identity.
fn quadratic_roots(b: C64, cc: C64) -> (C64, C64) {
    let disc = (b * b - cc * 4.0).sqrt();
    let s = if (b.conj() * disc).re >= 0.0 {
        disc
    } else {
        -disc
    };
    let q = -(b + s) * 0.5;
    if q.norm() > 0.0 {
        (q, cc / q)
    } else {
        (q, -b - q)
    }
}

/// Durand-Kerner iteration with Newton polish on the scaled monic cubic.
/// Used for the generic parameter case; structural factorizations below
/// bypass it when a root is known exactly.
fn cubic_roots_iterative(c2: C64, c1: C64, c0: C64) -> [C64; 3] {
    // Rescale z = s w so the coefficients of the w-cubic are O(1).
    let s = 1.0_f64
        .max(c2.norm())
        .max(c1.norm().sqrt())
        .max(c0.norm().cbrt());
    let b2 = c2 / s;
    let b1 = c1 / (s * s);
    let b0 = c0 / (s * s * s);
    let poly = |w: C64| ((w + b2) * w + b1) * w + b0;
    let dpoly = |w: C64| (w * 3.0 + b2 * 2.0) * w + b1;

    let seed = c(0.4, 0.9);
    let mut w = [seed, seed * seed, seed * seed * seed];
    for _ in 0..120 {
        let mut max_step = 0.0f64;
        for i in 0..3 {
            let mut den = c(1.0, 0.0);
            for j in 0..3 {
                if j != i {
                    den *= w[i] - w[j];
                }
            }
            if den.norm() == 0.0 {
                // Collided iterates: nudge apart and continue.
                w[i] += c(1e-8, 1e-8);
                continue;
            }
            let step = poly(w[i]) / den;
            w[i] -= step;
            max_step = max_step.max(step.norm() / (1.0 + w[i].norm()));
        }
        if max_step < 1e-16 {
            break;
        }
    }
    // Newton polish sharpens simple roots to full precision.
    for wi in &mut w {
        for _ in 0..2 {
            let d = dpoly(*wi);
            if d.norm() > 0.0 {
                let step = poly(*wi) / d;
                if step.norm() < 0.5 * (1.0 + wi.norm()) {
                    *wi -= step;
                }
            }
        }
    }
    [w[0] * s, w[1] * s, w[2] * s]
}

/// All three characteristic roots. Exact factorizations are used whenever
/// the cubic splits structurally:
///   - both drives off: the generator is diagonal;
///   - equal detunings: the dark state pins one root at -i*delta;
///   - a single drive off: the decoupled level pins one root at its detuning.
///
/// Otherwise the roots come from a polished Durand-Kerner iteration.
pub fn characteristic_roots(p: &SystemParams) -> RootTriple {
    let g = p.gamma_total();
    let (d1, d2) = (p.delta1(), p.delta2());
    let zs = if p.omega1() == 0.0 && p.omega2() == 0.0 {
        [c(-0.5 * g, 0.0), c(0.0, -d1), c(0.0, -d2)]
    } else if d1 == d2 {
        // chi = (z + i d) [ z^2 + (g/2 + i d) z + i d g / 2 + (O1^2 + O2^2)/4 ]
        let osq = 0.25 * (p.omega1() * p.omega1() + p.omega2() * p.omega2());
        let (q1, q2) = quadratic_roots(c(0.5 * g, d1), c(osq, 0.5 * g * d1));
        [c(0.0, -d1), q1, q2]
    } else if p.omega2() == 0.0 {
        let osq = 0.25 * p.omega1() * p.omega1();
        let (q1, q2) = quadratic_roots(c(0.5 * g, d1), c(osq, 0.5 * g * d1));
        [c(0.0, -d2), q1, q2]
    } else if p.omega1() == 0.0 {
        let osq = 0.25 * p.omega2() * p.omega2();
        let (q1, q2) = quadratic_roots(c(0.5 * g, d2), c(osq, 0.5 * g * d2));
        [c(0.0, -d1), q1, q2]
    } else {
        let (c2, c1, c0) = characteristic_coefficients(p);
        cubic_roots_iterative(c2, c1, c0)
    };
    RootTriple::from_unordered(zs)
}

/// Closed-form root triple on the Raman-resonant line delta1 == delta2:
/// one root sits exactly at -i*delta, the other two follow from the
/// quadratic in closed form.
pub fn equal_detuning_roots(p: &SystemParams) -> Result<RootTriple, CoreError> {
    if p.delta1() != p.delta2() {
        return Err(CoreError::UnequalDetunings {
            context: "equal_detuning_roots needs delta1 == delta2",
        });
    }
    let g = p.gamma_total();
    let d = p.delta1();
    let osq = p.omega1() * p.omega1() + p.omega2() * p.omega2();
    let disc = c(g * g - 4.0 * osq - 4.0 * d * d, -4.0 * g * d).sqrt();
    let base = c(-0.25 * g, -0.5 * d);
    Ok(RootTriple::from_unordered([
        c(0.0, -d),
        base + disc * 0.25,
        base - disc * 0.25,
    ]))
}

/// Root triple from the shelving-regime perturbative formulas along with a
/// flag recording whether the parameters actually sit in that regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxRoots {
    pub roots: RootTriple,
    /// False when the parameters fail [`SystemParams::in_shelving_regime`]
    /// at the default ratio; the formulas then carry no accuracy claim.
    pub in_regime: bool,
}

/// Perturbative roots for well-separated detunings: the slow root is
/// -i*delta2 shifted by the second-order light shift zeta of the weak
/// transition, and the fast pair comes from the two-level quadratic of the
/// strong transition alone.
pub fn approx_roots(p: &SystemParams) -> Result<ApproxRoots, CoreError> {
    if p.delta1() == p.delta2() {
        return Err(CoreError::EqualDetunings {
            context: "perturbative roots expand in delta2 - delta1; use the \
                      equal-detuning closed form instead",
        });
    }
    let g = p.gamma_total();
    let g1 = p.gamma1();
    let (d1, d2) = (p.delta1(), p.delta2());
    let dd = d2 - d1;
    let o1s = p.omega1() * p.omega1();
    let o2s = p.omega2() * p.omega2();

    let a = o1s - 4.0 * d2 * d2 + 4.0 * d1 * d2;
    let den = a * a + 4.0 * g1 * g1 * dd * dd;
    if den == 0.0 {
        return Err(CoreError::NumericalFailure {
            context: "slow-root shift denominator vanished",
        });
    }
    let zeta = c(-2.0 * g1 * dd, a) * (o2s * dd / den);
    let z1 = c(0.0, -d2) + zeta;

    let disc = c(g * g - 4.0 * o1s - 4.0 * d1 * d1, -4.0 * g * d1).sqrt();
    let base = c(-0.25 * g, -0.5 * d1);
    let roots = RootTriple::from_unordered([z1, base + disc * 0.25, base - disc * 0.25]);
    Ok(ApproxRoots {
        roots,
        in_regime: p.in_shelving_regime(DEFAULT_REGIME_RATIO),
    })
}

/// Amplitude vector of the conditioned (unnormalized) state in the
/// (|0>, |1>, |2>) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitudes {
    pub a0: C64,
    pub a1: C64,
    pub a2: C64,
}

impl Amplitudes {
    pub fn new(a0: C64, a1: C64, a2: C64) -> Self {
        Amplitudes { a0, a1, a2 }
    }

    /// Basis state |k> for a lower level.
    pub fn basis(level: Level) -> Self {
        match level {
            Level::One => Amplitudes::new(ZERO, c(1.0, 0.0), ZERO),
            Level::Two => Amplitudes::new(ZERO, ZERO, c(1.0, 0.0)),
        }
    }

    pub fn from_array(a: [C64; 3]) -> Self {
        Amplitudes::new(a[0], a[1], a[2])
    }

    pub fn as_array(&self) -> [C64; 3] {
        [self.a0, self.a1, self.a2]
    }

    /// Squared norm, i.e. the survival probability carried by this state.
    pub fn norm_sqr(&self) -> f64 {
        self.a0.norm_sqr() + self.a1.norm_sqr() + self.a2.norm_sqr()
    }

    pub fn max_abs_diff(&self, other: &Amplitudes) -> f64 {
        (self.a0 - other.a0)
            .norm()
            .max((self.a1 - other.a1).norm())
            .max((self.a2 - other.a2).norm())
    }
}

/// Adjugate of (sI + K) evaluated at s; symmetric because K is complex
/// symmetric. Dividing column k by chi'(z_i) gives the partial-fraction
/// residue of amplitude j for initial state |k>.
fn adjugate_at(p: &SystemParams, s: C64) -> ComplexMatrix3 {
    let g = p.gamma_total();
    let (o1, o2) = (p.omega1(), p.omega2());
    let (d1, d2) = (p.delta1(), p.delta2());
    let f1 = s + c(0.0, d1);
    let f2 = s + c(0.0, d2);
    let f0 = s + c(0.5 * g, 0.0);
    let mut m = ComplexMatrix3::zeros();
    m.0[0][0] = f1 * f2;
    m.0[0][1] = c(0.0, -0.5 * o1) * f2;
    m.0[1][0] = m.0[0][1];
    m.0[0][2] = c(0.0, -0.5 * o2) * f1;
    m.0[2][0] = m.0[0][2];
    m.0[1][1] = f0 * f2 + c(0.25 * o2 * o2, 0.0);
    m.0[1][2] = c(-0.25 * o1 * o2, 0.0);
    m.0[2][1] = m.0[1][2];
    m.0[2][2] = f0 * f1 + c(0.25 * o1 * o1, 0.0);
    m
}

/// Cached partial-fraction form of exp(-K t): three residue matrices R_i
/// with exp(-K t) = sum_i R_i exp(z_i t). Construction fails when the root
/// triple is degenerate.
#[derive(Debug, Clone)]
pub struct AnalyticPropagator {
    roots: [C64; 3],
    residues: [ComplexMatrix3; 3],
}

impl AnalyticPropagator {
    pub fn new(p: &SystemParams) -> Result<Self, CoreError> {
        let triple = characteristic_roots(p);
        Self::from_roots(p, &triple)
    }

    pub fn from_roots(p: &SystemParams, triple: &RootTriple) -> Result<Self, CoreError> {
        if triple.degenerate {
            return Err(CoreError::DegenerateRoots {
                min_separation: triple.min_separation,
                scale: p.scale(),
            });
        }
        let zs = triple.as_array();
        let mut residues = [ComplexMatrix3::zeros(); 3];
        for i in 0..3 {
            let mut dchi = c(1.0, 0.0);
            for l in 0..3 {
                if l != i {
                    dchi *= zs[i] - zs[l];
                }
            }
            residues[i] = adjugate_at(p, zs[i]).scale(dchi.inv());
        }
        Ok(AnalyticPropagator {
            roots: zs,
            residues,
        })
    }

    pub fn roots(&self) -> [C64; 3] {
        self.roots
    }

    pub fn residues(&self) -> &[ComplexMatrix3; 3] {
        &self.residues
    }

    /// Residue coefficients of amplitude `j` starting from basis state `k`:
    /// a_j(t) = sum_i coeff[i] exp(z_i t).
    pub fn amplitude_coefficients(&self, j: usize, k: usize) -> [C64; 3] {
        [
            self.residues[0].0[j][k],
            self.residues[1].0[j][k],
            self.residues[2].0[j][k],
        ]
    }

    /// Dense matrix of exp(-K t).
    pub fn matrix(&self, t: f64) -> ComplexMatrix3 {
        let e = self.exponentials(t);
        let mut m = ComplexMatrix3::zeros();
        for (residue, ei) in self.residues.iter().zip(e) {
            for r in 0..3 {
                for s in 0..3 {
                    m.0[r][s] += residue.0[r][s] * ei;
                }
            }
        }
        m
    }

    /// Apply exp(-K t) to an amplitude vector.
    pub fn apply(&self, a: &Amplitudes, t: f64) -> Amplitudes {
        let e = self.exponentials(t);
        let v = a.as_array();
        let mut out = [ZERO; 3];
        for (residue, ei) in self.residues.iter().zip(e) {
            let w = residue.mul_vec(&v);
            for r in 0..3 {
                out[r] += w[r] * ei;
            }
        }
        Amplitudes::from_array(out)
    }

    fn exponentials(&self, t: f64) -> [C64; 3] {
        [
            (self.roots[0] * t).exp(),
            (self.roots[1] * t).exp(),
            (self.roots[2] * t).exp(),
        ]
    }
}

/// Closed-form no-count amplitudes from lower level `from` after time `t`.
pub fn evolve_analytic(p: &SystemParams, from: Level, t: f64) -> Result<Amplitudes, CoreError> {
    let prop = AnalyticPropagator::new(p)?;
    Ok(prop.apply(&Amplitudes::basis(from), t))
}

/// Closed-form evolution where the root decomposition is well conditioned,
/// adaptive integration where it is degenerate.
pub fn evolve_analytic_or_ode(
    p: &SystemParams,
    from: Level,
    t: f64,
) -> Result<Amplitudes, CoreError> {
    match evolve_analytic(p, from, t) {
        Err(CoreError::DegenerateRoots { .. }) => {
            evolve_ode(p, &Amplitudes::basis(from), t, ODE_DEFAULT_TOL)
        }
        other => other,
    }
}

/// Default local-error-per-unit-time tolerance of [`evolve_ode`].
pub const ODE_DEFAULT_TOL: f64 = 1e-10;

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights equal the last row of A (FSAL); 4th-order weights below.
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn axpy<const N: usize>(y: &mut [C64; N], a: f64, x: &[C64; N]) {
    for i in 0..N {
        y[i] += x[i] * a;
    }
}

/// Embedded Dormand-Prince 5(4) driver for an autonomous linear system of N
/// complex components. `tol` bounds the local error per unit time; `scale`
/// sets the initial step. Shared by the propagator and the waiting-time
/// quadrature in `statistics`.
pub(crate) fn rk45_integrate<const N: usize, F: Fn(&[C64; N]) -> [C64; N]>(
    deriv: F,
    initial: [C64; N],
    t: f64,
    tol: f64,
    scale: f64,
) -> Result<[C64; N], CoreError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(CoreError::InvalidParams {
            field: "tol",
            reason: "ODE tolerance must be positive",
        });
    }
    if t.is_nan() || t < 0.0 {
        return Err(CoreError::InvalidParams {
            field: "t",
            reason: "evolution time must be nonnegative",
        });
    }
    if t == 0.0 {
        return Ok(initial);
    }

    let mut y = initial;
    let mut x = 0.0f64;
    let mut h = t.min(0.1 / (1.0 + scale));
    let h_min = 1e-14 * t;
    let mut stages = [[ZERO; N]; 7];
    let mut k0 = deriv(&y);

    for _ in 0..50_000_000u64 {
        if x >= t {
            return Ok(y);
        }
        if h < h_min {
            return Err(CoreError::StepUnderflow { t: x, h });
        }
        h = h.min(t - x);
        stages[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for j in 0..s {
                axpy(&mut ys, h * DP_A[s][j], &stages[j]);
            }
            let _ = DP_C; // stage abscissae unused: the system is autonomous
            stages[s] = deriv(&ys);
        }
        // 5th-order solution (row 7 of A) and embedded 4th-order error.
        let mut y5 = y;
        for j in 0..6 {
            axpy(&mut y5, h * DP_A[6][j], &stages[j]);
        }
        let mut y4 = y;
        for (j, b) in DP_B4.iter().enumerate() {
            axpy(&mut y4, h * b, &stages[j]);
        }
        let mut err = 0.0f64;
        for i in 0..N {
            err = err.max((y5[i] - y4[i]).norm());
        }
        let budget = tol * h;
        if err <= budget {
            x += h;
            y = y5;
            // FSAL: last stage of an accepted step is the next first stage.
            k0 = stages[6];
        }
        let ratio = if err > 0.0 {
            (budget / err).powf(0.2)
        } else {
            5.0
        };
        h *= (0.9 * ratio).clamp(0.2, 5.0);
    }
    Err(CoreError::NumericalFailure {
        context: "ODE step budget exhausted",
    })
}

/// Integrate the no-count equation of motion a' = -K a from an arbitrary
/// initial amplitude vector with an embedded Dormand-Prince 5(4) pair.
/// `tol` bounds the local error per unit time. Errors with `StepUnderflow`
/// if the controller drives the step below 1e-14 * t.
pub fn evolve_ode(
    p: &SystemParams,
    initial: &Amplitudes,
    t: f64,
    tol: f64,
) -> Result<Amplitudes, CoreError> {
    let k = build_generator(p);
    let deriv = |a: &[C64; 3]| {
        let v = k.mul_vec(a);
        [-v[0], -v[1], -v[2]]
    };
    rk45_integrate(deriv, initial.as_array(), t, tol, k.max_abs()).map(Amplitudes::from_array)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Level;

    fn params(o1: f64, o2: f64, d1: f64, d2: f64, g1: f64, g2: f64) -> SystemParams {
        SystemParams::new(o1, o2, d1, d2, g1, g2).unwrap()
    }

    #[test]
    fn decoupled_roots_are_exact_and_ordered() {
        // Both drives off: pure decay plus two phase rotations. The slow
        // root with the smaller |Im| must come first.
        let p = params(0.0, 0.0, 0.3, 0.7, 1.0, 0.0);
        let r = characteristic_roots(&p);
        assert_eq!(r.z1, c(0.0, -0.3));
        assert_eq!(r.z2, c(0.0, -0.7));
        assert_eq!(r.z3, c(-0.5, 0.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn equal_detuning_root_is_pinned() {
        let p = params(3.0, 4.0, 0.2, 0.2, 1.0, 0.1);
        let r = characteristic_roots(&p);
        assert_eq!(r.z1, c(0.0, -0.2));
        // Remaining pair must match the closed form.
        let e = equal_detuning_roots(&p).unwrap();
        assert!((r.z2 - e.z2).norm() < 1e-14);
        assert!((r.z3 - e.z3).norm() < 1e-14);
        // And satisfy the cubic.
        for z in [r.z2, r.z3] {
            assert!(characteristic_value(&p, z).norm() < 1e-12);
        }
        assert!(matches!(
            equal_detuning_roots(&params(3.0, 4.0, 0.1, 0.2, 1.0, 0.1)),
            Err(CoreError::UnequalDetunings { .. })
        ));
    }

    #[test]
    fn generic_roots_match_frozen_reference() {
        // Values frozen from an independent companion-matrix eigensolver.
        let p = params(1.0, 0.05, 0.0, 0.2, 1.0, 1e-3);
        let r = characteristic_roots(&p);
        let want = [
            c(-2.294_551_986_765_098_3e-4, -1.995_153_946_529_373e-1),
            c(-2.499_427_179_204_143_4e-1, -4.338_773_310_541_739e-1),
            c(-2.503_278_268_809_085e-1, 4.333_927_257_071_112e-1),
        ];
        for (got, want) in r.as_array().iter().zip(want.iter()) {
            assert!(
                (got - want).norm() < 1e-12,
                "root mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn root_residuals_and_trace_identity_hold_on_random_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = params(
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..1.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1e-3..2.0),
                rng.gen_range(0.0..0.5),
            );
            let r = characteristic_roots(&p);
            let mut sum = ZERO;
            for z in r.as_array() {
                let bound = 1e-10 * 1.0f64.max(z.norm().powi(3));
                assert!(
                    characteristic_value(&p, z).norm() <= bound,
                    "residual too large at {z} for {p:?}"
                );
                sum += z;
            }
            let want = c(-0.5 * p.gamma_total(), -(p.delta1() + p.delta2()));
            assert!((sum - want).norm() < 1e-12, "trace identity broken: {p:?}");
        }
    }

    #[test]
    fn root_set_invariant_under_transition_relabeling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let (o1, o2) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
            let (d1, d2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (g1, g2) = (rng.gen_range(0.1..2.0), rng.gen_range(0.0..0.5));
            let a = characteristic_roots(&params(o1, o2, d1, d2, g1, g2));
            let b = characteristic_roots(&params(o2, o1, d2, d1, g1, g2));
            for (za, zb) in a.as_array().iter().zip(b.as_array().iter()) {
                assert!((za - zb).norm() < 1e-10, "swap symmetry broken");
            }
        }
    }

    #[test]
    fn degenerate_pair_is_flagged() {
        // At delta = 0 and gamma = 2 sqrt(O1^2 + O2^2) the quadratic pair
        // collides exactly at -gamma/4.
        let p = params(0.6, 0.8, 0.0, 0.0, 2.0, 0.0);
        let r = characteristic_roots(&p);
        assert!(r.degenerate, "expected degenerate triple: {r:?}");
        assert!(AnalyticPropagator::new(&p).is_err());
    }

    #[test]
    fn approx_roots_deep_regime_accuracy() {
        let p = params(1.0, 1e-3, 0.0, 0.1, 1.0, 1e-4);
        let approx = approx_roots(&p).unwrap();
        assert!(approx.in_regime);
        let exact = characteristic_roots(&p);
        for (za, ze) in approx.roots.as_array().iter().zip(exact.as_array().iter()) {
            let rel = (za - ze).norm() / ze.norm();
            assert!(rel <= 1e-2, "approx root off by {rel:.2e}");
        }
    }

    #[test]
    fn approx_roots_red_drive_off_is_exact_slow_root() {
        let p = params(1.0, 0.0, 0.0, 0.2, 1.0, 1e-4);
        let approx = approx_roots(&p).unwrap();
        // zeta = 0 exactly, so the slow root is exactly -i delta2.
        assert_eq!(approx.roots.z1, c(0.0, -0.2));
    }

    #[test]
    fn approx_roots_rejects_equal_detunings() {
        let p = params(1.0, 0.01, 0.3, 0.3, 1.0, 1e-4);
        assert!(matches!(
            approx_roots(&p),
            Err(CoreError::EqualDetunings { .. })
        ));
    }

    #[test]
    fn residue_matrices_sum_to_identity() {
        let p = params(1.0, 0.05, 0.0, 0.2, 1.0, 1e-3);
        let prop = AnalyticPropagator::new(&p).unwrap();
        let sum = prop.residues()[0]
            .add(&prop.residues()[1])
            .add(&prop.residues()[2]);
        assert!(sum.sub(&ComplexMatrix3::identity()).max_abs() < 1e-12);
    }

    #[test]
    fn analytic_evolution_starts_at_the_basis_state() {
        let p = params(0.5, 5e-3, 0.0, 0.05, 1.0, 1e-4);
        for level in [Level::One, Level::Two] {
            let a = evolve_analytic(&p, level, 0.0).unwrap();
            let diff = a.max_abs_diff(&Amplitudes::basis(level));
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn decoupled_level_two_only_rotates() {
        // omega2 = 0 leaves |2> invariant up to the detuning phase.
        let p = params(1.0, 0.0, 0.0, 0.2, 1.0, 0.0);
        let t = 3.7;
        let a = evolve_analytic(&p, Level::Two, t).unwrap();
        assert!(a.a0.norm() < 1e-14);
        assert!(a.a1.norm() < 1e-14);
        let want = (c(0.0, -0.2) * t).exp();
        assert!((a.a2 - want).norm() < 1e-13);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ode_matches_analytic_on_random_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 60 {
            let p = params(
                rng.gen_range(0.05..2.0),
                rng.gen_range(0.01..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.05..2.0),
                rng.gen_range(0.0..0.3),
            );
            let roots = characteristic_roots(&p);
            if roots.degenerate {
                continue;
            }
            let t = rng.gen_range(0.01..25.0);
            for level in [Level::One, Level::Two] {
                let a = evolve_analytic(&p, level, t).unwrap();
                let b = evolve_ode(&p, &Amplitudes::basis(level), t, ODE_DEFAULT_TOL).unwrap();
                let diff = a.max_abs_diff(&b);
                assert!(diff <= 1e-8, "route mismatch {diff:.2e} at t={t}: {p:?}");
            }
            checked += 1;
        }
    }

    #[test]
    fn ode_decoupled_phase_evolution() {
        let p = params(0.0, 0.0, 0.5, 0.0, 1.0, 0.0);
        let t = 2.0;
        let a = evolve_ode(&p, &Amplitudes::basis(Level::One), t, 1e-12).unwrap();
        let want = (c(0.0, -0.5) * t).exp();
        assert!((a.a1 - want).norm() < 1e-10);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ode_norm_never_increases() {
        let p = params(1.0, 0.4, 0.3, -0.2, 1.0, 0.2);
        let mut prev = 1.0f64;
        for i in 1..=40 {
            let t = 0.25 * i as f64;
            let n = evolve_ode(&p, &Amplitudes::basis(Level::One), t, 1e-11)
                .unwrap()
                .norm_sqr();
            assert!(n <= prev + 1e-9, "norm grew: {n} > {prev}");
            prev = n;
        }
    }

    #[test]
    fn ode_unreachable_tolerance_underflows() {
        let p = params(1.0, 0.4, 0.3, -0.2, 1.0, 0.2);
        let got = evolve_ode(&p, &Amplitudes::basis(Level::One), 1.0, 1e-18);
        assert!(
            matches!(got, Err(CoreError::StepUnderflow { .. })),
            "{got:?}"
        );
    }

    #[test]
    fn degenerate_triple_still_integrates_by_ode() {
        let p = params(0.6, 0.8, 0.0, 0.0, 2.0, 0.0);
        let a = evolve_ode(&p, &Amplitudes::basis(Level::One), 5.0, 1e-10).unwrap();
        assert!(a.norm_sqr() <= 1.0 + 1e-9);
    }
}
