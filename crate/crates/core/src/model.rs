//! System parameters and operator assembly for the driven lambda atom.
//!
//! Basis order is (|0>, |1>, |2>): |0> is the excited state, |1> and |2>
//! the lower levels of the lambda. Two lasers drive |1>-|0> (blue, strong)
//! and |2>-|0> (red, weak). All quantities are dimensionless; the intended
//! convention is to quote rates in units of gamma1, but nothing enforces it.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Default ratio used by [`SystemParams::in_shelving_regime`]: each of
/// omega1/omega2, gamma1/gamma2 and gamma1/omega2 must be at least this.
pub const DEFAULT_REGIME_RATIO: f64 = 100.0;

/// Photon color of a detector click. Blue photons come from the strong
/// |0> -> |1> decay, red from the weak |0> -> |2> decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Blue,
    Red,
}

impl Channel {
    /// Basis index of the level the atom is projected into by this count.
    pub fn index(self) -> usize {
        match self {
            Channel::Blue => 1,
            Channel::Red => 2,
        }
    }

    /// Lower level the atom restarts from after this count.
    pub fn reset_level(self) -> Level {
        match self {
            Channel::Blue => Level::One,
            Channel::Red => Level::Two,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Blue => "blue",
            Channel::Red => "red",
        }
    }
}

/// One of the two lower levels, the only states the atom can restart from
/// between counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    One,
    Two,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::One => 1,
            Level::Two => 2,
        }
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index() as u8)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            1 => Ok(Level::One),
            2 => Ok(Level::Two),
            other => Err(serde::de::Error::custom(format!(
                "level index must be 1 or 2, got {other}"
            ))),
        }
    }
}

/// Dense 3x3 complex matrix, row-major. Small enough that hand-rolled
/// arithmetic beats pulling in a linear-algebra crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrix3(pub [[C64; 3]; 3]);

impl ComplexMatrix3 {
    pub fn zeros() -> Self {
        ComplexMatrix3([[C64::new(0.0, 0.0); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i][j] + other.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i][j] - other.0[i][j];
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i][j] * s;
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[C64; 3]) -> [C64; 3] {
        let mut out = [C64::new(0.0, 0.0); 3];
        for (row, o) in self.0.iter().zip(out.iter_mut()) {
            *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
        out
    }

    pub fn mul_mat(&self, other: &Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..3 {
                    acc += self.0[i][k] * other.0[k][j];
                }
                m.0[i][j] = acc;
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// Largest entry magnitude; cheap matrix norm for tolerances.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for row in &self.0 {
            for e in row {
                m = m.max(e.norm());
            }
        }
        m
    }
}

/// Physical parameters of the lambda system. Constructed through
/// [`SystemParams::new`], which enforces the invariants the rest of the
/// crate relies on (finite entries, nonnegative decay rates, at least one
/// open decay channel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    omega1: f64,
    omega2: f64,
    delta1: f64,
    delta2: f64,
    gamma1: f64,
    gamma2: f64,
}

impl SystemParams {
    pub fn new(
        omega1: f64,
        omega2: f64,
        delta1: f64,
        delta2: f64,
        gamma1: f64,
        gamma2: f64,
    ) -> Result<Self, CoreError> {
        let fields = [
            ("omega1", omega1),
            ("omega2", omega2),
            ("delta1", delta1),
            ("delta2", delta2),
            ("gamma1", gamma1),
            ("gamma2", gamma2),
        ];
        for (field, value) in fields {
            if !value.is_finite() {
                return Err(CoreError::InvalidParams {
                    field,
                    reason: "must be finite",
                });
            }
        }
        if gamma1 < 0.0 {
            return Err(CoreError::InvalidParams {
                field: "gamma1",
                reason: "decay rate must be nonnegative",
            });
        }
        if gamma2 < 0.0 {
            return Err(CoreError::InvalidParams {
                field: "gamma2",
                reason: "decay rate must be nonnegative",
            });
        }
        if gamma1 + gamma2 <= 0.0 {
            return Err(CoreError::InvalidParams {
                field: "gamma1",
                reason: "gamma1 + gamma2 must be positive",
            });
        }
        Ok(SystemParams {
            omega1,
            omega2,
            delta1,
            delta2,
            gamma1,
            gamma2,
        })
    }

    /// Escape hatch for tests that probe operator assembly outside the
    /// validated domain (e.g. the all-zero matrix).
    #[cfg(test)]
    pub(crate) fn new_unchecked(
        omega1: f64,
        omega2: f64,
        delta1: f64,
        delta2: f64,
        gamma1: f64,
        gamma2: f64,
    ) -> Self {
        SystemParams {
            omega1,
            omega2,
            delta1,
            delta2,
            gamma1,
            gamma2,
        }
    }

    pub fn omega1(&self) -> f64 {
        self.omega1
    }
    pub fn omega2(&self) -> f64 {
        self.omega2
    }
    pub fn delta1(&self) -> f64 {
        self.delta1
    }
    pub fn delta2(&self) -> f64 {
        self.delta2
    }
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }
    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    /// Total decay rate of the excited state.
    pub fn gamma_total(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    /// Decay rate feeding the given detector channel.
    pub fn gamma_of(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Blue => self.gamma1,
            Channel::Red => self.gamma2,
        }
    }

    /// Shelving-regime predicate: the red transition must be weaker than the
    /// blue one by at least `ratio` in drive, decay and saturation. Written
    /// multiplicatively so that omega2 = 0 or gamma2 = 0 counts as infinitely
    /// separated rather than dividing by zero.
    pub fn in_shelving_regime(&self, ratio: f64) -> bool {
        self.omega1 >= ratio * self.omega2
            && self.gamma1 >= ratio * self.gamma2
            && self.gamma1 >= ratio * self.omega2
    }

    /// Characteristic magnitude of the generator; used to scale tolerances.
    pub fn scale(&self) -> f64 {
        let s = (0.5 * self.gamma_total())
            .max(self.omega1.abs())
            .max(self.omega2.abs())
            .max(self.delta1.abs())
            .max(self.delta2.abs());
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// Rotating-frame Hamiltonian: each laser couples its lower level to |0>
/// with half its Rabi frequency, and each lower level carries its detuning.
pub fn build_hamiltonian(p: &SystemParams) -> ComplexMatrix3 {
    let mut h = ComplexMatrix3::zeros();
    h.0[0][1] = C64::new(0.5 * p.omega1, 0.0);
    h.0[1][0] = C64::new(0.5 * p.omega1, 0.0);
    h.0[0][2] = C64::new(0.5 * p.omega2, 0.0);
    h.0[2][0] = C64::new(0.5 * p.omega2, 0.0);
    h.0[1][1] = C64::new(p.delta1, 0.0);
    h.0[2][2] = C64::new(p.delta2, 0.0);
    h
}

/// Non-Hermitian generator K of the no-count evolution exp(-K t):
/// K = iH + (gamma/2) |0><0|. Satisfies K + K^dag = gamma |0><0|.
pub fn build_generator(p: &SystemParams) -> ComplexMatrix3 {
    let mut k = build_hamiltonian(p).scale(C64::new(0.0, 1.0));
    k.0[0][0] += C64::new(0.5 * p.gamma_total(), 0.0);
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn all_zero_params_give_zero_hamiltonian() {
        let p = SystemParams::new_unchecked(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(build_hamiltonian(&p), ComplexMatrix3::zeros());
        assert_eq!(build_generator(&p), ComplexMatrix3::zeros());
    }

    #[test]
    fn single_coupling_term() {
        let p = SystemParams::new_unchecked(2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let h = build_hamiltonian(&p);
        assert_eq!(h.0[0][1], c(1.0, 0.0));
        assert_eq!(h.0[1][0], c(1.0, 0.0));
        for (i, j) in [(0, 0), (0, 2), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)] {
            assert_eq!(h.0[i][j], c(0.0, 0.0), "entry ({i},{j})");
        }
    }

    #[test]
    fn hamiltonian_matches_term_by_term_assembly() {
        // Independent construction: sum the four dyadic terms explicitly.
        let p = SystemParams::new(1.0, 0.5, 0.2, -0.3, 1.0, 0.1).unwrap();
        let mut want = ComplexMatrix3::zeros();
        for (k, omega, delta) in [
            (1usize, p.omega1(), p.delta1()),
            (2, p.omega2(), p.delta2()),
        ] {
            want.0[0][k] += c(0.5 * omega, 0.0); // |0><k|
            want.0[k][0] += c(0.5 * omega, 0.0); // |k><0|
            want.0[k][k] += c(delta, 0.0); // delta |k><k|
        }
        let h = build_hamiltonian(&p);
        assert_eq!(h, want);
        // Hermiticity.
        let diff = h.sub(&h.adjoint()).max_abs();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn generator_decay_only() {
        let p = SystemParams::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        let k = build_generator(&p);
        assert_eq!(k.0[0][0], c(0.5, 0.0));
        let mut rest = k;
        rest.0[0][0] = c(0.0, 0.0);
        assert_eq!(rest.max_abs(), 0.0);
    }

    #[test]
    fn generator_plus_adjoint_is_decay_projector() {
        let p = SystemParams::new(1.3, 0.7, -0.4, 0.9, 0.8, 0.3).unwrap();
        let k = build_generator(&p);
        let s = k.add(&k.adjoint());
        let mut want = ComplexMatrix3::zeros();
        want.0[0][0] = c(p.gamma_total(), 0.0);
        assert!(s.sub(&want).max_abs() < 1e-15);
        // trace K = gamma/2 + i(delta1 + delta2)
        let tr = k.trace();
        assert!((tr - c(0.5 * p.gamma_total(), p.delta1() + p.delta2())).norm() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(matches!(
            SystemParams::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
            Err(CoreError::InvalidParams {
                field: "gamma1",
                ..
            })
        ));
        assert!(matches!(
            SystemParams::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            Err(CoreError::InvalidParams {
                field: "gamma1",
                ..
            })
        ));
        assert!(matches!(
            SystemParams::new(f64::NAN, 0.0, 0.0, 0.0, 1.0, 0.0),
            Err(CoreError::InvalidParams {
                field: "omega1",
                ..
            })
        ));
        assert!(matches!(
            SystemParams::new(1.0, 0.0, 0.0, f64::INFINITY, 1.0, 0.0),
            Err(CoreError::InvalidParams {
                field: "delta2",
                ..
            })
        ));
        assert!(SystemParams::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn shelving_regime_predicate() {
        // Reference working point: exactly at ratio 100 on the drive ratio.
        let p = SystemParams::new(0.5, 5e-3, 0.0, 0.05, 1.0, 1e-4).unwrap();
        assert!(p.in_shelving_regime(DEFAULT_REGIME_RATIO));
        // Too strong a red drive.
        let q = SystemParams::new(0.5, 0.3, 0.0, 0.05, 1.0, 1e-4).unwrap();
        assert!(!q.in_shelving_regime(DEFAULT_REGIME_RATIO));
        // Decoupled red transition counts as infinitely separated.
        let r = SystemParams::new(0.5, 0.0, 0.0, 0.05, 1.0, 0.0).unwrap();
        assert!(r.in_shelving_regime(DEFAULT_REGIME_RATIO));
        // Red decay too strong.
        let s = SystemParams::new(0.5, 5e-3, 0.0, 0.05, 1.0, 0.5).unwrap();
        assert!(!s.in_shelving_regime(DEFAULT_REGIME_RATIO));
    }

    #[test]
    fn channel_and_level_indices() {
        assert_eq!(Channel::Blue.index(), 1);
        assert_eq!(Channel::Red.index(), 2);
        assert_eq!(Channel::Blue.reset_level(), Level::One);
        assert_eq!(Channel::Red.reset_level(), Level::Two);
        assert_eq!(Level::One.index(), 1);
        assert_eq!(Level::Two.index(), 2);
    }
}
