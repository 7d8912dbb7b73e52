//! Operator algebra for two spin-1/2 nuclei.
//!
//! Tensor ordering is spin 1 ⊗ spin 2 with the computational basis ordered
//! |00⟩, |01⟩, |10⟩, |11⟩. Hamiltonians are stored in rad/s; every
//! user-facing frequency is in Hz.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::storage::RawStorage;
use nalgebra::{Dim, Matrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A 4×4 operator on the two-spin Hilbert space.
pub type Operator = Matrix4<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Largest entry modulus of a complex matrix.
pub trait MaxModulus {
    fn max_modulus(&self) -> f64;
}

impl<R: Dim, C: Dim, S: RawStorage<C64, R, C>> MaxModulus for Matrix<C64, R, C, S> {
    fn max_modulus(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Tolerance on ‖UU† − 1‖ (max-abs entry) for a [`Unitary`].
pub const UNITARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    One,
    Two,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::One => 1,
            Spin::Two => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Spin::One),
            2 => Ok(Spin::Two),
            _ => Err(Error::param("spin", format!("index must be 1 or 2, got {i}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Phase of an rf pulse: the transverse axis it rotates about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PulsePhase {
    X,
    MinusX,
    Y,
    MinusY,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PulseTarget {
    Spin1,
    Spin2,
    Both,
}

fn pauli_2x2(axis: Axis) -> Matrix2<C64> {
    match axis {
        Axis::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
        Axis::Y => Matrix2::new(ZERO, -I, I, ZERO),
        Axis::Z => Matrix2::new(ONE, ZERO, ZERO, -ONE),
    }
}

fn embed(spin: Spin, single: &Matrix2<C64>) -> Operator {
    let id = Matrix2::<C64>::identity();
    match spin {
        Spin::One => kron2(single, &id),
        Spin::Two => kron2(&id, single),
    }
}

pub(crate) fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Operator {
    Operator::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// σ_axis on `spin`, identity on the other spin.
pub fn pauli(spin: Spin, axis: Axis) -> Operator {
    embed(spin, &pauli_2x2(axis))
}

/// Spin angular momentum component I_axis = σ_axis / 2 on `spin`.
pub fn spin_operator(spin: Spin, axis: Axis) -> Operator {
    pauli(spin, axis) * C64::new(0.5, 0.0)
}

/// Chemical shifts and scalar coupling of a homonuclear two-spin molecule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub name: String,
    /// Hz
    pub nu1: f64,
    /// Hz
    pub nu2: f64,
    /// Hz
    pub j12: f64,
}

/// |ν₁ − ν₂| / J below this ratio is reported as leaving the weak-coupling regime.
pub const WEAK_COUPLING_RATIO: f64 = 10.0;

impl SpinSystem {
    pub fn new(name: impl Into<String>, nu1: f64, nu2: f64, j12: f64) -> Result<Self> {
        let system = SpinSystem {
            name: name.into(),
            nu1,
            nu2,
            j12,
        };
        system.validate()?;
        Ok(system)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nu1", self.nu1), ("nu2", self.nu2), ("j12", self.j12)] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if self.nu1 == self.nu2 {
            return Err(Error::param(
                "nu2",
                "the two spins must be chemically shifted (nu1 != nu2)",
            ));
        }
        if !self.is_weakly_coupled() {
            log::warn!(
                "{}: |nu1 - nu2| = {:.1} Hz is not much larger than J = {:.1} Hz; \
                 the weak-coupling Hamiltonian may be inaccurate",
                self.name,
                (self.nu1 - self.nu2).abs(),
                self.j12
            );
        }
        Ok(())
    }

    pub fn is_weakly_coupled(&self) -> bool {
        (self.nu1 - self.nu2).abs() >= WEAK_COUPLING_RATIO * self.j12.abs()
    }

    /// Rotating-frame reference halfway between the two resonances.
    pub fn center_frequency(&self) -> f64 {
        0.5 * (self.nu1 + self.nu2)
    }
}

/// Weak-coupling Hamiltonian in the frame rotating at `nu_rf` (Hz), in rad/s:
/// H = −(ω₁−ω_rf) I₁z − (ω₂−ω_rf) I₂z + 2πJ I₁z I₂z.
pub fn hamiltonian(system: &SpinSystem, nu_rf: f64) -> Operator {
    let w1 = 2.0 * PI * (system.nu1 - nu_rf);
    let w2 = 2.0 * PI * (system.nu2 - nu_rf);
    let wj = 2.0 * PI * system.j12;
    let i1z = spin_operator(Spin::One, Axis::Z);
    let i2z = spin_operator(Spin::Two, Axis::Z);
    i1z * C64::from(-w1) + i2z * C64::from(-w2) + (i1z * i2z) * C64::from(wj)
}

/// A 4×4 unitary, checked on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Unitary(Operator);

impl Unitary {
    pub fn new(m: Operator) -> Result<Self> {
        let dev = unitarity_error(&m);
        if dev.is_nan() || dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Unitary(m))
    }

    pub fn identity() -> Self {
        Unitary(Operator::identity())
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Unitary(self.0.adjoint())
    }

    /// Applies `self` first, then `next`.
    pub fn then(&self, next: &Unitary) -> Unitary {
        Unitary(next.0 * self.0)
    }

    /// Composes a sequence given in time order.
    pub fn sequence<'a>(steps: impl IntoIterator<Item = &'a Unitary>) -> Unitary {
        steps
            .into_iter()
            .fold(Unitary::identity(), |acc, u| acc.then(u))
    }

    /// U A U†
    pub fn conjugate(&self, a: &Operator) -> Operator {
        self.0 * a * self.0.adjoint()
    }
}

impl fmt::Display for Unitary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn unitarity_error(m: &Operator) -> f64 {
    (m * m.adjoint() - Operator::identity()).max_modulus()
}

fn rotation_2x2(angle: f64, phase: PulsePhase) -> Matrix2<C64> {
    // exp(-i θ n·σ / 2) with n in the transverse plane
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let (nx, ny) = match phase {
        PulsePhase::X => (1.0, 0.0),
        PulsePhase::MinusX => (-1.0, 0.0),
        PulsePhase::Y => (0.0, 1.0),
        PulsePhase::MinusY => (0.0, -1.0),
    };
    let off = C64::new(-s * ny, -s * nx); // -i s (nx - i ny)
    let off_t = C64::new(s * ny, -s * nx); // -i s (nx + i ny)
    Matrix2::new(C64::from(c), off, off_t, C64::from(c))
}

/// Ideal instantaneous rf pulse exp(−i·angle·I_phase) on the chosen spins.
pub fn pulse(angle: f64, phase: PulsePhase, target: PulseTarget) -> Unitary {
    let r = rotation_2x2(angle, phase);
    let id = Matrix2::<C64>::identity();
    let m = match target {
        PulseTarget::Spin1 => kron2(&r, &id),
        PulseTarget::Spin2 => kron2(&id, &r),
        PulseTarget::Both => kron2(&r, &r),
    };
    Unitary(m)
}

/// exp(−i H τ) for a Hermitian H in rad/s.
pub fn free_evolution(h: &Operator, tau: f64) -> Result<Unitary> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
    }
    let herm = (h - h.adjoint()).max_modulus();
    if herm > 1e-12 * h.max_modulus().max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    let is_diagonal = (0..4).all(|r| (0..4).all(|c| r == c || h[(r, c)] == ZERO));
    let u = if is_diagonal {
        Operator::from_diagonal(&h.diagonal().map(|e| (-I * e.re * tau).exp()))
    } else {
        let eig = nalgebra::SymmetricEigen::new(*h);
        let phases = eig.eigenvalues.map(|e| (-I * e * tau).exp());
        eig.eigenvectors * Operator::from_diagonal(&phases) * eig.eigenvectors.adjoint()
    };
    Unitary::new(u)
}
