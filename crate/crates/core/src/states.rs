//! Density matrices, coherence orders and state preparation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinops::{
    free_evolution, hamiltonian, pulse, MaxModulus, Operator, PulsePhase, PulseTarget, SpinSystem, Unitary,
    C64, ZERO,
};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const MIN_EIGENVALUE: f64 = -1e-10;

/// Row-major vectorization of a 4×4 matrix: index 4r + c holds ρ_rc.
pub type StateVector = SVector<C64, 16>;

/// Hermitian, unit-trace, positive semidefinite 4×4 matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(m: Operator) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let herm = (m - m.adjoint()).max_modulus();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = m.trace();
        if (tr - C64::from(1.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace is {tr} instead of 1"
            )));
        }
        let rho = DensityMatrix(m);
        let min = rho.min_eigenvalue();
        if min < MIN_EIGENVALUE {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(rho)
    }

    /// Wraps a matrix the caller knows is a valid state (e.g. the image of
    /// a valid state under a checked CPTP map).
    pub(crate) fn from_matrix_unchecked(m: Operator) -> Self {
        DensityMatrix(m)
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Operator::identity() * C64::from(0.25))
    }

    /// |ψ⟩⟨ψ| for a state vector normalized on the fly.
    pub fn pure(psi: &Vector4<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::param("psi", "state vector must be non-zero and finite"));
        }
        let psi = psi / C64::from(norm);
        Ok(DensityMatrix(psi * psi.adjoint()))
    }

    /// Basis state |k⟩⟨k| with k in 0..4 (|00⟩, |01⟩, |10⟩, |11⟩).
    pub fn basis(k: usize) -> Self {
        let mut m = Operator::zeros();
        m[(k, k)] = C64::from(1.0);
        DensityMatrix(m)
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    pub fn element(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn eigenvalues(&self) -> Vector4<f64> {
        nalgebra::SymmetricEigen::new(self.0).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    /// Tr ρ²
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn evolve_unitary(&self, u: &Unitary) -> Self {
        DensityMatrix(u.conjugate(&self.0))
    }

    /// Convex combination (1−w)·self + w·other.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Self {
        DensityMatrix(self.0 * C64::from(1.0 - w) + other.0 * C64::from(w))
    }

    pub fn to_vector(&self) -> StateVector {
        vectorize(&self.0)
    }

    pub fn from_vector(v: &StateVector) -> Result<Self> {
        DensityMatrix::new(devectorize(v))
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn vectorize(m: &Operator) -> StateVector {
    StateVector::from_fn(|k, _| m[(k / 4, k % 4)])
}

pub fn devectorize(v: &StateVector) -> Operator {
    Operator::from_fn(|r, c| v[4 * r + c])
}

fn check_polarization(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::param(
            "epsilon",
            format!("polarization must lie in [0, 1], got {epsilon}"),
        ));
    }
    Ok(())
}

/// (I + ε(I₁z + I₂z)) / 4
pub fn thermal_state(epsilon: f64) -> Result<DensityMatrix> {
    check_polarization(epsilon)?;
    let d = [1.0, 0.0, 0.0, -1.0].map(|m| C64::from(0.25 * (1.0 + epsilon * m)));
    Ok(DensityMatrix(Operator::from_diagonal(&Vector4::from(d))))
}

/// (1−ε) I/4 + ε |00⟩⟨00|
pub fn pseudopure_00(epsilon: f64) -> Result<DensityMatrix> {
    check_polarization(epsilon)?;
    Ok(DensityMatrix::maximally_mixed().mix(&DensityMatrix::basis(0), epsilon))
}

/// The four coherence states the experiments prepare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoherenceKind {
    /// (|01⟩+|10⟩)/√2
    #[serde(rename = "ZQ")]
    Zq,
    /// (|00⟩+|11⟩)/√2
    #[serde(rename = "DQ")]
    Dq,
    /// (|00⟩+|10⟩)/√2
    #[serde(rename = "SQ1")]
    Sq1,
    /// (|00⟩+|01⟩)/√2
    #[serde(rename = "SQ2")]
    Sq2,
}

impl CoherenceKind {
    pub const ALL: [CoherenceKind; 4] = [
        CoherenceKind::Zq,
        CoherenceKind::Dq,
        CoherenceKind::Sq1,
        CoherenceKind::Sq2,
    ];

    /// The pair of basis states superposed by this kind.
    pub fn basis_pair(self) -> (usize, usize) {
        match self {
            CoherenceKind::Zq => (1, 2),
            CoherenceKind::Dq => (0, 3),
            CoherenceKind::Sq1 => (0, 2),
            CoherenceKind::Sq2 => (0, 1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CoherenceKind::Zq => "ZQ",
            CoherenceKind::Dq => "DQ",
            CoherenceKind::Sq1 => "SQ1",
            CoherenceKind::Sq2 => "SQ2",
        }
    }
}

impl fmt::Display for CoherenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CoherenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ZQ" => Ok(CoherenceKind::Zq),
            "DQ" => Ok(CoherenceKind::Dq),
            "SQ1" => Ok(CoherenceKind::Sq1),
            "SQ2" => Ok(CoherenceKind::Sq2),
            _ => Err(Error::param(
                "target",
                format!("unknown coherence `{s}` (expected ZQ, DQ, SQ1 or SQ2)"),
            )),
        }
    }
}

pub fn coherence_vector(kind: CoherenceKind) -> Vector4<C64> {
    let (a, b) = kind.basis_pair();
    let mut psi = Vector4::from_element(ZERO);
    psi[a] = C64::from(FRAC_1_SQRT_2);
    psi[b] = C64::from(FRAC_1_SQRT_2);
    psi
}

pub fn coherence_state(kind: CoherenceKind) -> DensityMatrix {
    let psi = coherence_vector(kind);
    DensityMatrix(psi * psi.adjoint())
}

/// Magnetic quantum number (in units of single-spin flips) of each basis state.
pub const MAGNETIC_NUMBERS: [i32; 4] = [1, 0, 0, -1];

/// Coherence order Δm of element (r, c).
pub fn coherence_order(r: usize, c: usize) -> i32 {
    MAGNETIC_NUMBERS[r] - MAGNETIC_NUMBERS[c]
}

/// Sum of |ρ_rs|² grouped by coherence order −2..=2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSpectrum {
    weights: [f64; 5],
}

impl CoherenceSpectrum {
    pub fn weight(&self, order: i32) -> f64 {
        if !(-2..=2).contains(&order) {
            return 0.0;
        }
        self.weights[(order + 2) as usize]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, &w)| (i as i32 - 2, w))
    }
}

pub fn coherence_spectrum(rho: &DensityMatrix) -> CoherenceSpectrum {
    let mut weights = [0.0; 5];
    for r in 0..4 {
        for c in 0..4 {
            weights[(coherence_order(r, c) + 2) as usize] += rho.0[(r, c)].norm_sqr();
        }
    }
    CoherenceSpectrum { weights }
}

/// Target of the multiple-quantum preparation sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MultipleQuantum {
    Zero,
    Double,
}

impl MultipleQuantum {
    pub fn kind(self) -> CoherenceKind {
        match self {
            MultipleQuantum::Zero => CoherenceKind::Zq,
            MultipleQuantum::Double => CoherenceKind::Dq,
        }
    }

    /// Phase of the final spin-selective π/2 pulse.
    pub fn selective_phase(self) -> PulsePhase {
        match self {
            MultipleQuantum::Zero => PulsePhase::MinusX,
            MultipleQuantum::Double => PulsePhase::X,
        }
    }
}

/// Unitary of the coherence-creating block: non-selective (π/2)_y, a
/// 1/(2J) delay refocused by π_x pulses at its center and end, then a
/// spin-selective (π/2)_{±x} on spin 1.
pub fn preparation_unitary(
    target: MultipleQuantum,
    system: &SpinSystem,
    nu_rf: f64,
) -> Result<Unitary> {
    if system.j12 == 0.0 || !system.j12.is_finite() {
        return Err(Error::param(
            "j12",
            "scalar coupling must be non-zero to define the 1/(2J) delay",
        ));
    }
    let tau = 1.0 / (2.0 * system.j12.abs());
    let h = hamiltonian(system, nu_rf);
    let half_delay = free_evolution(&h, tau / 2.0)?;
    let excite = pulse(PI / 2.0, PulsePhase::Y, PulseTarget::Both);
    let refocus = pulse(PI, PulsePhase::X, PulseTarget::Both);
    let convert = pulse(PI / 2.0, target.selective_phase(), PulseTarget::Spin1);
    Ok(Unitary::sequence([
        &excite,
        &half_delay,
        &refocus,
        &half_delay,
        &refocus,
        &convert,
    ]))
}

/// Runs the preparation sequence on the |00⟩ pseudopure state, with the
/// rotating frame centered between the two resonances.
pub fn prepare_via_sequence(
    target: MultipleQuantum,
    system: &SpinSystem,
    epsilon: f64,
) -> Result<DensityMatrix> {
    prepare_via_sequence_at(target, system, epsilon, system.center_frequency())
}

pub fn prepare_via_sequence_at(
    target: MultipleQuantum,
    system: &SpinSystem,
    epsilon: f64,
    nu_rf: f64,
) -> Result<DensityMatrix> {
    let rho0 = pseudopure_00(epsilon)?;
    let u = preparation_unitary(target, system, nu_rf)?;
    Ok(rho0.evolve_unitary(&u))
}

/// Prepares any of the four coherence kinds from the pseudopure state:
/// ZQ/DQ through the refocused sequence, SQ1/SQ2 with a selective (π/2)_y.
pub fn prepare_coherence(
    kind: CoherenceKind,
    system: &SpinSystem,
    epsilon: f64,
    nu_rf: f64,
) -> Result<DensityMatrix> {
    match kind {
        CoherenceKind::Zq => prepare_via_sequence_at(MultipleQuantum::Zero, system, epsilon, nu_rf),
        CoherenceKind::Dq => {
            prepare_via_sequence_at(MultipleQuantum::Double, system, epsilon, nu_rf)
        }
        CoherenceKind::Sq1 | CoherenceKind::Sq2 => {
            let target = if kind == CoherenceKind::Sq1 {
                PulseTarget::Spin1
            } else {
                PulseTarget::Spin2
            };
            let rho0 = pseudopure_00(epsilon)?;
            Ok(rho0.evolve_unitary(&pulse(PI / 2.0, PulsePhase::Y, target)))
        }
    }
}

/// The ideal outcome of preparing `kind` at polarization ε.
pub fn ideal_pseudopure(kind: CoherenceKind, epsilon: f64) -> Result<DensityMatrix> {
    check_polarization(epsilon)?;
    Ok(DensityMatrix::maximally_mixed().mix(&coherence_state(kind), epsilon))
}
