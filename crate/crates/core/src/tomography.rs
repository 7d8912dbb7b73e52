//! Reduced state tomography with the {II, IX, IY, XX} readout set and
//! Jozsa–Uhlmann fidelity.
//!
//! Each setting applies a π/2 readout rotation (X or Y on the named spin,
//! the second letter being spin 2) and then records the real and imaginary
//! parts of the four single-quantum elements an NMR receiver detects.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinops::{pauli, pulse, Axis, MaxModulus, Operator, PulsePhase, PulseTarget, Spin, Unitary, C64};
use crate::states::DensityMatrix;

/// Single-quantum elements read out after every setting: spin-1
/// transitions (0,2), (1,3) and spin-2 transitions (0,1), (2,3).
pub const OBSERVED_ELEMENTS: [(usize, usize); 4] = [(0, 2), (1, 3), (0, 1), (2, 3)];

/// Real observables per setting: Re and Im of each observed element.
pub const OBSERVABLES_PER_SETTING: usize = 2 * OBSERVED_ELEMENTS.len();

const UNKNOWNS: usize = 15;
const EIGEN_CLAMP: f64 = 1e-12;
const FIDELITY_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadoutSetting {
    II,
    IX,
    IY,
    XX,
}

impl ReadoutSetting {
    pub const ALL: [ReadoutSetting; 4] = [
        ReadoutSetting::II,
        ReadoutSetting::IX,
        ReadoutSetting::IY,
        ReadoutSetting::XX,
    ];

    pub fn unitary(self) -> Unitary {
        let half = PI / 2.0;
        match self {
            ReadoutSetting::II => Unitary::identity(),
            ReadoutSetting::IX => pulse(half, PulsePhase::X, PulseTarget::Spin2),
            ReadoutSetting::IY => pulse(half, PulsePhase::Y, PulseTarget::Spin2),
            ReadoutSetting::XX => pulse(half, PulsePhase::X, PulseTarget::Both),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ReadoutSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ReadoutSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "II" => Ok(ReadoutSetting::II),
            "IX" => Ok(ReadoutSetting::IX),
            "IY" => Ok(ReadoutSetting::IY),
            "XX" => Ok(ReadoutSetting::XX),
            _ => Err(Error::param("setting", format!("unknown readout setting `{s}`"))),
        }
    }
}

/// Observables recorded for one readout setting, ordered as
/// Re, Im of each entry of [`OBSERVED_ELEMENTS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub setting: ReadoutSetting,
    pub observables: Vec<f64>,
}

impl TomographyRecord {
    pub fn new(setting: ReadoutSetting, observables: Vec<f64>) -> Result<Self> {
        let record = TomographyRecord {
            setting,
            observables,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observables.len() != OBSERVABLES_PER_SETTING {
            return Err(Error::param(
                "observables",
                format!(
                    "{}: expected {OBSERVABLES_PER_SETTING} values, got {}",
                    self.setting,
                    self.observables.len()
                ),
            ));
        }
        if let Some(v) = self
            .observables
            .iter()
            .find(|v| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(Error::param(
                "observables",
                format!("{}: value {v} outside [-1, 1]", self.setting),
            ));
        }
        Ok(())
    }
}

fn read_observables(m: &Operator) -> Vec<f64> {
    OBSERVED_ELEMENTS
        .iter()
        .flat_map(|&(r, c)| [m[(r, c)].re, m[(r, c)].im])
        .collect()
}

pub fn simulate_readout(rho: &DensityMatrix, setting: ReadoutSetting) -> TomographyRecord {
    let rotated = setting.unitary().conjugate(rho.matrix());
    TomographyRecord {
        setting,
        observables: read_observables(&rotated),
    }
}

/// Traceless Hermitian basis σ_a ⊗ σ_b, (a, b) ≠ (0, 0). A state is
/// I/4 + Σ x_k B_k / 4 with x_k = Tr(ρ B_k).
fn pauli_basis() -> Vec<Operator> {
    let single = |spin, k: usize| match k {
        0 => Operator::identity(),
        1 => pauli(spin, Axis::X),
        2 => pauli(spin, Axis::Y),
        _ => pauli(spin, Axis::Z),
    };
    (0..4)
        .flat_map(|a| (0..4).map(move |b| (a, b)))
        .filter(|&ab| ab != (0, 0))
        .map(|(a, b)| single(Spin::One, a) * single(Spin::Two, b))
        .collect()
}

struct Design {
    basis: Vec<Operator>,
    /// 32 × 15 map from Pauli coordinates to observables.
    matrix: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
    rank: usize,
}

fn design() -> &'static Design {
    static DESIGN: OnceLock<Design> = OnceLock::new();
    DESIGN.get_or_init(|| {
        let basis = pauli_basis();
        let rows = ReadoutSetting::ALL.len() * OBSERVABLES_PER_SETTING;
        let mut matrix = DMatrix::<f64>::zeros(rows, UNKNOWNS);
        for setting in ReadoutSetting::ALL {
            let u = setting.unitary();
            for (k, b) in basis.iter().enumerate() {
                let obs = read_observables(&(u.conjugate(b) * C64::from(0.25)));
                for (i, v) in obs.into_iter().enumerate() {
                    matrix[(setting.index() * OBSERVABLES_PER_SETTING + i, k)] = v;
                }
            }
        }
        let svd = matrix.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax)
            .count();
        let pseudo_inverse = svd
            .pseudo_inverse(1e-10 * smax)
            .expect("SVD computed with both factors");
        Design {
            basis,
            matrix,
            pseudo_inverse,
            rank,
        }
    })
}

/// Smallest singular value of the readout design matrix.
pub fn design_min_singular_value() -> f64 {
    design().matrix.singular_values().min()
}

fn collect(records: &[TomographyRecord]) -> Result<DVector<f64>> {
    let mut seen = [false; 4];
    let mut y = DVector::<f64>::zeros(ReadoutSetting::ALL.len() * OBSERVABLES_PER_SETTING);
    for rec in records {
        rec.validate()?;
        let i = rec.setting.index();
        if seen[i] {
            return Err(Error::param(
                "records",
                format!("setting {} recorded more than once", rec.setting),
            ));
        }
        seen[i] = true;
        for (j, v) in rec.observables.iter().enumerate() {
            y[i * OBSERVABLES_PER_SETTING + j] = *v;
        }
    }
    let missing: Vec<String> = ReadoutSetting::ALL
        .iter()
        .filter(|s| !seen[s.index()])
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::param(
            "records",
            format!("missing readout settings: {}", missing.join(", ")),
        ));
    }
    Ok(y)
}

/// Least-squares Hermitian, unit-trace estimate from one record per setting.
/// Not projected onto the positive cone.
pub fn reconstruct_raw(records: &[TomographyRecord]) -> Result<Operator> {
    let d = design();
    if d.rank < UNKNOWNS {
        return Err(Error::RankDeficient {
            rank: d.rank,
            expected: UNKNOWNS,
        });
    }
    let y = collect(records)?;
    let x = &d.pseudo_inverse * y;
    let mut m = Operator::identity() * C64::from(0.25);
    for (coef, b) in x.iter().zip(&d.basis) {
        m += b * C64::from(0.25 * coef);
    }
    let m = (m + m.adjoint()) * C64::from(0.5);
    Ok(m / m.trace())
}

/// Reconstructs the state. If noise pushes an eigenvalue below zero the
/// estimate is clipped to the positive cone in its eigenbasis and
/// renormalized.
pub fn reconstruct(records: &[TomographyRecord]) -> Result<DensityMatrix> {
    let m = reconstruct_raw(records)?;
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.min() >= crate::states::MIN_EIGENVALUE {
        return Ok(DensityMatrix::from_matrix_unchecked(m));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let total: f64 = clipped.sum();
    let diag = clipped.map(|l| C64::from(l / total));
    let projected = eig.eigenvectors * Operator::from_diagonal(&diag) * eig.eigenvectors.adjoint();
    Ok(DensityMatrix::from_matrix_unchecked(
        (projected + projected.adjoint()) * C64::from(0.5),
    ))
}

/// All four records for a state.
pub fn full_readout(rho: &DensityMatrix) -> Vec<TomographyRecord> {
    ReadoutSetting::ALL
        .iter()
        .map(|&s| simulate_readout(rho, s))
        .collect()
}

/// Jozsa–Uhlmann fidelity in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FidelityValue(f64);

impl FidelityValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for FidelityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

fn psd_sqrt(m: &Operator) -> Operator {
    let eig = SymmetricEigen::new(*m);
    let roots = eig.eigenvalues.map(|l| {
        if l <= EIGEN_CLAMP {
            C64::from(0.0)
        } else {
            C64::from(l.sqrt())
        }
    });
    eig.eigenvectors * Operator::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// F = (Tr √(√a b √a))², evaluated as the squared trace norm of √a √b.
pub fn fidelity_matrices(a: &Operator, b: &Operator) -> Result<FidelityValue> {
    for m in [a, b] {
        let dev = (m - m.adjoint()).max_modulus();
        if dev.is_nan() || dev > FIDELITY_HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
    }
    let sa = psd_sqrt(&((a + a.adjoint()) * C64::from(0.5)));
    let sb = psd_sqrt(&((b + b.adjoint()) * C64::from(0.5)));
    let nuclear: f64 = (sa * sb).singular_values().sum();
    Ok(FidelityValue((nuclear * nuclear).clamp(0.0, 1.0)))
}

pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<FidelityValue> {
    fidelity_matrices(a.matrix(), b.matrix())
}
