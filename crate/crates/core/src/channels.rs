//! Kraus maps and Lindblad generators for phase damping, generalized
//! amplitude damping and correlated phase damping.
//!
//! Generators act on the row-major vectorization of the density matrix:
//! (ρ₀₀, ρ₀₁, ρ₁₀, ρ₁₁) for one spin and (ρ₀₀, ρ₀₁, …, ρ₃₃) for two.

use std::fmt;

use nalgebra::{Matrix2, Matrix4, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinops::{kron2, pauli, Axis, MaxModulus, Operator, Spin, C64, ZERO};
use crate::states::{devectorize, vectorize, DensityMatrix, StateVector};

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

pub const KRAUS_COMPLETENESS_TOL: f64 = 1e-10;
pub const GENERATOR_TOL: f64 = 1e-12;

fn default_nbar() -> f64 {
    0.5
}

/// Decay rates (1/s) of the two-spin noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Independent phase damping on spin 1.
    pub gamma1: f64,
    /// Independent phase damping on spin 2.
    pub gamma2: f64,
    /// Correlated phase damping.
    pub gamma3: f64,
    /// Amplitude damping on spin 1.
    #[serde(rename = "Gamma1")]
    pub big_gamma1: f64,
    /// Amplitude damping on spin 2.
    #[serde(rename = "Gamma2")]
    pub big_gamma2: f64,
    /// Reservoir temperature parameter. The generators use the
    /// high-temperature value 1/2; this only enters the Kraus form.
    #[serde(default = "default_nbar")]
    pub nbar: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams::new(0.0, 0.0, 0.0, 0.0, 0.0)
    }
}

impl NoiseParams {
    pub fn new(gamma1: f64, gamma2: f64, gamma3: f64, big_gamma1: f64, big_gamma2: f64) -> Self {
        NoiseParams {
            gamma1,
            gamma2,
            gamma3,
            big_gamma1,
            big_gamma2,
            nbar: 0.5,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.big_gamma1,
            self.big_gamma2,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        NoiseParams::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// Checks finiteness, sign constraints and that no CPD rate is negative.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("Gamma1", self.big_gamma1),
            ("Gamma2", self.big_gamma2),
            ("nbar", self.nbar),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("Gamma1", self.big_gamma1),
            ("Gamma2", self.big_gamma2),
        ] {
            if v < 0.0 {
                return Err(Error::param(name, format!("rate must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.nbar) {
            return Err(Error::param(
                "nbar",
                format!("must lie in [0, 1], got {}", self.nbar),
            ));
        }
        check_cpd_rates(self.gamma1, self.gamma2, self.gamma3)
    }

    /// Whether the dephasing part has a positive semidefinite Kossakowski
    /// matrix, i.e. γ₃² ≤ 4γ₁γ₂. Non-negative CPD decay rates alone do not
    /// guarantee a completely positive flow.
    pub fn is_completely_positive(&self) -> bool {
        self.validate().is_ok()
            && self.gamma3 * self.gamma3 <= 4.0 * self.gamma1 * self.gamma2 * (1.0 + 1e-12)
    }
}

fn check_cpd_rates(g1: f64, g2: f64, g3: f64) -> Result<()> {
    let zq = g1 + g2 - g3;
    let dq = g1 + g2 + g3;
    if zq < 0.0 || dq < 0.0 || g1 < 0.0 || g2 < 0.0 {
        return Err(Error::NonPhysicalRates(format!(
            "gamma1 = {g1}, gamma2 = {g2}, gamma3 = {g3} give ZQ rate {zq} and DQ rate {dq}"
        )));
    }
    Ok(())
}

/// Reservoir description for the temperature parameter n̄.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParams {
    /// Energy gap between ground and excited state, J.
    pub delta_e: f64,
    /// Kelvin.
    pub temperature: f64,
}

/// n̄ = 1 / (1 + exp(ΔE / k_B T))
pub fn nbar_from_temperature(tp: TemperatureParams) -> Result<f64> {
    if !tp.temperature.is_finite() || tp.temperature <= 0.0 {
        return Err(Error::param(
            "temperature",
            format!("must be positive, got {}", tp.temperature),
        ));
    }
    let x = tp.delta_e / (BOLTZMANN * tp.temperature);
    Ok(1.0 / (1.0 + x.exp()))
}

pub type SpinMatrix = Matrix2<C64>;

/// Generator on the vectorized single-spin density matrix.
pub type SingleSpinGenerator = Matrix4<C64>;

/// 16×16 linear map on the row-major vectorized two-spin density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator(SMatrix<C64, 16, 16>);

impl Superoperator {
    pub fn zeros() -> Self {
        Superoperator(SMatrix::zeros())
    }

    pub fn identity() -> Self {
        Superoperator(SMatrix::identity())
    }

    pub fn from_matrix(m: SMatrix<C64, 16, 16>) -> Self {
        Superoperator(m)
    }

    /// Builds the matrix of a linear map given by its action on matrices.
    pub fn from_map(f: impl Fn(&Operator) -> Operator) -> Self {
        let mut m = SMatrix::<C64, 16, 16>::zeros();
        for j in 0..16 {
            let mut e = Operator::zeros();
            e[(j / 4, j % 4)] = C64::from(1.0);
            m.set_column(j, &vectorize(&f(&e)));
        }
        Superoperator(m)
    }

    pub fn matrix(&self) -> &SMatrix<C64, 16, 16> {
        &self.0
    }

    pub fn apply_vector(&self, v: &StateVector) -> StateVector {
        self.0 * v
    }

    pub fn apply(&self, m: &Operator) -> Operator {
        devectorize(&(self.0 * vectorize(m)))
    }

    /// Max-abs entry of t·Z, where t sums the diagonal positions of vec(ρ).
    pub fn trace_preservation_error(&self) -> f64 {
        (0..16)
            .map(|j| (0..4).map(|k| self.0[(5 * k, j)]).sum::<C64>().norm())
            .fold(0.0, f64::max)
    }

    /// Same as [`trace_preservation_error`](Self::trace_preservation_error)
    /// but for a propagator, whose diagonal sum must map to the diagonal sum.
    pub fn trace_map_error(&self) -> f64 {
        (0..16)
            .map(|j| {
                let s: C64 = (0..4).map(|k| self.0[(5 * k, j)]).sum();
                let expected = if j % 5 == 0 { 1.0 } else { 0.0 };
                (s - C64::from(expected)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// max over matrix units E_rc of ‖Z(E_cr) − Z(E_rc)†‖; zero iff Z maps
    /// Hermitian matrices to Hermitian matrices.
    pub fn hermiticity_preservation_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..4 {
            for c in 0..4 {
                let a = devectorize(&self.0.column(4 * r + c).into_owned());
                let b = devectorize(&self.0.column(4 * c + r).into_owned());
                worst = worst.max((b - a.adjoint()).max_modulus());
            }
        }
        worst
    }

    /// Choi matrix Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|).
    pub fn choi(&self) -> SMatrix<C64, 16, 16> {
        SMatrix::from_fn(|row, col| {
            let (i, k) = (row / 4, row % 4);
            let (j, l) = (col / 4, col % 4);
            self.0[(4 * k + l, 4 * i + j)]
        })
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        let c = self.choi();
        let c = (c + c.adjoint()) * C64::from(0.5);
        SymmetricEigen::new(c).eigenvalues.min()
    }

    pub fn exp(&self, t: f64) -> Superoperator {
        Superoperator(crate::evolution::matrix_exp_fixed(&(self.0 * C64::from(t))))
    }
}

impl std::ops::Add for Superoperator {
    type Output = Superoperator;

    fn add(self, rhs: Superoperator) -> Superoperator {
        Superoperator(self.0 + rhs.0)
    }
}

impl std::ops::Mul for &Superoperator {
    type Output = Superoperator;

    fn mul(self, rhs: &Superoperator) -> Superoperator {
        Superoperator(self.0 * rhs.0)
    }
}

impl fmt::Display for Superoperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn kraus_completeness_error(kraus: &[Operator]) -> f64 {
    let sum: Operator = kraus.iter().map(|e| e.adjoint() * e).sum();
    (sum - Operator::identity()).max_modulus()
}

fn check_kraus(kraus: &[Operator]) -> Result<()> {
    let err = kraus_completeness_error(kraus);
    if err.is_nan() || err > KRAUS_COMPLETENESS_TOL {
        return Err(Error::KrausCompleteness(err));
    }
    Ok(())
}

fn kraus_sum(rho: &Operator, kraus: &[Operator]) -> Operator {
    kraus.iter().map(|e| e * rho * e.adjoint()).sum()
}

/// Σ Eᵢ ρ Eᵢ†
pub fn apply_kraus(rho: &DensityMatrix, kraus: &[Operator]) -> Result<DensityMatrix> {
    check_kraus(kraus)?;
    Ok(DensityMatrix::from_matrix_unchecked(kraus_sum(
        rho.matrix(),
        kraus,
    )))
}

/// (1−μ) Σ_ij E_ij ρ E_ij† + μ Σ_k E_kk ρ E_kk†
pub fn correlated_mixture(
    rho: &DensityMatrix,
    uncorrelated: &[Operator],
    correlated: &[Operator],
    mu: f64,
) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::param(
            "mu",
            format!("correlation probability must lie in [0, 1], got {mu}"),
        ));
    }
    check_kraus(uncorrelated)?;
    check_kraus(correlated)?;
    let m = kraus_sum(rho.matrix(), uncorrelated) * C64::from(1.0 - mu)
        + kraus_sum(rho.matrix(), correlated) * C64::from(mu);
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// E_ij = A_i ⊗ B_j: independent single-spin channels on each spin.
pub fn product_family(spin1: &[SpinMatrix], spin2: &[SpinMatrix]) -> Vec<Operator> {
    spin1
        .iter()
        .flat_map(|a| spin2.iter().map(move |b| kron2(a, b)))
        .collect()
}

/// Same-index subfamily E_kk = A_k ⊗ B_k, right-multiplied by S^{-1/2}
/// with S = Σ E_kk† E_kk so that it is complete.
pub fn diagonal_family(spin1: &[SpinMatrix], spin2: &[SpinMatrix]) -> Result<Vec<Operator>> {
    if spin1.len() != spin2.len() {
        return Err(Error::param(
            "kraus",
            format!(
                "diagonal family needs equal-length sets, got {} and {}",
                spin1.len(),
                spin2.len()
            ),
        ));
    }
    let raw: Vec<Operator> = spin1.iter().zip(spin2).map(|(a, b)| kron2(a, b)).collect();
    let s: Operator = raw.iter().map(|e| e.adjoint() * e).sum();
    let eig = SymmetricEigen::new((s + s.adjoint()) * C64::from(0.5));
    if eig.eigenvalues.min() <= 1e-14 {
        return Err(Error::param(
            "kraus",
            "diagonal family is singular and cannot be renormalized",
        ));
    }
    let inv_sqrt = eig.eigenvalues.map(|l| C64::from(1.0 / l.sqrt()));
    let s_inv_sqrt =
        eig.eigenvectors * Operator::from_diagonal(&inv_sqrt) * eig.eigenvectors.adjoint();
    Ok(raw.into_iter().map(|e| e * s_inv_sqrt).collect())
}

/// Phase damping as a Pauli channel: {√((1+λ)/2) 1, √((1−λ)/2) σz}, λ = e^{−γt}.
pub fn pd_kraus(gamma: f64, t: f64) -> [SpinMatrix; 2] {
    let lambda = (-gamma * t).exp();
    let a = ((1.0 + lambda) / 2.0).sqrt();
    let b = ((1.0 - lambda) / 2.0).sqrt();
    [
        SpinMatrix::identity() * C64::from(a),
        SpinMatrix::new(C64::from(b), ZERO, ZERO, C64::from(-b)),
    ]
}

/// Phase damping of one spin: coherences scale by e^{−γt}.
pub fn pd_apply(rho: &SpinMatrix, gamma: f64, t: f64) -> SpinMatrix {
    let decay = C64::from((-gamma * t).exp());
    SpinMatrix::new(rho[(0, 0)], rho[(0, 1)] * decay, rho[(1, 0)] * decay, rho[(1, 1)])
}

/// Generalized amplitude damping of one spin towards diag(1−n̄, n̄).
pub fn gad_apply(rho: &SpinMatrix, big_gamma: f64, nbar: f64, t: f64) -> SpinMatrix {
    let relax = 1.0 - (-big_gamma * t).exp();
    let k2 = (1.0 - nbar) * relax;
    let k3 = nbar * relax;
    let k1 = 1.0 - k3;
    let k4 = 1.0 - k2;
    let coh = C64::from((-big_gamma * t / 2.0).exp());
    SpinMatrix::new(
        rho[(0, 0)] * k1 + rho[(1, 1)] * k2,
        rho[(0, 1)] * coh,
        rho[(1, 0)] * coh,
        rho[(0, 0)] * k3 + rho[(1, 1)] * k4,
    )
}

pub fn pd_generator_1spin(gamma: f64) -> SingleSpinGenerator {
    SingleSpinGenerator::from_diagonal(&nalgebra::Vector4::new(
        ZERO,
        C64::from(-gamma),
        C64::from(-gamma),
        ZERO,
    ))
}

/// Infinite-temperature (n̄ = 1/2) amplitude damping generator of one spin.
pub fn gad_generator_1spin(big_gamma: f64) -> SingleSpinGenerator {
    let h = 0.5;
    let m = SingleSpinGenerator::new(
        h.into(), ZERO, ZERO, (-h).into(),
        ZERO, h.into(), ZERO, ZERO,
        ZERO, ZERO, h.into(), ZERO,
        (-h).into(), ZERO, ZERO, h.into(),
    );
    m * C64::from(-big_gamma)
}

/// Lifts a single-spin generator to the two-spin space, acting as the
/// identity on the other spin.
pub fn lift_single_spin(gen: &SingleSpinGenerator, spin: Spin) -> Superoperator {
    let m = SMatrix::<C64, 16, 16>::from_fn(|row, col| {
        let (r, s) = (row / 4, row % 4);
        let (u, v) = (col / 4, col % 4);
        // bits of the two-spin indices: spin 1 is the high bit
        let split = |x: usize| (x >> 1, x & 1);
        let ((r1, r2), (s1, s2), (u1, u2), (v1, v2)) = (split(r), split(s), split(u), split(v));
        let (act, spect) = match spin {
            Spin::One => (((r1, s1), (u1, v1)), ((r2, s2), (u2, v2))),
            Spin::Two => (((r2, s2), (u2, v2)), ((r1, s1), (u1, v1))),
        };
        if spect.0 != spect.1 {
            return ZERO;
        }
        let ((a, b), (c, d)) = act;
        gen[(2 * a + b, 2 * c + d)]
    });
    Superoperator(m)
}

pub fn gad_high_temperature_generator(big_gamma: f64, spin: Spin) -> Superoperator {
    lift_single_spin(&gad_generator_1spin(big_gamma), spin)
}

/// Diagonal correlated phase damping generator. Fails if any decay rate
/// on the diagonal would be negative.
pub fn cpd_generator(gamma1: f64, gamma2: f64, gamma3: f64) -> Result<Superoperator> {
    check_cpd_rates(gamma1, gamma2, gamma3)?;
    let (g1, g2) = (gamma1, gamma2);
    let zq = g1 + g2 - gamma3;
    let dq = g1 + g2 + gamma3;
    #[rustfmt::skip]
    let rates = [
        0.0, g2, g1, dq,
        g2, 0.0, zq, g1,
        g1, zq, 0.0, g2,
        dq, g1, g2, 0.0,
    ];
    let mut m = SMatrix::<C64, 16, 16>::zeros();
    for (k, r) in rates.iter().enumerate() {
        m[(k, k)] = C64::from(-r);
    }
    Ok(Superoperator(m))
}

/// CPD plus infinite-temperature GAD on each spin.
pub fn full_generator(params: &NoiseParams) -> Result<Superoperator> {
    params.validate()?;
    let cpd = cpd_generator(params.gamma1, params.gamma2, params.gamma3)?;
    Ok(cpd
        + gad_high_temperature_generator(params.big_gamma1, Spin::One)
        + gad_high_temperature_generator(params.big_gamma2, Spin::Two))
}

/// Σ_k L_k ρ L_k† − ½{L_k† L_k, ρ}
pub fn lindblad_generator(ops: &[Operator]) -> Superoperator {
    let id = Operator::identity();
    let kron = |a: &Operator, b: &Operator| {
        SMatrix::<C64, 16, 16>::from_fn(|row, col| a[(row / 4, col / 4)] * b[(row % 4, col % 4)])
    };
    let mut m = SMatrix::<C64, 16, 16>::zeros();
    for l in ops {
        let k = l.adjoint() * l;
        m += kron(l, &l.conjugate());
        m -= kron(&k, &id) * C64::from(0.5);
        m -= kron(&id, &k.transpose()) * C64::from(0.5);
    }
    Superoperator(m)
}

/// Lindblad operators reproducing [`cpd_generator`]: combinations of σz on
/// each spin from a Cholesky factor of the 2×2 dephasing Kossakowski matrix
/// [[γ₁/2, γ₃/4], [γ₃/4, γ₂/2]]. Requires γ₃² ≤ 4γ₁γ₂.
pub fn dephasing_lindblad_ops(gamma1: f64, gamma2: f64, gamma3: f64) -> Result<Vec<Operator>> {
    check_cpd_rates(gamma1, gamma2, gamma3)?;
    let (a, b, d) = (gamma1 / 2.0, gamma3 / 4.0, gamma2 / 2.0);
    let z1 = pauli(Spin::One, Axis::Z);
    let z2 = pauli(Spin::Two, Axis::Z);
    let schur = if a > 0.0 { d - b * b / a } else { d };
    if schur < -1e-12 * (a + d).max(1.0) || (a == 0.0 && b != 0.0) {
        return Err(Error::NonPhysicalRates(format!(
            "gamma3 = {gamma3} exceeds 2 sqrt(gamma1 gamma2); the dephasing is not completely positive"
        )));
    }
    let mut ops = Vec::with_capacity(2);
    if a > 0.0 {
        ops.push(z1 * C64::from(a.sqrt()) + z2 * C64::from(b / a.sqrt()));
    }
    if schur > 0.0 {
        ops.push(z2 * C64::from(schur.sqrt()));
    }
    Ok(ops)
}

/// Lindblad operators √(Γ/2) σ⁻ and √(Γ/2) σ⁺ on `spin`.
pub fn gad_lindblad_ops(big_gamma: f64, spin: Spin) -> Vec<Operator> {
    let x = pauli(spin, Axis::X);
    let y = pauli(spin, Axis::Y);
    let i = C64::new(0.0, 1.0);
    let lower = (x + y * i) * C64::from(0.5); // |0⟩⟨1|
    let raise = (x - y * i) * C64::from(0.5); // |1⟩⟨0|
    let amp = C64::from((big_gamma / 2.0).sqrt());
    vec![lower * amp, raise * amp]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::matrix_exp_fixed;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spin_state(rng: &mut impl Rng) -> SpinMatrix {
        // Bloch vector inside the unit ball
        let (x, y, z): (f64, f64, f64) = loop {
            let v = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.0 * v.0 + v.1 * v.1 + v.2 * v.2 <= 1.0 {
                break v;
            }
        };
        SpinMatrix::new(
            C64::from((1.0 + z) / 2.0),
            C64::new(x / 2.0, -y / 2.0),
            C64::new(x / 2.0, y / 2.0),
            C64::from((1.0 - z) / 2.0),
        )
    }

    fn vec2(m: &SpinMatrix) -> nalgebra::Vector4<C64> {
        nalgebra::Vector4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }

    #[test]
    fn identity_kraus_is_noop() {
        let rho = crate::states::coherence_state(crate::states::CoherenceKind::Dq);
        let out = apply_kraus(&rho, &[Operator::identity()]).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn bit_flip_kraus() {
        let rho = DensityMatrix::basis(0);
        let out = apply_kraus(&rho, &[pauli(Spin::One, Axis::X)]).unwrap();
        assert_eq!(out, DensityMatrix::basis(2));
    }

    #[test]
    fn kraus_preserves_trace_and_rejects_incomplete_sets() {
        let rho = crate::states::coherence_state(crate::states::CoherenceKind::Sq1);
        let fam = product_family(&pd_kraus(2.0, 0.3), &pd_kraus(1.0, 0.3));
        let out = apply_kraus(&rho, &fam).unwrap();
        assert!((out.matrix().trace() - C64::from(1.0)).norm() < 1e-14);
        DensityMatrix::new(*out.matrix()).unwrap();

        let half = [Operator::identity() * C64::from(0.5)];
        assert!(matches!(
            apply_kraus(&rho, &half),
            Err(Error::KrausCompleteness(_))
        ));
    }

    #[test]
    fn correlated_mixture_limits() {
        let rho = crate::states::coherence_state(crate::states::CoherenceKind::Dq);
        let pd = pd_kraus(1.5, 0.4);
        let unc = product_family(&pd, &pd);
        let cor = diagonal_family(&pd, &pd).unwrap();
        let at0 = correlated_mixture(&rho, &unc, &cor, 0.0).unwrap();
        assert!((at0.matrix() - kraus_sum(rho.matrix(), &unc)).max_modulus() < 1e-15);
        let at1 = correlated_mixture(&rho, &unc, &cor, 1.0).unwrap();
        assert!((at1.matrix() - kraus_sum(rho.matrix(), &cor)).max_modulus() < 1e-15);

        let id = [Operator::identity()];
        let same = correlated_mixture(&rho, &id, &id, 0.5).unwrap();
        assert!((same.matrix() - rho.matrix()).max_modulus() < 1e-15);

        assert!(correlated_mixture(&rho, &unc, &cor, 1.2).is_err());
        assert!(correlated_mixture(&rho, &unc, &cor, -0.1).is_err());
    }

    #[test]
    fn product_pd_family_matches_uncorrelated_generator() {
        let (g1, g2, t) = (1.3, 0.7, 0.45);
        let fam = product_family(&pd_kraus(g1, t), &pd_kraus(g2, t));
        let kraus_map = Superoperator::from_map(|m| kraus_sum(m, &fam));
        let flow = cpd_generator(g1, g2, 0.0).unwrap().exp(t);
        assert!((kraus_map.matrix() - flow.matrix()).max_modulus() < 1e-12);
    }

    #[test]
    fn pd_apply_basics() {
        let rho = SpinMatrix::new(
            C64::from(0.5),
            C64::from(0.5),
            C64::from(0.5),
            C64::from(0.5),
        );
        assert_eq!(pd_apply(&rho, 3.0, 0.0), rho);
        let out = pd_apply(&rho, 1.0, std::f64::consts::LN_2);
        assert!((out[(0, 1)] - C64::from(0.25)).norm() < 1e-15);
        let out = pd_apply(&rho, 1.0, 1e4);
        assert_eq!(out[(0, 1)], ZERO);
        assert_eq!(out[(0, 0)], rho[(0, 0)]);
    }

    #[test]
    fn gad_apply_limits() {
        let rho = SpinMatrix::new(
            C64::from(0.3),
            C64::new(0.2, 0.1),
            C64::new(0.2, -0.1),
            C64::from(0.7),
        );
        assert_eq!(gad_apply(&rho, 2.0, 0.3, 0.0), rho);
        let hot = gad_apply(&rho, 2.0, 0.5, 1e3);
        assert!((hot - SpinMatrix::identity() * C64::from(0.5)).max_modulus() < 1e-15);
        let cold = gad_apply(&rho, 2.0, 0.0, 1e3);
        assert!((cold - SpinMatrix::new(1.0.into(), ZERO, ZERO, ZERO)).max_modulus() < 1e-15);
    }

    #[test]
    fn nbar_from_temperature_values() {
        let tp = |x: f64| TemperatureParams {
            delta_e: x * BOLTZMANN * 300.0,
            temperature: 300.0,
        };
        assert_eq!(nbar_from_temperature(tp(0.0)).unwrap(), 0.5);
        assert!((nbar_from_temperature(tp(3.0_f64.ln())).unwrap() - 0.25).abs() < 1e-15);
        assert!(nbar_from_temperature(tp(800.0)).unwrap() < 1e-300);
        let bad = TemperatureParams {
            delta_e: 1e-25,
            temperature: 0.0,
        };
        assert!(nbar_from_temperature(bad).is_err());
    }

    #[test]
    fn single_spin_generators() {
        assert_eq!(pd_generator_1spin(0.0), SingleSpinGenerator::zeros());
        let g = pd_generator_1spin(2.0);
        for (k, v) in [0.0, -2.0, -2.0, 0.0].into_iter().enumerate() {
            assert_eq!(g[(k, k)], C64::from(v));
        }
        let gad = gad_generator_1spin(1.0);
        #[rustfmt::skip]
        let expected = [
            -0.5, 0.0, 0.0, 0.5,
            0.0, -0.5, 0.0, 0.0,
            0.0, 0.0, -0.5, 0.0,
            0.5, 0.0, 0.0, -0.5,
        ];
        for (k, v) in expected.into_iter().enumerate() {
            assert_eq!(gad[(k / 4, k % 4)], C64::from(v));
        }
    }

    #[test]
    fn single_spin_flows_match_kraus_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rho = random_spin_state(&mut rng);
            let rate = rng.random_range(0.0..5.0);
            let t = rng.random_range(0.0..3.0);
            let pd = matrix_exp_fixed(&(pd_generator_1spin(rate) * C64::from(t))) * vec2(&rho);
            assert!((pd - vec2(&pd_apply(&rho, rate, t))).max_modulus() < 1e-10);
            let gad = matrix_exp_fixed(&(gad_generator_1spin(rate) * C64::from(t))) * vec2(&rho);
            assert!((gad - vec2(&gad_apply(&rho, rate, 0.5, t))).max_modulus() < 1e-10);
        }
    }

    #[test]
    fn gad_generator_lift() {
        assert_eq!(
            gad_high_temperature_generator(0.0, Spin::One),
            Superoperator::zeros()
        );
        for spin in [Spin::One, Spin::Two] {
            let z = gad_high_temperature_generator(1.7, spin);
            let out = z.apply(DensityMatrix::maximally_mixed().matrix());
            assert!(out.max_modulus() < 1e-15);
            // agrees with the Lindblad form
            let l = lindblad_generator(&gad_lindblad_ops(1.7, spin));
            assert!((z.matrix() - l.matrix()).max_modulus() < 1e-14);
        }
    }

    #[test]
    fn lifted_gad_acts_on_product_states_locally() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spin_state(&mut rng);
        let b = random_spin_state(&mut rng);
        let (gamma, t) = (0.8, 0.6);
        let prod = kron2(&a, &b);
        let z = gad_high_temperature_generator(gamma, Spin::Two).exp(t);
        let expected = kron2(&a, &gad_apply(&b, gamma, 0.5, t));
        assert!((z.apply(&prod) - expected).max_modulus() < 1e-12);
    }

    #[test]
    fn cpd_generator_diagonal() {
        assert_eq!(cpd_generator(0.0, 0.0, 0.0).unwrap(), Superoperator::zeros());
        let z = cpd_generator(1.0, 2.0, 3.0).unwrap();
        let expected = [
            0.0, -2.0, -1.0, -6.0, -2.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0, -2.0, -6.0, -1.0, -2.0,
            0.0,
        ];
        for (k, v) in expected.into_iter().enumerate() {
            assert_eq!(z.matrix()[(k, k)], C64::from(v));
        }
        assert_eq!(z.matrix().iter().filter(|e| **e != ZERO).count(), 10);

        let g = 0.9;
        let z = cpd_generator(g, g, 0.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let order = crate::states::coherence_order(r, c).abs();
                let flips = (r ^ c).count_ones();
                let d = -z.matrix()[(4 * r + c, 4 * r + c)].re;
                match (order, flips) {
                    (0, 0) => assert_eq!(d, 0.0),
                    (1, _) => assert_eq!(d, g),
                    _ => assert_eq!(d, 2.0 * g),
                }
            }
        }
    }

    #[test]
    fn cpd_rejects_growing_coherences() {
        assert!(matches!(
            cpd_generator(1.0, 1.0, 2.5),
            Err(Error::NonPhysicalRates(_))
        ));
        assert!(cpd_generator(1.0, 1.0, -2.5).is_err());
        // anti-correlated dephasing is allowed
        assert!(cpd_generator(1.0, 1.0, -1.5).is_ok());
    }

    #[test]
    fn uncorrelated_cpd_is_sum_of_lifted_pd() {
        let (g1, g2) = (0.4, 2.2);
        let cpd = cpd_generator(g1, g2, 0.0).unwrap();
        let sum = lift_single_spin(&pd_generator_1spin(g1), Spin::One)
            + lift_single_spin(&pd_generator_1spin(g2), Spin::Two);
        assert_eq!(cpd, sum);
    }

    #[test]
    fn cpd_matches_lindblad_form() {
        for (g1, g2, g3) in [(1.0, 2.0, 0.5), (3.741, 3.048, 5.876), (2.0, 1.0, -2.5), (0.0, 1.0, 0.0)] {
            let ops = dephasing_lindblad_ops(g1, g2, g3).unwrap();
            let l = lindblad_generator(&ops);
            let z = cpd_generator(g1, g2, g3).unwrap();
            assert!((l.matrix() - z.matrix()).max_modulus() < 1e-13, "{g1} {g2} {g3}");
        }
        // admissible decay rates, but outside the completely positive cone
        assert!(dephasing_lindblad_ops(1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn full_generator_is_sum() {
        let p = NoiseParams::new(1.0, 2.0, 0.5, 0.3, 0.2);
        let z = full_generator(&p).unwrap();
        let mut ops = dephasing_lindblad_ops(1.0, 2.0, 0.5).unwrap();
        ops.extend(gad_lindblad_ops(0.3, Spin::One));
        ops.extend(gad_lindblad_ops(0.2, Spin::Two));
        assert!((z.matrix() - lindblad_generator(&ops).matrix()).max_modulus() < 1e-13);
        assert!(full_generator(&NoiseParams::default()).unwrap() == Superoperator::zeros());
        let gad_only = full_generator(&NoiseParams::new(0.0, 0.0, 0.0, 1.0, 2.0)).unwrap();
        assert!(gad_only
            .apply(DensityMatrix::maximally_mixed().matrix())
            .max_modulus()
            < 1e-15);
    }

    #[test]
    fn full_generator_validates() {
        let mut p = NoiseParams::new(1.0, 1.0, 0.0, 0.0, 0.0);
        p.big_gamma1 = -0.1;
        assert!(full_generator(&p).is_err());
        p.big_gamma1 = 0.1;
        p.nbar = 1.5;
        assert!(full_generator(&p).is_err());
        let p = NoiseParams::new(1.0, 1.0, 3.0, 0.0, 0.0);
        assert!(matches!(full_generator(&p), Err(Error::NonPhysicalRates(_))));
    }

    #[test]
    fn complete_positivity_region() {
        assert!(NoiseParams::new(3.741, 3.048, 5.876, 0.264, 0.255).is_completely_positive());
        let outside = NoiseParams::new(1.0, 0.1, 1.0, 0.0, 0.0);
        assert!(outside.validate().is_ok());
        assert!(!outside.is_completely_positive());
        let z = full_generator(&outside).unwrap();
        assert!(z.exp(0.1).choi_min_eigenvalue() < -1e-3);
    }

    #[test]
    fn choi_of_identity_and_unitary() {
        let c = Superoperator::identity().choi();
        // |Ω⟩⟨Ω| unnormalized: eigenvalues 4,0,...
        let eig = SymmetricEigen::new(c).eigenvalues;
        assert!((eig.max() - 4.0).abs() < 1e-12);
        assert!(eig.min().abs() < 1e-12);
        let u = crate::spinops::pulse(
            1.1,
            crate::spinops::PulsePhase::Y,
            crate::spinops::PulseTarget::Both,
        );
        let conj = Superoperator::from_map(|m| u.conjugate(m));
        assert!(conj.choi_min_eigenvalue() > -1e-12);
        // transpose is positive but not completely positive
        let transpose = Superoperator::from_map(|m| m.transpose());
        assert!(transpose.choi_min_eigenvalue() < -0.5);
    }
}
