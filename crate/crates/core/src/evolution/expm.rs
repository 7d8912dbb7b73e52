//! Matrix exponential by scaling and squaring of a truncated Taylor series.

use nalgebra::{DMatrix, SMatrix};

use crate::error::{Error, Result};
use crate::spinops::C64;

/// After scaling, ‖A‖₁ ≤ this; 0.5¹⁹/19! ≈ 1.6e−23 bounds the first dropped term.
const SCALED_NORM: f64 = 0.5;
const MAX_TERMS: usize = 30;

fn one_norm<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(M) for a fixed-size complex matrix. Entries are assumed finite.
pub fn matrix_exp_fixed<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let norm = one_norm(m);
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let a = m * C64::from(0.5_f64.powi(squarings));

    let mut sum = SMatrix::<C64, N, N>::identity();
    let mut term = SMatrix::<C64, N, N>::identity();
    for k in 1..=MAX_TERMS {
        term = (term * a) / C64::from(k as f64);
        sum += term;
        if one_norm(&term) <= f64::EPSILON * 1e-3 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// exp(M) for a dynamically sized matrix; rejects non-square or
/// non-finite input.
pub fn matrix_exp(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = m
        .column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let a = m * C64::from(0.5_f64.powi(squarings));
    let mut sum = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..=MAX_TERMS {
        term = (&term * &a) / C64::from(k as f64);
        sum += &term;
        let tn = term.iter().map(|z| z.norm()).sum::<f64>();
        let sn = sum.iter().map(|z| z.norm()).sum::<f64>();
        if tn <= f64::EPSILON * 1e-3 * sn {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinops::MaxModulus;
    use proptest::prelude::*;

    fn close(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).max_modulus()
    }

    #[test]
    fn zero_gives_identity() {
        let z = DMatrix::<C64>::zeros(5, 5);
        assert_eq!(matrix_exp(&z).unwrap(), DMatrix::identity(5, 5));
        assert_eq!(
            matrix_exp_fixed(&SMatrix::<C64, 3, 3>::zeros()),
            SMatrix::<C64, 3, 3>::identity()
        );
    }

    #[test]
    fn diagonal_input() {
        let d = [C64::new(-3.0, 0.5), C64::new(1.2, 0.0), C64::new(-40.0, 2.0), C64::new(0.0, -7.0)];
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d));
        let e = matrix_exp(&m).unwrap();
        for (k, z) in d.iter().enumerate() {
            let rel = (e[(k, k)] - z.exp()).norm() / z.exp().norm();
            assert!(rel < 1e-12, "entry {k}: rel error {rel:e}");
        }
        assert_eq!(e.iter().filter(|z| z.norm() != 0.0).count(), 4);
    }

    #[test]
    fn nilpotent_closed_form() {
        // exp([[0, a], [0, 0]]) = [[1, a], [0, 1]]
        let m = DMatrix::from_row_slice(2, 2, &[C64::from(0.0), C64::from(7.5), C64::from(0.0), C64::from(0.0)]);
        let e = matrix_exp(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[C64::from(1.0), C64::from(7.5), C64::from(0.0), C64::from(1.0)]);
        assert!(close(&e, &expected) < 1e-13);
    }

    #[test]
    fn rotation_generator() {
        // exp(θ [[0, -1], [1, 0]]) is a rotation by θ, here with ‖M‖ = 100
        let theta = 100.0;
        let m = DMatrix::from_row_slice(2, 2, &[C64::from(0.0), C64::from(-theta), C64::from(theta), C64::from(0.0)]);
        let e = matrix_exp(&m).unwrap();
        let (c, s) = (theta.cos(), theta.sin());
        let expected = DMatrix::from_row_slice(2, 2, &[C64::from(c), C64::from(-s), C64::from(s), C64::from(c)]);
        assert!(close(&e, &expected) < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let m = DMatrix::<C64>::zeros(2, 3);
        assert!(matches!(matrix_exp(&m), Err(Error::NotSquare { rows: 2, cols: 3 })));
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(matrix_exp(&m), Err(Error::NonFinite)));
    }

    fn arb_matrix(n: usize, scale: f64) -> impl Strategy<Value = DMatrix<C64>> {
        proptest::collection::vec((-scale..scale, -scale..scale), n * n)
            .prop_map(move |v| DMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| C64::new(re, im))))
    }

    proptest! {
        #[test]
        fn inverse_property(m in arb_matrix(4, 2.0)) {
            let e = matrix_exp(&m).unwrap();
            let f = matrix_exp(&(-&m)).unwrap();
            let prod = &e * &f;
            prop_assert!(close(&prod, &DMatrix::identity(4, 4)) < 1e-10);
        }

        #[test]
        fn fixed_and_dynamic_agree(m in arb_matrix(4, 3.0)) {
            let fixed = SMatrix::<C64, 4, 4>::from_iterator(m.iter().cloned());
            let a = matrix_exp_fixed(&fixed);
            let b = matrix_exp(&m).unwrap();
            let d = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            prop_assert!(d < 1e-12 * b.max_modulus().max(1.0));
        }

        #[test]
        fn matches_eigendecomposition_for_hermitian(m in arb_matrix(4, 5.0)) {
            // exp(iH) through the Hermitian eigendecomposition
            let h = (&m + m.adjoint()) * C64::from(0.5);
            let eig = nalgebra::SymmetricEigen::new(h.clone());
            let phases = eig.eigenvalues.map(|l| C64::new(0.0, l).exp());
            let expected = &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
            let e = matrix_exp(&(h * C64::new(0.0, 1.0))).unwrap();
            prop_assert!(close(&e, &expected) < 1e-11);
        }
    }
}
