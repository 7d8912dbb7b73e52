//! Time propagation under the two-spin decoherence generator, and the
//! closed-form zero- and double-quantum decay laws.

mod expm;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

pub use expm::{matrix_exp, matrix_exp_fixed};

use crate::channels::{full_generator, NoiseParams, Superoperator};
use crate::error::{Error, Result};
use crate::spinops::{Operator, C64};
use crate::states::{DensityMatrix, MultipleQuantum};

/// exp(Z t) for a fixed set of noise parameters.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub superop: Superoperator,
    pub t: f64,
    pub params: NoiseParams,
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::param("t", format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

impl Propagator {
    pub fn new(params: &NoiseParams, t: f64) -> Result<Self> {
        check_time(t)?;
        let z = full_generator(params)?;
        Ok(Propagator {
            superop: z.exp(t),
            t,
            params: *params,
        })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let m = self.superop.apply(rho.matrix());
        // restore exact Hermiticity lost to rounding
        let m = (m + m.adjoint()) * C64::from(0.5);
        DensityMatrix::from_matrix_unchecked(m)
    }
}

/// devec(exp(Z t) vec(ρ₀))
pub fn propagate(rho0: &DensityMatrix, params: &NoiseParams, t: f64) -> Result<DensityMatrix> {
    Ok(Propagator::new(params, t)?.apply(rho0))
}

type CacheKey = ([u64; 6], u64);

fn cache_key(params: &NoiseParams, t: f64) -> CacheKey {
    let p = params.as_array();
    (
        [
            p[0].to_bits(),
            p[1].to_bits(),
            p[2].to_bits(),
            p[3].to_bits(),
            p[4].to_bits(),
            params.nbar.to_bits(),
        ],
        t.to_bits(),
    )
}

/// Memoizes propagators by (params, t) for repeated sweeps over the same
/// time grid. Shareable across threads.
#[derive(Debug, Default)]
pub struct PropagatorCache {
    entries: RwLock<HashMap<CacheKey, Arc<Propagator>>>,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, params: &NoiseParams, t: f64) -> Result<Arc<Propagator>> {
        let key = cache_key(params, t);
        if let Some(p) = self.entries.read().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(Propagator::new(params, t)?);
        self.entries
            .write()
            .expect("cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&p));
        Ok(p)
    }

    pub fn propagate(
        &self,
        rho0: &DensityMatrix,
        params: &NoiseParams,
        t: f64,
    ) -> Result<DensityMatrix> {
        Ok(self.get(params, t)?.apply(rho0))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Populations α₁..α₄ and real symmetric coherences β₁..β₆ laid out as
///
/// ```text
/// α1 β1 β2 β3
/// β1 α2 β4 β5
/// β2 β4 α3 β6
/// β3 β5 β6 α4
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticDecayState {
    pub alpha: [f64; 4],
    pub beta: [f64; 6],
    pub t: f64,
}

/// (row, col) of each β in the upper triangle.
pub const BETA_POSITIONS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

impl AnalyticDecayState {
    pub fn to_matrix(&self) -> Operator {
        let mut m = Operator::from_diagonal(&nalgebra::Vector4::from(self.alpha.map(C64::from)));
        for (&(r, c), &b) in BETA_POSITIONS.iter().zip(&self.beta) {
            m[(r, c)] = C64::from(b);
            m[(c, r)] = C64::from(b);
        }
        m
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.to_matrix())
    }
}

/// Decay rate of the ZQ (β₄) or DQ (β₃) coherence:
/// γ₁ + γ₂ ∓ γ₃ + (Γ₁ + Γ₂)/2.
pub fn coherence_decay_rate(kind: MultipleQuantum, params: &NoiseParams) -> f64 {
    let gad = 0.5 * (params.big_gamma1 + params.big_gamma2);
    match kind {
        MultipleQuantum::Zero => params.gamma1 + params.gamma2 - params.gamma3 + gad,
        MultipleQuantum::Double => params.gamma1 + params.gamma2 + params.gamma3 + gad,
    }
}

fn analytic(kind: MultipleQuantum, params: &NoiseParams, t: f64) -> Result<AnalyticDecayState> {
    check_time(t)?;
    let pop = (-t * (params.big_gamma1 + params.big_gamma2)).exp();
    let coh = 0.5 * (-t * coherence_decay_rate(kind, params)).exp();
    let (lo, hi) = (0.25 * (1.0 - pop), 0.25 * (1.0 + pop));
    let mut beta = [0.0; 6];
    let alpha = match kind {
        MultipleQuantum::Zero => {
            beta[3] = coh;
            [lo, hi, hi, lo]
        }
        MultipleQuantum::Double => {
            beta[2] = coh;
            [hi, lo, lo, hi]
        }
    };
    Ok(AnalyticDecayState { alpha, beta, t })
}

/// Closed-form state at time t for the (|01⟩+|10⟩)/√2 initial state.
pub fn analytic_zq(params: &NoiseParams, t: f64) -> Result<AnalyticDecayState> {
    analytic(MultipleQuantum::Zero, params, t)
}

/// Closed-form state at time t for the (|00⟩+|11⟩)/√2 initial state.
pub fn analytic_dq(params: &NoiseParams, t: f64) -> Result<AnalyticDecayState> {
    analytic(MultipleQuantum::Double, params, t)
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * k as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// 64 log-spaced points over [1e−3, 10] s.
pub fn default_time_grid() -> Vec<f64> {
    log_spaced(1e-3, 10.0, 64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinops::MaxModulus;
    use crate::states::{coherence_state, CoherenceKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut impl Rng) -> NoiseParams {
        let g1 = rng.random_range(0.0..8.0);
        let g2 = rng.random_range(0.0..8.0);
        let bound = 2.0 * f64::sqrt(g1 * g2);
        NoiseParams::new(
            g1,
            g2,
            rng.random_range(-bound..=bound),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
        )
    }

    fn random_state(rng: &mut impl Rng) -> DensityMatrix {
        let a = Operator::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = a * a.adjoint();
        DensityMatrix::new(m / m.trace()).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_state(&mut rng);
        let out = propagate(&rho, &random_params(&mut rng), 0.0).unwrap();
        assert!((out.matrix() - rho.matrix()).max_modulus() < 1e-15);
    }

    #[test]
    fn long_time_limit_is_maximally_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = NoiseParams::new(1.0, 0.8, 0.5, 1.2, 0.9);
        for _ in 0..5 {
            let rho = random_state(&mut rng);
            let out = propagate(&rho, &params, 1e3).unwrap();
            assert!((out.matrix() - DensityMatrix::maximally_mixed().matrix()).max_modulus() < 1e-8);
        }
    }

    #[test]
    fn analytic_limits() {
        let p = NoiseParams::new(1.0, 2.0, 0.7, 0.3, 0.4);
        let zq0 = analytic_zq(&p, 0.0).unwrap();
        assert!((zq0.to_matrix() - coherence_state(CoherenceKind::Zq).matrix()).max_modulus() < 1e-15);
        let dq0 = analytic_dq(&p, 0.0).unwrap();
        assert!((dq0.to_matrix() - coherence_state(CoherenceKind::Dq).matrix()).max_modulus() < 1e-15);
        for s in [analytic_zq(&p, 500.0).unwrap(), analytic_dq(&p, 500.0).unwrap()] {
            assert!((s.to_matrix() - DensityMatrix::maximally_mixed().matrix()).max_modulus() < 1e-15);
            assert!((s.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(analytic_zq(&p, -1.0).is_err());
    }

    #[test]
    fn zq_without_amplitude_damping() {
        let p = NoiseParams::new(1.5, 0.5, 0.8, 0.0, 0.0);
        for t in [0.1, 0.5, 2.0] {
            let s = analytic_zq(&p, t).unwrap();
            assert_eq!(s.alpha, [0.0, 0.5, 0.5, 0.0]);
            assert!((s.beta[3] - 0.5 * (-t * (1.5 + 0.5 - 0.8)).exp()).abs() < 1e-16);
        }
    }

    #[test]
    fn dq_exponent_exceeds_zq_by_twice_gamma3() {
        let p = NoiseParams::new(1.1, 0.9, 0.6, 0.2, 0.3);
        let t = 0.8;
        let zq = analytic_zq(&p, t).unwrap().beta[3];
        let dq = analytic_dq(&p, t).unwrap().beta[2];
        let rate_gap = (zq / dq).ln() / t;
        assert!((rate_gap - 2.0 * p.gamma3).abs() < 1e-12);
    }

    #[test]
    fn decay_rates() {
        let zero = NoiseParams::default();
        assert_eq!(coherence_decay_rate(MultipleQuantum::Zero, &zero), 0.0);
        assert_eq!(coherence_decay_rate(MultipleQuantum::Double, &zero), 0.0);
        let p = NoiseParams::new(1.0, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(coherence_decay_rate(MultipleQuantum::Zero, &p), 1.0);
        assert_eq!(coherence_decay_rate(MultipleQuantum::Double, &p), 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let d = coherence_decay_rate(MultipleQuantum::Double, &p)
                - coherence_decay_rate(MultipleQuantum::Zero, &p);
            assert!((d - 2.0 * p.gamma3).abs() < 1e-12);
        }
    }

    #[test]
    fn propagate_matches_analytic_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let p = random_params(&mut rng);
            for t in log_spaced(1e-3, 5.0, 8) {
                let zq = propagate(&coherence_state(CoherenceKind::Zq), &p, t).unwrap();
                assert!((zq.matrix() - analytic_zq(&p, t).unwrap().to_matrix()).max_modulus() < 1e-10);
                let dq = propagate(&coherence_state(CoherenceKind::Dq), &p, t).unwrap();
                assert!((dq.matrix() - analytic_dq(&p, t).unwrap().to_matrix()).max_modulus() < 1e-10);
            }
        }
    }

    #[test]
    fn semigroup_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = random_params(&mut rng);
            let rho = random_state(&mut rng);
            let (t1, t2) = (rng.random_range(0.0..1.5), rng.random_range(0.0..1.5));
            let two_step = propagate(&propagate(&rho, &p, t1).unwrap(), &p, t2).unwrap();
            let one_step = propagate(&rho, &p, t1 + t2).unwrap();
            assert!((two_step.matrix() - one_step.matrix()).max_modulus() < 1e-10);
        }
    }

    #[test]
    fn purity_decreases_and_positivity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let p = random_params(&mut rng);
            let rho = random_state(&mut rng);
            let mut last = rho.purity();
            for t in log_spaced(1e-3, 5.0, 24) {
                let out = propagate(&rho, &p, t).unwrap();
                let purity = out.purity();
                assert!(purity <= last + 1e-12, "purity rose from {last} to {purity}");
                assert!(out.min_eigenvalue() >= -1e-10);
                last = purity;
            }
        }
    }

    #[test]
    fn cache_returns_identical_propagators() {
        let cache = PropagatorCache::new();
        let p = NoiseParams::new(1.0, 1.0, 0.5, 0.1, 0.1);
        let a = cache.get(&p, 0.3).unwrap();
        let b = cache.get(&p, 0.3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
        let rho = coherence_state(CoherenceKind::Dq);
        let direct = propagate(&rho, &p, 0.7).unwrap();
        assert_eq!(cache.propagate(&rho, &p, 0.7).unwrap(), direct);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_time_grid();
        assert_eq!(g.len(), 64);
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert_eq!(g[63], 10.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
