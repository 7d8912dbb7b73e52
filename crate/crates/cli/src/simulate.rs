//! Simulated experiments: decay curves and noisy tomography readouts.

use std::f64::consts::PI;

use mqc_relax::estimation::{CurveKind, DecayCurve, Sample};
use mqc_relax::evolution::propagate;
use mqc_relax::spinops::{pauli, pulse, Axis, PulsePhase, PulseTarget, Spin};
use mqc_relax::states::{prepare_coherence, thermal_state};
use mqc_relax::tomography::{full_readout, TomographyRecord};
use mqc_relax::{CoherenceKind, DensityMatrix, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

/// Smallest reference magnitude a signal can be normalized by.
const MIN_REFERENCE: f64 = 1e-15;

fn coherence_of(kind: CurveKind) -> Option<CoherenceKind> {
    match kind {
        CurveKind::Sq1 => Some(CoherenceKind::Sq1),
        CurveKind::Sq2 => Some(CoherenceKind::Sq2),
        CurveKind::Zq => Some(CoherenceKind::Zq),
        CurveKind::Dq => Some(CoherenceKind::Dq),
        CurveKind::T1Spin1 | CurveKind::T1Spin2 => None,
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn kind_stream(kind: CurveKind) -> u64 {
    CurveKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64
}

/// Noiseless normalized signal of `kind` on the settings' time grid.
///
/// Coherence kinds follow the magnitude of the prepared coherence element.
/// Inversion recovery follows the z magnetization of the inverted spin,
/// relaxing as a deviation from the thermal state.
pub fn clean_signal(kind: CurveKind, s: &Settings) -> CliResult<Vec<f64>> {
    let core = |e| CliError::data(kind.label(), e);
    match coherence_of(kind) {
        Some(coh) => {
            let rho0 = prepare_coherence(coh, &s.system, s.epsilon, s.nu_rf).map_err(CliError::config)?;
            let (r, c) = coh.basis_pair();
            let reference = rho0.element(r, c).norm();
            if reference < MIN_REFERENCE {
                return Err(CliError::Config(format!(
                    "epsilon: {} leaves no {coh} coherence to follow",
                    s.epsilon
                )));
            }
            s.time_grid
                .iter()
                .map(|&t| {
                    let rho = propagate(&rho0, &s.noise, t).map_err(core)?;
                    Ok(rho.element(r, c).norm() / reference)
                })
                .collect()
        }
        None => {
            let spin = if kind == CurveKind::T1Spin1 { Spin::One } else { Spin::Two };
            let target = if spin == Spin::One { PulseTarget::Spin1 } else { PulseTarget::Spin2 };
            let thermal = thermal_state(s.epsilon).map_err(CliError::config)?;
            let inverted = thermal.evolve_unitary(&pulse(PI, PulsePhase::Y, target));
            let sz = pauli(spin, Axis::Z);
            let magnetization = |m: &mqc_relax::spinops::Operator| (sz * m).trace().re;
            let equilibrium = magnetization(thermal.matrix());
            if equilibrium.abs() < MIN_REFERENCE {
                return Err(CliError::Config(format!(
                    "epsilon: {} leaves no magnetization to invert",
                    s.epsilon
                )));
            }
            let deviation = inverted.matrix() - thermal.matrix();
            s.time_grid
                .iter()
                .map(|&t| {
                    let prop = mqc_relax::evolution::Propagator::new(&s.noise, t).map_err(core)?;
                    let dev_t = prop.superop.apply(&deviation);
                    Ok(magnetization(&(thermal.matrix() + dev_t)) / equilibrium)
                })
                .collect()
        }
    }
}

/// Simulated curve with optional multiplicative Gaussian noise drawn from a
/// stream determined by the seed and the curve kind.
pub fn simulate_curve(kind: CurveKind, s: &Settings) -> CliResult<DecayCurve> {
    let clean = clean_signal(kind, s)?;
    let mut rng = rng_for(s.seed, kind_stream(kind));
    let noise = Normal::new(0.0, s.noise_level).map_err(|e| CliError::Config(format!("noise_level: {e}")))?;
    let samples = s
        .time_grid
        .iter()
        .zip(clean)
        .map(|(&t, y)| {
            let y = if s.noise_level > 0.0 { y * (1.0 + noise.sample(&mut rng)) } else { y };
            Sample::new(t, y)
        })
        .collect();
    DecayCurve::new(kind, samples).map_err(|e| CliError::data(kind.label(), e))
}

/// Readouts of `rho` with additive Gaussian noise of the configured level,
/// clipped to the valid observable range.
pub fn noisy_readout(rho: &DensityMatrix, s: &Settings) -> CliResult<Vec<TomographyRecord>> {
    let mut records = full_readout(rho);
    if s.noise_level > 0.0 {
        let mut rng = rng_for(s.seed, 100);
        let noise = Normal::new(0.0, s.noise_level).map_err(|e| CliError::Config(format!("noise_level: {e}")))?;
        for rec in &mut records {
            for v in &mut rec.observables {
                *v = (*v + noise.sample(&mut rng)).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(records)
}

/// Row-major nested `[re, im]` pairs.
pub fn matrix_json(m: &mqc_relax::spinops::Operator) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> = (0..4)
        .map(|r| (0..4).map(|c| pair(m[(r, c)])).collect())
        .collect();
    serde_json::json!(rows)
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}
