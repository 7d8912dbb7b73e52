use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use super::curve::{CurveKind, DecayCurve, MIN_FIT_SAMPLES};
use super::lm::{self, Problem};
use crate::channels::NoiseParams;
use crate::error::{Error, Result};
use crate::evolution::coherence_decay_rate;
use crate::states::MultipleQuantum;

/// Parameter names in the order used by [`NoiseParams::as_array`].
pub const PARAM_NAMES: [&str; 5] = ["gamma1", "gamma2", "gamma3", "Gamma1", "Gamma2"];

const GAMMA3: usize = 2;
const RATE_GUESS_MIN: f64 = 1e-4;
const RATE_GUESS_MAX: f64 = 1e3;
/// Largest ratio between the time spans of curves fitted together.
const MAX_SPAN_RATIO: f64 = 1e4;

/// ∂R/∂(γ₁, γ₂, γ₃, Γ₁, Γ₂) for the rate R governing a curve kind.
/// Every kind's rate is linear in the noise parameters.
fn rate_weights(kind: CurveKind) -> [f64; 5] {
    match kind {
        CurveKind::T1Spin1 => [0.0, 0.0, 0.0, 1.0, 0.0],
        CurveKind::T1Spin2 => [0.0, 0.0, 0.0, 0.0, 1.0],
        CurveKind::Sq1 => [1.0, 0.0, 0.0, 0.0, 0.0],
        CurveKind::Sq2 => [0.0, 1.0, 0.0, 0.0, 0.0],
        CurveKind::Zq => [1.0, 1.0, -1.0, 0.5, 0.5],
        CurveKind::Dq => [1.0, 1.0, 1.0, 0.5, 0.5],
    }
}

/// Rate (1/s) that governs the curve of `kind` under `params`.
pub fn kind_rate(kind: CurveKind, params: &NoiseParams) -> f64 {
    match kind {
        CurveKind::Zq => coherence_decay_rate(MultipleQuantum::Zero, params),
        CurveKind::Dq => coherence_decay_rate(MultipleQuantum::Double, params),
        _ => dot(&rate_weights(kind), &params.as_array()),
    }
}

fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-amplitude shape with rate `rate`, and its derivative in the rate.
fn shape(kind: CurveKind, rate: f64, t: f64) -> (f64, f64) {
    let e = (-rate * t).exp();
    if kind.is_recovery() {
        (1.0 - 2.0 * e, 2.0 * t * e)
    } else {
        (e, -t * e)
    }
}

/// Normalized signal of `kind` at time `t ≥ 0`: e^{−Rt} for coherences,
/// 1 − 2e^{−Γt} for inversion recovery.
pub fn signal_model(kind: CurveKind, params: &NoiseParams, t: f64) -> f64 {
    shape(kind, kind_rate(kind, params), t).0
}

/// Noiseless curve of `kind` sampled at `times`.
pub fn synthesize(kind: CurveKind, params: &NoiseParams, times: &[f64]) -> Result<DecayCurve> {
    DecayCurve::from_fn(kind, times, |t| signal_model(kind, params, t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// 1/s.
    pub rate: f64,
    /// 1/s.
    pub stderr: f64,
    /// Weighted residual 2-norm at the optimum.
    pub residual_norm: f64,
    pub amplitude: f64,
    pub iterations: usize,
}

impl fmt::Display for RateEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4} 1/s", self.rate, self.stderr)
    }
}

fn weights(curve: &DecayCurve) -> Vec<f64> {
    curve
        .samples()
        .iter()
        .map(|s| s.sigma.map_or(1.0, |sig| 1.0 / sig))
        .collect()
}

struct SingleExponential<'a> {
    curve: &'a DecayCurve,
    weights: Vec<f64>,
}

impl Problem for SingleExponential<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let kind = self.curve.kind();
        DVector::from_iterator(
            self.curve.len(),
            self.curve
                .samples()
                .iter()
                .zip(&self.weights)
                .map(|(s, w)| w * (x[0] * shape(kind, x[1], s.t).0 - s.signal)),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let kind = self.curve.kind();
        let mut j = DMatrix::zeros(self.curve.len(), 2);
        for (i, (s, w)) in self.curve.samples().iter().zip(&self.weights).enumerate() {
            let (f, df) = shape(kind, x[1], s.t);
            j[(i, 0)] = w * f;
            j[(i, 1)] = w * x[0] * df;
        }
        j
    }
}

fn check_fittable(curve: &DecayCurve) -> Result<()> {
    if curve.len() < MIN_FIT_SAMPLES {
        return Err(Error::InvalidCurve(format!(
            "{} curve has {} samples, at least {MIN_FIT_SAMPLES} are needed",
            curve.kind(),
            curve.len()
        )));
    }
    if !curve.kind().is_recovery() {
        if let Some((i, s)) = curve
            .samples()
            .iter()
            .enumerate()
            .find(|(_, s)| s.signal <= 0.0)
        {
            return Err(Error::InvalidCurve(format!(
                "{} curve row {}: signal {} must be positive",
                curve.kind(),
                i + 1,
                s.signal
            )));
        }
    }
    let (lo, hi) = curve
        .samples()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.signal), hi.max(s.signal))
        });
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
        return Err(Error::DegenerateCurve(format!(
            "{} curve has constant signal {hi}",
            curve.kind()
        )));
    }
    Ok(())
}

fn initial_guess(curve: &DecayCurve) -> (f64, f64) {
    let s = curve.samples();
    let (t0, t1) = (s[0].t, s[1].t);
    let span = s[s.len() - 1].t - t0;
    let fallback = 1.0 / span;
    let clamp = |r: f64| {
        let r = if r.is_finite() { r } else { fallback };
        r.clamp(RATE_GUESS_MIN, RATE_GUESS_MAX)
    };
    if curve.kind().is_recovery() {
        let amp = 0.5 * (s[s.len() - 1].signal - s[0].signal);
        let u = |y: f64| 0.5 * (1.0 - y / amp);
        let rate = clamp((u(s[0].signal) / u(s[1].signal)).ln() / (t1 - t0));
        (amp, rate)
    } else {
        let rate = clamp((s[0].signal / s[1].signal).ln() / (t1 - t0));
        (s[0].signal * (rate * t0).exp(), rate)
    }
}

/// Weighted least-squares fit of A·e^{−Rt}, or A(1 − 2e^{−Rt}) for
/// inversion recovery, with the rate's standard error from the Jacobian
/// at the optimum scaled by the reduced χ².
pub fn fit_exponential(curve: &DecayCurve) -> Result<RateEstimate> {
    check_fittable(curve)?;
    let problem = SingleExponential {
        curve,
        weights: weights(curve),
    };
    let (a0, r0) = initial_guess(curve);
    let out = lm::minimize(&problem, DVector::from_vec(vec![a0, r0]));
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            gradient: out.gradient_max,
        });
    }
    let cov = lm::covariance(&out.jacobian, &out.residuals).ok_or_else(|| {
        Error::DegenerateCurve(format!("{} curve does not determine a rate", curve.kind()))
    })?;
    Ok(RateEstimate {
        rate: out.x[1],
        stderr: cov[(1, 1)].max(0.0).sqrt(),
        residual_norm: out.residuals.norm(),
        amplitude: out.x[0],
        iterations: out.iterations,
    })
}

/// γ₃ = (R_DQ − R_ZQ)/2 with the two standard errors combined in quadrature.
pub fn gamma3_difference(zq: &RateEstimate, dq: &RateEstimate) -> RateEstimate {
    RateEstimate {
        rate: 0.5 * (dq.rate - zq.rate),
        stderr: 0.5 * zq.stderr.hypot(dq.stderr),
        residual_norm: zq.residual_norm.hypot(dq.residual_norm),
        amplitude: 1.0,
        iterations: zq.iterations + dq.iterations,
    }
}

/// Compares measured ZQ/DQ rates with those implied by the other
/// parameters. With γ₁, γ₂, Γ₁, Γ₂ fixed, the model predicts
/// R_ZQ = S − γ₃ and R_DQ = S + γ₃ with S = γ₁ + γ₂ + (Γ₁ + Γ₂)/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDiagnostic {
    pub predicted_sum: f64,
    pub predicted_zq: f64,
    pub predicted_dq: f64,
    pub measured_zq: f64,
    pub measured_dq: f64,
    /// measured − predicted.
    pub zq_residual: f64,
    /// measured − predicted.
    pub dq_residual: f64,
}

impl ConsistencyDiagnostic {
    pub fn new(params: &NoiseParams, measured_zq: f64, measured_dq: f64) -> Self {
        let predicted_sum =
            params.gamma1 + params.gamma2 + 0.5 * (params.big_gamma1 + params.big_gamma2);
        let predicted_zq = predicted_sum - params.gamma3;
        let predicted_dq = predicted_sum + params.gamma3;
        ConsistencyDiagnostic {
            predicted_sum,
            predicted_zq,
            predicted_dq,
            measured_zq,
            measured_dq,
            zq_residual: measured_zq - predicted_zq,
            dq_residual: measured_dq - predicted_dq,
        }
    }

    /// Largest absolute rate mismatch.
    pub fn max_abs_residual(&self) -> f64 {
        self.zq_residual.abs().max(self.dq_residual.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Difference,
    Joint,
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::Difference => "difference",
            FitMode::Joint => "joint",
        })
    }
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "difference" => Ok(FitMode::Difference),
            "joint" => Ok(FitMode::Joint),
            _ => Err(Error::param(
                "mode",
                format!("unknown fit mode `{s}` (expected difference or joint)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub mode: FitMode,
    pub params: NoiseParams,
    /// Standard errors in [`PARAM_NAMES`] order; `None` for fixed inputs.
    pub stderr: [Option<f64>; 5],
    /// Weighted residual 2-norm of each curve.
    pub per_curve_residuals: BTreeMap<CurveKind, f64>,
    /// Rate each fitted curve was drawn with.
    pub curve_rates: BTreeMap<CurveKind, f64>,
    pub amplitudes: BTreeMap<CurveKind, f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max: f64,
    pub consistency: Option<ConsistencyDiagnostic>,
}

impl FitReport {
    /// Fitted signal of `kind` at `t`, if that curve took part in the fit.
    pub fn fitted_signal(&self, kind: CurveKind, t: f64) -> Option<f64> {
        let rate = self.curve_rates.get(&kind)?;
        let amp = self.amplitudes.get(&kind)?;
        Some(amp * shape(kind, *rate, t).0)
    }

    pub fn max_residual(&self) -> f64 {
        self.per_curve_residuals.values().fold(0.0, |a, &b| a.max(b))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Flat JSON object: parameter values, `<name>_stderr`, `residual_<kind>`,
/// `rate_<kind>`, `amplitude_<kind>`, convergence fields and the
/// `consistency_*` diagnostic.
impl Serialize for FitReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("mode", &self.mode)?;
        for (name, v) in PARAM_NAMES.iter().zip(self.params.as_array()) {
            map.serialize_entry(name, &v)?;
        }
        map.serialize_entry("nbar", &self.params.nbar)?;
        for (name, e) in PARAM_NAMES.iter().zip(&self.stderr) {
            map.serialize_entry(&format!("{name}_stderr"), e)?;
        }
        for (kind, r) in &self.per_curve_residuals {
            map.serialize_entry(&format!("residual_{kind}"), r)?;
        }
        for (kind, r) in &self.curve_rates {
            map.serialize_entry(&format!("rate_{kind}"), r)?;
        }
        for (kind, a) in &self.amplitudes {
            map.serialize_entry(&format!("amplitude_{kind}"), a)?;
        }
        map.serialize_entry("converged", &self.converged)?;
        map.serialize_entry("iterations", &self.iterations)?;
        map.serialize_entry("gradient_max", &self.gradient_max)?;
        if let Some(c) = &self.consistency {
            map.serialize_entry("consistency_predicted_sum", &c.predicted_sum)?;
            map.serialize_entry("consistency_predicted_zq", &c.predicted_zq)?;
            map.serialize_entry("consistency_predicted_dq", &c.predicted_dq)?;
            map.serialize_entry("consistency_measured_zq", &c.measured_zq)?;
            map.serialize_entry("consistency_measured_dq", &c.measured_dq)?;
            map.serialize_entry("consistency_zq_residual", &c.zq_residual)?;
            map.serialize_entry("consistency_dq_residual", &c.dq_residual)?;
        }
        map.end()
    }
}

pub fn save_report(report: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)?;
    Ok(())
}

/// Fits each curve independently; curves run on separate threads.
pub fn fit_each(curves: &[&DecayCurve]) -> Result<Vec<RateEstimate>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = curves
            .iter()
            .map(|c| scope.spawn(move || fit_exponential(c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("curve fit thread panicked"))
            .collect()
    })
}

fn index_curves(curves: &[DecayCurve]) -> Result<BTreeMap<CurveKind, &DecayCurve>> {
    let mut by_kind = BTreeMap::new();
    for c in curves {
        if by_kind.insert(c.kind(), c).is_some() {
            return Err(Error::InvalidCurve(format!(
                "more than one {} curve supplied",
                c.kind()
            )));
        }
    }
    let missing: Vec<&str> = [CurveKind::Zq, CurveKind::Dq]
        .into_iter()
        .filter(|k| !by_kind.contains_key(k))
        .map(CurveKind::label)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCurves(missing.join(", ")));
    }
    let spans: Vec<f64> = by_kind
        .values()
        .filter_map(|c| c.samples().last().map(|s| s.t))
        .collect();
    let (lo, hi) = spans
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if lo > 0.0 && hi / lo > MAX_SPAN_RATIO {
        return Err(Error::InvalidCurve(format!(
            "inconsistent time units: curve spans range from {lo} s to {hi} s"
        )));
    }
    Ok(by_kind)
}

/// Difference estimator on the ZQ and DQ curves. The remaining
/// parameters are taken from `baseline`.
pub fn difference_report(curves: &[DecayCurve], baseline: &NoiseParams) -> Result<FitReport> {
    let by_kind = index_curves(curves)?;
    let pair = [by_kind[&CurveKind::Zq], by_kind[&CurveKind::Dq]];
    let fits = fit_each(&pair)?;
    let (zq, dq) = (fits[0], fits[1]);
    let g3 = gamma3_difference(&zq, &dq);
    let params = NoiseParams {
        gamma3: g3.rate,
        ..*baseline
    };
    let mut stderr = [None; 5];
    stderr[GAMMA3] = Some(g3.stderr);
    let kinds = [CurveKind::Zq, CurveKind::Dq];
    Ok(FitReport {
        mode: FitMode::Difference,
        params,
        stderr,
        per_curve_residuals: kinds.iter().zip(&fits).map(|(k, f)| (*k, f.residual_norm)).collect(),
        curve_rates: kinds.iter().zip(&fits).map(|(k, f)| (*k, f.rate)).collect(),
        amplitudes: kinds.iter().zip(&fits).map(|(k, f)| (*k, f.amplitude)).collect(),
        converged: true,
        iterations: g3.iterations,
        gradient_max: 0.0,
        consistency: Some(ConsistencyDiagnostic::new(&params, zq.rate, dq.rate)),
    })
}

/// Which curve kind determines each non-γ₃ parameter on its own.
const DETERMINING_KIND: [(usize, CurveKind); 4] = [
    (0, CurveKind::Sq1),
    (1, CurveKind::Sq2),
    (3, CurveKind::T1Spin1),
    (4, CurveKind::T1Spin2),
];

struct JointModel<'a> {
    curves: Vec<(&'a DecayCurve, Vec<f64>)>,
    /// Indices into the five parameters that are fitted.
    free: Vec<usize>,
    fixed: [f64; 5],
    rows: usize,
}

impl JointModel<'_> {
    fn rates(&self, x: &DVector<f64>) -> [f64; 5] {
        let mut p = self.fixed;
        for (k, &idx) in self.free.iter().enumerate() {
            p[idx] = if idx == GAMMA3 { x[k] } else { x[k] * x[k] };
        }
        p
    }

    fn amplitude(&self, x: &DVector<f64>, c: usize) -> f64 {
        x[self.free.len() + c]
    }

    /// Jacobian in either the search coordinates or the rates themselves.
    fn jacobian_in(&self, x: &DVector<f64>, natural: bool) -> DMatrix<f64> {
        let p = self.rates(x);
        let nf = self.free.len();
        let mut j = DMatrix::zeros(self.rows, nf + self.curves.len());
        let mut row = 0;
        for (c, (curve, w)) in self.curves.iter().enumerate() {
            let kind = curve.kind();
            let g = rate_weights(kind);
            let rate = dot(&g, &p);
            let amp = self.amplitude(x, c);
            for (s, wi) in curve.samples().iter().zip(w) {
                let (f, df) = shape(kind, rate, s.t);
                for (k, &idx) in self.free.iter().enumerate() {
                    let chain = if natural || idx == GAMMA3 { 1.0 } else { 2.0 * x[k] };
                    j[(row, k)] = wi * amp * df * g[idx] * chain;
                }
                j[(row, nf + c)] = wi * f;
                row += 1;
            }
        }
        j
    }
}

impl Problem for JointModel<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = self.rates(x);
        let mut r = DVector::zeros(self.rows);
        let mut row = 0;
        for (c, (curve, w)) in self.curves.iter().enumerate() {
            let kind = curve.kind();
            let rate = dot(&rate_weights(kind), &p);
            let amp = self.amplitude(x, c);
            for (s, wi) in curve.samples().iter().zip(w) {
                r[row] = wi * (amp * shape(kind, rate, s.t).0 - s.signal);
                row += 1;
            }
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_in(x, false)
    }
}

/// Joint weighted least squares of (γ₁, γ₂, γ₃, Γ₁, Γ₂) and one amplitude
/// per curve against [`signal_model`].
///
/// ZQ and DQ curves are required. A parameter whose determining curve
/// (SQ1 → γ₁, SQ2 → γ₂, T1_spin1 → Γ₁, T1_spin2 → Γ₂) is absent is held at
/// its `baseline` value. Rates other than γ₃ are searched as squares so they
/// stay non-negative.
pub fn fit_noise_model(curves: &[DecayCurve], baseline: Option<&NoiseParams>) -> Result<FitReport> {
    let by_kind = index_curves(curves)?;
    let missing: Vec<&str> = DETERMINING_KIND
        .iter()
        .filter(|(_, k)| !by_kind.contains_key(k))
        .map(|(_, k)| k.label())
        .collect();
    let base = match baseline {
        Some(b) => b.as_array(),
        None if missing.is_empty() => [0.0; 5],
        None => {
            return Err(Error::MissingCurves(format!(
                "{} (or supply baseline parameters to hold fixed)",
                missing.join(", ")
            )))
        }
    };

    let ordered: Vec<&DecayCurve> = by_kind.values().copied().collect();
    let single = fit_each(&ordered)?;
    let single_by_kind: BTreeMap<CurveKind, RateEstimate> =
        by_kind.keys().copied().zip(single.iter().copied()).collect();

    let mut free = vec![];
    let mut start = base;
    for (idx, kind) in DETERMINING_KIND {
        if let Some(f) = single_by_kind.get(&kind) {
            free.push(idx);
            start[idx] = f.rate;
        }
    }
    free.push(GAMMA3);
    free.sort_unstable();
    let (zq, dq) = (single_by_kind[&CurveKind::Zq], single_by_kind[&CurveKind::Dq]);
    start[GAMMA3] = gamma3_difference(&zq, &dq).rate;

    let model = JointModel {
        curves: ordered.iter().map(|c| (*c, weights(c))).collect(),
        rows: ordered.iter().map(|c| c.len()).sum(),
        free: free.clone(),
        fixed: base,
    };
    let mut x0: Vec<f64> = free
        .iter()
        .map(|&idx| {
            if idx == GAMMA3 {
                start[idx]
            } else {
                start[idx].max(0.0).sqrt()
            }
        })
        .collect();
    x0.extend(single.iter().map(|f| f.amplitude));

    let out = lm::minimize(&model, DVector::from_vec(x0));
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            gradient: out.gradient_max,
        });
    }

    let rates = model.rates(&out.x);
    let params = NoiseParams {
        nbar: baseline.map_or(0.5, |b| b.nbar),
        ..NoiseParams::from_array(rates)
    };
    let natural = model.jacobian_in(&out.x, true);
    let cov = lm::covariance(&natural, &out.residuals);
    let mut stderr = [None; 5];
    for (k, &idx) in free.iter().enumerate() {
        stderr[idx] = Some(cov.as_ref().map_or(f64::NAN, |c| c[(k, k)].max(0.0).sqrt()));
    }

    let mut per_curve_residuals = BTreeMap::new();
    let mut curve_rates = BTreeMap::new();
    let mut amplitudes = BTreeMap::new();
    let mut row = 0;
    for (c, curve) in ordered.iter().enumerate() {
        let n = curve.len();
        let kind = curve.kind();
        per_curve_residuals.insert(kind, out.residuals.rows(row, n).norm());
        curve_rates.insert(kind, dot(&rate_weights(kind), &rates));
        amplitudes.insert(kind, model.amplitude(&out.x, c));
        row += n;
    }

    Ok(FitReport {
        mode: FitMode::Joint,
        params,
        stderr,
        per_curve_residuals,
        curve_rates,
        amplitudes,
        converged: true,
        iterations: out.iterations,
        gradient_max: out.gradient_max,
        consistency: Some(ConsistencyDiagnostic::new(&params, zq.rate, dq.rate)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Sample;
    use crate::evolution::log_spaced;
    use crate::presets::Molecule;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn linear(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    fn btc_like() -> NoiseParams {
        NoiseParams::new(3.741, 3.048, 5.876, 0.264, 0.255)
    }

    fn grid_for(kind: CurveKind, p: &NoiseParams) -> Vec<f64> {
        linear(0.0, 3.0 / kind_rate(kind, p), 32)
    }

    fn six_curves(p: &NoiseParams) -> Vec<DecayCurve> {
        CurveKind::ALL
            .iter()
            .map(|&k| synthesize(k, p, &grid_for(k, p)).unwrap())
            .collect()
    }

    fn decay(rate: f64, times: &[f64]) -> DecayCurve {
        DecayCurve::from_fn(CurveKind::Zq, times, |t| (-rate * t).exp()).unwrap()
    }

    #[test]
    fn signal_model_examples() {
        let p = NoiseParams::new(0.7, 1.1, 0.4, 0.2, 0.3);
        for k in CurveKind::ALL {
            let expect = if k.is_recovery() { -1.0 } else { 1.0 };
            assert_eq!(signal_model(k, &p, 0.0), expect);
        }
        let unit = NoiseParams::new(1.0, 1.0, 1.0, 0.0, 0.0);
        for t in [0.0, 0.3, 2.0] {
            assert!((signal_model(CurveKind::Zq, &unit, t) - (-t).exp()).abs() < 1e-15);
            let ratio = signal_model(CurveKind::Dq, &p, t) / signal_model(CurveKind::Zq, &p, t);
            assert!((ratio - (-2.0 * p.gamma3 * t).exp()).abs() < 1e-14);
        }
        assert!((signal_model(CurveKind::T1Spin2, &p, 1.0) - (1.0 - 2.0 * (-0.3_f64).exp())).abs() < 1e-15);
        assert!((signal_model(CurveKind::Sq1, &p, 1.0) - (-0.7_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rate_weights_match_decay_rate() {
        let p = NoiseParams::new(0.7, 1.1, 0.4, 0.2, 0.3);
        for (kind, mq) in [(CurveKind::Zq, MultipleQuantum::Zero), (CurveKind::Dq, MultipleQuantum::Double)] {
            assert!((dot(&rate_weights(kind), &p.as_array()) - coherence_decay_rate(mq, &p)).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_exponential_recovery() {
        let times = linear(0.0, 2.0, 16);
        let est = fit_exponential(&decay(2.0, &times)).unwrap();
        assert!((est.rate - 2.0).abs() < 1e-12);
        assert!(est.stderr < 1e-10);
        assert!((est.amplitude - 1.0).abs() < 1e-12);

        let est = fit_exponential(&decay(3.741, &linear(0.0, 1.0, 24))).unwrap();
        assert!((est.rate - 3.741).abs() < 1e-10);
    }

    #[test]
    fn inversion_recovery_fit() {
        let p = btc_like();
        let c = synthesize(CurveKind::T1Spin1, &p, &linear(0.0, 15.0, 30)).unwrap();
        let est = fit_exponential(&c).unwrap();
        assert!((est.rate - 0.264).abs() < 1e-10);
        assert!((est.amplitude - 1.0).abs() < 1e-10);
    }

    #[test]
    fn noisy_fits_cover_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let times = linear(0.0, 2.0, 16);
        let mut inside = 0;
        for _ in 0..200 {
            let samples = times
                .iter()
                .map(|&t| {
                    let clean = (-2.0 * t).exp();
                    Sample::with_sigma(t, clean * (1.0 + noise.sample(&mut rng)), 0.01 * clean)
                })
                .collect();
            let c = DecayCurve::new(CurveKind::Zq, samples).unwrap();
            let est = fit_exponential(&c).unwrap();
            if (est.rate - 2.0).abs() <= 3.0 * est.stderr {
                inside += 1;
            }
        }
        assert!(inside >= 194, "{inside} of 200 within 3 stderr");
    }

    #[test]
    fn fit_errors() {
        let short = decay(1.0, &[0.0, 0.1, 0.2]);
        assert!(matches!(fit_exponential(&short), Err(Error::InvalidCurve(_))));
        let flat = DecayCurve::from_fn(CurveKind::Dq, &linear(0.0, 1.0, 8), |_| 0.5).unwrap();
        assert!(matches!(fit_exponential(&flat), Err(Error::DegenerateCurve(_))));
        let neg = DecayCurve::from_fn(CurveKind::Dq, &linear(0.0, 1.0, 8), |t| 0.5 - t).unwrap();
        assert!(matches!(fit_exponential(&neg), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn table_two_difference_values() {
        let cases = [(Molecule::Btc, 5.876), (Molecule::Cytosine, 3.393), (Molecule::Coumarin, 8.6735)];
        for (m, expected) in cases {
            let meas = m.measured();
            let est = |r: crate::presets::MeasuredRate| RateEstimate {
                rate: r.rate,
                stderr: r.stderr,
                residual_norm: 0.0,
                amplitude: 1.0,
                iterations: 0,
            };
            let g3 = gamma3_difference(&est(meas.zq), &est(meas.dq));
            assert!((g3.rate - expected).abs() < 1e-3, "{m}: {}", g3.rate);
            let quad = 0.5 * (meas.zq.stderr.powi(2) + meas.dq.stderr.powi(2)).sqrt();
            assert!((g3.stderr - quad).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_round_trip_btc_like() {
        let p = btc_like();
        let report = fit_noise_model(&six_curves(&p), None).unwrap();
        assert!(report.converged);
        for (got, want) in report.params.as_array().iter().zip(p.as_array()) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(report.max_residual() <= 1e-10);
        assert!(report.stderr.iter().all(|e| e.is_some()));
        let c = report.consistency.unwrap();
        assert!(c.max_abs_residual() < 1e-8);
    }

    #[test]
    fn reduced_model_matches_difference() {
        let p = btc_like();
        let curves: Vec<_> = [CurveKind::Zq, CurveKind::Dq]
            .iter()
            .map(|&k| synthesize(k, &p, &grid_for(k, &p)).unwrap())
            .collect();
        assert!(matches!(fit_noise_model(&curves, None), Err(Error::MissingCurves(_))));
        let joint = fit_noise_model(&curves, Some(&p)).unwrap();
        let diff = difference_report(&curves, &p).unwrap();
        assert!((joint.params.gamma3 - diff.params.gamma3).abs() < 1e-8);
        assert_eq!(joint.stderr.iter().filter(|e| e.is_some()).count(), 1);
        assert_eq!(joint.params.gamma1, p.gamma1);
    }

    #[test]
    fn missing_dq_is_named() {
        let p = btc_like();
        let curves = vec![synthesize(CurveKind::Zq, &p, &grid_for(CurveKind::Zq, &p)).unwrap()];
        match fit_noise_model(&curves, Some(&p)) {
            Err(Error::MissingCurves(msg)) => assert!(msg.contains("DQ")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_units_rejected() {
        let p = btc_like();
        let mut curves = six_curves(&p);
        curves[5] = curves[5].scale_times(1e3).unwrap().scale_times(1e3).unwrap();
        assert!(matches!(fit_noise_model(&curves, None), Err(Error::InvalidCurve(m)) if m.contains("units")));
    }

    #[test]
    fn btc_consistency_diagnostic_is_negative() {
        let m = Molecule::Btc.measured();
        let params = NoiseParams::new(m.t2_spin1.rate, m.t2_spin2.rate, 5.876, m.t1_spin1.rate, m.t1_spin2.rate);
        let d = ConsistencyDiagnostic::new(&params, m.zq.rate, m.dq.rate);
        assert!((d.predicted_sum - 7.0485).abs() < 1e-12);
        assert!((d.predicted_zq - (7.0485 - 5.876)).abs() < 1e-12);
        assert!(d.zq_residual < -0.7 && d.dq_residual < -0.7);
        assert!((d.zq_residual + 0.7425).abs() < 1e-9);
    }

    #[test]
    fn report_json_is_flat() {
        let p = btc_like();
        let report = fit_noise_model(&six_curves(&p), None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json_string().unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        assert!(obj.values().all(|x| !x.is_object() && !x.is_array()));
        for key in ["gamma3", "gamma3_stderr", "residual_DQ", "converged", "consistency_zq_residual"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        let dir = tempfile::tempdir().unwrap();
        save_report(&report, dir.path().join("r.json")).unwrap();
    }

    #[test]
    fn fitted_signal_tracks_model() {
        let p = btc_like();
        let report = fit_noise_model(&six_curves(&p), None).unwrap();
        for k in CurveKind::ALL {
            let t = 0.1;
            assert!((report.fitted_signal(k, t).unwrap() - signal_model(k, &p, t)).abs() < 1e-8);
        }
    }

    fn admissible() -> impl Strategy<Value = NoiseParams> {
        (0.1..5.0f64, 0.1..5.0f64, -0.95..0.95f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(
            |(g1, g2, s, b1, b2)| NoiseParams::new(g1, g2, s * (g1 + g2), b1, b2),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn difference_identity(p in admissible()) {
            let fit = |k| fit_exponential(&synthesize(k, &p, &grid_for(k, &p)).unwrap()).unwrap();
            let g3 = gamma3_difference(&fit(CurveKind::Zq), &fit(CurveKind::Dq));
            prop_assert!((g3.rate - p.gamma3).abs() < 1e-8);
        }

        #[test]
        fn scale_equivariance(rate in 0.05..50.0f64, c in 0.01..100.0f64) {
            let times = log_spaced(0.01 / rate, 4.0 / rate, 20);
            let curve = decay(rate, &times);
            let base = fit_exponential(&curve).unwrap().rate;
            let scaled = fit_exponential(&curve.scale_times(c).unwrap()).unwrap().rate;
            prop_assert!((scaled * c - base).abs() <= 1e-8 * base);
        }

        #[test]
        fn amplitude_invariance(rate in 0.05..50.0f64, a in 1e-3..1e3f64, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let times = linear(0.0, 3.0 / rate, 20);
            let curve = DecayCurve::from_fn(CurveKind::Dq, &times, |t| {
                (-rate * t).exp() * (1.0 + noise.sample(&mut rng))
            }).unwrap();
            let base = fit_exponential(&curve).unwrap();
            let scaled = fit_exponential(&curve.scale_signal(a).unwrap()).unwrap();
            prop_assert!((scaled.rate - base.rate).abs() <= 1e-8 * base.rate);
            prop_assert!((scaled.amplitude / a - base.amplitude).abs() <= 1e-8);
        }

        #[test]
        fn joint_residuals_vanish(p in admissible()) {
            let report = fit_noise_model(&six_curves(&p), None).unwrap();
            prop_assert!(report.converged);
            prop_assert!(report.max_residual() <= 1e-10);
        }
    }
}
