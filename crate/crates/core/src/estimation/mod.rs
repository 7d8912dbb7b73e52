//! Decay-signal models, single-exponential fits, the ZQ/DQ difference
//! estimator for the correlated rate and the joint noise-model fit.

mod curve;
mod fit;
pub mod lm;

pub use curve::{load_curve, read_curve, save_curve, CurveKind, DecayCurve, Sample, MIN_FIT_SAMPLES};
pub use fit::{
    difference_report, fit_each, fit_exponential, fit_noise_model, gamma3_difference, kind_rate,
    save_report, signal_model, synthesize, ConsistencyDiagnostic, FitMode, FitReport, RateEstimate,
    PARAM_NAMES,
};
