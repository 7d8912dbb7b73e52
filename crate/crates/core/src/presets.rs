//! Built-in molecules: NMR parameters and measured relaxation rates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::NoiseParams;
use crate::error::Error;
use crate::spinops::SpinSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Molecule {
    Btc,
    Cytosine,
    Coumarin,
}

/// A rate with its reported uncertainty, both in 1/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRate {
    pub rate: f64,
    pub stderr: f64,
}

const fn m(rate: f64, stderr: f64) -> MeasuredRate {
    MeasuredRate { rate, stderr }
}

/// Experimentally measured rates for one molecule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRates {
    /// 1/T1 of spin 1
    pub t1_spin1: MeasuredRate,
    /// 1/T1 of spin 2
    pub t1_spin2: MeasuredRate,
    /// 1/T2 of spin 1
    pub t2_spin1: MeasuredRate,
    /// 1/T2 of spin 2
    pub t2_spin2: MeasuredRate,
    pub zq: MeasuredRate,
    pub dq: MeasuredRate,
    /// Reported correlated phase damping rate.
    pub gamma3: MeasuredRate,
}

impl Molecule {
    pub const ALL: [Molecule; 3] = [Molecule::Btc, Molecule::Cytosine, Molecule::Coumarin];

    pub fn name(self) -> &'static str {
        match self {
            Molecule::Btc => "btc",
            Molecule::Cytosine => "cytosine",
            Molecule::Coumarin => "coumarin",
        }
    }

    pub fn spin_system(self) -> SpinSystem {
        let (nu1, nu2, j12) = match self {
            Molecule::Btc => (4602.4, 4287.0, 4.2),
            Molecule::Cytosine => (4407.7, 3490.8, 7.1),
            Molecule::Coumarin => (4734.0, 3807.9, 9.5),
        };
        SpinSystem {
            name: self.name().to_string(),
            nu1,
            nu2,
            j12,
        }
    }

    pub fn measured(self) -> MeasuredRates {
        match self {
            Molecule::Btc => MeasuredRates {
                t1_spin1: m(0.264, 0.004),
                t1_spin2: m(0.255, 0.003),
                t2_spin1: m(3.741, 0.242),
                t2_spin2: m(3.048, 0.376),
                zq: m(0.430, 0.062),
                dq: m(12.182, 1.289),
                gamma3: m(5.876, 1.825),
            },
            Molecule::Cytosine => MeasuredRates {
                t1_spin1: m(0.153, 0.002),
                t1_spin2: m(0.152, 0.014),
                t2_spin1: m(1.618, 0.080),
                t2_spin2: m(1.891, 0.096),
                zq: m(0.189, 0.004),
                dq: m(6.975, 0.465),
                gamma3: m(3.393, 1.089),
            },
            Molecule::Coumarin => MeasuredRates {
                t1_spin1: m(0.210, 0.004),
                t1_spin2: m(0.135, 0.002),
                t2_spin1: m(6.813, 0.356),
                t2_spin2: m(6.761, 0.286),
                zq: m(4.247, 0.267),
                dq: m(21.594, 0.897),
                gamma3: m(8.6735, 1.545),
            },
        }
    }

    /// Noise parameters built from the measured 1/T2, 1/T1 and reported γ₃.
    pub fn reported_params(self) -> NoiseParams {
        let r = self.measured();
        NoiseParams {
            gamma1: r.t2_spin1.rate,
            gamma2: r.t2_spin2.rate,
            gamma3: r.gamma3.rate,
            big_gamma1: r.t1_spin1.rate,
            big_gamma2: r.t1_spin2.rate,
            nbar: 0.5,
        }
    }
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Molecule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "btc" => Ok(Molecule::Btc),
            "cytosine" => Ok(Molecule::Cytosine),
            "coumarin" => Ok(Molecule::Coumarin),
            other => Err(Error::param(
                "preset",
                format!("unknown molecule `{other}` (expected btc, cytosine or coumarin)"),
            )),
        }
    }
}
