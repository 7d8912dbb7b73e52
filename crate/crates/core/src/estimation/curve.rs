use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples a curve needs before it can be fitted.
pub const MIN_FIT_SAMPLES: usize = 4;

/// Experiment a decay curve comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CurveKind {
    #[serde(rename = "T1_spin1")]
    T1Spin1,
    #[serde(rename = "T1_spin2")]
    T1Spin2,
    #[serde(rename = "SQ1")]
    Sq1,
    #[serde(rename = "SQ2")]
    Sq2,
    #[serde(rename = "ZQ")]
    Zq,
    #[serde(rename = "DQ")]
    Dq,
}

impl CurveKind {
    pub const ALL: [CurveKind; 6] = [
        CurveKind::T1Spin1,
        CurveKind::T1Spin2,
        CurveKind::Sq1,
        CurveKind::Sq2,
        CurveKind::Zq,
        CurveKind::Dq,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CurveKind::T1Spin1 => "T1_spin1",
            CurveKind::T1Spin2 => "T1_spin2",
            CurveKind::Sq1 => "SQ1",
            CurveKind::Sq2 => "SQ2",
            CurveKind::Zq => "ZQ",
            CurveKind::Dq => "DQ",
        }
    }

    /// Inversion-recovery curves start at −1 and recover towards +1.
    pub fn is_recovery(self) -> bool {
        matches!(self, CurveKind::T1Spin1 | CurveKind::T1Spin2)
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "t1_spin1" | "t1_1" | "t1spin1" => Ok(CurveKind::T1Spin1),
            "t1_spin2" | "t1_2" | "t1spin2" => Ok(CurveKind::T1Spin2),
            "sq1" => Ok(CurveKind::Sq1),
            "sq2" => Ok(CurveKind::Sq2),
            "zq" => Ok(CurveKind::Zq),
            "dq" => Ok(CurveKind::Dq),
            _ => Err(Error::param(
                "kind",
                format!("unknown curve kind `{s}` (expected T1_spin1, T1_spin2, SQ1, SQ2, ZQ or DQ)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    pub signal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Sample {
    pub fn new(t: f64, signal: f64) -> Self {
        Sample {
            t,
            signal,
            sigma: None,
        }
    }

    pub fn with_sigma(t: f64, signal: f64, sigma: f64) -> Self {
        Sample {
            t,
            signal,
            sigma: Some(sigma),
        }
    }
}

/// Time-ordered samples of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    kind: CurveKind,
    samples: Vec<Sample>,
}

impl DecayCurve {
    pub fn new(kind: CurveKind, samples: Vec<Sample>) -> Result<Self> {
        validate_samples(&samples)?;
        Ok(DecayCurve { kind, samples })
    }

    /// Builds an unweighted curve by evaluating `f` on `times`.
    pub fn from_fn(kind: CurveKind, times: &[f64], mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        DecayCurve::new(kind, times.iter().map(|&t| Sample::new(t, f(t))).collect())
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn is_weighted(&self) -> bool {
        self.samples.first().is_some_and(|s| s.sigma.is_some())
    }

    /// Same samples with every time multiplied by `c`.
    pub fn scale_times(&self, c: f64) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample { t: s.t * c, ..*s })
            .collect();
        DecayCurve::new(self.kind, samples)
    }

    /// Same samples with every signal (and sigma) multiplied by `c`.
    pub fn scale_signal(&self, c: f64) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                t: s.t,
                signal: s.signal * c,
                sigma: s.sigma.map(|x| x * c.abs()),
            })
            .collect();
        DecayCurve::new(self.kind, samples)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let weighted = self.is_weighted();
        let header: &[&str] = if weighted {
            &["t", "signal", "sigma"]
        } else {
            &["t", "signal"]
        };
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wtr.write_record(header).map_err(io)?;
        for s in &self.samples {
            let mut row = vec![fmt_float(s.t), fmt_float(s.signal)];
            if let Some(sig) = s.sigma {
                row.push(fmt_float(sig));
            }
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same value.
fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

fn validate_samples(samples: &[Sample]) -> Result<()> {
    validate_rows(samples.iter().enumerate().map(|(i, s)| (i as u64 + 1, s)))
        .map_err(|(row, msg)| Error::InvalidCurve(format!("row {row}: {msg}")))
}

/// Checks curve invariants, returning the offending row and reason.
fn validate_rows<'a>(
    rows: impl Iterator<Item = (u64, &'a Sample)>,
) -> std::result::Result<(), (u64, String)> {
    let mut prev: Option<f64> = None;
    let mut weighted: Option<bool> = None;
    for (row, s) in rows {
        if !s.t.is_finite() || s.t < 0.0 {
            return Err((row, format!("time {} must be finite and non-negative",
                s.t
            )));
        }
        if !s.signal.is_finite() {
            return Err((row, format!("signal {} is not finite",
                s.signal
            )));
        }
        if let Some(p) = prev {
            if s.t <= p {
                return Err((row, format!("time {} does not increase (previous {p})",
                    s.t
                )));
            }
        }
        prev = Some(s.t);
        match (weighted, s.sigma) {
            (Some(true), None) | (Some(false), Some(_)) => {
                return Err((row, "sigma must be given for all samples or none".into()))
            }
            _ => weighted = Some(s.sigma.is_some()),
        }
        if let Some(sig) = s.sigma {
            if !(sig > 0.0 && sig.is_finite()) {
                return Err((row, format!("sigma {sig} must be positive")));
            }
        }
    }
    Ok(())
}

/// Reads a curve in the `t,signal[,sigma]` CSV format. Lines starting with
/// `#` are ignored.
pub fn read_curve<R: Read>(reader: R, kind: CurveKind, path: &Path) -> Result<DecayCurve> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(false)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(csv_line(&e), e.to_string()))?,
        None => return Err(parse_err(1, "empty file, expected header `t,signal[,sigma]`".into())),
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let cols: Vec<&str> = header.iter().collect();
    let weighted = match cols.as_slice() {
        ["t", "signal"] => false,
        ["t", "signal", "sigma"] => true,
        _ => {
            return Err(parse_err(
                header_line,
                format!("expected header `t,signal[,sigma]`, found `{}`", cols.join(",")),
            ))
        }
    };
    let width = if weighted { 3 } else { 2 };

    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let mut vals = [0.0; 3];
        for (k, field) in rec.iter().enumerate() {
            vals[k] = field
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("cannot parse `{field}` as a number")))?;
        }
        samples.push(Sample {
            t: vals[0],
            signal: vals[1],
            sigma: weighted.then_some(vals[2]),
        });
        lines.push(line);
    }
    validate_rows(lines.iter().copied().zip(samples.iter()))
        .map_err(|(line, msg)| parse_err(line, msg))?;
    Ok(DecayCurve { kind, samples })
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

pub fn load_curve(path: impl AsRef<Path>, kind: CurveKind) -> Result<DecayCurve> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_curve(file, kind, path)
}

pub fn save_curve(curve: &DecayCurve, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    curve.write_csv(std::io::BufWriter::new(file))
}
