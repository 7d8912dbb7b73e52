use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use mqc_relax::estimation::{
    difference_report, fit_noise_model, gamma3_difference, load_curve, ConsistencyDiagnostic,
    CurveKind, DecayCurve, FitMode, FitReport, RateEstimate,
};
use mqc_relax::states::{ideal_pseudopure, prepare_coherence};
use mqc_relax::tomography::{fidelity, reconstruct};
use mqc_relax::{CoherenceKind, Molecule};
use serde_json::json;

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::simulate::{matrix_json, noisy_readout, simulate_curve};
use crate::svg::{self, Panel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `content` to `<dir>/<name>` when an output directory is set,
/// otherwise to stdout. Returns the written path.
fn emit(out: Option<&Path>, name: &str, content: &str) -> CliResult<Option<PathBuf>> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
            Ok(Some(path))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| CliError::io("<stdout>", e))?;
            Ok(None)
        }
    }
}

fn note(path: Option<PathBuf>, summary: &str) {
    match path {
        Some(p) => println!("{summary} -> {}", p.display()),
        None => eprintln!("{summary}"),
    }
}

fn to_json(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

struct Tomographed {
    prepared: mqc_relax::DensityMatrix,
    reconstructed: mqc_relax::DensityMatrix,
    records: Vec<mqc_relax::tomography::TomographyRecord>,
    fidelity: f64,
    fidelity_prepared: f64,
    warnings: Vec<String>,
}

fn prepare_and_tomograph(s: &Settings, target: CoherenceKind) -> CliResult<Tomographed> {
    let prepared =
        prepare_coherence(target, &s.system, s.epsilon, s.nu_rf).map_err(CliError::config)?;
    let records = noisy_readout(&prepared, s)?;
    let reconstructed =
        reconstruct(&records).map_err(|e| CliError::data("tomography", e))?;
    let ideal = ideal_pseudopure(target, s.epsilon).map_err(CliError::config)?;
    let fid = |a| {
        fidelity(a, &ideal)
            .map(|f| f.value())
            .map_err(|e| CliError::data("fidelity", e))
    };
    let mut warnings = vec![];
    if s.epsilon == 0.0 {
        let w = "epsilon = 0: the deviation part of the state is empty, so the state is I/4";
        log::warn!("{w}");
        warnings.push(w.to_string());
    }
    Ok(Tomographed {
        fidelity: fid(&reconstructed)?,
        fidelity_prepared: fid(&prepared)?,
        prepared,
        reconstructed,
        records,
        warnings,
    })
}

pub fn prepare(s: &Settings, target: CoherenceKind) -> CliResult<()> {
    let t = prepare_and_tomograph(s, target)?;
    let doc = json!({
        "command": "prepare",
        "system": s.label(),
        "preset": s.molecule.map(|m| m.name()),
        "target": target,
        "epsilon": s.epsilon,
        "nu_rf": s.nu_rf,
        "fidelity": t.fidelity,
        "fidelity_prepared": t.fidelity_prepared,
        "state": matrix_json(t.reconstructed.matrix()),
        "prepared_state": matrix_json(t.prepared.matrix()),
        "warnings": t.warnings,
    });
    let path = emit(s.out.as_deref(), &format!("prepare_{target}.json"), &to_json(&doc))?;
    note(path, &format!("{} {target}: fidelity {:.6}", s.label(), t.fidelity));
    Ok(())
}

pub fn tomo(s: &Settings, target: CoherenceKind) -> CliResult<()> {
    let t = prepare_and_tomograph(s, target)?;
    let doc = json!({
        "command": "tomo",
        "system": s.label(),
        "preset": s.molecule.map(|m| m.name()),
        "target": target,
        "epsilon": s.epsilon,
        "noise_level": s.noise_level,
        "seed": s.seed,
        "records": t.records,
        "matrix": matrix_json(t.reconstructed.matrix()),
        "fidelity": t.fidelity,
        "warnings": t.warnings,
    });
    let path = emit(s.out.as_deref(), &format!("tomo_{target}.json"), &to_json(&doc))?;
    note(path, &format!("{} {target}: reconstructed fidelity {:.6}", s.label(), t.fidelity));
    Ok(())
}

pub fn decay(s: &Settings, kind: CurveKind, format: Format) -> CliResult<()> {
    let curve = simulate_curve(kind, s)?;
    let (name, body) = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            curve
                .write_csv(&mut buf)
                .map_err(|e| CliError::data(kind.label(), e))?;
            (
                format!("decay_{kind}.csv"),
                String::from_utf8(buf).expect("CSV output is UTF-8"),
            )
        }
        Format::Json => (
            format!("decay_{kind}.json"),
            to_json(&serde_json::to_value(&curve).expect("curves serialize")),
        ),
    };
    let path = emit(s.out.as_deref(), &name, &body)?;
    note(path, &format!("{} {kind}: {} samples", s.label(), curve.len()));
    Ok(())
}

/// Parses `KIND=PATH` arguments.
pub fn parse_curve_args(args: &[String]) -> CliResult<Vec<(CurveKind, PathBuf)>> {
    let mut seen = BTreeMap::new();
    for arg in args {
        let (kind, path) = arg.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--curve `{arg}`: expected KIND=PATH"))
        })?;
        let kind: CurveKind = kind
            .parse()
            .map_err(|e| CliError::Config(format!("--curve `{arg}`: {e}")))?;
        if seen.insert(kind, PathBuf::from(path)).is_some() {
            return Err(CliError::Config(format!("--curve: {kind} given more than once")));
        }
    }
    Ok(seen.into_iter().collect())
}

fn load_all(specs: &[(CurveKind, PathBuf)]) -> CliResult<Vec<DecayCurve>> {
    specs
        .iter()
        .map(|(kind, path)| {
            load_curve(path, *kind).map_err(|e| match e {
                mqc_relax::Error::Io(io) => CliError::io(path, io),
                other => CliError::data(&path.display().to_string(), other),
            })
        })
        .collect()
}

fn plot_panels(curves: &[DecayCurve], report: &FitReport) -> Vec<Panel> {
    curves
        .iter()
        .filter_map(|c| {
            let kind = c.kind();
            let amp = *report.amplitudes.get(&kind)?;
            let rate = *report.curve_rates.get(&kind)?;
            // remaining fraction e^{-Rt}, a straight line on log axes
            let remaining = |y: f64| {
                if kind.is_recovery() {
                    (amp - y) / (2.0 * amp)
                } else {
                    y / amp
                }
            };
            let t_max = c.samples().last().map_or(0.0, |s| s.t);
            let curve = (0..=100)
                .map(|k| {
                    let t = t_max * k as f64 / 100.0;
                    (t, remaining(report.fitted_signal(kind, t).unwrap_or(f64::NAN)))
                })
                .collect();
            Some(Panel {
                title: format!("{kind}: R = {rate:.4} 1/s"),
                points: c.samples().iter().map(|s| (s.t, remaining(s.signal))).collect(),
                curve,
            })
        })
        .collect()
}

pub fn fit(s: &Settings, mode: FitMode, curve_args: &[String]) -> CliResult<()> {
    let specs = parse_curve_args(curve_args)?;
    let have: Vec<CurveKind> = specs.iter().map(|(k, _)| *k).collect();
    let missing: Vec<&str> = [CurveKind::Zq, CurveKind::Dq]
        .into_iter()
        .filter(|k| !have.contains(k))
        .map(CurveKind::label)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "missing {} curve (pass --curve {}=PATH)",
            missing.join(" and "),
            missing[0]
        )));
    }
    let curves = load_all(&specs)?;
    let report = match mode {
        FitMode::Difference => difference_report(&curves, &s.noise),
        FitMode::Joint => fit_noise_model(&curves, Some(&s.noise)),
    }
    .map_err(|e| CliError::data(&format!("{mode} fit"), e))?;

    let json = report
        .to_json_string()
        .map_err(|e| CliError::data("report", e))?
        + "\n";
    let path = emit(s.out.as_deref(), "fit_report.json", &json)?;
    if let Some(dir) = s.out.as_deref() {
        let svg = svg::render(&plot_panels(&curves, &report));
        let svg_path = dir.join("fit.svg");
        std::fs::write(&svg_path, svg).map_err(|e| CliError::io(&svg_path, e))?;
    } else {
        log::warn!("no --out directory given; skipping the SVG plot");
    }
    let g3 = report.stderr[2].map_or(String::new(), |e| format!(" ± {e:.4}"));
    note(
        path,
        &format!("{mode} fit: gamma3 = {:.4}{g3} 1/s", report.params.gamma3),
    );
    if let Some(c) = report.consistency {
        if c.max_abs_residual() > 1e-6 {
            log::warn!(
                "measured ZQ/DQ rates differ from the model prediction by {:+.4} / {:+.4} 1/s",
                c.zq_residual,
                c.dq_residual
            );
        }
    }
    Ok(())
}

const REPORT_COLUMNS: [&str; 14] = [
    "molecule",
    "zq_rate",
    "zq_stderr",
    "dq_rate",
    "dq_stderr",
    "gamma3",
    "gamma3_stderr",
    "gamma3_reported",
    "predicted_sum",
    "predicted_zq",
    "predicted_dq",
    "zq_residual",
    "dq_residual",
    "cp_region",
];

fn report_row(m: Molecule) -> (Vec<String>, serde_json::Value) {
    let meas = m.measured();
    let est = |r: mqc_relax::presets::MeasuredRate| RateEstimate {
        rate: r.rate,
        stderr: r.stderr,
        residual_norm: 0.0,
        amplitude: 1.0,
        iterations: 0,
    };
    let g3 = gamma3_difference(&est(meas.zq), &est(meas.dq));
    let params = mqc_relax::NoiseParams {
        gamma3: g3.rate,
        ..m.reported_params()
    };
    let d = ConsistencyDiagnostic::new(&params, meas.zq.rate, meas.dq.rate);
    let cp = params.is_completely_positive();
    let nums = [
        meas.zq.rate,
        meas.zq.stderr,
        meas.dq.rate,
        meas.dq.stderr,
        g3.rate,
        g3.stderr,
        meas.gamma3.rate,
        d.predicted_sum,
        d.predicted_zq,
        d.predicted_dq,
        d.zq_residual,
        d.dq_residual,
    ];
    let mut row = vec![m.name().to_string()];
    row.extend(nums.iter().map(|x| format!("{x:.6}")));
    row.push(cp.to_string());
    let mut obj = serde_json::Map::new();
    obj.insert("molecule".into(), json!(m.name()));
    for (k, v) in REPORT_COLUMNS[1..13].iter().zip(nums) {
        obj.insert((*k).into(), json!(v));
    }
    obj.insert("cp_region".into(), json!(cp));
    (row, serde_json::Value::Object(obj))
}

pub fn report(molecules: &[Molecule], format: Format, out: Option<&Path>) -> CliResult<()> {
    let rows: Vec<_> = molecules.iter().map(|&m| report_row(m)).collect();
    let (name, body) = match format {
        Format::Csv => {
            let mut text = REPORT_COLUMNS.join(",");
            text.push('\n');
            for (row, _) in &rows {
                text.push_str(&row.join(","));
                text.push('\n');
            }
            ("report.csv", text)
        }
        Format::Json => {
            let list: Vec<_> = rows.into_iter().map(|(_, v)| v).collect();
            ("report.json", to_json(&json!(list)))
        }
    };
    let path = emit(out, name, &body)?;
    note(path, &format!("report for {} molecule(s)", molecules.len()));
    Ok(())
}
