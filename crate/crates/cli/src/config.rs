//! JSON run configuration and its resolution against command-line flags.

use std::path::{Path, PathBuf};

use mqc_relax::evolution::log_spaced;
use mqc_relax::{Molecule, NoiseParams, SpinSystem};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Either a preset name or an explicit spin system.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset(String),
    Custom(SpinSystem),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemSpec>,
    pub noise: Option<NoiseParams>,
    /// Polarization of the pseudopure and thermal states, in [0, 1].
    pub epsilon: Option<f64>,
    /// Seconds, strictly increasing.
    pub time_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    /// Rotating-frame reference in Hz; defaults to the mean Larmor offset.
    pub nu_rf: Option<f64>,
    /// Relative Gaussian noise added to simulated signals and readouts.
    pub noise_level: Option<f64>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Overrides given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Fully validated settings for one command.
#[derive(Clone, Debug)]
pub struct Settings {
    pub molecule: Option<Molecule>,
    pub system: SpinSystem,
    pub noise: NoiseParams,
    pub epsilon: f64,
    pub time_grid: Vec<f64>,
    pub seed: u64,
    pub nu_rf: f64,
    pub noise_level: f64,
    pub out: Option<PathBuf>,
}

/// t = 0 followed by 64 log-spaced points over [1 ms, 10 s].
pub fn default_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend(log_spaced(1e-3, 10.0, 64));
    grid
}

fn parse_preset(name: &str) -> CliResult<Molecule> {
    name.parse::<Molecule>().map_err(CliError::config)
}

fn check_grid(grid: &[f64]) -> CliResult<()> {
    if grid.is_empty() {
        return Err(CliError::Config("time_grid: must not be empty".into()));
    }
    for (i, t) in grid.iter().enumerate() {
        if !t.is_finite() || *t < 0.0 {
            return Err(CliError::Config(format!(
                "time_grid[{i}]: {t} must be finite and non-negative"
            )));
        }
        if i > 0 && *t <= grid[i - 1] {
            return Err(CliError::Config(format!(
                "time_grid[{i}]: {t} does not increase (previous {})",
                grid[i - 1]
            )));
        }
    }
    Ok(())
}

impl Settings {
    pub fn resolve(config: RunConfig, over: Overrides) -> CliResult<Self> {
        let molecule = match (&over.preset, &config.system) {
            (Some(name), _) => Some(parse_preset(name)?),
            (None, Some(SystemSpec::Preset(name))) => Some(parse_preset(name)?),
            (None, Some(SystemSpec::Custom(_))) => None,
            (None, None) => Some(Molecule::Btc),
        };
        let system = match (molecule, config.system) {
            (Some(m), _) => m.spin_system(),
            (None, Some(SystemSpec::Custom(s))) => s,
            (None, _) => unreachable!("custom system resolved above"),
        };
        system
            .validate()
            .map_err(|e| CliError::Config(format!("system: {e}")))?;

        let noise = match (config.noise, molecule) {
            (Some(n), _) => n,
            (None, Some(m)) => m.reported_params(),
            (None, None) => {
                return Err(CliError::Config(
                    "noise: required when the system is not a preset".into(),
                ))
            }
        };
        noise
            .validate()
            .map_err(|e| CliError::Config(format!("noise: {e}")))?;

        let epsilon = config.epsilon.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(CliError::Config(format!(
                "epsilon: {epsilon} must lie in [0, 1]"
            )));
        }
        let time_grid = config.time_grid.unwrap_or_else(default_grid);
        check_grid(&time_grid)?;

        let noise_level = config.noise_level.unwrap_or(0.0);
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(CliError::Config(format!(
                "noise_level: {noise_level} must be finite and non-negative"
            )));
        }
        let nu_rf = config.nu_rf.unwrap_or_else(|| system.center_frequency());
        if !nu_rf.is_finite() {
            return Err(CliError::Config("nu_rf: must be finite".into()));
        }

        Ok(Settings {
            molecule,
            system,
            noise,
            epsilon,
            time_grid,
            seed: over.seed.or(config.seed).unwrap_or(0),
            nu_rf,
            noise_level,
            out: over.out.or(config.output.dir),
        })
    }

    pub fn label(&self) -> &str {
        &self.system.name
    }
}
