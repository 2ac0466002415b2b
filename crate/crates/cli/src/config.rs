//! Experiment configuration: flat `[section]` blocks of `key = value` pairs.
//! The schema is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use myosim::potential::{read_table, PotentialSpec};
use myosim::walks::WalkConfig;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub potential: Option<PotentialBlock>,
    pub walk: Option<WalkBlock>,
    pub myopic: Option<MyopicBlock>,
    #[serde(default)]
    pub numerics: NumericsBlock,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    #[serde(default = "default_form")]
    pub form: String,
    #[serde(default = "default_tilt")]
    pub b: f64,
    pub kappa: Option<f64>,
    pub kappas: Option<Vec<f64>>,
    /// Samples of the periodic part for `form = "user_table"`.
    pub table_path: Option<PathBuf>,
    #[serde(default = "default_degree")]
    pub degree: u32,
    pub g_hat: Option<f64>,
}

fn default_form() -> String {
    "default_trig".into()
}

fn default_tilt() -> f64 {
    0.5
}

fn default_degree() -> u32 {
    3
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkBlock {
    #[serde(alias = "N")]
    pub n: Option<usize>,
    #[serde(default = "default_p")]
    pub p: f64,
    pub y0: Option<Vec<i64>>,
}

fn default_p() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MyopicBlock {
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(rename = "L_list")]
    pub l_list: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub trials: Option<usize>,
    pub lambda_trials: Option<usize>,
    pub max_rejects: Option<u64>,
    pub window: Option<i64>,
    pub x0: Option<Vec<f64>>,
    pub max_time: Option<f64>,
    /// Criterion threshold for distance-type checks.
    pub tolerance: Option<f64>,
}

/// A loaded config and the bytes it was read from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub raw: String,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        config,
        raw,
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

pub fn missing(what: &str) -> CliError {
    CliError::Config(format!("missing `{what}`"))
}

impl ExperimentConfig {
    pub fn potential(&self) -> Result<&PotentialBlock, CliError> {
        self.potential.as_ref().ok_or_else(|| missing("[potential]"))
    }

    pub fn walk(&self) -> Result<&WalkBlock, CliError> {
        self.walk.as_ref().ok_or_else(|| missing("[walk]"))
    }

    pub fn myopic(&self) -> Result<&MyopicBlock, CliError> {
        self.myopic.as_ref().ok_or_else(|| missing("[myopic]"))
    }

    pub fn kappa(&self) -> Result<f64, CliError> {
        self.potential()?.kappa.ok_or_else(|| missing("potential.kappa"))
    }

    /// The potential at `potential.kappa`; table paths are relative to the config file.
    pub fn spec(&self, base: &Path) -> Result<PotentialSpec, CliError> {
        self.spec_at(base, self.kappa()?)
    }

    pub fn spec_at(&self, base: &Path, kappa: f64) -> Result<PotentialSpec, CliError> {
        let p = self.potential()?;
        let spec = match p.form.as_str() {
            "default_trig" => PotentialSpec::default_trig(p.b, kappa),
            "user_table" => {
                let path = p.table_path.as_ref().ok_or_else(|| missing("potential.table_path"))?;
                let samples = read_table(&base.join(path))
                    .map_err(|e| CliError::Config(format!("potential.table_path: {e}")))?;
                PotentialSpec::from_table(p.b, kappa, &samples, p.degree)
            }
            other => {
                return Err(CliError::Config(format!(
                    "potential.form must be \"default_trig\" or \"user_table\", got {other:?}"
                )))
            }
        };
        spec.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn walk_config(&self) -> Result<(WalkConfig, Vec<i64>), CliError> {
        let w = self.walk()?;
        let y0 = w.y0.clone().ok_or_else(|| missing("walk.y0"))?;
        let n = w.n.unwrap_or(y0.len());
        if n != y0.len() {
            return Err(CliError::Config(format!("walk.n = {n} but walk.y0 has {} entries", y0.len())));
        }
        let cfg = WalkConfig::new(n, w.p).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((cfg, y0))
    }

    pub fn x0(&self) -> Result<Vec<f64>, CliError> {
        self.numerics.x0.clone().ok_or_else(|| missing("numerics.x0"))
    }

    pub fn horizon(&self) -> Result<f64, CliError> {
        positive("numerics.horizon", self.numerics.horizon.ok_or_else(|| missing("numerics.horizon"))?)
    }

    pub fn trials(&self) -> Result<usize, CliError> {
        self.numerics.trials.ok_or_else(|| missing("numerics.trials"))
    }

    pub fn foresight_l(&self) -> Result<f64, CliError> {
        self.myopic()?.l.ok_or_else(|| missing("myopic.L"))
    }
}

pub fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}
