//! Experiment configuration files (JSON or TOML, chosen by extension).
//!
//! Every field has a default, so an empty file (or no file) reproduces the
//! published experiment for that command.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bimodal::RetireDenominator;
use crate::cascade::LoadDistribution;
use crate::error::{Error, Result};
use crate::threshold::{linear_grid, Method, Model, RecursionSettings, DEFAULT_TOL_D};

/// A list of values, or an inclusive `start:step:stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Grid::Range { start, stop, step }
    }

    pub fn values(&self, name: &'static str) -> Result<Vec<f64>> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => linear_grid(*start, *stop, *step)?,
        };
        if v.is_empty() {
            return Err(Error::Config(format!("`{name}` grid is empty")));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("`{name}` grid contains {x}")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub nodes: Vec<usize>,
    pub edge_probs: Grid,
    pub disturbances: Grid,
    pub loads: LoadDistribution,
    pub trials: u32,
    /// Required, either here or via `--seed`.
    pub seed: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            nodes: vec![10, 50],
            edge_probs: Grid::range(0.1, 1.0, 0.1),
            disturbances: Grid::List(vec![0.1]),
            loads: LoadDistribution::Uniform01,
            trials: 1000,
            seed: None,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Config("`nodes` list is empty".into()));
        }
        if self.nodes.contains(&0) {
            return Err(Error::Config("`nodes` entries must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("`trials` must be at least 1".into()));
        }
        for p in self.edge_probs.values("edge_probs")? {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
            }
        }
        for d in self.disturbances.values("disturbances")? {
            if !(d > 0.0) {
                return Err(Error::Config(format!("disturbance mean {d} must be positive")));
            }
        }
        self.loads.validate()?;
        if self.seed.is_none() {
            return Err(Error::Config(
                "a master seed is required: set `seed` or pass --seed".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanFieldConfig {
    pub a0: f64,
    pub disturbances: Grid,
    pub recursion: RecursionSettings,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        Self {
            a0: 0.8,
            disturbances: Grid::range(0.001, 0.07, 0.001),
            recursion: RecursionSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BimodalMeanFieldConfig {
    pub a0: f64,
    pub b0: f64,
    pub pa: f64,
    pub disturbances: Grid,
    pub recursion: RecursionSettings,
}

impl Default for BimodalMeanFieldConfig {
    fn default() -> Self {
        Self {
            a0: 0.5,
            b0: 0.9,
            pa: 0.25,
            disturbances: Grid::range(0.001, 0.04, 0.001),
            recursion: RecursionSettings {
                denominator: RetireDenominator::Previous,
                ..RecursionSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcritConfig {
    pub model: Model,
    pub method: Method,
    /// Bracket width at which bisection stops.
    pub tol_d: f64,
    /// Grid for `method = "scan"`.
    pub scan: Grid,
    pub recursion: RecursionSettings,
}

impl Default for DcritConfig {
    fn default() -> Self {
        Self {
            model: Model::Unimodal { a0: 0.8 },
            method: Method::Bisection,
            tol_d: DEFAULT_TOL_D,
            scan: Grid::range(0.001, 0.5, 0.001),
            recursion: RecursionSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepDcritConfig {
    pub a0_grid: Grid,
    pub tol_d: f64,
    pub recursion: RecursionSettings,
}

impl Default for SweepDcritConfig {
    fn default() -> Self {
        Self {
            a0_grid: Grid::range(0.05, 0.95, 0.05),
            tol_d: DEFAULT_TOL_D,
            recursion: RecursionSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBimodalConfig {
    pub mean: f64,
    pub a0_grid: Grid,
    pub b0_grid: Grid,
    pub tol_d: f64,
    pub recursion: RecursionSettings,
}

impl Default for SweepBimodalConfig {
    fn default() -> Self {
        Self {
            mean: 0.8,
            a0_grid: Grid::range(0.5, 0.8, 0.05),
            b0_grid: Grid::range(0.8, 0.95, 0.025),
            tol_d: DEFAULT_TOL_D,
            recursion: RecursionSettings::default(),
        }
    }
}

/// Parses `text` as TOML when `path` ends in `.toml`, JSON otherwise.
pub fn parse_config<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Reads a config file, or the defaults when `path` is `None`.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(p, &text)
        }
    }
}
