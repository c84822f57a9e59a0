//! Critical mean disturbance `d_critical` for the mean-field models, and the
//! sweeps built on it.
//!
//! Below `d_critical` the recursion survives; above it every node fails.
//! Bisection assumes the verdict is monotone in `d_m`. The grid scan makes no
//! such assumption and reports [`Error::NonMonotone`] when it sees survival
//! above a failure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bimodal::{run_bimodal_with, RetireDenominator};
use crate::error::{Error, Result};
use crate::meanfield::{run_recursion, Verdict, DEFAULT_MAX_ITER, DEFAULT_TOL};

pub const DEFAULT_TOL_D: f64 = 1e-4;
/// Step of the published scan over `d_m`.
pub const DEFAULT_SCAN_STEP: f64 = 1e-3;

const GEOMETRIC_START: f64 = 1e-3;
const GEOMETRIC_MIN: f64 = 1e-9;
const GEOMETRIC_MAX: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Unimodal { a0: f64 },
    Bimodal { a0: f64, b0: f64, pa: f64 },
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        // Any d_m works for validation; only the load parameters are checked.
        self.verdict(0.01, &RecursionSettings::default()).map(|_| ())
    }

    /// Mean-field verdict at disturbance `d_m`.
    pub fn verdict(&self, d_m: f64, settings: &RecursionSettings) -> Result<Verdict> {
        match *self {
            Model::Unimodal { a0 } => Ok(run_recursion(a0, d_m, settings.max_iter, settings.tol)?.verdict),
            Model::Bimodal { a0, b0, pa } => {
                Ok(run_bimodal_with(a0, b0, pa, d_m, settings.max_iter, settings.tol, settings.denominator)?.verdict)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecursionSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub denominator: RetireDenominator,
}

impl Default for RecursionSettings {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            denominator: RetireDenominator::Previous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bisection,
    Scan,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bisection => "bisection",
            Method::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub d_critical: f64,
    /// Largest examined `d_m` that survives.
    pub d_low: f64,
    /// Smallest examined `d_m` above `d_low` that fails.
    pub d_high: f64,
    pub scan_resolution: f64,
    pub method: Method,
    pub evaluations: usize,
    /// Evaluations that hit `max_iter` and were counted as failures.
    pub undetermined_as_failure: usize,
}

struct Probe<'a> {
    model: &'a Model,
    settings: &'a RecursionSettings,
    evaluations: usize,
    undetermined: usize,
}

impl Probe<'_> {
    /// Survival test. `Undetermined` counts as failure.
    fn survives(&mut self, d_m: f64) -> Result<bool> {
        self.evaluations += 1;
        match self.model.verdict(d_m, self.settings)? {
            Verdict::Survives => Ok(true),
            Verdict::Undetermined => {
                self.undetermined += 1;
                Ok(false)
            }
            _ => Ok(false),
        }
    }
}

/// Bisection on `d_m`. The starting bracket comes from a doubling/halving
/// scan from `1e-3`; the search stops when the bracket is narrower than
/// `tol_d`, and both endpoints are re-run before returning.
pub fn find_d_critical(model: &Model, tol_d: f64, settings: &RecursionSettings) -> Result<ThresholdResult> {
    if !(tol_d > 0.0) {
        return Err(Error::param("tol_d", format!("{tol_d} must be positive")));
    }
    model.validate()?;
    let mut probe = Probe {
        model,
        settings,
        evaluations: 0,
        undetermined: 0,
    };

    let (mut lo, mut hi) = if probe.survives(GEOMETRIC_START)? {
        let mut lo = GEOMETRIC_START;
        loop {
            let next = lo * 2.0;
            if next > GEOMETRIC_MAX {
                return Err(Error::NoBracket(format!("model survives up to d_m = {lo}")));
            }
            if !probe.survives(next)? {
                break (lo, next);
            }
            lo = next;
        }
    } else {
        let mut hi = GEOMETRIC_START;
        loop {
            let next = hi / 2.0;
            if next < GEOMETRIC_MIN {
                return Err(Error::NoBracket(format!("model fails down to d_m = {hi}")));
            }
            if probe.survives(next)? {
                break (next, hi);
            }
            hi = next;
        }
    };

    if probe.survives(hi * 2.0)? {
        return Err(Error::NonMonotone {
            failing: hi,
            surviving: hi * 2.0,
        });
    }

    while hi - lo >= tol_d {
        let mid = 0.5 * (lo + hi);
        if probe.survives(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    if !probe.survives(lo)? || probe.survives(hi)? {
        return Err(Error::NonMonotone {
            failing: lo,
            surviving: hi,
        });
    }

    Ok(ThresholdResult {
        d_critical: 0.5 * (lo + hi),
        d_low: lo,
        d_high: hi,
        scan_resolution: tol_d,
        method: Method::Bisection,
        evaluations: probe.evaluations,
        undetermined_as_failure: probe.undetermined,
    })
}

/// Evenly spaced grid `start, start + step, ...` up to `stop` inclusive.
/// Points are `start + i * step`, not accumulated sums.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::param(
            "grid",
            format!("need start <= stop and step > 0, got {start}:{step}:{stop}"),
        ));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// One verdict per grid point.
pub fn verdict_scan(model: &Model, grid: &[f64], settings: &RecursionSettings) -> Result<Vec<Verdict>> {
    grid.iter().map(|&d| model.verdict(d, settings)).collect()
}

/// Threshold from a full scan over `grid` (ascending). Every point is
/// evaluated; survival after a failure is reported as `NonMonotone`.
pub fn scan_d_critical(model: &Model, grid: &[f64], settings: &RecursionSettings) -> Result<ThresholdResult> {
    model.validate()?;
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("grid", "need at least two strictly increasing points"));
    }
    let mut probe = Probe {
        model,
        settings,
        evaluations: 0,
        undetermined: 0,
    };
    let mut outcome = Vec::with_capacity(grid.len());
    for &d in grid {
        outcome.push(probe.survives(d)?);
    }
    let first_fail = outcome
        .iter()
        .position(|s| !s)
        .ok_or_else(|| Error::NoBracket(format!("every grid point survives up to {}", grid[grid.len() - 1])))?;
    if first_fail == 0 {
        return Err(Error::NoBracket(format!("every grid point fails from {}", grid[0])));
    }
    if let Some(k) = outcome[first_fail..].iter().position(|s| *s) {
        return Err(Error::NonMonotone {
            failing: grid[first_fail],
            surviving: grid[first_fail + k],
        });
    }
    let (lo, hi) = (grid[first_fail - 1], grid[first_fail]);
    Ok(ThresholdResult {
        d_critical: 0.5 * (lo + hi),
        d_low: lo,
        d_high: hi,
        scan_resolution: hi - lo,
        method: Method::Scan,
        evaluations: probe.evaluations,
        undetermined_as_failure: probe.undetermined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadroomRow {
    pub a0: f64,
    pub d_critical: f64,
    /// Spare capacity per node, `1 - a0`.
    pub headroom: f64,
    pub result: ThresholdResult,
}

pub fn sweep_dcrit_vs_a0(a0_grid: &[f64], tol_d: f64, settings: &RecursionSettings) -> Result<Vec<HeadroomRow>> {
    if a0_grid.is_empty() {
        return Err(Error::param("a0_grid", "grid is empty"));
    }
    a0_grid
        .par_iter()
        .map(|&a0| {
            let result = find_d_critical(&Model::Unimodal { a0 }, tol_d, settings)?;
            Ok(HeadroomRow {
                a0,
                d_critical: result.d_critical,
                headroom: 1.0 - a0,
                result,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixStatus {
    /// Both modes populated.
    TwoModes,
    /// One mode is empty or `a0 = b0`: every node carries the mean.
    EqualLoad,
    /// No `pa` in [0, 1] reaches the requested mean.
    Infeasible,
}

impl MixStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MixStatus::TwoModes => "two_modes",
            MixStatus::EqualLoad => "equal_load",
            MixStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedMeanRow {
    pub a0: f64,
    pub b0: f64,
    pub pa: Option<f64>,
    pub status: MixStatus,
    pub d_critical: Option<f64>,
    pub result: Option<ThresholdResult>,
}

/// Mode weight that keeps `pa * a0 + (1 - pa) * b0 = mean`, with the
/// classification of the pair.
pub fn fixed_mean_weight(mean: f64, a0: f64, b0: f64) -> (MixStatus, Option<f64>) {
    if a0 > b0 {
        return (MixStatus::Infeasible, None);
    }
    if a0 == b0 {
        return if a0 == mean {
            (MixStatus::EqualLoad, Some(1.0))
        } else {
            (MixStatus::Infeasible, None)
        };
    }
    let pa = (b0 - mean) / (b0 - a0);
    if !(0.0..=1.0).contains(&pa) {
        (MixStatus::Infeasible, None)
    } else if pa == 0.0 || pa == 1.0 {
        (MixStatus::EqualLoad, Some(pa))
    } else {
        (MixStatus::TwoModes, Some(pa))
    }
}

/// `d_critical` over `a0_grid x b0_grid` (a0 outer) with the overall mean
/// load held at `mean`. Infeasible pairs are kept as marker rows. Fails if
/// no pair is feasible.
pub fn sweep_bimodal_fixed_mean(
    mean: f64,
    a0_grid: &[f64],
    b0_grid: &[f64],
    tol_d: f64,
    settings: &RecursionSettings,
) -> Result<Vec<FixedMeanRow>> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::param("mean", format!("{mean} is not in (0, 1)")));
    }
    for &x in a0_grid.iter().chain(b0_grid) {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::param("grid", format!("load level {x} is not in (0, 1)")));
        }
    }
    let pairs: Vec<(f64, f64)> = a0_grid
        .iter()
        .flat_map(|&a| b0_grid.iter().map(move |&b| (a, b)))
        .collect();
    if pairs
        .iter()
        .all(|&(a, b)| fixed_mean_weight(mean, a, b).0 == MixStatus::Infeasible)
    {
        return Err(Error::param(
            "grid",
            format!("no (a0, b0) pair can reach mean load {mean}"),
        ));
    }
    pairs
        .par_iter()
        .map(|&(a0, b0)| {
            let (status, pa) = fixed_mean_weight(mean, a0, b0);
            let Some(pa) = pa else {
                return Ok(FixedMeanRow {
                    a0,
                    b0,
                    pa: None,
                    status,
                    d_critical: None,
                    result: None,
                });
            };
            let model = if a0 == b0 {
                Model::Unimodal { a0 }
            } else {
                Model::Bimodal { a0, b0, pa }
            };
            let result = find_d_critical(&model, tol_d, settings)?;
            Ok(FixedMeanRow {
                a0,
                b0,
                pa: Some(pa),
                status,
                d_critical: Some(result.d_critical),
                result: Some(result),
            })
        })
        .collect()
}
