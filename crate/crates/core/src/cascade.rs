//! Staged cascade simulation on an explicit topology.
//!
//! One stage: every alive node with load `>= 1` fails; edges between nodes
//! failing in the same stage are cut first, so simultaneous failures never
//! feed each other; each failing node's full load is split equally among its
//! remaining neighbours; failed nodes are zeroed and disconnected. The
//! process stops at the first stage with no failures.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_er_graph, GraphTopology};
use crate::rng::Substreams;

/// Initial per-node load distribution (capacity is 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadDistribution {
    /// Every node starts at `a0`.
    Delta { a0: f64 },
    /// i.i.d. Uniform[0, 1).
    Uniform01,
    /// `a0` with probability `pa`, otherwise `b0`.
    Bimodal { a0: f64, b0: f64, pa: f64 },
}

fn check_open_unit(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{x} is not in (0, 1)")))
    }
}

impl LoadDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LoadDistribution::Delta { a0 } => check_open_unit("a0", a0),
            LoadDistribution::Uniform01 => Ok(()),
            LoadDistribution::Bimodal { a0, b0, pa } => {
                check_open_unit("a0", a0)?;
                check_open_unit("b0", b0)?;
                if !(0.0..=1.0).contains(&pa) {
                    return Err(Error::param("pa", format!("{pa} is not in [0, 1]")));
                }
                if a0 > b0 {
                    return Err(Error::param("a0", format!("a0 = {a0} exceeds b0 = {b0}")));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LoadDistribution::Delta { a0 } => a0,
            LoadDistribution::Uniform01 => 0.5,
            LoadDistribution::Bimodal { a0, b0, pa } => pa * a0 + (1.0 - pa) * b0,
        }
    }
}

/// Draws `n` i.i.d. initial loads.
pub fn init_loads<R: Rng + ?Sized>(n: usize, dist: &LoadDistribution, rng: &mut R) -> Result<Vec<f64>> {
    dist.validate()?;
    let loads = match *dist {
        LoadDistribution::Delta { a0 } => vec![a0; n],
        LoadDistribution::Uniform01 => (0..n).map(|_| rng.random::<f64>()).collect(),
        LoadDistribution::Bimodal { a0, b0, pa } => (0..n).map(|_| if rng.random_bool(pa) { a0 } else { b0 }).collect(),
    };
    Ok(loads)
}

/// Adds an independent Exponential draw with mean `d_m` to every load.
pub fn apply_disturbance<R: Rng + ?Sized>(mut loads: Vec<f64>, d_m: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(d_m > 0.0 && d_m.is_finite()) {
        return Err(Error::param(
            "d_m",
            format!("mean disturbance {d_m} must be positive and finite"),
        ));
    }
    let exp = Exp::new(1.0 / d_m).map_err(|e| Error::param("d_m", e.to_string()))?;
    for l in &mut loads {
        *l += exp.sample(rng);
    }
    Ok(loads)
}

/// What happened during one stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageReport {
    pub failed: usize,
    /// Load of failing nodes that had no alive neighbour to take it.
    pub dropped_load: f64,
}

/// Mutable simulation state. The topology is a private copy whose edges are
/// removed as nodes fail.
#[derive(Debug, Clone)]
pub struct CascadeState {
    loads: Vec<f64>,
    alive: Vec<bool>,
    stage: usize,
    topology: GraphTopology,
}

impl CascadeState {
    pub fn new(topology: GraphTopology, loads: Vec<f64>) -> Result<Self> {
        if loads.len() != topology.n() {
            return Err(Error::param(
                "loads",
                format!("{} loads for {} nodes", loads.len(), topology.n()),
            ));
        }
        if let Some(bad) = loads.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::param(
                "loads",
                format!("load {bad} is not a nonnegative finite number"),
            ));
        }
        let n = loads.len();
        Ok(Self {
            loads,
            alive: vec![true; n],
            stage: 0,
            topology,
        })
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn alive(&self) -> &[bool] {
        &self.alive
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn topology(&self) -> &GraphTopology {
        &self.topology
    }

    pub fn total_load(&self) -> f64 {
        self.loads.iter().sum()
    }

    /// Alive nodes at or above capacity, in index order.
    pub fn failing_nodes(&self) -> Vec<usize> {
        (0..self.loads.len())
            .filter(|&i| self.alive[i] && self.loads[i] >= 1.0)
            .collect()
    }

    /// Runs one stage. A stage with no failing node leaves the state untouched
    /// and does not advance the stage counter.
    pub fn step(&mut self) -> StageReport {
        let failing = self.failing_nodes();
        if failing.is_empty() {
            return StageReport::default();
        }

        self.topology.remove_edges_within(&failing);

        let mut inflow = vec![0.0; self.loads.len()];
        let mut dropped_load = 0.0;
        for &j in &failing {
            let deg = self.topology.degree(j);
            if deg == 0 {
                dropped_load += self.loads[j];
                continue;
            }
            let share = self.loads[j] / deg as f64;
            for i in self.topology.neighbors(j) {
                inflow[i] += share;
            }
        }
        for (l, add) in self.loads.iter_mut().zip(&inflow) {
            *l += add;
        }

        for &j in &failing {
            self.loads[j] = 0.0;
            self.alive[j] = false;
            self.topology.isolate(j);
        }
        self.stage += 1;

        StageReport {
            failed: failing.len(),
            dropped_load,
        }
    }

    /// Steps until a quiet stage and summarizes the run.
    pub fn run(mut self) -> CascadeOutcome {
        let total_initial_load = self.total_load();
        let mut failures_per_stage = Vec::new();
        let mut dropped_load = 0.0;
        loop {
            let report = self.step();
            if report.failed == 0 {
                break;
            }
            failures_per_stage.push(report.failed);
            dropped_load += report.dropped_load;
        }
        let total_final_load = self.total_load();
        // Without any dropped load the total is conserved exactly; only
        // rounding could make the ratio differ from 1.
        let survivor_fraction = if failures_per_stage.is_empty() || (dropped_load == 0.0 && self.alive_count() > 0) {
            1.0
        } else if total_initial_load > 0.0 {
            (total_final_load / total_initial_load).clamp(0.0, 1.0)
        } else {
            0.0
        };
        CascadeOutcome {
            termination_stage: self.stage,
            survivor_fraction,
            failures_per_stage,
            total_initial_load,
            total_final_load,
            dropped_load,
            survivors: self.alive_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeOutcome {
    /// First stage at which no node fails.
    pub termination_stage: usize,
    /// Final total load over initial total load, in [0, 1].
    pub survivor_fraction: f64,
    pub failures_per_stage: Vec<usize>,
    pub total_initial_load: f64,
    pub total_final_load: f64,
    pub dropped_load: f64,
    pub survivors: usize,
}

impl CascadeOutcome {
    pub fn no_outage(&self) -> bool {
        self.survivor_fraction == 1.0
    }

    pub fn outage_fraction(&self) -> f64 {
        1.0 - self.survivor_fraction
    }
}

/// Runs a cascade from the post-disturbance loads `loads` on `g`.
pub fn run_cascade(g: &GraphTopology, loads: Vec<f64>) -> Result<CascadeOutcome> {
    Ok(CascadeState::new(g.clone(), loads)?.run())
}

/// Parameters of a single random trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub nodes: usize,
    pub edge_prob: f64,
    pub loads: LoadDistribution,
    pub d_m: f64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::param("nodes", "node count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::param("edge_prob", format!("{} outside [0, 1]", self.edge_prob)));
        }
        if !(self.d_m > 0.0 && self.d_m.is_finite()) {
            return Err(Error::param("d_m", format!("{} must be positive and finite", self.d_m)));
        }
        self.loads.validate()
    }
}

/// One trial: graph, then loads, then disturbance, all from `rng` in that order.
pub fn run_trial<R: Rng + ?Sized>(cfg: &TrialConfig, rng: &mut R) -> Result<CascadeOutcome> {
    let g = generate_er_graph(cfg.nodes, cfg.edge_prob, rng)?;
    let loads = init_loads(cfg.nodes, &cfg.loads, rng)?;
    let loads = apply_disturbance(loads, cfg.d_m, rng)?;
    run_cascade(&g, loads)
}

/// Monte Carlo summary over `trials` independent runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    pub trials: usize,
    /// Fraction of trials with `f = 1`.
    pub prob_no_outage: f64,
    /// `1 - mean(f)`.
    pub mean_outage_fraction: f64,
    pub per_trial_fractions: Vec<f64>,
}

impl AggregateStats {
    pub fn from_fractions(fractions: Vec<f64>) -> Self {
        let m = fractions.len();
        let no_outage = fractions.iter().filter(|f| **f == 1.0).count();
        let mean_f = if m == 0 {
            1.0
        } else {
            fractions.iter().sum::<f64>() / m as f64
        };
        Self {
            trials: m,
            prob_no_outage: if m == 0 { 0.0 } else { no_outage as f64 / m as f64 },
            mean_outage_fraction: (1.0 - mean_f).clamp(0.0, 1.0),
            per_trial_fractions: fractions,
        }
    }

    /// Binomial standard error of `prob_no_outage`.
    pub fn prob_no_outage_stderr(&self) -> f64 {
        let p = self.prob_no_outage;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Standard error of `mean_outage_fraction` (sample variance of `f`).
    pub fn mean_outage_stderr(&self) -> f64 {
        let m = self.trials;
        if m < 2 {
            return 0.0;
        }
        let mean = self.per_trial_fractions.iter().sum::<f64>() / m as f64;
        let var = self.per_trial_fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub stats: AggregateStats,
    /// Outcomes in trial-index order.
    pub outcomes: Vec<CascadeOutcome>,
}

/// Runs `trials` independent trials. Trial `k` draws from
/// `streams.trial_rng(k)`, so the report is identical for any `threads`
/// value (`None` uses the global rayon pool).
pub fn monte_carlo(
    cfg: &TrialConfig,
    trials: u32,
    streams: Substreams,
    threads: Option<usize>,
) -> Result<MonteCarloReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::param("trials", "at least one trial is required"));
    }
    let run_all = || -> Result<Vec<CascadeOutcome>> {
        (0..trials)
            .into_par_iter()
            .map(|k| run_trial(cfg, &mut streams.trial_rng(k)))
            .collect()
    };
    let outcomes = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::param("threads", e.to_string()))?
            .install(run_all)?,
        None => run_all()?,
    };
    let stats = AggregateStats::from_fractions(outcomes.iter().map(|o| o.survivor_fraction).collect());
    Ok(MonteCarloReport { stats, outcomes })
}

/// Empirical versus predicted redistribution constant after the first stage
/// of a large fully connected network with constant initial load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Lemma1Estimate {
    Estimated {
        empirical: f64,
        predicted: f64,
        failed: usize,
        survivors: usize,
    },
    /// Every node failed at stage 0, so the per-survivor share is undefined.
    NoSurvivors { predicted: f64 },
}

impl Lemma1Estimate {
    pub fn predicted(&self) -> f64 {
        match *self {
            Lemma1Estimate::Estimated { predicted, .. } | Lemma1Estimate::NoSurvivors { predicted } => predicted,
        }
    }

    pub fn relative_error(&self) -> Option<f64> {
        match *self {
            Lemma1Estimate::Estimated {
                empirical, predicted, ..
            } => Some((empirical / predicted - 1.0).abs()),
            Lemma1Estimate::NoSurvivors { .. } => None,
        }
    }
}

/// Large-N limit of (total load of stage-0 failures) / (number of survivors):
/// `p0 / (1 - p0) * (1 + d_m)` with `p0 = exp(-(1 - a0) / d_m)`.
pub fn lemma1_limit(a0: f64, d_m: f64) -> Result<f64> {
    check_open_unit("a0", a0)?;
    if !(d_m > 0.0 && d_m.is_finite()) {
        return Err(Error::param("d_m", format!("{d_m} must be positive and finite")));
    }
    let p0 = (-(1.0 - a0) / d_m).exp();
    Ok(p0 / (1.0 - p0) * (1.0 + d_m))
}

pub fn validate_lemma1(n: usize, a0: f64, d_m: f64, seed: u64) -> Result<Lemma1Estimate> {
    if n == 0 {
        return Err(Error::param("n", "node count must be at least 1"));
    }
    let predicted = lemma1_limit(a0, d_m)?;
    let mut rng = Substreams::new(seed).trial_rng(0);
    let loads = init_loads(n, &LoadDistribution::Delta { a0 }, &mut rng)?;
    let loads = apply_disturbance(loads, d_m, &mut rng)?;
    let (failed_load, failed) = loads
        .iter()
        .filter(|l| **l >= 1.0)
        .fold((0.0, 0usize), |(s, c), l| (s + l, c + 1));
    let survivors = n - failed;
    if survivors == 0 {
        return Ok(Lemma1Estimate::NoSurvivors { predicted });
    }
    Ok(Lemma1Estimate::Estimated {
        empirical: failed_load / survivors as f64,
        predicted,
        failed,
        survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> GraphTopology {
        GraphTopology::complete(3)
    }

    fn assert_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn delta_loads_are_constant() {
        let mut rng = Substreams::new(0).trial_rng(0);
        let l = init_loads(3, &LoadDistribution::Delta { a0: 0.8 }, &mut rng).unwrap();
        assert_eq!(l, vec![0.8, 0.8, 0.8]);
    }

    #[test]
    fn uniform_loads_have_mean_one_half() {
        let mut rng = Substreams::new(11).trial_rng(0);
        let l = init_loads(100_000, &LoadDistribution::Uniform01, &mut rng).unwrap();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!(l.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn bimodal_loads_have_mixture_mean() {
        let dist = LoadDistribution::Bimodal {
            a0: 0.5,
            b0: 0.9,
            pa: 0.25,
        };
        assert!((dist.mean() - 0.8).abs() < 1e-15);
        let mut rng = Substreams::new(12).trial_rng(0);
        let l = init_loads(100_000, &dist, &mut rng).unwrap();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!((mean - 0.8).abs() < 0.005, "mean {mean}");
        assert!(l.iter().all(|x| *x == 0.5 || *x == 0.9));
    }

    #[test]
    fn rejects_invalid_load_specs() {
        let mut rng = Substreams::new(0).trial_rng(0);
        for dist in [
            LoadDistribution::Delta { a0: 1.0 },
            LoadDistribution::Delta { a0: 0.0 },
            LoadDistribution::Bimodal {
                a0: 0.9,
                b0: 0.5,
                pa: 0.5,
            },
            LoadDistribution::Bimodal {
                a0: 0.5,
                b0: 0.9,
                pa: 1.5,
            },
            LoadDistribution::Bimodal {
                a0: 0.5,
                b0: 1.0,
                pa: 0.5,
            },
        ] {
            assert!(init_loads(4, &dist, &mut rng).is_err(), "{dist:?}");
        }
    }

    #[test]
    fn disturbance_mean_matches() {
        let mut rng = Substreams::new(13).trial_rng(0);
        let l = apply_disturbance(vec![0.0; 100_000], 0.1, &mut rng).unwrap();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!((mean - 0.1).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn tiny_disturbance_leaves_loads_in_place() {
        let mut rng = Substreams::new(14).trial_rng(0);
        let l = apply_disturbance(vec![0.3; 1000], 1e-12, &mut rng).unwrap();
        assert!(l.iter().all(|x| (x - 0.3).abs() < 1e-9));
    }

    #[test]
    fn overload_fraction_matches_exponential_tail() {
        // P(Exp(mean 0.1) >= 0.2) = e^-2.
        let mut rng = Substreams::new(15).trial_rng(0);
        let l = apply_disturbance(vec![0.8; 100_000], 0.1, &mut rng).unwrap();
        let frac = l.iter().filter(|x| **x >= 1.0).count() as f64 / l.len() as f64;
        assert!((frac - (-2.0f64).exp()).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn rejects_nonpositive_disturbance() {
        let mut rng = Substreams::new(0).trial_rng(0);
        assert!(apply_disturbance(vec![0.5], 0.0, &mut rng).is_err());
        assert!(apply_disturbance(vec![0.5], -1.0, &mut rng).is_err());
    }

    #[test]
    fn k3_single_failure_is_absorbed() {
        let mut s = CascadeState::new(k3(), vec![1.2, 0.3, 0.2]).unwrap();
        let r = s.step();
        assert_eq!(r.failed, 1);
        assert_close(s.loads(), &[0.0, 0.9, 0.8]);
        assert_eq!(s.step().failed, 0);
        let out = run_cascade(&k3(), vec![1.2, 0.3, 0.2]).unwrap();
        assert_eq!(out.survivor_fraction, 1.0);
        assert_eq!(out.termination_stage, 1);
        assert_eq!(out.failures_per_stage, vec![1]);
    }

    #[test]
    fn k3_total_collapse() {
        let mut s = CascadeState::new(k3(), vec![1.2, 0.5, 0.6]).unwrap();
        assert_eq!(s.step().failed, 1);
        assert_close(s.loads(), &[0.0, 1.1, 1.2]);
        let r = s.step();
        assert_eq!(r.failed, 2);
        assert!((r.dropped_load - 2.3).abs() < 1e-12);
        assert_eq!(s.loads(), &[0.0, 0.0, 0.0]);

        let out = run_cascade(&k3(), vec![1.2, 0.5, 0.6]).unwrap();
        assert_eq!(out.survivor_fraction, 0.0);
        assert_eq!(out.termination_stage, 2);
        assert_eq!(out.failures_per_stage, vec![1, 2]);
        assert_eq!(out.survivors, 0);
    }

    #[test]
    fn quiet_state_is_unchanged() {
        let loads = vec![0.1, 0.99, 0.5, 0.0];
        let mut s = CascadeState::new(GraphTopology::complete(4), loads.clone()).unwrap();
        assert_eq!(s.step(), StageReport::default());
        assert_eq!(s.loads(), loads.as_slice());
        assert_eq!(s.stage(), 0);
        let out = run_cascade(&GraphTopology::complete(4), loads).unwrap();
        assert_eq!(out.termination_stage, 0);
        assert_eq!(out.survivor_fraction, 1.0);
    }

    #[test]
    fn isolated_failure_drops_its_load() {
        let g = GraphTopology::from_edges(3, &[(0, 1)]).unwrap();
        let out = run_cascade(&g, vec![0.5, 0.5, 1.5]).unwrap();
        assert_eq!(out.termination_stage, 1);
        assert!((out.survivor_fraction - 1.0 / 2.5).abs() < 1e-12);
        assert!((out.dropped_load - 1.5).abs() < 1e-12);
    }

    #[test]
    fn load_exactly_at_capacity_fails() {
        // Node 0 fails at exactly 1.0 and pushes node 1 to 1.2.
        let out = run_cascade(&GraphTopology::complete(2), vec![1.0, 0.2]).unwrap();
        assert_eq!(out.failures_per_stage, vec![1, 1]);
        assert_eq!(out.survivor_fraction, 0.0);
    }

    #[test]
    fn rejects_malformed_loads() {
        assert!(CascadeState::new(k3(), vec![0.1, 0.2]).is_err());
        assert!(CascadeState::new(k3(), vec![0.1, -0.2, 0.3]).is_err());
        assert!(CascadeState::new(k3(), vec![0.1, f64::NAN, 0.3]).is_err());
    }

    #[test]
    fn aggregate_of_one_trial_is_that_trial() {
        let s = AggregateStats::from_fractions(vec![0.25]);
        assert_eq!(s.trials, 1);
        assert_eq!(s.prob_no_outage, 0.0);
        assert_eq!(s.mean_outage_fraction, 0.75);
        let s = AggregateStats::from_fractions(vec![1.0]);
        assert_eq!(s.prob_no_outage, 1.0);
        assert_eq!(s.mean_outage_fraction, 0.0);
    }

    #[test]
    fn monte_carlo_rejects_zero_trials() {
        let cfg = TrialConfig {
            nodes: 5,
            edge_prob: 0.5,
            loads: LoadDistribution::Uniform01,
            d_m: 0.1,
        };
        assert!(monte_carlo(&cfg, 0, Substreams::new(1), Some(1)).is_err());
    }

    #[test]
    fn vanishing_disturbance_means_no_outage() {
        let cfg = TrialConfig {
            nodes: 30,
            edge_prob: 0.2,
            loads: LoadDistribution::Delta { a0: 0.6 },
            d_m: 1e-6,
        };
        let r = monte_carlo(&cfg, 200, Substreams::new(3), Some(2)).unwrap();
        assert_eq!(r.stats.prob_no_outage, 1.0);
    }

    #[test]
    fn lemma1_limit_closed_form() {
        // e^-2 / (1 - e^-2) * 1.1
        let s = lemma1_limit(0.8, 0.1).unwrap();
        assert!((s - 0.172_169_407_024_632).abs() < 1e-12, "{s}");
        assert!(lemma1_limit(0.8, 1e-4).unwrap() < 1e-100);
        assert!(lemma1_limit(1.0, 0.1).is_err());
        assert!(lemma1_limit(0.8, 0.0).is_err());
    }

    #[test]
    fn lemma1_reports_no_survivors() {
        // With a huge disturbance every node fails almost surely.
        let est = validate_lemma1(3, 0.99, 1e6, 4).unwrap();
        assert!(matches!(est, Lemma1Estimate::NoSurvivors { .. }));
        assert!(est.relative_error().is_none());
    }

    #[test]
    fn lemma1_matches_closed_form_at_large_n() {
        let est = validate_lemma1(100_000, 0.8, 0.1, 1).unwrap();
        let err = est.relative_error().unwrap();
        assert!(err < 0.02, "relative error {err}");
    }
}
