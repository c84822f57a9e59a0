//! One function per CLI subcommand. Each returns its tables and a JSON
//! summary; nothing is written to disk here.

use serde_json::{json, Value};

use crate::bimodal::run_bimodal_with;
use crate::cascade::{monte_carlo, TrialConfig};
use crate::error::{Error, Result};
use crate::harness::config::{
    BimodalMeanFieldConfig, DcritConfig, MeanFieldConfig, SimulateConfig, SweepBimodalConfig, SweepDcritConfig,
};
use crate::harness::output::{Cell, Table};
use crate::meanfield::{run_recursion, Verdict};
use crate::rng::Substreams;
use crate::threshold::{
    find_d_critical, scan_d_critical, sweep_bimodal_fixed_mean, sweep_dcrit_vs_a0, FixedMeanRow, Method, MixStatus,
    Model, ThresholdResult,
};

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub command: &'static str,
    pub config: Value,
    pub tables: Vec<Table>,
    pub summary: Value,
}

fn packed(counts: &[usize]) -> String {
    counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

/// Monte Carlo over the `nodes x edge_probs x disturbances` grid.
/// Grid points are numbered in that (row-major) order and the number is the
/// point's substream index.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<CommandOutput> {
    cfg.validate()?;
    let seed = cfg.seed.expect("validated");
    let probs = cfg.edge_probs.values("edge_probs")?;
    let dists = cfg.disturbances.values("disturbances")?;

    let mut trials = Table::new(
        "simulate_trials",
        vec![
            "nodes",
            "edge_prob",
            "d_m",
            "grid_point",
            "trial",
            "stream",
            "termination_stage",
            "survivor_fraction",
            "outage_fraction",
            "failures_per_stage",
        ],
    );
    let mut aggregate = Table::new(
        "simulate_aggregate",
        vec![
            "nodes",
            "edge_prob",
            "d_m",
            "trials",
            "prob_no_outage",
            "prob_no_outage_stderr",
            "mean_outage_fraction",
            "mean_outage_stderr",
        ],
    );
    let mut summary = Vec::new();

    let mut point: u32 = 0;
    for &nodes in &cfg.nodes {
        for &edge_prob in &probs {
            for &d_m in &dists {
                let tc = TrialConfig {
                    nodes,
                    edge_prob,
                    loads: cfg.loads,
                    d_m,
                };
                let streams = Substreams::at_point(seed, point);
                let report = monte_carlo(&tc, cfg.trials, streams, None)?;
                for (k, o) in report.outcomes.iter().enumerate() {
                    let k = k as u32;
                    trials.push(vec![
                        nodes.into(),
                        edge_prob.into(),
                        d_m.into(),
                        point.into(),
                        k.into(),
                        streams.stream_id(k).into(),
                        o.termination_stage.into(),
                        o.survivor_fraction.into(),
                        o.outage_fraction().into(),
                        packed(&o.failures_per_stage).into(),
                    ]);
                }
                let s = &report.stats;
                aggregate.push(vec![
                    nodes.into(),
                    edge_prob.into(),
                    d_m.into(),
                    s.trials.into(),
                    s.prob_no_outage.into(),
                    s.prob_no_outage_stderr().into(),
                    s.mean_outage_fraction.into(),
                    s.mean_outage_stderr().into(),
                ]);
                summary.push(json!({
                    "nodes": nodes,
                    "edge_prob": edge_prob,
                    "d_m": d_m,
                    "prob_no_outage": s.prob_no_outage,
                    "mean_outage_fraction": s.mean_outage_fraction,
                }));
                point += 1;
            }
        }
    }

    Ok(CommandOutput {
        command: "simulate",
        config: serde_json::to_value(cfg)?,
        tables: vec![trials, aggregate],
        summary: Value::Array(summary),
    })
}

/// Consecutive grid points whose verdicts differ.
fn verdict_flips(grid: &[f64], verdicts: &[Verdict]) -> Value {
    let flips: Vec<Value> = grid
        .windows(2)
        .zip(verdicts.windows(2))
        .filter(|(_, v)| v[0] != v[1])
        .map(|(d, v)| json!({"from_d_m": d[0], "to_d_m": d[1], "from": v[0].as_str(), "to": v[1].as_str()}))
        .collect();
    Value::Array(flips)
}

/// One-level recursion traces over a grid of `d_m`.
pub fn cmd_meanfield(cfg: &MeanFieldConfig) -> Result<CommandOutput> {
    let grid = cfg.disturbances.values("disturbances")?;
    let s = cfg.recursion;
    let mut trace = Table::new(
        "meanfield_trace",
        vec!["d_m", "n", "a_n", "p_n", "D_n", "mu_prev", "verdict"],
    );
    let mut runs = Table::new(
        "meanfield_summary",
        vec!["d_m", "verdict", "stages", "a_final", "p_final"],
    );
    let mut verdicts = Vec::with_capacity(grid.len());
    for &d_m in &grid {
        let run = run_recursion(cfg.a0, d_m, s.max_iter, s.tol)?;
        for st in &run.trace {
            trace.push(vec![
                d_m.into(),
                st.n.into(),
                st.a.into(),
                st.p.into(),
                st.redistributed.into(),
                st.mu_prev.into(),
                run.verdict.as_str().into(),
            ]);
        }
        let last = run.last();
        runs.push(vec![
            d_m.into(),
            run.verdict.as_str().into(),
            last.n.into(),
            last.a.into(),
            last.p.into(),
        ]);
        verdicts.push(run.verdict);
    }
    Ok(CommandOutput {
        command: "meanfield",
        config: serde_json::to_value(cfg)?,
        tables: vec![trace, runs],
        summary: json!({ "a0": cfg.a0, "flips": verdict_flips(&grid, &verdicts) }),
    })
}

/// Two-level recursion traces over a grid of `d_m`.
pub fn cmd_bimodal_meanfield(cfg: &BimodalMeanFieldConfig) -> Result<CommandOutput> {
    let grid = cfg.disturbances.values("disturbances")?;
    let s = cfg.recursion;
    let mut trace = Table::new(
        "bimodal_trace",
        vec![
            "d_m", "n", "a_n", "b_n", "p_n", "D_n", "mu_prev", "p_tilde", "branch", "verdict",
        ],
    );
    let mut runs = Table::new(
        "bimodal_summary",
        vec!["d_m", "verdict", "stages", "a_final", "b_final", "p_final"],
    );
    let mut verdicts = Vec::with_capacity(grid.len());
    for &d_m in &grid {
        let run = run_bimodal_with(cfg.a0, cfg.b0, cfg.pa, d_m, s.max_iter, s.tol, s.denominator)?;
        for st in &run.trace {
            trace.push(vec![
                d_m.into(),
                st.n.into(),
                st.a.into(),
                st.b.into(),
                st.p.into(),
                st.redistributed.into(),
                st.mu_prev.into(),
                Cell::opt(st.p_tilde),
                st.branch.as_str().into(),
                run.verdict.as_str().into(),
            ]);
        }
        let last = run.last();
        runs.push(vec![
            d_m.into(),
            run.verdict.as_str().into(),
            last.n.into(),
            last.a.into(),
            last.b.into(),
            last.p.into(),
        ]);
        verdicts.push(run.verdict);
    }
    Ok(CommandOutput {
        command: "bimodal-meanfield",
        config: serde_json::to_value(cfg)?,
        tables: vec![trace, runs],
        summary: json!({
            "a0": cfg.a0, "b0": cfg.b0, "pa": cfg.pa,
            "flips": verdict_flips(&grid, &verdicts),
        }),
    })
}

fn threshold_cells(r: &ThresholdResult) -> Vec<Cell> {
    vec![
        r.method.as_str().into(),
        r.d_low.into(),
        r.d_high.into(),
        r.d_critical.into(),
        r.scan_resolution.into(),
        r.evaluations.into(),
        r.undetermined_as_failure.into(),
    ]
}

/// Critical disturbance for one model.
pub fn cmd_dcrit(cfg: &DcritConfig) -> Result<CommandOutput> {
    let result = match cfg.method {
        Method::Bisection => find_d_critical(&cfg.model, cfg.tol_d, &cfg.recursion)?,
        Method::Scan => scan_d_critical(&cfg.model, &cfg.scan.values("scan")?, &cfg.recursion)?,
    };
    let (kind, a0, b0, pa) = match cfg.model {
        Model::Unimodal { a0 } => ("unimodal", a0, None, None),
        Model::Bimodal { a0, b0, pa } => ("bimodal", a0, Some(b0), Some(pa)),
    };
    let mut table = Table::new(
        "dcrit",
        vec![
            "model",
            "a0",
            "b0",
            "pa",
            "method",
            "d_low",
            "d_high",
            "d_critical",
            "scan_resolution",
            "evaluations",
            "undetermined_as_failure",
        ],
    );
    let mut row = vec![kind.into(), a0.into(), Cell::opt(b0), Cell::opt(pa)];
    row.extend(threshold_cells(&result));
    table.push(row);
    Ok(CommandOutput {
        command: "dcrit",
        config: serde_json::to_value(cfg)?,
        tables: vec![table],
        summary: serde_json::to_value(result)?,
    })
}

/// `d_critical` against `a0`, with the spare capacity `1 - a0` alongside.
pub fn cmd_sweep_dcrit(cfg: &SweepDcritConfig) -> Result<CommandOutput> {
    let grid = cfg.a0_grid.values("a0_grid")?;
    let rows = sweep_dcrit_vs_a0(&grid, cfg.tol_d, &cfg.recursion)?;
    let mut table = Table::new(
        "sweep_dcrit",
        vec![
            "a0",
            "d_critical",
            "headroom",
            "d_low",
            "d_high",
            "undetermined_as_failure",
        ],
    );
    for r in &rows {
        table.push(vec![
            r.a0.into(),
            r.d_critical.into(),
            r.headroom.into(),
            r.result.d_low.into(),
            r.result.d_high.into(),
            r.result.undetermined_as_failure.into(),
        ]);
    }
    let summary: Vec<Value> = rows
        .iter()
        .map(|r| json!({"a0": r.a0, "d_critical": r.d_critical, "headroom": r.headroom}))
        .collect();
    Ok(CommandOutput {
        command: "sweep-dcrit",
        config: serde_json::to_value(cfg)?,
        tables: vec![table],
        summary: Value::Array(summary),
    })
}

/// `d_critical` over `(a0, b0)` pairs at a fixed mean load.
pub fn cmd_sweep_bimodal(cfg: &SweepBimodalConfig) -> Result<CommandOutput> {
    let a0s = cfg.a0_grid.values("a0_grid")?;
    let b0s = cfg.b0_grid.values("b0_grid")?;
    let rows = sweep_bimodal_fixed_mean(cfg.mean, &a0s, &b0s, cfg.tol_d, &cfg.recursion)?;
    let mut table = Table::new("sweep_bimodal", vec!["a0", "b0", "pa", "status", "d_critical"]);
    for r in &rows {
        table.push(vec![
            r.a0.into(),
            r.b0.into(),
            Cell::opt(r.pa),
            r.status.as_str().into(),
            Cell::opt(r.d_critical),
        ]);
    }
    // Every equal-load row describes the same network, so ties are common;
    // report the a0 == b0 row when there is one.
    let best = rows
        .iter()
        .filter(|r| r.d_critical.is_some())
        .fold(None::<&FixedMeanRow>, |acc, r| match acc {
            None => Some(r),
            Some(b) => match r.d_critical.partial_cmp(&b.d_critical) {
                Some(std::cmp::Ordering::Greater) => Some(r),
                Some(std::cmp::Ordering::Equal) if r.a0 == r.b0 && b.a0 != b.b0 => Some(r),
                _ => Some(b),
            },
        })
        .ok_or_else(|| Error::Config("no feasible (a0, b0) pair".into()))?;
    let feasible = rows.iter().filter(|r| r.status != MixStatus::Infeasible).count();
    Ok(CommandOutput {
        command: "sweep-bimodal",
        config: serde_json::to_value(cfg)?,
        tables: vec![table],
        summary: json!({
            "mean": cfg.mean,
            "feasible": feasible,
            "skipped": rows.len() - feasible,
            "best": {"a0": best.a0, "b0": best.b0, "pa": best.pa, "d_critical": best.d_critical},
        }),
    })
}
