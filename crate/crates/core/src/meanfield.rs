//! Scalar recursion for an infinite fully connected network whose nodes all
//! start at load `a0`.
//!
//! Surviving loads stay a truncated exponential on `[a_n, 1)`, so the whole
//! process is captured by four scalars per stage: the load floor `a_n`, the
//! probability `p_n` that an alive node fails, the per-survivor redistributed
//! load `D_n`, and the mean load `mu_{n-1}` of the nodes that failed.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Running,
    /// `p_n` fell below the tolerance: the cascade stops.
    Survives,
    /// The survivors were pushed past capacity: every node fails.
    CompleteOutage,
    /// `max_iter` stages elapsed without either outcome.
    Undetermined,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Running => "running",
            Verdict::Survives => "survives",
            Verdict::CompleteOutage => "complete_outage",
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldState {
    /// Stage index.
    pub n: usize,
    /// Load floor of the surviving nodes.
    pub a: f64,
    /// Probability that a node alive at this stage fails.
    pub p: f64,
    /// Load handed to each survivor by this stage's failures.
    pub redistributed: f64,
    /// Mean load of the nodes that failed in the previous stage.
    pub mu_prev: f64,
    pub d_m: f64,
    pub verdict: Verdict,
}

pub(crate) fn validate_disturbance(d_m: f64) -> Result<()> {
    if d_m > 0.0 && d_m.is_finite() {
        Ok(())
    } else {
        Err(Error::param("d_m", format!("{d_m} must be positive and finite")))
    }
}

pub(crate) fn validate_load(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{x} is not in (0, 1)")))
    }
}

/// `exp(-(1 - a) / d_m)`: probability mass above capacity for a floor `a`.
pub(crate) fn overflow_mass(a: f64, d_m: f64) -> f64 {
    (-(1.0 - a) / d_m).exp()
}

/// Mean load of the nodes pushed over capacity by a shift `d`:
/// `1 + d_m - d / (exp(d / d_m) - 1)`, which tends to 1 as `d -> 0`.
pub(crate) fn mean_failed_load(d: f64, d_m: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    1.0 + d_m - d / (d / d_m).exp_m1()
}

/// `(p / (1 - p)) * mu`.
pub(crate) fn next_redistribution(p: f64, mu: f64) -> f64 {
    p / (1.0 - p) * mu
}

pub(crate) fn is_blown(p: f64) -> bool {
    !(p < 1.0)
}

/// Stage-1 state: `p0`, `D_1`, `a_1 = a0` and `p_1`.
pub fn init_recursion(a0: f64, d_m: f64) -> Result<MeanFieldState> {
    validate_load("a0", a0)?;
    validate_disturbance(d_m)?;
    let p0 = overflow_mass(a0, d_m);
    let redistributed = next_redistribution(p0, 1.0 + d_m);
    let a = a0;
    let e = overflow_mass(a, d_m);
    let p = e / (1.0 - e) * (redistributed / d_m).exp_m1();
    Ok(MeanFieldState {
        n: 1,
        a,
        p,
        redistributed,
        mu_prev: 1.0 + d_m,
        d_m,
        verdict: if is_blown(p) {
            Verdict::CompleteOutage
        } else {
            Verdict::Running
        },
    })
}

/// `p0 = exp(-(1 - a0) / d_m)`, the stage-0 failure probability.
pub fn initial_failure_probability(a0: f64, d_m: f64) -> Result<f64> {
    validate_load("a0", a0)?;
    validate_disturbance(d_m)?;
    Ok(overflow_mass(a0, d_m))
}

/// Advances one stage. Only a `Running` state moves; anything else is
/// returned unchanged.
pub fn recursion_step(state: &MeanFieldState) -> MeanFieldState {
    if state.verdict != Verdict::Running {
        return *state;
    }
    let d_m = state.d_m;
    let d_prev = state.redistributed;
    let mut next = MeanFieldState {
        n: state.n + 1,
        ..*state
    };
    if d_prev > 1.0 - state.a && state.a < 1.0 {
        next.verdict = Verdict::CompleteOutage;
        return next;
    }
    next.a = state.a + d_prev;
    next.mu_prev = mean_failed_load(d_prev, d_m);
    next.redistributed = next_redistribution(state.p, next.mu_prev);
    let e = overflow_mass(next.a, d_m);
    next.p = e / (1.0 - e) * (next.redistributed / d_m).exp_m1();
    if next.a >= 1.0 || is_blown(next.p) {
        next.verdict = Verdict::CompleteOutage;
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionRun {
    pub verdict: Verdict,
    /// States for stages `1..=last`, in order.
    pub trace: Vec<MeanFieldState>,
}

impl RecursionRun {
    pub fn last(&self) -> &MeanFieldState {
        self.trace.last().expect("trace always holds the initial state")
    }
}

pub(crate) fn validate_run_params(max_iter: usize, tol: f64) -> Result<()> {
    if max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("{tol} must be positive")));
    }
    Ok(())
}

/// Marks `Survives` once `p` drops below `tol`.
pub(crate) fn settle(verdict: Verdict, p: f64, tol: f64) -> Verdict {
    if verdict == Verdict::Running && p < tol {
        Verdict::Survives
    } else {
        verdict
    }
}

/// Iterates from stage 1 until survival (`p_n < tol`), complete outage, or
/// `max_iter` stages (`Undetermined`).
pub fn run_recursion(a0: f64, d_m: f64, max_iter: usize, tol: f64) -> Result<RecursionRun> {
    validate_run_params(max_iter, tol)?;
    let mut state = init_recursion(a0, d_m)?;
    state.verdict = settle(state.verdict, state.p, tol);
    let mut trace = vec![state];
    while state.verdict == Verdict::Running {
        if state.n >= max_iter {
            state.verdict = Verdict::Undetermined;
            trace.last_mut().unwrap().verdict = Verdict::Undetermined;
            break;
        }
        state = recursion_step(&state);
        state.verdict = settle(state.verdict, state.p, tol);
        trace.push(state);
    }
    Ok(RecursionRun {
        verdict: state.verdict,
        trace,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Frozen from a 40-digit evaluation of the initializer.
    #[test]
    fn initializer_values() {
        let s = init_recursion(0.8, 0.1).unwrap();
        assert!(rel(initial_failure_probability(0.8, 0.1).unwrap(), 0.135_335_283_236_613) < 1e-13);
        assert!(rel(s.redistributed, 0.172_169_407_024_632) < 1e-13);
        assert!(rel(s.p, 0.719_041_591_531_743) < 1e-12);
        assert_eq!(s.a, 0.8);
        assert_eq!(s.n, 1);

        let p0 = initial_failure_probability(0.5, 0.1).unwrap();
        assert!(rel(p0, 0.006_737_946_999_085_47) < 1e-13);

        let s = init_recursion(0.8, 0.03).unwrap();
        assert!(rel(s.p, 5.698_541_060_712_39e-5) < 1e-11);
    }

    #[test]
    fn initializer_vanishes_with_disturbance() {
        let s = init_recursion(0.8, 1e-3).unwrap();
        assert!(s.redistributed < 1e-80);
        assert!(s.p < 1e-80);
    }

    #[test]
    fn initializer_rejects_bad_domain() {
        assert!(init_recursion(1.0, 0.1).is_err());
        assert!(init_recursion(0.0, 0.1).is_err());
        assert!(init_recursion(0.8, 0.0).is_err());
        assert!(init_recursion(0.8, f64::INFINITY).is_err());
    }

    #[test]
    fn mean_failed_load_limits() {
        assert_eq!(mean_failed_load(0.0, 0.05), 1.0);
        assert!((mean_failed_load(1e-12, 0.05) - 1.0).abs() < 1e-9);
        for d in [1e-4, 0.01, 0.1, 1.0, 10.0] {
            let mu = mean_failed_load(d, 0.05);
            assert!(mu > 1.0 && mu <= 1.05, "d = {d}: mu = {mu}");
        }
    }

    #[test]
    fn trajectory_matches_high_precision_oracle() {
        // (n, a_n, p_n, D_n) from a 40-digit iteration of the recursion.
        let expected = [
            (1, 0.8, 5.698_541_060_712_386_4e-5, 1.312_483_125_769_546_6e-3),
            (
                2,
                0.801_312_483_125_769_59,
                2.533_052_740_613_319_9e-6,
                5.702_578_377_136_156_7e-5,
            ),
            (
                3,
                0.801_369_508_909_540_95,
                1.126_322_648_775_192_7e-7,
                2.533_131_358_946_098_5e-6,
            ),
            (
                6,
                0.801_372_159_681_590_28,
                9.902_346_195_996_739_1e-12,
                2.226_962_523_547_309_5e-10,
            ),
        ];
        let run = run_recursion(0.8, 0.03, 1000, 1e-12).unwrap();
        for (n, a, p, d) in expected {
            let s = run.trace[n - 1];
            assert_eq!(s.n, n);
            assert!(rel(s.a, a) < 1e-13, "a_{n}");
            assert!(rel(s.p, p) < 1e-9, "p_{n}: {} vs {p}", s.p);
            assert!(rel(s.redistributed, d) < 1e-9, "D_{n}");
        }
        assert_eq!(run.verdict, Verdict::Survives);
        // p_6 is still above 1e-12; p_7 is the first below.
        assert_eq!(run.last().n, 7);
        assert!(run.trace.windows(2).all(|w| w[1].p < w[0].p));
        assert!(run.last().a < 1.0);
    }

    #[test]
    fn large_disturbance_blacks_out() {
        let run = run_recursion(0.8, 0.07, 1000, 1e-12).unwrap();
        assert_eq!(run.verdict, Verdict::CompleteOutage);
        // a_3 = 0.97146 and p_3 = 2.03e10 >= 1.
        assert_eq!(run.trace.len(), 3);
        assert!((run.trace[2].p / 20_348_960_624.486_51 - 1.0).abs() < 1e-9);
        assert!((run.trace[2].a - 0.971_459_077_066_506_86).abs() < 1e-12);
        assert!(run.trace.windows(2).all(|w| w[1].a >= w[0].a));
    }

    #[test]
    fn vanishing_disturbance_survives_at_a0() {
        let run = run_recursion(0.8, 1e-3, 1000, 1e-12).unwrap();
        assert_eq!(run.verdict, Verdict::Survives);
        assert!((run.last().a - 0.8).abs() < 1e-12);
    }

    #[test]
    fn exhausting_iterations_is_undetermined() {
        let run = run_recursion(0.8, 0.03, 2, 1e-300).unwrap();
        assert_eq!(run.verdict, Verdict::Undetermined);
        assert_eq!(run.trace.len(), 2);
        assert_eq!(run.last().verdict, Verdict::Undetermined);
    }

    #[test]
    fn step_leaves_terminal_states_alone() {
        let mut s = init_recursion(0.8, 0.03).unwrap();
        s.verdict = Verdict::Survives;
        assert_eq!(recursion_step(&s), s);
    }

    #[test]
    fn run_rejects_bad_controls() {
        assert!(run_recursion(0.8, 0.03, 0, 1e-12).is_err());
        assert!(run_recursion(0.8, 0.03, 10, 0.0).is_err());
    }

    #[test]
    fn failed_mean_stays_in_band_along_trace() {
        for d_m in [0.01, 0.03, 0.045, 0.06] {
            let run = run_recursion(0.8, d_m, 10_000, 1e-12).unwrap();
            for s in &run.trace[1..] {
                if s.verdict == Verdict::CompleteOutage && s.a == run.trace[s.n - 2].a {
                    continue;
                }
                assert!(
                    s.mu_prev > 1.0 && s.mu_prev < 1.0 + d_m,
                    "d_m {d_m} n {}: {}",
                    s.n,
                    s.mu_prev
                );
            }
        }
    }
}
