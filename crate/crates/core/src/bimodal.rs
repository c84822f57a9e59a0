//! Mean-field recursion for two-level initial loads: a fraction `pa` of the
//! nodes start at `a0` and the rest at `b0 >= a0`.
//!
//! While both modes sit below capacity after the shift, the recursion moves
//! both floors together. Once the shift pushes the whole upper mode past
//! capacity, that mode is retired (`b_n = 1`) and the lower mode continues
//! under the one-level recursion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::{
    is_blown, mean_failed_load, next_redistribution, overflow_mass, settle, validate_disturbance, validate_load,
    validate_run_params, Verdict,
};

/// Which recursion branch produced a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Init,
    /// Both modes survive the shift.
    BothModes,
    /// The shift retires the whole upper mode.
    UpperModeFails,
    /// Only the lower mode is left.
    LowerModeOnly,
    /// No branch applies.
    Stop,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Init => "init",
            Branch::BothModes => "both_modes",
            Branch::UpperModeFails => "upper_mode_fails",
            Branch::LowerModeOnly => "lower_mode_only",
            Branch::Stop => "stop",
        }
    }
}

/// Floor used in the denominator of the failure probability on the stage
/// that retires the upper mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetireDenominator {
    /// `a_{n-1}`, the published form.
    #[default]
    Previous,
    /// `a_n`, for sensitivity checks.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BimodalState {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub redistributed: f64,
    pub mu_prev: f64,
    /// Failing mass on the stage that retires the upper mode.
    pub p_tilde: Option<f64>,
    pub d_m: f64,
    pub pa: f64,
    pub pb: f64,
    pub branch: Branch,
    pub verdict: Verdict,
    pub denominator: RetireDenominator,
}

impl BimodalState {
    fn mixed_overflow(&self, a: f64, b: f64) -> f64 {
        self.pa * overflow_mass(a, self.d_m) + self.pb * overflow_mass(b, self.d_m)
    }
}

/// Stage-1 state. An empty mode (`pa = 0` or `pa = 1`) is merged into the
/// populated one, so the recursion then coincides with the one-level case.
pub fn init_bimodal(a0: f64, b0: f64, pa: f64, d_m: f64) -> Result<BimodalState> {
    init_bimodal_with(a0, b0, pa, d_m, RetireDenominator::default())
}

pub fn init_bimodal_with(a0: f64, b0: f64, pa: f64, d_m: f64, denominator: RetireDenominator) -> Result<BimodalState> {
    validate_load("a0", a0)?;
    validate_load("b0", b0)?;
    validate_disturbance(d_m)?;
    if a0 > b0 {
        return Err(Error::param("a0", format!("a0 = {a0} exceeds b0 = {b0}")));
    }
    if !(0.0..=1.0).contains(&pa) {
        return Err(Error::param("pa", format!("{pa} is not in [0, 1]")));
    }
    let (a0, b0) = if pa == 0.0 {
        (b0, b0)
    } else if pa == 1.0 {
        (a0, a0)
    } else {
        (a0, b0)
    };
    let mut s = BimodalState {
        n: 1,
        a: a0,
        b: b0,
        p: 0.0,
        redistributed: 0.0,
        mu_prev: 1.0 + d_m,
        p_tilde: None,
        d_m,
        pa,
        pb: 1.0 - pa,
        branch: Branch::Init,
        verdict: Verdict::Running,
        denominator,
    };
    let p0 = s.mixed_overflow(a0, b0);
    s.redistributed = next_redistribution(p0, 1.0 + d_m);
    let m = s.mixed_overflow(s.a, s.b);
    s.p = m / (1.0 - m) * (s.redistributed / d_m).exp_m1();
    if is_blown(s.p) {
        s.verdict = Verdict::CompleteOutage;
    }
    Ok(s)
}

/// `p0` for the two-level start.
pub fn initial_failure_probability(a0: f64, b0: f64, pa: f64, d_m: f64) -> Result<f64> {
    let s = init_bimodal(a0, b0, pa, d_m)?;
    Ok(s.mixed_overflow(s.a, s.b))
}

/// Advances one stage through exactly one branch. Non-running states are
/// returned unchanged.
///
/// Panics if more than one branch predicate holds, which would mean the
/// state broke the `a <= b <= 1` invariant.
pub fn bimodal_step(state: &BimodalState) -> BimodalState {
    if state.verdict != Verdict::Running {
        return *state;
    }
    let d_m = state.d_m;
    let (a, b, d) = (state.a, state.b, state.redistributed);

    let both = d < 1.0 - b && b < 1.0;
    let retire = (1.0 - a) > d && d >= (1.0 - b) && b < 1.0;
    let lower_only = d < 1.0 - a && a < 1.0 && b == 1.0;
    assert!(
        [both, retire, lower_only].iter().filter(|x| **x).count() <= 1,
        "overlapping recursion branches at a = {a}, b = {b}, D = {d}"
    );

    let mut next = BimodalState {
        n: state.n + 1,
        p_tilde: None,
        ..*state
    };

    if both {
        next.branch = Branch::BothModes;
        next.a = a + d;
        next.b = b + d;
        next.mu_prev = mean_failed_load(d, d_m);
        next.redistributed = next_redistribution(state.p, next.mu_prev);
        let m = next.mixed_overflow(next.a, next.b);
        next.p = m / (1.0 - m) * (next.redistributed / d_m).exp_m1();
    } else if retire {
        next.branch = Branch::UpperModeFails;
        next.a = a + d;
        next.b = 1.0;
        let (pa, pb) = (state.pa, state.pb);
        let p_tilde = pa * ((-(1.0 - a - d) / d_m).exp() - overflow_mass(a, d_m)) + pb * (1.0 - overflow_mass(b, d_m));
        let tail = 1.0 + d + d_m;
        let lower = pa * overflow_mass(next.a, d_m) * (1.0 + d_m - tail * (-d / d_m).exp());
        let upper = pb * (b + d + d_m - tail * overflow_mass(b, d_m));
        next.mu_prev = (lower + upper) / p_tilde;
        next.p_tilde = Some(p_tilde);
        next.redistributed = next_redistribution(state.p, next.mu_prev);
        let floor = match state.denominator {
            RetireDenominator::Previous => a,
            RetireDenominator::Current => next.a,
        };
        next.p = 1.0 - pa * (1.0 - overflow_mass(next.a, d_m)) / (1.0 - (pa * overflow_mass(floor, d_m) + pb));
    } else if lower_only {
        next.branch = Branch::LowerModeOnly;
        next.a = a + d;
        next.mu_prev = mean_failed_load(d, d_m);
        next.redistributed = next_redistribution(state.p, next.mu_prev);
        let e = overflow_mass(next.a, d_m);
        next.p = e / (1.0 - e) * (next.redistributed / d_m).exp_m1();
    } else {
        next.branch = Branch::Stop;
        next.verdict = Verdict::CompleteOutage;
        return next;
    }

    if next.a >= 1.0 || is_blown(next.p) {
        next.verdict = Verdict::CompleteOutage;
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BimodalRun {
    pub verdict: Verdict,
    pub trace: Vec<BimodalState>,
}

impl BimodalRun {
    pub fn last(&self) -> &BimodalState {
        self.trace.last().expect("trace always holds the initial state")
    }
}

pub fn run_bimodal(a0: f64, b0: f64, pa: f64, d_m: f64, max_iter: usize, tol: f64) -> Result<BimodalRun> {
    run_bimodal_with(a0, b0, pa, d_m, max_iter, tol, RetireDenominator::default())
}

pub fn run_bimodal_with(
    a0: f64,
    b0: f64,
    pa: f64,
    d_m: f64,
    max_iter: usize,
    tol: f64,
    denominator: RetireDenominator,
) -> Result<BimodalRun> {
    validate_run_params(max_iter, tol)?;
    let mut state = init_bimodal_with(a0, b0, pa, d_m, denominator)?;
    state.verdict = settle(state.verdict, state.p, tol);
    let mut trace = vec![state];
    while state.verdict == Verdict::Running {
        if state.n >= max_iter {
            state.verdict = Verdict::Undetermined;
            trace.last_mut().unwrap().verdict = Verdict::Undetermined;
            break;
        }
        state = bimodal_step(&state);
        state.verdict = settle(state.verdict, state.p, tol);
        trace.push(state);
    }
    Ok(BimodalRun {
        verdict: state.verdict,
        trace,
    })
}
