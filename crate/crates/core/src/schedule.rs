//! Communication schedules.
//!
//! On an interval `[t_i, t_next)` the evader cannot gain from deviating iff
//! the flow `Π` integrated backward from `Π(t_next) = −P(t_next)` has no
//! escape time in the interval. The minimum-cardinality schedule places
//! each instant at the escape time of the flow started at the next instant,
//! working backward from `tf`, offset by a small margin so that every
//! interval is escape free.

use serde::Serialize;

use crate::escape::{
    detect_escape_norm, detect_escape_radon, EscapeMethod, EscapeReport, RadonScan,
};
use crate::model::GameSpec;
use crate::riccati::{RiccatiProblem, RiccatiSolution, StepControl};
use crate::{Error, Execution, Result, Tolerances};

#[derive(Clone, Debug)]
pub struct ScheduleOptions {
    /// Offset applied after each detected escape time.
    pub margin: f64,
    pub time_tol: f64,
    pub method: EscapeMethod,
    pub control: StepControl,
    pub scan: RadonScan,
}

impl ScheduleOptions {
    pub fn new(spec: &GameSpec, tol: &Tolerances) -> Self {
        let horizon = spec.horizon();
        Self {
            margin: tol.margin(horizon),
            time_tol: tol.time_tol(horizon),
            method: EscapeMethod::default(),
            control: StepControl::new(horizon, tol),
            scan: RadonScan {
                points: tol.radon_scan_points,
                execution: Execution::default(),
            },
        }
    }

    pub fn with_method(mut self, method: EscapeMethod) -> Self {
        self.method = method;
        self
    }

    /// Escapes within this distance above an interval's start are treated
    /// as sitting on the reset instant, which the half-open interval
    /// excludes.
    pub fn boundary_slack(&self) -> f64 {
        100.0 * self.time_tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalCertificate {
    pub start: f64,
    pub end: f64,
    pub escape_found_in_interval: bool,
    /// Largest escape time of the flow started at `end`, if one lies at or
    /// above `start`.
    pub escape_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Admissibility {
    pub pass: bool,
    pub certificates: Vec<IntervalCertificate>,
}

impl Admissibility {
    pub fn failing(&self) -> impl Iterator<Item = &IntervalCertificate> {
        self.certificates
            .iter()
            .filter(|c| c.escape_found_in_interval)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommSchedule {
    pub instants: Vec<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub margin: f64,
    pub certificates: Vec<IntervalCertificate>,
    /// For each instant, the supremum it may be delayed to while its
    /// preceding interval stays escape free.
    pub slack_sup: Vec<f64>,
    /// Escape time of the flow started at the first instant (or at `tf`
    /// when no instant is needed), searched one horizon below `t0`. The
    /// recursion stops because it lies below `t0`.
    pub terminal_candidate: Option<f64>,
}

/// Escape report for `Π` started at `terminal_time` from `−P(terminal_time)`.
pub fn pi_escape(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    terminal_time: f64,
    floor: f64,
    opts: &ScheduleOptions,
) -> Result<EscapeReport> {
    let boundary = -p_sol.eval(terminal_time)?;
    match opts.method {
        EscapeMethod::NormBlowup => {
            let problem = RiccatiProblem::pi(spec, terminal_time, boundary)?;
            detect_escape_norm(&problem, floor, opts.time_tol, &opts.control)
        }
        EscapeMethod::RadonDeterminant => detect_escape_radon(
            spec,
            terminal_time,
            &boundary,
            floor,
            opts.time_tol,
            &opts.scan,
        ),
    }
}

fn check_instants(spec: &GameSpec, instants: &[f64]) -> Result<()> {
    let sorted = instants.windows(2).all(|w| w[0] < w[1]);
    let inside = instants.iter().all(|&t| t > spec.t0 && t < spec.tf);
    if sorted && inside {
        Ok(())
    } else {
        Err(Error::UnsortedInstants)
    }
}

fn certify(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    start: f64,
    end: f64,
    opts: &ScheduleOptions,
) -> Result<IntervalCertificate> {
    let report = pi_escape(spec, p_sol, end, start, opts)?;
    let escape = report.escape_above(start, opts.boundary_slack());
    Ok(IntervalCertificate {
        start,
        end,
        escape_found_in_interval: escape.is_some(),
        escape_time: report.t_escape,
    })
}

/// Checks every interval `[t_i, t_{i+1})`, including `[t0, t₁)` and
/// `[t_N, tf)`, for an escape of `Π`.
pub fn check_admissibility(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    instants: &[f64],
    opts: &ScheduleOptions,
) -> Result<Admissibility> {
    check_instants(spec, instants)?;
    let mut knots = Vec::with_capacity(instants.len() + 2);
    knots.push(spec.t0);
    knots.extend_from_slice(instants);
    knots.push(spec.tf);
    let certificates = knots
        .windows(2)
        .map(|w| certify(spec, p_sol, w[0], w[1], opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Admissibility {
        pass: certificates.iter().all(|c| !c.escape_found_in_interval),
        certificates,
    })
}

/// Backward recursion from `tf`: each instant is the escape time of the
/// flow started at the following instant, plus `opts.margin`.
pub fn optimal_schedule(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    opts: &ScheduleOptions,
) -> Result<CommSchedule> {
    if opts.margin < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "margin must be nonnegative, got {}",
            opts.margin
        )));
    }
    let mut instants = Vec::new();
    let mut next = spec.tf;
    loop {
        let report = pi_escape(spec, p_sol, next, spec.t0, opts)?;
        let Some(escape) = report.t_escape else {
            break;
        };
        let instant = escape + opts.margin;
        if instant - spec.t0 <= opts.margin.max(opts.time_tol) {
            return Err(Error::DegenerateSchedule {
                escape,
                t0: spec.t0,
            });
        }
        if instant >= next {
            return Err(Error::InvalidArgument(format!(
                "margin {} too large for the escape at {escape}",
                opts.margin
            )));
        }
        instants.push(instant);
        next = instant;
    }
    instants.reverse();

    let extended_floor = spec.t0 - spec.horizon();
    let terminal_candidate = pi_escape(spec, p_sol, next, extended_floor, opts)?.t_escape;

    let admissibility = check_admissibility(spec, p_sol, &instants, opts)?;
    debug_assert!(admissibility.pass);

    let slack_sup = (0..instants.len())
        .map(|i| {
            let prev = if i == 0 { spec.t0 } else { instants[i - 1] };
            let upper = instants.get(i + 1).copied().unwrap_or(spec.tf);
            max_next_instance(spec, p_sol, prev, upper, opts)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CommSchedule {
        n: instants.len(),
        instants,
        margin: opts.margin,
        certificates: admissibility.certificates,
        slack_sup,
        terminal_candidate,
    })
}

/// Supremum of the instants `t ∈ (t_prev, upper]` such that the flow started
/// at `t` has no escape in `(t_prev, t)`, found by bisection to
/// `opts.time_tol`. The returned value is the feasible end of the final
/// bracket.
pub fn max_next_instance(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    t_prev: f64,
    upper: f64,
    opts: &ScheduleOptions,
) -> Result<f64> {
    if !(t_prev < upper && upper <= spec.tf && t_prev >= spec.t0) {
        return Err(Error::InvalidArgument(format!(
            "need t0 <= t_prev < upper <= tf, got t_prev = {t_prev}, upper = {upper}"
        )));
    }
    let feasible = |t: f64| -> Result<bool> {
        let report = pi_escape(spec, p_sol, t, t_prev, opts)?;
        Ok(report.escape_above(t_prev, opts.boundary_slack()).is_none())
    };
    if feasible(upper)? {
        return Ok(upper);
    }
    let mut lo = t_prev
        + opts
            .control
            .h_min
            .max(opts.time_tol)
            .min(0.5 * (upper - t_prev));
    if !feasible(lo)? {
        return Err(Error::NoFeasibleInstance { t_prev });
    }
    let mut hi = upper;
    while hi - lo > opts.time_tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
