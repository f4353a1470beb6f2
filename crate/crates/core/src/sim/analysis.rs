use nalgebra::{DMatrix, DVector};

use super::{rk4_step, segments, simpson, simulate, EvaderStrategy, InputSignal, PursuerStrategy};
use super::{RiskyStrategy, Trajectory};
use crate::linalg::quad;
use crate::model::{Derived, GameSpec};
use crate::riccati::{solve_riccati, RiccatiProblem, RiccatiSolution};
use crate::schedule::{pi_escape, ScheduleOptions};
use crate::{Error, Execution, Result, Tolerances};

/// `‖x0‖²_{P(t0)}`, the payoff under equilibrium play.
pub fn game_value(spec: &GameSpec, p_sol: &RiccatiSolution) -> Result<f64> {
    Ok(quad(&spec.x0, &p_sol.eval(spec.t0)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopSeries {
    pub times: Vec<f64>,
    /// `−R_p⁻¹BᵀPΦx0`
    pub u_p: Vec<DVector<f64>>,
    /// `R_e⁻¹CᵀPΦx0`
    pub u_e: Vec<DVector<f64>>,
    /// `Φx0`
    pub state: Vec<DVector<f64>>,
}

/// Integrates the equilibrium transition matrix `Φ̇ = (A − (BR_p⁻¹Bᵀ −
/// CR_e⁻¹Cᵀ)P)Φ`, `Φ(t0) = I`, and samples the open-loop inputs on `grid`.
pub fn open_loop_inputs(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    grid: &[f64],
) -> Result<OpenLoopSeries> {
    if grid.windows(2).any(|w| w[0] > w[1]) || grid.iter().any(|&t| t < spec.t0 || t > spec.tf) {
        return Err(Error::InvalidArgument(
            "grid must be nondecreasing inside [t0, tf]".into(),
        ));
    }
    let d = Derived::new(spec)?;
    let n = d.dims.nx;
    let gap = &d.s_p - &d.s_e;
    let f = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let phi = DMatrix::from_column_slice(n, n, y.as_slice());
        let a_eq = &spec.a - &gap * p_sol.eval(t)?;
        Ok(DVector::from_column_slice((a_eq * phi).as_slice()))
    };
    let step = Tolerances::default().step(spec.horizon());
    let end = grid.last().copied().unwrap_or(spec.t0);
    let mut y = DVector::from_column_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let mut phis = Vec::with_capacity(grid.len());
    let mut pending = grid.iter().peekable();
    while pending.next_if(|&&t| t == spec.t0).is_some() {
        phis.push(y.clone());
    }
    for seg in segments(spec.t0, end, grid, step) {
        for k in 0..seg.steps {
            let t = seg.time(k);
            let dy = f(t, &y)?;
            y = rk4_step(&f, t, &y, seg.time(k + 1) - t, &dy)?;
        }
        while pending.next_if(|&&t| t == seg.end).is_some() {
            phis.push(y.clone());
        }
    }
    let mut out = OpenLoopSeries {
        times: grid.to_vec(),
        u_p: Vec::with_capacity(grid.len()),
        u_e: Vec::with_capacity(grid.len()),
        state: Vec::with_capacity(grid.len()),
    };
    for (&t, phi) in grid.iter().zip(&phis) {
        let phi = DMatrix::from_column_slice(n, n, phi.as_slice());
        let x = phi * &spec.x0;
        let px = p_sol.eval(t)? * &x;
        out.u_p.push(-(&d.k_p * &px));
        out.u_e.push(&d.k_e * px);
        out.state.push(x);
    }
    Ok(out)
}

/// The payoff by direct quadrature and through the completed-square form
///
/// ```text
/// ‖x0‖²_{P(t0)} + ∫ ‖u_p + R_p⁻¹BᵀPx‖²_{R_p} − ∫ ‖u_e − R_e⁻¹CᵀPx‖²_{R_e}
/// ```
///
/// both by composite Simpson on the trajectory's segments.
pub fn payoff_two_ways(
    traj: &Trajectory,
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
) -> Result<(f64, f64)> {
    let d = Derived::new(spec)?;
    let mut direct = quad(&traj.terminal().x, &spec.q_f);
    let mut square = quad(&traj.initial().x, &p_sol.eval(traj.initial().t)?);
    for seg in traj.segments() {
        let mut l = Vec::with_capacity(seg.len());
        let mut c = Vec::with_capacity(seg.len());
        for s in seg {
            let px = p_sol.eval(s.t)? * &s.x;
            l.push(quad(&s.x, &spec.q) + quad(&s.u_p, &spec.r_p) - quad(&s.u_e, &spec.r_e));
            c.push(
                quad(&(&s.u_p + &d.k_p * &px), &spec.r_p)
                    - quad(&(&s.u_e - &d.k_e * &px), &spec.r_e),
            );
        }
        let h = (seg[seg.len() - 1].t - seg[0].t) / (seg.len() - 1) as f64;
        direct += simpson(&l, h);
        square += simpson(&c, h);
    }
    Ok((direct, square))
}

struct ErrorIntegrals {
    /// `∫ (‖e‖²_{PBR_p⁻¹BᵀP} − ‖w‖²_{R_e})`
    lhs: f64,
    /// `−∫ ‖w + R_e⁻¹CᵀMe‖²_{R_e}`
    plus: f64,
    /// `−∫ ‖w − R_e⁻¹CᵀMe‖²_{R_e}`
    minus: f64,
}

type Deviation<'a> = dyn Fn(f64, f64, &DVector<f64>) -> Result<DVector<f64>> + 'a;

/// Integrates `ė = (A + CR_e⁻¹CᵀP)e + Cw`, `e(start) = 0`, on
/// `[start, end]`.
#[allow(clippy::too_many_arguments)]
fn error_integrals(
    spec: &GameSpec,
    d: &Derived,
    p_sol: &RiccatiSolution,
    m: Option<&RiccatiSolution>,
    (start, end): (f64, f64),
    breaks: &[f64],
    step: f64,
    w: &Deviation<'_>,
) -> Result<ErrorIntegrals> {
    let mut e = DVector::zeros(d.dims.nx);
    let mut acc = ErrorIntegrals {
        lhs: 0.0,
        plus: 0.0,
        minus: 0.0,
    };
    for seg in segments(start, end, breaks, step) {
        let piece = seg.piece();
        let f = |t: f64, e: &DVector<f64>| -> Result<DVector<f64>> {
            let p = p_sol.eval(t)?;
            Ok(&spec.a * e + &d.s_e * (p * e) + &spec.c * w(piece, t, e)?)
        };
        let mut lhs = Vec::with_capacity(seg.steps + 1);
        let mut plus = Vec::with_capacity(seg.steps + 1);
        let mut minus = Vec::with_capacity(seg.steps + 1);
        for k in 0..=seg.steps {
            let t = seg.time(k);
            if k > 0 {
                let t_prev = seg.time(k - 1);
                let de = f(t_prev, &e)?;
                e = rk4_step(&f, t_prev, &e, t - t_prev, &de)?;
            }
            let p = p_sol.eval(t)?;
            let wk = w(piece, t, &e)?;
            let pe = &p * &e;
            lhs.push(quad(&pe, &d.s_p) - quad(&wk, &spec.r_e));
            if let Some(m) = m {
                let kme = &d.k_e * (m.eval(t.max(m.reached_time()))? * &e);
                plus.push(-quad(&(&wk + &kme), &spec.r_e));
                minus.push(-quad(&(&wk - kme), &spec.r_e));
            }
        }
        let h = seg.h();
        acc.lhs += simpson(&lhs, h);
        if m.is_some() {
            acc.plus += simpson(&plus, h);
            acc.minus += simpson(&minus, h);
        }
    }
    Ok(acc)
}

/// Both sides of the completed-square identity for the evader's deviation
/// problem on one interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignCheck {
    /// `∫ (‖e‖²_{PBR_p⁻¹BᵀP} − ‖w‖²_{R_e}) dt`
    pub lhs: f64,
    /// `−∫ ‖w + R_e⁻¹CᵀMe‖²_{R_e} dt`. With `M` solving its Riccati
    /// equation (so `M ⪯ 0`) this equals `lhs`.
    pub rhs: f64,
    /// `−∫ ‖w − R_e⁻¹CᵀMe‖²_{R_e} dt`, which equals `lhs` only when `w` and
    /// `Me` are orthogonal in the `C`-weighted sense (for example `w = 0`).
    pub rhs_flipped: f64,
}

fn admissible_escape(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    (start, end): (f64, f64),
    opts: &ScheduleOptions,
) -> Result<Option<f64>> {
    if !(spec.t0 <= start && start < end && end <= spec.tf) {
        return Err(Error::InvalidArgument(format!(
            "interval [{start}, {end}) must lie inside [{}, {}]",
            spec.t0, spec.tf
        )));
    }
    let report = pi_escape(spec, p_sol, end, start, opts)?;
    Ok(report.escape_above(start, opts.boundary_slack()))
}

/// Integrates the error dynamics from `e(t_i) = 0` under `w` and evaluates
/// both sides of the deviation identity. The interval must be admissible.
pub fn theorem1_sign_check(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    interval: (f64, f64),
    w: &InputSignal,
    opts: &ScheduleOptions,
    step: f64,
) -> Result<SignCheck> {
    if let Some(escape) = admissible_escape(spec, p_sol, interval, opts)? {
        return Err(Error::InadmissibleInterval {
            start: interval.0,
            end: interval.1,
            escape,
        });
    }
    let d = Derived::new(spec)?;
    w.check_dim(d.dims.ne, "deviation")?;
    let problem = RiccatiProblem::deviation(spec, p_sol, interval.1)?;
    let m = match solve_riccati(&problem, interval.0, &opts.control) {
        Ok(m) => m,
        // An escape on the left endpoint itself: e vanishes there at the
        // rate M blows up, so the integrands stay bounded and M is only
        // needed slightly above it.
        Err(Error::FiniteEscape(r))
            if r.t_escape
                .is_some_and(|t| t <= interval.0 + opts.boundary_slack()) =>
        {
            let floor = interval.0 + 10.0 * opts.boundary_slack();
            solve_riccati(&problem, floor, &opts.control)?
        }
        Err(e) => return Err(e),
    };
    let ne = d.dims.ne;
    let mut breaks = w.breaks().to_vec();
    breaks.push(m.reached_time());
    let run = error_integrals(
        spec,
        &d,
        p_sol,
        Some(&m),
        interval,
        &breaks,
        step,
        &|piece, _, _| Ok(w.value(piece, ne)),
    )?;
    Ok(SignCheck {
        lhs: run.lhs,
        rhs: run.plus,
        rhs_flipped: run.minus,
    })
}

/// Builds the two-phase risky deviation on an interval whose deviation
/// flow escapes inside it. The kick lasts `kick_len`, which must end
/// strictly between the escape time and the interval's end.
#[allow(clippy::too_many_arguments)]
pub fn risky_strategy(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    interval: (f64, f64),
    kick_w0: DVector<f64>,
    kick_len: f64,
    scale: f64,
    opts: &ScheduleOptions,
) -> Result<RiskyStrategy> {
    let Some(escape) = admissible_escape(spec, p_sol, interval, opts)? else {
        return Err(Error::IntervalAdmissible {
            start: interval.0,
            end: interval.1,
        });
    };
    let d = Derived::new(spec)?;
    if kick_w0.len() != d.dims.ne {
        return Err(Error::DimensionMismatch(format!(
            "kick has length {}, expected {}",
            kick_w0.len(),
            d.dims.ne
        )));
    }
    let switch = interval.0 + kick_len;
    if !(switch > escape && switch < interval.1) {
        return Err(Error::InvalidArgument(format!(
            "kick must end in ({escape}, {}), got {switch}",
            interval.1
        )));
    }
    let problem = RiccatiProblem::deviation(spec, p_sol, interval.1)?;
    let m = solve_riccati(&problem, switch, &opts.control)?;
    Ok(RiskyStrategy {
        start: interval.0,
        switch,
        end: interval.1,
        escape,
        kick_w0,
        scale,
        m,
        k_e: d.k_e,
    })
}

/// A risky deviation with a unit kick direction and its quadratic gain:
/// the payoff under `strategy.with_scale(s)` exceeds the game value by
/// `gain · s²`.
#[derive(Clone, Debug)]
pub struct RiskyPlan {
    pub strategy: RiskyStrategy,
    pub gain: f64,
    pub standoff: f64,
}

/// Chooses the kick direction maximizing the gain for a kick that ends a
/// standoff above the escape time. The standoff starts at 1% of the
/// remaining interval and is halved until the gain is positive.
pub fn suggest_risky(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    interval: (f64, f64),
    opts: &ScheduleOptions,
    step: f64,
) -> Result<RiskyPlan> {
    let Some(escape) = admissible_escape(spec, p_sol, interval, opts)? else {
        return Err(Error::IntervalAdmissible {
            start: interval.0,
            end: interval.1,
        });
    };
    let d = Derived::new(spec)?;
    let ne = d.dims.ne;
    let mut standoff = 0.01 * (interval.1 - escape);
    for _ in 0..40 {
        let kick_len = escape + standoff - interval.0;
        let base = risky_strategy(
            spec,
            p_sol,
            interval,
            DVector::zeros(ne),
            kick_len,
            1.0,
            opts,
        )?;
        // Finer steps near the switch, where M is large.
        let local_step = step.min(0.05 * standoff);
        let gain_of = |dir: &DVector<f64>| -> Result<f64> {
            let r = RiskyStrategy {
                kick_w0: dir.clone(),
                ..base.clone()
            };
            let breaks = [r.switch];
            let run = error_integrals(
                spec,
                &d,
                p_sol,
                None,
                interval,
                &breaks,
                local_step,
                &|piece, t, e| r.w(piece, t, e),
            )?;
            Ok(run.lhs)
        };
        let unit = |i: usize| DVector::from_fn(ne, |k, _| if k == i { 1.0 } else { 0.0 });
        let mut form = DMatrix::zeros(ne, ne);
        for i in 0..ne {
            form[(i, i)] = gain_of(&unit(i))?;
        }
        for i in 0..ne {
            for j in (i + 1)..ne {
                let both = gain_of(&(unit(i) + unit(j)))?;
                let off = 0.5 * (both - form[(i, i)] - form[(j, j)]);
                form[(i, j)] = off;
                form[(j, i)] = off;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(form);
        let (k, &gain) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("ne > 0");
        if gain > 0.0 {
            let dir = eig.eigenvectors.column(k).into_owned();
            return Ok(RiskyPlan {
                strategy: RiskyStrategy {
                    kick_w0: dir,
                    ..base
                },
                gain,
                standoff,
            });
        }
        standoff *= 0.5;
    }
    Err(Error::NumericOverflow(
        "no kick direction with positive gain found".into(),
    ))
}

/// Common settings for sweeps over a scalar deviation size `c`.
#[derive(Clone, Debug)]
pub struct SweepSetup {
    pub instants: Vec<f64>,
    pub pursuer: PursuerStrategy,
    /// The evader plays the constant input `u_e = c · direction`.
    pub direction: DVector<f64>,
    pub step: f64,
    pub execution: Execution,
}

impl SweepSetup {
    /// Open-loop pursuer, no communication, `direction = −e₁`.
    pub fn open_loop(spec: &GameSpec) -> Self {
        let ne = spec.c.ncols();
        Self {
            instants: Vec::new(),
            pursuer: PursuerStrategy::open_loop(),
            direction: DVector::from_fn(ne, |k, _| if k == 0 { -1.0 } else { 0.0 }),
            step: Tolerances::default().step(spec.horizon()),
            execution: Execution::default(),
        }
    }
}

/// Payoffs for each `c`, in input order.
pub fn deviation_sweep(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    setup: &SweepSetup,
    c_values: &[f64],
) -> Result<Vec<f64>> {
    setup.execution.try_map(c_values, |&c| {
        let evader = EvaderStrategy::Input(InputSignal::Constant(&setup.direction * c));
        simulate(
            spec,
            p_sol,
            &setup.instants,
            &setup.pursuer,
            &evader,
            setup.step,
        )
        .map(|traj| traj.payoff())
    })
}

/// Largest displacement `‖∫u dt‖` of a single integrator over `horizon`
/// under the budget `∫ weight·‖u‖² dt ≤ effort_budget`. Cauchy–Schwarz gives
/// `sqrt(effort_budget · horizon / weight)`.
pub fn reachable_radius(effort_budget: f64, horizon: f64, weight: f64) -> Result<f64> {
    if effort_budget < 0.0 {
        return Err(Error::NegativeBudget(effort_budget));
    }
    if !(horizon >= 0.0 && weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need horizon >= 0 and weight > 0, got {horizon} and {weight}"
        )));
    }
    Ok((effort_budget * horizon / weight).sqrt())
}
