//! Forward simulation of the closed-loop game and payoff evaluation.
//!
//! The joint state `[x, x̂, x_nom]` is integrated with fixed-step RK4. Steps
//! are split exactly at communication instants and at input breakpoints, so
//! every integration segment carries smooth inputs. `x̂` is the pursuer's
//! certainty-equivalent estimate, overwritten with `x` at each instant, and
//! `x_nom = Φ x0` is the equilibrium nominal trajectory used by open-loop
//! players.

mod analysis;
mod strategy;
mod trajectory;

use nalgebra::{DMatrix, DVector};

use crate::linalg::quad;
use crate::model::{Derived, GameSpec};
use crate::riccati::RiccatiSolution;
use crate::{Error, Result};

pub use analysis::{
    deviation_sweep, game_value, open_loop_inputs, payoff_two_ways, reachable_radius,
    risky_strategy, suggest_risky, theorem1_sign_check, OpenLoopSeries, RiskyPlan, SignCheck,
    SweepSetup,
};
pub use strategy::{EvaderStrategy, InputSignal, PursuerStrategy, RiskyStrategy};
pub use trajectory::{Sample, Trajectory};

/// One integration segment with an even number of RK4 steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Segment {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Segment {
    /// Time used to select piecewise-constant input values on this segment,
    /// so that samples at the segment end carry left limits.
    pub fn piece(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn h(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.end
        } else {
            self.start + k as f64 * self.h()
        }
    }
}

/// Splits `[start, end]` at the given breakpoints (those strictly inside).
pub(crate) fn segments(start: f64, end: f64, breaks: &[f64], step: f64) -> Vec<Segment> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > start && b < end)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut knots = Vec::with_capacity(cuts.len() + 2);
    knots.push(start);
    knots.extend(cuts);
    knots.push(end);
    knots
        .windows(2)
        .map(|w| {
            let mut steps = ((w[1] - w[0]) / step).ceil().max(2.0) as usize;
            steps += steps % 2;
            Segment {
                start: w[0],
                end: w[1],
                steps,
            }
        })
        .collect()
}

pub(crate) fn rk4_step<F>(
    f: &F,
    t: f64,
    y: &DVector<f64>,
    h: f64,
    k1: &DVector<f64>,
) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k2 = f(t + 0.5 * h, &(y + k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

/// Composite Simpson weights over `2m` equal steps of width `h`.
pub(crate) fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n.is_multiple_of(2));
    let mut acc = values[0] + values[n];
    for (k, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

fn check_events(spec: &GameSpec, instants: &[f64]) -> Result<()> {
    if let Some(t) = instants.iter().find(|&&t| !(t > spec.t0 && t < spec.tf)) {
        return Err(Error::EventOrdering(format!(
            "instant {t} outside ({}, {})",
            spec.t0, spec.tf
        )));
    }
    if instants.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::EventOrdering(
            "instants must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Everything the right-hand side needs.
struct Closed<'a> {
    spec: &'a GameSpec,
    d: Derived,
    p: &'a RiccatiSolution,
    pursuer: &'a PursuerStrategy,
    evader: &'a EvaderStrategy,
}

struct Inputs {
    u_p: DVector<f64>,
    u_e: DVector<f64>,
    p: DMatrix<f64>,
}

impl Closed<'_> {
    fn split<'z>(&self, z: &'z DVector<f64>) -> [nalgebra::DVectorView<'z, f64>; 3] {
        let n = self.d.dims.nx;
        [z.rows(0, n), z.rows(n, n), z.rows(2 * n, n)]
    }

    fn inputs(&self, piece: f64, t: f64, z: &DVector<f64>) -> Result<Inputs> {
        let [x, x_hat, x_nom] = self.split(z);
        let dims = self.d.dims;
        let p = self.p.eval(t)?;
        let u_p = match self.pursuer {
            PursuerStrategy::CertaintyEquivalent { perturbation } => {
                -(&self.d.k_p * (&p * x_hat)) + perturbation.value(piece, dims.np)
            }
            PursuerStrategy::OpenLoop { perturbation } => {
                -(&self.d.k_p * (&p * x_nom)) + perturbation.value(piece, dims.np)
            }
            PursuerStrategy::Input(s) => s.value(piece, dims.np),
        };
        let u_e = match self.evader {
            EvaderStrategy::Feedback { deviation } => {
                &self.d.k_e * (&p * x) + deviation.value(piece, dims.ne)
            }
            EvaderStrategy::OpenLoop { deviation } => {
                &self.d.k_e * (&p * x_nom) + deviation.value(piece, dims.ne)
            }
            EvaderStrategy::Input(s) => s.value(piece, dims.ne),
            EvaderStrategy::Risky(r) => {
                let e = x - x_hat;
                &self.d.k_e * (&p * x) + r.w(piece, t, &e)?
            }
        };
        Ok(Inputs { u_p, u_e, p })
    }

    fn rhs(&self, piece: f64, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        let Inputs { u_p, u_e, p } = self.inputs(piece, t, z)?;
        let [x, x_hat, x_nom] = self.split(z);
        let a = &self.spec.a;
        let a_eq = a + (&self.d.s_e - &self.d.s_p) * &p;
        let b_up = &self.spec.b * &u_p;
        let mut dz = DVector::zeros(z.len());
        let n = self.d.dims.nx;
        dz.rows_mut(0, n)
            .copy_from(&(a * x + &b_up + &self.spec.c * &u_e));
        dz.rows_mut(n, n)
            .copy_from(&(a * x_hat + b_up + &self.d.s_e * (&p * x_hat)));
        dz.rows_mut(2 * n, n).copy_from(&(a_eq * x_nom));
        Ok(dz)
    }

    fn running_cost(&self, x: nalgebra::DVectorView<'_, f64>, inputs: &Inputs) -> f64 {
        quad(&x.into_owned(), &self.spec.q) + quad(&inputs.u_p, &self.spec.r_p)
            - quad(&inputs.u_e, &self.spec.r_e)
    }

    fn sample(
        &self,
        piece: f64,
        t: f64,
        z: &DVector<f64>,
        cost: f64,
        event: bool,
    ) -> Result<Sample> {
        let inputs = self.inputs(piece, t, z)?;
        let [x, x_hat, _] = self.split(z);
        Ok(Sample {
            t,
            x: x.into_owned(),
            x_hat: x_hat.into_owned(),
            u_p: inputs.u_p,
            u_e: inputs.u_e,
            running_cost: cost,
            event,
        })
    }
}

/// Simulates the game on `[t0, tf]` with communication at `instants`.
///
/// The running cost is accumulated step by step with Simpson's rule, using
/// the cubic Hermite midpoint of each RK4 step. A `step` that does not
/// divide a segment is shortened to do so.
pub fn simulate(
    spec: &GameSpec,
    p_sol: &RiccatiSolution,
    instants: &[f64],
    pursuer: &PursuerStrategy,
    evader: &EvaderStrategy,
    step: f64,
) -> Result<Trajectory> {
    check_events(spec, instants)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let d = Derived::new(spec)?;
    let dims = d.dims;
    match pursuer {
        PursuerStrategy::CertaintyEquivalent { perturbation }
        | PursuerStrategy::OpenLoop { perturbation }
        | PursuerStrategy::Input(perturbation) => perturbation.check_dim(dims.np, "pursuer")?,
    }
    match evader {
        EvaderStrategy::Feedback { deviation }
        | EvaderStrategy::OpenLoop { deviation }
        | EvaderStrategy::Input(deviation) => deviation.check_dim(dims.ne, "evader")?,
        EvaderStrategy::Risky(r) => {
            if r.kick_w0.len() != dims.ne {
                return Err(Error::DimensionMismatch("risky kick dimension".into()));
            }
        }
    }

    let sys = Closed {
        spec,
        d,
        p: p_sol,
        pursuer,
        evader,
    };
    let n = dims.nx;
    let mut breaks: Vec<f64> = instants.to_vec();
    breaks.extend_from_slice(pursuer.breaks());
    breaks.extend(evader.breaks());
    let plan = segments(spec.t0, spec.tf, &breaks, step);

    let mut z = DVector::zeros(3 * n);
    for block in 0..3 {
        z.rows_mut(block * n, n).copy_from(&spec.x0);
    }
    let mut cost = 0.0;
    let mut next_event = 0;
    let mut out = Vec::with_capacity(plan.len());
    for seg in &plan {
        let mut event = false;
        if next_event < instants.len() && instants[next_event] == seg.start {
            let x = z.rows(0, n).into_owned();
            z.rows_mut(n, n).copy_from(&x);
            event = true;
            next_event += 1;
        }
        let piece = seg.piece();
        let f = |t: f64, y: &DVector<f64>| sys.rhs(piece, t, y);
        let mut samples = Vec::with_capacity(seg.steps + 1);
        samples.push(sys.sample(piece, seg.start, &z, cost, event)?);
        let mut dz = f(seg.start, &z)?;
        for k in 0..seg.steps {
            let t = seg.time(k);
            let t_next = seg.time(k + 1);
            let z_next = rk4_step(&f, t, &z, t_next - t, &dz)?;
            let dz_next = f(t_next, &z_next)?;
            let hk = t_next - t;
            let z_mid = (&z + &z_next) * 0.5 + (&dz - &dz_next) * (hk / 8.0);
            let l0 = sys.running_cost(z.rows(0, n), &sys.inputs(piece, t, &z)?);
            let lm = sys.running_cost(
                z_mid.rows(0, n),
                &sys.inputs(piece, 0.5 * (t + t_next), &z_mid)?,
            );
            let l1 = sys.running_cost(z_next.rows(0, n), &sys.inputs(piece, t_next, &z_next)?);
            cost += hk / 6.0 * (l0 + 4.0 * lm + l1);
            z = z_next;
            dz = dz_next;
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericOverflow(format!(
                    "state diverged at t = {t_next}"
                )));
            }
            samples.push(sys.sample(piece, t_next, &z, cost, false)?);
        }
        out.push(samples);
    }
    let x_f = z.rows(0, n).into_owned();
    let terminal_cost = quad(&x_f, &spec.q_f);
    Ok(Trajectory::new(out, instants.to_vec(), terminal_cost, step))
}
