//! Backward terminal-value integration of the matrix Riccati flows.
//!
//! All three flows share the form
//!
//! ```text
//! Ẋ = −(F(t)ᵀ X + X F(t)) − D(t) + X G X
//! ```
//!
//! | kind | F            | D              | G                | X(T)      |
//! |------|--------------|----------------|------------------|-----------|
//! | P    | A            | Q              | BR_p⁻¹Bᵀ − CR_e⁻¹Cᵀ | Q_f   |
//! | M    | A + CR_e⁻¹CᵀP | −P BR_p⁻¹Bᵀ P | CR_e⁻¹Cᵀ         | 0         |
//! | Π    | A            | −Q             | CR_e⁻¹Cᵀ         | −P(T)     |

mod integrator;
mod solution;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::escape::{EscapeMethod, EscapeReport};
use crate::linalg::symmetrize;
use crate::model::{Derived, GameSpec};
use crate::{Error, Result, Tolerances};

pub(crate) use integrator::integrate;
pub use solution::RiccatiSolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RiccatiKind {
    /// Equilibrium value matrix.
    P,
    /// Evader's deviation-game matrix on one inter-communication interval.
    M,
    /// `M − P`, a constant-coefficient flow.
    Pi,
}

#[derive(Clone, Debug)]
enum Drift<'a> {
    Constant(DMatrix<f64>),
    /// `A + S_e P(t)` with `D(t) = −P S_p P`.
    Coupled {
        a: DMatrix<f64>,
        s_p: DMatrix<f64>,
        s_e: DMatrix<f64>,
        p: &'a RiccatiSolution,
    },
}

/// A terminal-value Riccati problem. `M` problems borrow the `P` solution
/// their coefficients depend on.
#[derive(Clone, Debug)]
pub struct RiccatiProblem<'a> {
    kind: RiccatiKind,
    drift: Drift<'a>,
    forcing: DMatrix<f64>,
    quadratic: DMatrix<f64>,
    terminal_time: f64,
    terminal_value: DMatrix<f64>,
}

impl<'a> RiccatiProblem<'a> {
    /// `Ṗ + AᵀP + PA + Q + P(CR_e⁻¹Cᵀ − BR_p⁻¹Bᵀ)P = 0`, `P(tf) = Q_f`.
    pub fn value(spec: &GameSpec) -> Result<RiccatiProblem<'static>> {
        let d = Derived::new(spec)?;
        Ok(RiccatiProblem {
            kind: RiccatiKind::P,
            drift: Drift::Constant(spec.a.clone()),
            forcing: spec.q.clone(),
            quadratic: &d.s_p - &d.s_e,
            terminal_time: spec.tf,
            terminal_value: symmetrize(&spec.q_f),
        })
    }

    /// `Ṁ + A₁ᵀM + MA₁ − PBR_p⁻¹BᵀP − MCR_e⁻¹CᵀM = 0`, `M(t_next) = 0`,
    /// with `A₁ = A + CR_e⁻¹CᵀP`.
    pub fn deviation(
        spec: &GameSpec,
        p: &'a RiccatiSolution,
        terminal_time: f64,
    ) -> Result<RiccatiProblem<'a>> {
        let d = Derived::new(spec)?;
        let n = d.dims.nx;
        Ok(RiccatiProblem {
            kind: RiccatiKind::M,
            drift: Drift::Coupled {
                a: spec.a.clone(),
                s_p: d.s_p,
                s_e: d.s_e.clone(),
                p,
            },
            forcing: DMatrix::zeros(n, n),
            quadratic: d.s_e,
            terminal_time,
            terminal_value: DMatrix::zeros(n, n),
        })
    }

    /// `Π̇ + AᵀΠ + ΠA − Q − ΠCR_e⁻¹CᵀΠ = 0` with an arbitrary terminal value
    /// (the schedule uses `−P(t_next)`).
    pub fn pi(
        spec: &GameSpec,
        terminal_time: f64,
        terminal_value: DMatrix<f64>,
    ) -> Result<RiccatiProblem<'static>> {
        let d = Derived::new(spec)?;
        if terminal_value.shape() != (d.dims.nx, d.dims.nx) {
            return Err(Error::DimensionMismatch(format!(
                "terminal value is {:?}, expected {}x{}",
                terminal_value.shape(),
                d.dims.nx,
                d.dims.nx
            )));
        }
        Ok(RiccatiProblem {
            kind: RiccatiKind::Pi,
            drift: Drift::Constant(spec.a.clone()),
            forcing: -&spec.q,
            quadratic: d.s_e,
            terminal_time,
            terminal_value: symmetrize(&terminal_value),
        })
    }

    /// `Π` with terminal value `−P(t_next)`.
    pub fn pi_from_value(
        spec: &GameSpec,
        p: &RiccatiSolution,
        terminal_time: f64,
    ) -> Result<RiccatiProblem<'static>> {
        let boundary = -p.eval(terminal_time)?;
        Self::pi(spec, terminal_time, boundary)
    }

    pub fn kind(&self) -> RiccatiKind {
        self.kind
    }

    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    pub fn terminal_value(&self) -> &DMatrix<f64> {
        &self.terminal_value
    }

    /// Right-hand side `dX/dt`.
    pub fn rhs(&self, t: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let xgx = x * &self.quadratic * x;
        let out = match &self.drift {
            Drift::Constant(f) => {
                let fx = f.transpose() * x;
                -(&fx + fx.transpose()) - &self.forcing + xgx
            }
            Drift::Coupled { a, s_p, s_e, p } => {
                let pt = p.eval(t)?;
                let f = a + s_e * &pt;
                let fx = f.transpose() * x;
                -(&fx + fx.transpose()) + &pt * s_p * &pt + xgx
            }
        };
        Ok(out)
    }
}

/// Step-size control for the adaptive integrator.
#[derive(Clone, Debug, PartialEq)]
pub struct StepControl {
    pub h_max: f64,
    pub h_min: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Spectral-norm threshold Θ of the blow-up guard.
    pub blowup: f64,
}

impl StepControl {
    pub fn new(horizon: f64, tol: &Tolerances) -> Self {
        Self {
            h_max: tol.h_max_fraction * horizon,
            h_min: tol.h_min_fraction * horizon,
            rtol: tol.rtol,
            atol: tol.atol,
            blowup: tol.blowup,
        }
    }

    pub fn for_spec(spec: &GameSpec) -> Self {
        Self::new(spec.horizon(), &Tolerances::default())
    }
}

/// Integrates `problem` backward from its terminal time down to `floor`.
///
/// Blow-up of the flow before `floor` is an [`Error::FiniteEscape`] whose
/// bracket is the single step that crossed the threshold. Use
/// [`crate::detect_escape_norm`] for a refined bracket.
pub fn solve_riccati(
    problem: &RiccatiProblem<'_>,
    floor: f64,
    control: &StepControl,
) -> Result<RiccatiSolution> {
    let run = integrate(
        problem,
        problem.terminal_time,
        problem.terminal_value.clone(),
        floor,
        control,
    )?;
    match run.blowup {
        None => Ok(run.solution),
        Some(b) => Err(Error::FiniteEscape(Box::new(EscapeReport::found(
            EscapeMethod::NormBlowup,
            (b.t_bad, b.t_ok),
            b.norm_bad,
            floor,
        )))),
    }
}

/// Solves the value flow `P` on `[t0, tf]`. A blow-up is refined to a
/// `time_tol`-wide bracket before being reported.
pub fn solve_value_riccati(spec: &GameSpec, control: &StepControl) -> Result<RiccatiSolution> {
    let problem = RiccatiProblem::value(spec)?;
    match solve_riccati(&problem, spec.t0, control) {
        Err(Error::FiniteEscape(_)) => {
            let time_tol = Tolerances::default().time_tol(spec.horizon());
            let report = crate::escape::detect_escape_norm(&problem, spec.t0, time_tol, control)?;
            Err(Error::FiniteEscape(Box::new(report)))
        }
        other => other,
    }
}

/// Maximum over `samples` grid-interval midpoints of
/// `‖Ẋ − f(t, X)‖_F / (1 + ‖X‖_F)`, using the interpolant's derivative.
pub fn riccati_residual(
    sol: &RiccatiSolution,
    problem: &RiccatiProblem<'_>,
    samples: usize,
) -> f64 {
    let intervals = sol.grid().len().saturating_sub(1);
    if intervals == 0 || samples == 0 {
        return 0.0;
    }
    let picks: Vec<usize> = if samples >= intervals {
        (0..intervals).collect()
    } else {
        (0..samples).map(|k| (k * intervals) / samples).collect()
    };
    picks
        .into_iter()
        .map(|k| {
            let t = 0.5 * (sol.grid()[k] + sol.grid()[k + 1]);
            let (x, dx) = sol.eval_with_derivative(t).expect("midpoint inside grid");
            match problem.rhs(t, &x) {
                Ok(f) => (dx - f).norm() / (1.0 + x.norm()),
                Err(_) => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max)
}
