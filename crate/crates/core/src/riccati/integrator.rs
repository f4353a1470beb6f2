//! Dormand–Prince 5(4) with per-step symmetrization and a blow-up guard.

use nalgebra::DMatrix;

use super::{RiccatiProblem, RiccatiSolution, StepControl};
use crate::linalg::{sym_spectral_norm, symmetrize};
use crate::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Last accepted point before the guard tripped and the point that tripped it.
#[derive(Clone, Debug)]
pub(crate) struct BlowUp {
    pub t_ok: f64,
    pub t_bad: f64,
    pub norm_bad: f64,
}

pub(crate) struct Integration {
    pub solution: RiccatiSolution,
    pub blowup: Option<BlowUp>,
}

fn finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Integrates from `(t_start, x_start)` backward to `floor`.
pub(crate) fn integrate(
    problem: &RiccatiProblem<'_>,
    t_start: f64,
    x_start: DMatrix<f64>,
    floor: f64,
    control: &StepControl,
) -> Result<Integration> {
    if !(floor <= t_start) {
        return Err(Error::InvalidArgument(format!(
            "integration floor {floor} above start time {t_start}"
        )));
    }
    let mut t = t_start;
    let mut x = symmetrize(&x_start);
    let mut k1 = problem.rhs(t, &x)?;

    let mut grid = vec![t];
    let mut values = vec![x.clone()];
    let mut derivs = vec![k1.clone()];

    let span = t_start - floor;
    let mut h = control.h_max.min(span * 0.01).max(control.h_min);
    let mut blowup = None;

    while t > floor {
        h = h.min(control.h_max).min(t - floor);
        let last = t - h <= floor;
        if last {
            h = t - floor;
        }
        let hs = -h;

        let k2 = problem.rhs(t + C2 * hs, &(&x + &k1 * (A21 * hs)))?;
        let k3 = problem.rhs(t + C3 * hs, &(&x + (&k1 * A31 + &k2 * A32) * hs))?;
        let k4 = problem.rhs(
            t + C4 * hs,
            &(&x + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs),
        )?;
        let k5 = problem.rhs(
            t + C5 * hs,
            &(&x + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs),
        )?;
        let k6 = problem.rhs(
            t + hs,
            &(&x + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs),
        )?;
        let x_new = &x + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * hs;
        let t_new = if last { floor } else { t + hs };
        let k7 = if finite(&x_new) {
            problem.rhs(t_new, &x_new)?
        } else {
            DMatrix::from_element(x.nrows(), x.ncols(), f64::NAN)
        };
        let err = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;

        let scale = control.atol + control.rtol * x.norm().max(x_new.norm());
        let err_norm = err.norm() / scale;

        if !err_norm.is_finite() || err_norm > 1.0 {
            let factor = if err_norm.is_finite() {
                (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= factor;
            if h < control.h_min {
                // A collapsing step right next to a huge solution is the
                // blow-up itself, not an accuracy failure.
                let n = sym_spectral_norm(&x);
                if n >= control.blowup * 1e-3 {
                    blowup = Some(BlowUp {
                        t_ok: t,
                        t_bad: (t - control.h_min).max(floor),
                        norm_bad: f64::INFINITY,
                    });
                    break;
                }
                return Err(Error::StepUnderflow { t, h });
            }
            continue;
        }

        let x_new = symmetrize(&x_new);
        let norm_new = if x_new.norm() >= control.blowup {
            sym_spectral_norm(&x_new)
        } else {
            0.0
        };
        if norm_new >= control.blowup {
            blowup = Some(BlowUp {
                t_ok: t,
                t_bad: t_new,
                norm_bad: norm_new,
            });
            break;
        }

        t = t_new;
        x = x_new;
        k1 = symmetrize(&k7);
        grid.push(t);
        values.push(x.clone());
        derivs.push(k1.clone());

        let grow = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= grow;
    }

    let reached_floor = blowup.is_none();
    Ok(Integration {
        solution: RiccatiSolution::new(problem.kind(), grid, values, derivs, reached_floor),
        blowup,
    })
}
