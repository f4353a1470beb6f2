//! Finite escape times of Riccati flows, integrated backward from a
//! terminal condition.
//!
//! Two independent detectors are provided. [`detect_escape_norm`] integrates
//! the nonlinear flow and brackets the time at which its spectral norm
//! crosses the blow-up threshold. [`detect_escape_radon`] applies only to the
//! constant-coefficient `Π` flow: it writes `Π = Y X⁻¹` with `[X; Y]` solving
//! the linear Hamiltonian system and locates the first singularity of `X`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::expm::expm;
use crate::linalg::{lu_determinant, min_singular_value, spectral_norm, sym_spectral_norm};
use crate::model::{Derived, GameSpec};
use crate::riccati::{integrate, RiccatiProblem, StepControl};
use crate::{Error, Execution, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeMethod {
    NormBlowup,
    #[default]
    RadonDeterminant,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeReport {
    pub found: bool,
    pub t_escape: Option<f64>,
    /// `(t_lo, t_hi)`; the flow is finite on `(t_hi, terminal]`.
    pub bracket: Option<(f64, f64)>,
    pub method: EscapeMethod,
    /// Norm of the flow at `t_hi` when found, largest norm seen otherwise.
    pub norm_at_detection: f64,
    pub floor: f64,
}

impl EscapeReport {
    pub(crate) fn found(method: EscapeMethod, bracket: (f64, f64), norm: f64, floor: f64) -> Self {
        Self {
            found: true,
            t_escape: Some(0.5 * (bracket.0 + bracket.1)),
            bracket: Some(bracket),
            method,
            norm_at_detection: norm,
            floor,
        }
    }

    pub(crate) fn clear(method: EscapeMethod, norm: f64, floor: f64) -> Self {
        Self {
            found: false,
            t_escape: None,
            bracket: None,
            method,
            norm_at_detection: norm,
            floor,
        }
    }

    /// Escape time if one was found strictly above `t` (by more than `slack`).
    pub fn escape_above(&self, t: f64, slack: f64) -> Option<f64> {
        self.t_escape.filter(|&te| te > t + slack)
    }
}

/// Norm blow-up detector.
///
/// Integrates backward to `floor`. When the guard trips, the crossing is
/// bracketed by re-integrating from the last finite state towards the
/// bracket midpoint until the bracket is at most `time_tol` wide.
pub fn detect_escape_norm(
    problem: &RiccatiProblem<'_>,
    floor: f64,
    time_tol: f64,
    control: &StepControl,
) -> Result<EscapeReport> {
    let terminal = problem.terminal_time();
    if !(floor < terminal) {
        return Err(Error::InvalidArgument(format!(
            "escape floor {floor} must lie below the terminal time {terminal}"
        )));
    }
    let run = integrate(
        problem,
        terminal,
        problem.terminal_value().clone(),
        floor,
        control,
    )?;
    let Some(blowup) = run.blowup else {
        let norm = run
            .solution
            .values()
            .iter()
            .map(sym_spectral_norm)
            .fold(0.0, f64::max);
        return Ok(EscapeReport::clear(EscapeMethod::NormBlowup, norm, floor));
    };

    let mut hi = blowup.t_ok;
    let mut x_hi = run.solution.values().last().expect("nonempty").clone();
    let mut lo = blowup.t_bad.max(floor);
    while hi - lo > time_tol {
        let mid = 0.5 * (lo + hi);
        let probe = integrate(problem, hi, x_hi.clone(), mid, control)?;
        match probe.blowup {
            None => {
                hi = mid;
                x_hi = probe.solution.values().last().expect("nonempty").clone();
            }
            Some(b) => {
                lo = b.t_bad.max(mid);
                hi = b.t_ok;
                x_hi = probe.solution.values().last().expect("nonempty").clone();
            }
        }
    }
    Ok(EscapeReport::found(
        EscapeMethod::NormBlowup,
        (lo, hi),
        sym_spectral_norm(&x_hi),
        floor,
    ))
}

/// Scan settings for [`detect_escape_radon`].
#[derive(Clone, Debug)]
pub struct RadonScan {
    /// Scan points across `[floor, terminal]`; the step is further capped
    /// by `0.05 / ‖H‖₂`.
    pub points: usize,
    pub execution: Execution,
}

impl Default for RadonScan {
    fn default() -> Self {
        Self {
            points: crate::Tolerances::default().radon_scan_points,
            execution: Execution::default(),
        }
    }
}

const MAX_SCAN_POINTS: usize = 200_000;
/// Points evaluated before checking for a root.
const SCAN_BLOCK: usize = 512;
/// Points stepped from one direct exponential.
const SCAN_CHUNK: usize = 32;

struct Frame {
    h: DMatrix<f64>,
    z_terminal: DMatrix<f64>,
    terminal: f64,
    n: usize,
}

#[derive(Clone, Copy, Debug)]
struct Indicator {
    /// Sign-carrying determinant of X / ‖Z‖_F.
    det: f64,
    /// σ_min(X) / ‖Z‖_F.
    ratio: f64,
}

impl Frame {
    fn xy(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let z = expm(&(&self.h * (t - self.terminal))) * &self.z_terminal;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "Hamiltonian flow overflowed at t = {t}"
            )));
        }
        let x = z.rows(0, self.n).into_owned();
        let y = z.rows(self.n, self.n).into_owned();
        Ok((x, y))
    }

    fn indicator(&self, t: f64) -> Result<Indicator> {
        let z = expm(&(&self.h * (t - self.terminal))) * &self.z_terminal;
        self.indicator_of(&z, t)
    }

    fn indicator_of(&self, z: &DMatrix<f64>, t: f64) -> Result<Indicator> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "Hamiltonian flow overflowed at t = {t}"
            )));
        }
        let x = z.rows(0, self.n).into_owned();
        let zn = z.norm().max(f64::MIN_POSITIVE);
        Ok(Indicator {
            det: lu_determinant(&(&x / zn)),
            ratio: min_singular_value(&x) / zn,
        })
    }

    /// Indicators at `times[k]`, `k ∈ range`, on the uniform scan grid with
    /// propagator `step = exp(−H Δ)`. The first point of the range is
    /// computed directly, the rest by repeated stepping.
    fn scan_range(
        &self,
        times: &[f64],
        range: std::ops::Range<usize>,
        step: &DMatrix<f64>,
    ) -> Result<Vec<(f64, Indicator)>> {
        let mut out = Vec::with_capacity(range.len());
        let mut z = expm(&(&self.h * (times[range.start] - self.terminal))) * &self.z_terminal;
        for k in range {
            if !out.is_empty() {
                z = step * &z;
            }
            out.push((times[k], self.indicator_of(&z, times[k])?));
        }
        Ok(out)
    }

    fn pi_norm(&self, t: f64) -> f64 {
        match self.xy(t) {
            Ok((x, y)) => {
                // Π = Y X⁻¹  ⇔  Πᵀ = X⁻ᵀ Yᵀ
                match x.transpose().lu().solve(&y.transpose()) {
                    Some(pit) => spectral_norm(&pit),
                    None => f64::INFINITY,
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Determinant detector for the `Π` flow
/// `Π̇ + AᵀΠ + ΠA − Q − ΠCR_e⁻¹CᵀΠ = 0`, `Π(terminal) = terminal_value`.
///
/// `[X; Y](t) = exp(H (t − terminal)) [I; terminal_value]` with
/// `H = [[A, −CR_e⁻¹Cᵀ], [Q, −Aᵀ]]`. The scan runs from the terminal time
/// down to `floor`; odd-multiplicity roots of `det X` show up as sign
/// changes and are bisected, even-multiplicity roots show up as V-shaped
/// minima of `σ_min(X)/‖Z‖_F` and are located by golden-section search.
pub fn detect_escape_radon(
    spec: &GameSpec,
    terminal_time: f64,
    terminal_value: &DMatrix<f64>,
    floor: f64,
    time_tol: f64,
    scan: &RadonScan,
) -> Result<EscapeReport> {
    if !(floor < terminal_time) {
        return Err(Error::InvalidArgument(format!(
            "escape floor {floor} must lie below the terminal time {terminal_time}"
        )));
    }
    let d = Derived::new(spec)?;
    let n = d.dims.nx;
    if terminal_value.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "terminal value is {:?}, expected {n}x{n}",
            terminal_value.shape()
        )));
    }
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&spec.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&d.s_e));
    h.view_mut((n, 0), (n, n)).copy_from(&spec.q);
    h.view_mut((n, n), (n, n)).copy_from(&(-spec.a.transpose()));
    let mut z_terminal = DMatrix::zeros(2 * n, n);
    z_terminal
        .view_mut((0, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    z_terminal
        .view_mut((n, 0), (n, n))
        .copy_from(terminal_value);

    let h_norm = spectral_norm(&h);
    let frame = Frame {
        h,
        z_terminal,
        terminal: terminal_time,
        n,
    };

    let span = terminal_time - floor;
    let mut step = span / scan.points.max(1) as f64;
    if h_norm > 0.0 {
        step = step.min(0.05 / h_norm);
    }
    let count = ((span / step).ceil() as usize).clamp(1, MAX_SCAN_POINTS);
    let times: Vec<f64> = (0..=count)
        .map(|k| {
            if k == count {
                floor
            } else {
                terminal_time - span * k as f64 / count as f64
            }
        })
        .collect();
    let propagator = expm(&(&frame.h * (-span / count as f64)));

    let found = |bracket: (f64, f64)| {
        let norm = frame.pi_norm(bracket.1);
        Ok(EscapeReport::found(
            EscapeMethod::RadonDeterminant,
            bracket,
            norm,
            floor,
        ))
    };

    let mut prev: Vec<(f64, Indicator)> = Vec::with_capacity(3);
    let mut start = 0;
    while start < times.len() {
        let end = (start + SCAN_BLOCK).min(times.len());
        let ranges: Vec<std::ops::Range<usize>> = (start..end)
            .step_by(SCAN_CHUNK)
            .map(|a| a..(a + SCAN_CHUNK).min(end))
            .collect();
        let chunks = scan.execution.try_map(&ranges, |r| {
            frame.scan_range(&times, r.clone(), &propagator)
        })?;
        for (t, ind) in chunks.into_iter().flatten() {
            if let Some(&(t_prev, ind_prev)) = prev.last() {
                if ind.det == 0.0 || ind.det.signum() != ind_prev.det.signum() {
                    let bracket = bisect_sign_change(&frame, t, t_prev, ind_prev.det, time_tol)?;
                    return found(bracket);
                }
                if prev.len() >= 2 {
                    let (t_pp, ind_pp) = prev[prev.len() - 2];
                    if ind_prev.ratio < ind_pp.ratio && ind_prev.ratio <= ind.ratio {
                        if let Some(bracket) =
                            singular_minimum(&frame, t, t_pp, floor, terminal_time, time_tol)?
                        {
                            return found(bracket);
                        }
                    }
                }
            }
            if prev.len() == 3 {
                prev.remove(0);
            }
            prev.push((t, ind));
        }
        start = end;
    }

    // A minimum sitting on the floor itself.
    if prev.len() >= 2 {
        let (t_last, last) = prev[prev.len() - 1];
        let (t_before, before) = prev[prev.len() - 2];
        if last.ratio < before.ratio {
            if let Some(bracket) =
                singular_minimum(&frame, t_last, t_before, floor, terminal_time, time_tol)?
            {
                return found(bracket);
            }
        }
    }

    let norm = frame.pi_norm(floor);
    Ok(EscapeReport::clear(
        EscapeMethod::RadonDeterminant,
        norm,
        floor,
    ))
}

/// `lo` has the opposite sign (or zero), `hi` carries `det_hi`.
fn bisect_sign_change(
    frame: &Frame,
    mut lo: f64,
    mut hi: f64,
    det_hi: f64,
    time_tol: f64,
) -> Result<(f64, f64)> {
    while hi - lo > time_tol {
        let mid = 0.5 * (lo + hi);
        let d = frame.indicator(mid)?.det;
        if d != 0.0 && d.signum() == det_hi.signum() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Golden-section search for the minimum of `σ_min(X)/‖Z‖` on `[a, b]`.
/// The minimum is accepted as a root when it is small against the rise of
/// the indicator ten tolerances away, which a V-shaped zero satisfies and a
/// smooth positive minimum does not.
fn singular_minimum(
    frame: &Frame,
    mut a: f64,
    mut b: f64,
    floor: f64,
    terminal: f64,
    time_tol: f64,
) -> Result<Option<(f64, f64)>> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let ratio = |t: f64| frame.indicator(t).map(|i| i.ratio);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = ratio(c)?;
    let mut fd = ratio(d)?;
    while b - a > time_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = ratio(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = ratio(d)?;
        }
    }
    let tm = 0.5 * (a + b);
    let rm = ratio(tm)?;
    let delta = 10.0 * time_tol;
    let side = ratio((tm - delta).max(floor))?.min(ratio((tm + delta).min(terminal))?);
    let singular = rm <= 1e-13 || rm <= 0.5 * (side - rm);
    if !singular {
        return Ok(None);
    }
    let lo = (tm - 0.5 * time_tol).max(floor);
    let hi = (tm + 0.5 * time_tol).min(terminal);
    Ok(Some((lo, hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_one_spec;
    use crate::riccati::solve_value_riccati;
    use nalgebra::DVector;

    fn example_pi_boundary(t_next: f64) -> DMatrix<f64> {
        -example_one_spec().q_f / (3.0 - 2.0 * t_next)
    }

    fn norm_escape(t_next: f64, floor: f64) -> EscapeReport {
        let spec = example_one_spec();
        let problem = RiccatiProblem::pi(&spec, t_next, example_pi_boundary(t_next)).unwrap();
        detect_escape_norm(&problem, floor, 1e-9, &StepControl::for_spec(&spec)).unwrap()
    }

    fn radon_escape(t_next: f64, floor: f64) -> EscapeReport {
        let spec = example_one_spec();
        detect_escape_radon(
            &spec,
            t_next,
            &example_pi_boundary(t_next),
            floor,
            1e-9,
            &RadonScan::default(),
        )
        .unwrap()
    }

    #[test]
    fn example_one_norm_escape_at_half() {
        let r = norm_escape(1.0, 0.0);
        assert!(r.found);
        assert!((r.t_escape.unwrap() - 0.5).abs() < 1e-6, "{r:?}");
        let (lo, hi) = r.bracket.unwrap();
        assert!(hi - lo <= 1e-9);
        assert!(r.norm_at_detection >= 1e9 / 10.0, "{r:?}");
    }

    #[test]
    fn example_one_radon_escape_at_half() {
        let r = radon_escape(1.0, 0.0);
        assert!(r.found, "{r:?}");
        assert!((r.t_escape.unwrap() - 0.5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn no_escape_when_terminal_at_half() {
        // closed-form escape at −1/2 lies below the floor
        assert!(!norm_escape(0.5, 0.0).found);
        assert!(!radon_escape(0.5, 0.0).found);
    }

    #[test]
    fn escape_follows_closed_form() {
        for t_next in [0.6, 0.75, 0.9, 1.0] {
            let expected = (4.0 * t_next - 3.0) / 2.0;
            let floor = -1.0;
            let n = norm_escape(t_next, floor).t_escape.unwrap();
            let r = radon_escape(t_next, floor).t_escape.unwrap();
            assert!((n - expected).abs() < 1e-6, "{t_next}: {n}");
            assert!((r - expected).abs() < 1e-6, "{t_next}: {r}");
        }
    }

    #[test]
    fn zero_flow_never_escapes() {
        let spec = example_one_spec();
        let zero = DMatrix::zeros(4, 4);
        let problem = RiccatiProblem::pi(&spec, 1.0, zero.clone()).unwrap();
        let control = StepControl::for_spec(&spec);
        for floor in [0.9, 0.0, -5.0] {
            assert!(
                !detect_escape_norm(&problem, floor, 1e-9, &control)
                    .unwrap()
                    .found
            );
            let r =
                detect_escape_radon(&spec, 1.0, &zero, floor, 1e-9, &RadonScan::default()).unwrap();
            assert!(!r.found);
        }
    }

    #[test]
    fn odd_root_found_by_sign_change() {
        // Scalar: Π̇ = Π², Π(1) = −1 ⇒ Π = −1/(t − 0), escape at 0.
        let spec = GameSpec {
            a: DMatrix::zeros(1, 1),
            b: DMatrix::identity(1, 1),
            c: DMatrix::identity(1, 1),
            q: DMatrix::zeros(1, 1),
            q_f: DMatrix::identity(1, 1),
            r_p: DMatrix::identity(1, 1) * 0.5,
            r_e: DMatrix::identity(1, 1),
            t0: -1.0,
            tf: 1.0,
            x0: DVector::from_element(1, 1.0),
        };
        let boundary = -DMatrix::identity(1, 1);
        let r =
            detect_escape_radon(&spec, 1.0, &boundary, -1.0, 1e-10, &RadonScan::default()).unwrap();
        assert!((r.t_escape.unwrap() - 0.0).abs() < 1e-9, "{r:?}");
        let problem = RiccatiProblem::pi(&spec, 1.0, boundary).unwrap();
        let n = detect_escape_norm(&problem, -1.0, 1e-10, &StepControl::for_spec(&spec)).unwrap();
        assert!((n.t_escape.unwrap() - 0.0).abs() < 1e-8, "{n:?}");
    }

    #[test]
    fn bracket_reintegration_stays_below_threshold() {
        let spec = example_one_spec();
        let problem = RiccatiProblem::pi(&spec, 1.0, example_pi_boundary(1.0)).unwrap();
        let control = StepControl::for_spec(&spec);
        let r = detect_escape_norm(&problem, 0.0, 1e-9, &control).unwrap();
        let (_, hi) = r.bracket.unwrap();
        let rerun = integrate(
            &problem,
            1.0,
            problem.terminal_value().clone(),
            hi,
            &control,
        )
        .unwrap();
        assert!(rerun.blowup.is_none());
    }

    #[test]
    fn slack_below_terminal_is_escape_free() {
        let spec = example_one_spec();
        let p = solve_value_riccati(&spec, &StepControl::for_spec(&spec)).unwrap();
        for t_next in [0.2, 0.5, 1.0] {
            let boundary = -p.eval(t_next).unwrap();
            let r = detect_escape_radon(
                &spec,
                t_next,
                &boundary,
                t_next - 1e-4,
                1e-12,
                &RadonScan::default(),
            )
            .unwrap();
            assert!(!r.found);
        }
    }

    #[test]
    fn invalid_floor_is_rejected() {
        let spec = example_one_spec();
        let b = example_pi_boundary(1.0);
        assert!(detect_escape_radon(&spec, 1.0, &b, 1.0, 1e-9, &RadonScan::default()).is_err());
    }

    #[test]
    fn sequential_scan_matches_parallel() {
        let spec = example_one_spec();
        let b = example_pi_boundary(0.9);
        let seq = RadonScan {
            execution: Execution::Sequential,
            ..RadonScan::default()
        };
        let a = detect_escape_radon(&spec, 0.9, &b, -1.0, 1e-9, &seq).unwrap();
        let p = detect_escape_radon(&spec, 0.9, &b, -1.0, 1e-9, &RadonScan::default()).unwrap();
        assert_eq!(a, p);
    }
}
