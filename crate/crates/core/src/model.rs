//! Game specification and well-posedness checks.
//!
//! The state obeys `ẋ = A x + B u_p + C u_e` on `[t0, tf]` and the payoff is
//!
//! ```text
//! J = ∫ (‖x‖²_Q + ‖u_p‖²_{R_p} − ‖u_e‖²_{R_e}) dt + ‖x(tf)‖²_{Q_f}
//! ```
//!
//! minimized by the pursuer and maximized by the evader.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{asymmetry, max_eigenvalue, min_eigenvalue};
use crate::{Error, Result, Tolerances};

#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    pub r_p: DMatrix<f64>,
    pub r_e: DMatrix<f64>,
    pub t0: f64,
    pub tf: f64,
    pub x0: DVector<f64>,
}

/// State, pursuer-input and evader-input dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub nx: usize,
    pub np: usize,
    pub ne: usize,
}

impl GameSpec {
    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn dims(&self) -> Result<Dims> {
        let nx = self.a.nrows();
        let np = self.b.ncols();
        let ne = self.c.ncols();
        let check = |name: &str, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.shape() == (r, c) {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )))
            }
        };
        check("A", &self.a, nx, nx)?;
        check("B", &self.b, nx, np)?;
        check("C", &self.c, nx, ne)?;
        check("Q", &self.q, nx, nx)?;
        check("Q_f", &self.q_f, nx, nx)?;
        check("R_p", &self.r_p, np, np)?;
        check("R_e", &self.r_e, ne, ne)?;
        if self.x0.len() != nx {
            return Err(Error::DimensionMismatch(format!(
                "x0 has length {}, expected {nx}",
                self.x0.len()
            )));
        }
        Ok(Dims { nx, np, ne })
    }

    /// Symmetric weights with their field names, in schema order.
    pub(crate) fn symmetric_fields(&self) -> [(&'static str, &DMatrix<f64>); 4] {
        [
            ("Q", &self.q),
            ("Q_f", &self.q_f),
            ("R_p", &self.r_p),
            ("R_e", &self.r_e),
        ]
    }

    /// Controllability gap `C R_e⁻¹ Cᵀ − B R_p⁻¹ Bᵀ`.
    pub fn controllability_gap(&self) -> Result<DMatrix<f64>> {
        let d = Derived::new(self)?;
        Ok(&d.s_e - &d.s_p)
    }
}

/// Products of the spec that every solver needs.
#[derive(Clone, Debug)]
pub(crate) struct Derived {
    pub dims: Dims,
    /// `R_p⁻¹ Bᵀ`
    pub k_p: DMatrix<f64>,
    /// `R_e⁻¹ Cᵀ`
    pub k_e: DMatrix<f64>,
    /// `B R_p⁻¹ Bᵀ`
    pub s_p: DMatrix<f64>,
    /// `C R_e⁻¹ Cᵀ`
    pub s_e: DMatrix<f64>,
}

impl Derived {
    pub fn new(spec: &GameSpec) -> Result<Self> {
        let dims = spec.dims()?;
        let r_p_inv = spec
            .r_p
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { name: "R_p" })?;
        let r_e_inv = spec
            .r_e
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { name: "R_e" })?;
        let k_p = &r_p_inv * spec.b.transpose();
        let k_e = &r_e_inv * spec.c.transpose();
        let s_p = crate::linalg::symmetrize(&(&spec.b * &k_p));
        let s_e = crate::linalg::symmetrize(&(&spec.c * &k_e));
        Ok(Self {
            dims,
            k_p,
            k_e,
            s_p,
            s_e,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// The spec is unusable.
    Error,
    /// The spec loads but a sufficient condition fails; solvers still run
    /// and detect escape on their own.
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub severity: Severity,
    /// Measured quantity (eigenvalue, margin) that failed the check.
    pub measured: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub assumption1_max_eig: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// No error-severity violations; warnings are allowed.
    pub fn usable(&self) -> bool {
        self.violations
            .iter()
            .all(|v| v.severity == Severity::Warning)
    }
}

pub const ASSUMPTION1_CHECK: &str = "assumption1";

/// Checks shapes, symmetry, definiteness, horizon ordering and the
/// controllability-gap condition `C R_e⁻¹ Cᵀ − B R_p⁻¹ Bᵀ ≺ 0`.
///
/// Shape and symmetry failures are hard errors. Everything else is reported
/// as a [`Violation`]; the gap condition only as a warning because the value
/// Riccati flow may still be finite on the horizon without it.
pub fn validate_spec(spec: &GameSpec, tol: &Tolerances) -> Result<ValidationReport> {
    spec.dims()?;
    for (name, m) in spec.symmetric_fields() {
        let asym = asymmetry(m);
        if asym > tol.tol_sym {
            return Err(Error::NonSymmetric {
                name,
                asymmetry: asym,
            });
        }
    }

    let mut violations = Vec::new();
    let mut push = |check: &str, severity, measured, message: String| {
        violations.push(Violation {
            check: check.to_string(),
            severity,
            measured,
            message,
        })
    };

    for (name, m) in [("Q", &spec.q), ("Q_f", &spec.q_f)] {
        let ev = min_eigenvalue(m);
        if ev < -tol.tol_psd {
            push(
                &format!("{name}_psd"),
                Severity::Error,
                ev,
                format!("{name} has negative eigenvalue {ev:.6e}"),
            );
        }
    }
    for (name, m) in [("R_p", &spec.r_p), ("R_e", &spec.r_e)] {
        let ev = min_eigenvalue(m);
        if ev <= 0.0 {
            push(
                &format!("{name}_pd"),
                Severity::Error,
                ev,
                format!("{name} is not positive definite (min eigenvalue {ev:.6e})"),
            );
        }
    }
    if !(spec.t0 < spec.tf) {
        push(
            "horizon",
            Severity::Error,
            spec.tf - spec.t0,
            format!("t0 = {} must be smaller than tf = {}", spec.t0, spec.tf),
        );
    }

    // A non-PD weight makes the gap meaningless; report it as NaN.
    let gap_max = match Derived::new(spec) {
        Ok(d) => max_eigenvalue(&(&d.s_e - &d.s_p)),
        Err(_) => f64::NAN,
    };
    if !(gap_max < 0.0) {
        push(
            ASSUMPTION1_CHECK,
            Severity::Warning,
            gap_max,
            format!(
                "C R_e^-1 C^T - B R_p^-1 B^T is not negative definite (max eigenvalue \
                 {gap_max:.6e}); not satisfied (solution may still exist)"
            ),
        );
    }

    Ok(ValidationReport {
        passed: violations.is_empty(),
        assumption1_max_eig: gap_max,
        violations,
    })
}

/// Planar single-integrator pursuit: both players control their own
/// velocity, the payoff penalizes the terminal separation.
///
/// State `[x_p; x_e] ∈ ℝ⁴`, `B = [I₂; 0₂]`, `C = [0₂; I₂]`,
/// `Q_f = [[I, −I], [−I, I]]`, `R_p = I/4`, `R_e = I/2`, horizon `[0, 1]`,
/// pursuer at the origin and evader at `(1, 0)`.
pub fn example_one_spec() -> GameSpec {
    let i2 = DMatrix::<f64>::identity(2, 2);
    let z2 = DMatrix::<f64>::zeros(2, 2);
    let stack = |top: &DMatrix<f64>, bottom: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(4, 2);
        m.view_mut((0, 0), (2, 2)).copy_from(top);
        m.view_mut((2, 0), (2, 2)).copy_from(bottom);
        m
    };
    let mut q_f = DMatrix::zeros(4, 4);
    q_f.view_mut((0, 0), (2, 2)).copy_from(&i2);
    q_f.view_mut((2, 2), (2, 2)).copy_from(&i2);
    q_f.view_mut((0, 2), (2, 2)).copy_from(&(-&i2));
    q_f.view_mut((2, 0), (2, 2)).copy_from(&(-&i2));
    GameSpec {
        a: DMatrix::zeros(4, 4),
        b: stack(&i2, &z2),
        c: stack(&z2, &i2),
        q: DMatrix::zeros(4, 4),
        q_f,
        r_p: &i2 * 0.25,
        r_e: &i2 * 0.5,
        t0: 0.0,
        tf: 1.0,
        x0: DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn example_one_terminal_weight_spectrum() {
        let ev = sym_eigenvalues(&example_one_spec().q_f);
        let expected = [0.0, 0.0, 2.0, 2.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
        let spec = example_one_spec();
        assert_eq!(spec.tf - spec.t0, 1.0);
    }

    #[test]
    fn example_one_flags_only_assumption1() {
        let spec = example_one_spec();
        let gap = spec.controllability_gap().unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![-4.0, -4.0, 2.0, 2.0]));
        assert!((gap - expected).norm() < 1e-12);

        let report = validate_spec(&spec, &tol()).unwrap();
        assert!(!report.passed);
        assert!(report.usable());
        assert!((report.assumption1_max_eig - 2.0).abs() < 1e-12);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].check, ASSUMPTION1_CHECK);
        assert_eq!(report.violations[0].severity, Severity::Warning);
    }

    #[test]
    fn evader_only_control_fails_assumption1() {
        let mut spec = example_one_spec();
        spec.b = DMatrix::zeros(4, 2);
        spec.r_e = DMatrix::identity(2, 2);
        let report = validate_spec(&spec, &tol()).unwrap();
        assert!(report.assumption1_max_eig >= 0.0);
        assert!(!report.passed);
    }

    #[test]
    fn pursuer_only_control_passes() {
        let mut spec = example_one_spec();
        spec.b = DMatrix::identity(4, 4);
        spec.r_p = DMatrix::identity(4, 4);
        spec.c = DMatrix::zeros(4, 2);
        let report = validate_spec(&spec, &tol()).unwrap();
        assert!(report.passed, "{report:?}");
        assert!((report.assumption1_max_eig + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_and_symmetry_errors() {
        let mut spec = example_one_spec();
        spec.b = DMatrix::zeros(3, 2);
        assert!(matches!(
            validate_spec(&spec, &tol()),
            Err(Error::DimensionMismatch(_))
        ));

        let mut spec = example_one_spec();
        spec.q_f[(0, 1)] = 0.5;
        assert!(matches!(
            validate_spec(&spec, &tol()),
            Err(Error::NonSymmetric { name: "Q_f", .. })
        ));
    }

    #[test]
    fn definiteness_and_horizon_violations() {
        let mut spec = example_one_spec();
        spec.q[(0, 0)] = -1.0;
        spec.r_e[(1, 1)] = 0.0;
        spec.tf = -1.0;
        let report = validate_spec(&spec, &tol()).unwrap();
        let checks: Vec<_> = report.violations.iter().map(|v| v.check.as_str()).collect();
        assert!(checks.contains(&"Q_psd"));
        assert!(checks.contains(&"R_e_pd"));
        assert!(checks.contains(&"horizon"));
        assert!(!report.usable());
    }

    #[test]
    fn validation_is_pure() {
        let spec = example_one_spec();
        assert_eq!(
            validate_spec(&spec, &tol()).unwrap(),
            validate_spec(&spec, &tol()).unwrap()
        );
    }
}
