use serde::{Deserialize, Serialize};

/// Numerical tolerances and defaults. Fractions are relative to the game
/// horizon `tf - t0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative Frobenius asymmetry accepted for symmetric inputs.
    pub tol_sym: f64,
    /// Absolute eigenvalue floor for positive semidefiniteness.
    pub tol_psd: f64,
    /// Spectral norm at which a Riccati flow is declared to blow up.
    pub blowup: f64,
    pub rtol: f64,
    pub atol: f64,
    pub h_max_fraction: f64,
    pub h_min_fraction: f64,
    pub time_tol_fraction: f64,
    pub margin_fraction: f64,
    /// Default simulation step is `horizon / step_divisions`.
    pub step_divisions: usize,
    /// Scan resolution of the determinant-based escape detector.
    pub radon_scan_points: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_sym: 1e-10,
            tol_psd: 1e-10,
            blowup: 1e9,
            rtol: 1e-10,
            atol: 1e-12,
            h_max_fraction: 1.0 / 200.0,
            h_min_fraction: 1e-12,
            time_tol_fraction: 1e-9,
            margin_fraction: 1e-6,
            step_divisions: 2000,
            radon_scan_points: 2000,
        }
    }
}

impl Tolerances {
    pub fn time_tol(&self, horizon: f64) -> f64 {
        self.time_tol_fraction * horizon
    }

    pub fn margin(&self, horizon: f64) -> f64 {
        self.margin_fraction * horizon
    }

    pub fn step(&self, horizon: f64) -> f64 {
        horizon / self.step_divisions as f64
    }
}
