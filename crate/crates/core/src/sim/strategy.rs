use nalgebra::{DMatrix, DVector};

use crate::riccati::RiccatiSolution;
use crate::{Error, Result};

/// Deterministic input series.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSignal {
    Zero,
    Constant(DVector<f64>),
    /// `values[k]` applies on `[breaks[k-1], breaks[k])`; there is one more
    /// value than breaks.
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl InputSignal {
    pub fn piecewise(breaks: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} breaks need {} values, got {}",
                breaks.len(),
                breaks.len() + 1,
                values.len()
            )));
        }
        if !breaks.windows(2).all(|w| w[0] < w[1]) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument(
                "breaks must be finite and strictly increasing".into(),
            ));
        }
        Ok(InputSignal::PiecewiseConstant { breaks, values })
    }

    /// Value on the piece containing `t`.
    pub fn value(&self, t: f64, dim: usize) -> DVector<f64> {
        match self {
            InputSignal::Zero => DVector::zeros(dim),
            InputSignal::Constant(v) => v.clone(),
            InputSignal::PiecewiseConstant { breaks, values } => {
                values[breaks.partition_point(|&b| b <= t)].clone()
            }
        }
    }

    pub fn breaks(&self) -> &[f64] {
        match self {
            InputSignal::PiecewiseConstant { breaks, .. } => breaks,
            _ => &[],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            InputSignal::Zero => InputSignal::Zero,
            InputSignal::Constant(v) => InputSignal::Constant(v * s),
            InputSignal::PiecewiseConstant { breaks, values } => InputSignal::PiecewiseConstant {
                breaks: breaks.clone(),
                values: values.iter().map(|v| v * s).collect(),
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            InputSignal::Zero => true,
            InputSignal::Constant(v) => v.iter().all(|&x| x == 0.0),
            InputSignal::PiecewiseConstant { values, .. } => {
                values.iter().all(|v| v.iter().all(|&x| x == 0.0))
            }
        }
    }

    pub(crate) fn check_dim(&self, dim: usize, name: &str) -> Result<()> {
        let ok = match self {
            InputSignal::Zero => true,
            InputSignal::Constant(v) => v.len() == dim,
            InputSignal::PiecewiseConstant { values, .. } => values.iter().all(|v| v.len() == dim),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{name} signal must have dimension {dim}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PursuerStrategy {
    /// `u_p = −R_p⁻¹BᵀP x̂ + perturbation`, with `x̂` reset at every
    /// communication instant.
    CertaintyEquivalent {
        perturbation: InputSignal,
    },
    /// `u_p = −R_p⁻¹BᵀP Φ x0 + perturbation`; ignores communications.
    OpenLoop {
        perturbation: InputSignal,
    },
    Input(InputSignal),
}

impl PursuerStrategy {
    pub fn certainty_equivalent() -> Self {
        PursuerStrategy::CertaintyEquivalent {
            perturbation: InputSignal::Zero,
        }
    }

    pub fn open_loop() -> Self {
        PursuerStrategy::OpenLoop {
            perturbation: InputSignal::Zero,
        }
    }

    pub(crate) fn breaks(&self) -> &[f64] {
        match self {
            PursuerStrategy::CertaintyEquivalent { perturbation }
            | PursuerStrategy::OpenLoop { perturbation }
            | PursuerStrategy::Input(perturbation) => perturbation.breaks(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum EvaderStrategy {
    /// `u_e = R_e⁻¹CᵀP x + w`. With `w = 0` this is the equilibrium feedback.
    Feedback {
        deviation: InputSignal,
    },
    /// `u_e = R_e⁻¹CᵀP Φ x0 + w`.
    OpenLoop {
        deviation: InputSignal,
    },
    Input(InputSignal),
    Risky(RiskyStrategy),
}

impl EvaderStrategy {
    pub fn equilibrium() -> Self {
        EvaderStrategy::Feedback {
            deviation: InputSignal::Zero,
        }
    }

    pub fn deviation(w: InputSignal) -> Self {
        EvaderStrategy::Feedback { deviation: w }
    }

    pub(crate) fn breaks(&self) -> Vec<f64> {
        match self {
            EvaderStrategy::Feedback { deviation }
            | EvaderStrategy::OpenLoop { deviation }
            | EvaderStrategy::Input(deviation) => deviation.breaks().to_vec(),
            EvaderStrategy::Risky(r) => vec![r.start, r.switch, r.end],
        }
    }
}

/// Two-phase deviation on an interval whose deviation flow `M` escapes at
/// `escape`: a constant kick `scale · kick_w0` on `[start, switch)`, then the
/// feedback `w = −R_e⁻¹CᵀM e` on `[switch, end)`, where `switch` lies a
/// standoff above the escape time. Zero outside the interval.
#[derive(Clone, Debug)]
pub struct RiskyStrategy {
    pub start: f64,
    pub switch: f64,
    pub end: f64,
    pub escape: f64,
    pub kick_w0: DVector<f64>,
    pub scale: f64,
    pub(crate) m: RiccatiSolution,
    pub(crate) k_e: DMatrix<f64>,
}

impl RiskyStrategy {
    pub fn with_scale(&self, scale: f64) -> Self {
        Self {
            scale,
            ..self.clone()
        }
    }

    /// `M` on `[switch, end]`.
    pub fn deviation_flow(&self) -> &RiccatiSolution {
        &self.m
    }

    /// Deviation `w` on the piece containing `piece`, at time `t` and
    /// estimation error `e`.
    pub(crate) fn w(&self, piece: f64, t: f64, e: &DVector<f64>) -> Result<DVector<f64>> {
        if piece < self.start || piece >= self.end {
            Ok(DVector::zeros(self.kick_w0.len()))
        } else if piece < self.switch {
            Ok(&self.kick_w0 * self.scale)
        } else {
            let m = self.m.eval(t)?;
            Ok(-(&self.k_e * (m * e)))
        }
    }
}
