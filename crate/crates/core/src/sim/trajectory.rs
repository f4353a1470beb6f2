use nalgebra::DVector;

use crate::io::fmt_f64;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub u_p: DVector<f64>,
    pub u_e: DVector<f64>,
    /// Running cost accumulated from `t0`.
    pub running_cost: f64,
    /// Set on the first sample after a communication reset.
    pub event: bool,
}

impl Sample {
    pub fn error(&self) -> DVector<f64> {
        &self.x - &self.x_hat
    }
}

/// Simulation output, stored per integration segment. Adjacent segments
/// share their boundary time; the earlier copy holds left limits of the
/// inputs and the estimate, the later one right limits.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    segments: Vec<Vec<Sample>>,
    events: Vec<f64>,
    terminal_cost: f64,
    step: f64,
}

impl Trajectory {
    pub(crate) fn new(
        segments: Vec<Vec<Sample>>,
        events: Vec<f64>,
        terminal_cost: f64,
        step: f64,
    ) -> Self {
        Self {
            segments,
            events,
            terminal_cost,
            step,
        }
    }

    pub fn segments(&self) -> &[Vec<Sample>] {
        &self.segments
    }

    /// Samples on a strictly increasing grid: at segment boundaries only the
    /// right-limit sample is kept.
    pub fn samples(&self) -> Vec<&Sample> {
        let mut out = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            let last = i + 1 == self.segments.len();
            let take = if last { seg.len() } else { seg.len() - 1 };
            out.extend(seg.iter().take(take));
        }
        out
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn initial(&self) -> &Sample {
        &self.segments[0][0]
    }

    pub fn terminal(&self) -> &Sample {
        self.segments
            .last()
            .and_then(|s| s.last())
            .expect("nonempty")
    }

    pub fn running_cost(&self) -> f64 {
        self.terminal().running_cost
    }

    pub fn terminal_cost(&self) -> f64 {
        self.terminal_cost
    }

    /// Running plus terminal cost.
    pub fn payoff(&self) -> f64 {
        self.running_cost() + self.terminal_cost
    }

    /// Largest `‖x − x̂‖` over all samples.
    pub fn max_error_norm(&self) -> f64 {
        self.segments
            .iter()
            .flatten()
            .map(|s| s.error().norm())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, x_*, x_hat_*, e_*, u_p_*, u_e_*, running_cost,
    /// event_flag`, one row per entry of [`samples`](Self::samples).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let first = self.initial();
        let (n, np, ne) = (first.x.len(), first.u_p.len(), first.u_e.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for (name, len) in [("x", n), ("x_hat", n), ("e", n), ("u_p", np), ("u_e", ne)] {
            header.extend((0..len).map(|i| format!("{name}_{i}")));
        }
        header.push("running_cost".into());
        header.push("event_flag".into());
        w.write_record(&header)?;
        for s in self.samples() {
            let e = s.error();
            let mut row = vec![fmt_f64(s.t)];
            for v in [&s.x, &s.x_hat, &e, &s.u_p, &s.u_e] {
                row.extend(v.iter().map(|&x| fmt_f64(x)));
            }
            row.push(fmt_f64(s.running_cost));
            row.push(if s.event { "1" } else { "0" }.into());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
