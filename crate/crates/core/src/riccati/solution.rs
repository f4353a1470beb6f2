use nalgebra::DMatrix;

use super::RiccatiKind;
use crate::linalg::symmetrize;
use crate::{Error, Result};

/// Dense backward solution: nodes from the terminal time down to the
/// reached time, with stored derivatives for cubic Hermite interpolation.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    kind: RiccatiKind,
    grid: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    derivs: Vec<DMatrix<f64>>,
    reached_floor: bool,
}

impl RiccatiSolution {
    pub(crate) fn new(
        kind: RiccatiKind,
        grid: Vec<f64>,
        values: Vec<DMatrix<f64>>,
        derivs: Vec<DMatrix<f64>>,
        reached_floor: bool,
    ) -> Self {
        debug_assert!(!grid.is_empty());
        debug_assert_eq!(grid.len(), values.len());
        debug_assert_eq!(grid.len(), derivs.len());
        Self {
            kind,
            grid,
            values,
            derivs,
            reached_floor,
        }
    }

    pub fn kind(&self) -> RiccatiKind {
        self.kind
    }

    /// Strictly decreasing node times.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn reached_floor(&self) -> bool {
        self.reached_floor
    }

    pub fn terminal_time(&self) -> f64 {
        self.grid[0]
    }

    pub fn reached_time(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    pub fn terminal_value(&self) -> &DMatrix<f64> {
        &self.values[0]
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    fn locate(&self, t: f64) -> Result<Option<usize>> {
        let (lo, hi) = (self.reached_time(), self.terminal_time());
        let slack = 1e-12 * (hi - lo).abs().max(1e-300);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        if self.grid.len() == 1 {
            return Ok(None);
        }
        // first node strictly below t
        let k = self.grid.partition_point(|&g| g >= t);
        Ok(Some(k.clamp(1, self.grid.len() - 1) - 1))
    }

    /// Symmetrized cubic-Hermite value; exact at nodes.
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.eval_with_derivative(t)?.0)
    }

    pub fn eval_with_derivative(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let Some(k) = self.locate(t)? else {
            return Ok((self.values[0].clone(), self.derivs[0].clone()));
        };
        if t == self.grid[k] {
            return Ok((self.values[k].clone(), self.derivs[k].clone()));
        }
        if t == self.grid[k + 1] {
            return Ok((self.values[k + 1].clone(), self.derivs[k + 1].clone()));
        }
        let (t0, t1) = (self.grid[k], self.grid[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (&self.values[k], &self.values[k + 1]);
        let (d0, d1) = (&self.derivs[k], &self.derivs[k + 1]);
        let value = y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h);

        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        let deriv = y0 * dh00 + d0 * dh10 + y1 * dh01 + d1 * dh11;
        Ok((symmetrize(&value), symmetrize(&deriv)))
    }

    /// Rows `t, X[0,0], X[0,1], …` (row-major), one per node, in increasing
    /// time.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let n = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for i in 0..n {
            for j in 0..n {
                header.push(format!("x_{i}_{j}"));
            }
        }
        w.write_record(&header)?;
        for (t, x) in self.grid.iter().zip(&self.values).rev() {
            let mut row = vec![crate::io::fmt_f64(*t)];
            for i in 0..n {
                for j in 0..n {
                    row.push(crate::io::fmt_f64(x[(i, j)]));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
