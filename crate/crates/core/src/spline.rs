//! Natural cubic spline through irregular knots, vectorized over columns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Natural cubic spline through `(t_i, y_i)` for every column of `y`
/// (`n_knots × d`).
#[derive(Clone, Debug)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: DMatrix<f64>,
    /// Second derivatives at the knots, `n_knots × d`.
    second: DMatrix<f64>,
}

impl NaturalSpline {
    pub fn new(knots: &[f64], values: &DMatrix<f64>) -> Result<Self> {
        let n = knots.len();
        if n < 3 || values.nrows() != n {
            return Err(Error::invalid(format!(
                "spline needs at least 3 knots matching the value rows, got {n} knots, {} rows",
                values.nrows()
            )));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spline knots must be strictly increasing"));
        }
        let d = values.ncols();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // tridiagonal system for interior second derivatives (Thomas algorithm)
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = DMatrix::zeros(m, d);
        for i in 0..m {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            for c in 0..d {
                rhs[(i, c)] = 6.0
                    * ((values[(i + 2, c)] - values[(i + 1, c)]) / h[i + 1]
                        - (values[(i + 1, c)] - values[(i, c)]) / h[i]);
            }
        }
        for i in 1..m {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            for c in 0..d {
                rhs[(i, c)] -= w * rhs[(i - 1, c)];
            }
        }
        let mut second = DMatrix::zeros(n, d);
        for i in (0..m).rev() {
            for c in 0..d {
                let next = if i + 1 < m { second[(i + 2, c)] } else { 0.0 };
                second[(i + 1, c)] = (rhs[(i, c)] - upper[i] * next) / diag[i];
            }
        }
        Ok(Self {
            knots: knots.to_vec(),
            values: values.clone(),
            second,
        })
    }

    /// Values at `t` (one row per query). Queries outside the knot range
    /// extrapolate the end polynomials.
    pub fn eval(&self, t: &[f64]) -> DMatrix<f64> {
        let d = self.values.ncols();
        let n = self.knots.len();
        let mut out = DMatrix::zeros(t.len(), d);
        for (q, &tq) in t.iter().enumerate() {
            let i = match self.knots.partition_point(|k| *k <= tq) {
                0 => 0,
                p if p >= n => n - 2,
                p => p - 1,
            };
            let h = self.knots[i + 1] - self.knots[i];
            let a = (self.knots[i + 1] - tq) / h;
            let b = (tq - self.knots[i]) / h;
            for c in 0..d {
                out[(q, c)] = a * self.values[(i, c)]
                    + b * self.values[(i + 1, c)]
                    + ((a * a * a - a) * self.second[(i, c)]
                        + (b * b * b - b) * self.second[(i + 1, c)])
                        * h
                        * h
                        / 6.0;
            }
        }
        out
    }
}
