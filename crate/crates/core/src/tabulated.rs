//! Piecewise-linear functions read from two-column numeric text.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing abscissae with values; linear in between and linearly
/// extrapolated from the end segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidInput(format!("{} abscissae but {} values", xs.len(), ys.len())));
        }
        if xs.is_empty() {
            return Err(Error::InvalidInput("empty table".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("table entries must be finite".into()));
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "first column not strictly increasing at row {}",
                i + 2
            )));
        }
        Ok(Self { xs, ys })
    }

    pub fn from_fn(xs: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(xs.to_vec(), xs.iter().map(|&x| f(x)).collect())
    }

    /// Parse `state value` rows separated by whitespace or a comma. Blank lines
    /// and lines starting with `#` are skipped; errors name the 1-based line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
            if fields.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected 2 columns, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |f: &str| {
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: {f:?}: {e}", lineno + 1)))
            };
            let (x, y) = (parse(fields[0])?, parse(fields[1])?);
            if let Some(&prev) = xs.last() {
                if x <= prev {
                    return Err(Error::InvalidInput(format!(
                        "line {}: first column not strictly increasing",
                        lineno + 1
                    )));
                }
            }
            xs.push(x);
            ys.push(y);
        }
        Self::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.ys[0];
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let (x0, x1, y0, y1) = (self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]);
        if x == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}
