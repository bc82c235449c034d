//! Claim valuation: pure endowments, the G-PDE asset leg, and product claims
//! whose intensity and asset factors are independent.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati::{upper_bond_price, RiccatiSolution};
use crate::sim::{HazardEnsemble, McEstimate};
use crate::tabulated::Table;

/// Amount paid at maturity if no default occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payout {
    Constant(f64),
    /// Deterministic function of the terminal intensity.
    TerminalIntensity(Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndowmentSpec {
    pub maturity: f64,
    pub payout: Payout,
}

impl EndowmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.maturity >= 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidInput(format!("maturity {} must be nonnegative", self.maturity)));
        }
        let negative = match &self.payout {
            Payout::Constant(c) => *c < 0.0,
            Payout::TerminalIntensity(t) => t.ys().iter().any(|&v| v < 0.0),
        };
        if negative {
            return Err(Error::InvalidInput("payout must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Worst-case value at `t` of `1{τ̃ > T} · payout`: zero after default, else
/// the payout times the worst-case bond price.
pub fn pure_endowment_price(
    sol: &RiccatiSolution,
    t: f64,
    maturity: f64,
    x: f64,
    defaulted: bool,
    payout: f64,
) -> Result<f64> {
    if payout < 0.0 {
        return Err(Error::InvalidInput(format!("payout {payout} must be nonnegative")));
    }
    if !(0.0..=maturity).contains(&t) {
        return Err(Error::OutOfRange { what: "valuation time", value: t, min: 0.0, max: maturity });
    }
    if defaulted {
        return Ok(0.0);
    }
    Ok(payout * upper_bond_price(sol, t, maturity, x)?)
}

/// Monte Carlo value at time 0 of an endowment under the single model that
/// generated `hazard`, with `terminal_intensity` the path values at maturity.
///
/// This is a per-model estimate; the worst case over a family is the maximum
/// over its members.
pub fn mc_endowment_estimate(
    spec: &EndowmentSpec,
    hazard: &HazardEnsemble,
    terminal_intensity: &[f64],
) -> Result<McEstimate> {
    spec.validate()?;
    let j = crate::sim::grid_index(&hazard.time_grid, spec.maturity)?;
    if terminal_intensity.len() != hazard.gamma.nrows() {
        return Err(Error::GridMismatch("one terminal intensity per path required".into()));
    }
    let gamma = hazard.gamma.column(j);
    Ok(McEstimate::from_samples(gamma.iter().zip(terminal_intensity).map(|(g, &mu)| {
        let pay = match &spec.payout {
            Payout::Constant(c) => *c,
            Payout::TerminalIntensity(t) => t.eval(mu),
        };
        pay * (-g).exp()
    })))
}

/// Bounds `[σ̲², σ̄²]` on the quadratic-variation rate of the G-Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolBounds {
    pub low: f64,
    pub high: f64,
}

impl VolBounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0 <= low && low <= high && high.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid variance bounds [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }
}

/// `G(a) = ½(σ̄² a⁺ − σ̲² a⁻)`.
pub fn g_function(a: f64, bounds: VolBounds) -> f64 {
    0.5 * (bounds.high * a.max(0.0) - bounds.low * (-a).max(0.0))
}

/// Coefficient function of the asset state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Constant(f64),
    /// `slope · y + intercept`.
    Linear { slope: f64, intercept: f64 },
    Tabulated(Table),
}

impl Coefficient {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Linear { slope, intercept } => slope * y + intercept,
            Coefficient::Tabulated(t) => t.eval(y),
        }
    }
}

/// Uniform asset grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetGrid {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl AssetGrid {
    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.nodes)
            .map(|i| if i == self.nodes - 1 { self.upper } else { self.lower + h * i as f64 })
            .collect()
    }
}

/// `∂_t v + G(σ² D²v + h Dv) + b Dv = 0` on `[0, maturity) × grid`, `v(T) = f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPdeProblem {
    pub payoff: Table,
    pub drift: Coefficient,
    pub qv_loading: Coefficient,
    pub sigma: Coefficient,
    pub vol_bounds: VolBounds,
    pub grid: AssetGrid,
    pub maturity: f64,
    pub dt: f64,
}

impl GPdeProblem {
    pub fn validate(&self) -> Result<()> {
        VolBounds::new(self.vol_bounds.low, self.vol_bounds.high)?;
        if self.grid.nodes < 3 {
            return Err(Error::InvalidInput("asset grid needs at least 3 nodes".into()));
        }
        if !(self.grid.lower < self.grid.upper) || !self.grid.upper.is_finite() || !self.grid.lower.is_finite() {
            return Err(Error::InvalidInput("asset grid bounds must satisfy lower < upper".into()));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidInput("maturity must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidStep(format!("dt must be positive, got {}", self.dt)));
        }
        let pts = self.grid.points();
        let h = self.grid.step();
        let f: Vec<f64> = pts.iter().map(|&y| self.payoff.eval(y)).collect();
        if f.windows(2).any(|w| !((w[1] - w[0]) / h).is_finite()) {
            return Err(Error::InvalidInput("payoff difference quotients must be finite".into()));
        }
        Ok(())
    }

    /// Largest time step keeping every candidate operator monotone.
    pub fn max_stable_dt(&self) -> f64 {
        let h = self.grid.step();
        let worst = self
            .grid
            .points()
            .iter()
            .map(|&y| {
                let sig2 = self.sigma.eval(y).powi(2);
                let (hq, b) = (self.qv_loading.eval(y), self.drift.eval(y));
                [self.vol_bounds.low, self.vol_bounds.high]
                    .iter()
                    .map(|&s| s * sig2 / (h * h) + (0.5 * s * hq + b).abs() / h)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if worst == 0.0 {
            f64::INFINITY
        } else {
            1.0 / worst
        }
    }
}

/// Solution of the G-PDE on the time × asset grid. Row `k` is time `time_grid[k]`.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub time_grid: Vec<f64>,
    pub asset_grid: Vec<f64>,
    pub values: Array2<f64>,
}

impl ValueSurface {
    pub fn maturity(&self) -> f64 {
        *self.time_grid.last().unwrap()
    }

    fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
        let n = grid.len();
        let i = grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
        let w = (x - grid[i]) / (grid[i + 1] - grid[i]);
        (i, w.clamp(0.0, 1.0))
    }

    /// Bilinear interpolation at `(t, y)`.
    pub fn value_at(&self, t: f64, y: f64) -> Result<f64> {
        let (tmax, ymin, ymax) = (self.maturity(), self.asset_grid[0], *self.asset_grid.last().unwrap());
        if !(0.0..=tmax).contains(&t) {
            return Err(Error::OutOfRange { what: "time", value: t, min: 0.0, max: tmax });
        }
        if !(ymin..=ymax).contains(&y) {
            return Err(Error::OutOfRange { what: "asset state", value: y, min: ymin, max: ymax });
        }
        let (k, wt) = Self::bracket(&self.time_grid, t);
        let (i, wy) = Self::bracket(&self.asset_grid, y);
        let v = &self.values;
        let row = |kk: usize| {
            if wy == 0.0 {
                v[[kk, i]]
            } else {
                (1.0 - wy) * v[[kk, i]] + wy * v[[kk, i + 1]]
            }
        };
        Ok(if wt == 0.0 { row(k) } else { (1.0 - wt) * row(k) + wt * row(k + 1) })
    }
}

/// Backward explicit monotone scheme.
///
/// At interior nodes the update is `Δt · max_{s ∈ {σ̲², σ̄²}} [½ s σ² D²v + c_s Dv]`
/// with `c_s = ½ s h + b` and `Dv` upwinded on the sign of `c_s`; this equals
/// `G(σ² D²v + h Dv) + b Dv` up to the first-order upwinding. At the two edge
/// nodes the second difference is set to zero (linear extrapolation) and the
/// one-sided inward difference is used only when the characteristic points
/// into the domain.
pub fn solve_g_pde(problem: &GPdeProblem) -> Result<ValueSurface> {
    problem.validate()?;
    let max_dt = problem.max_stable_dt();
    if problem.dt > max_dt {
        return Err(Error::UnstableGrid { dt: problem.dt, max_dt });
    }
    let n_steps = ((problem.maturity / problem.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = problem.maturity / n_steps as f64;
    let pts = problem.grid.points();
    let n = pts.len();
    let h = problem.grid.step();

    let sig2: Vec<f64> = pts.iter().map(|&y| problem.sigma.eval(y).powi(2)).collect();
    let hq: Vec<f64> = pts.iter().map(|&y| problem.qv_loading.eval(y)).collect();
    let b: Vec<f64> = pts.iter().map(|&y| problem.drift.eval(y)).collect();
    let bounds = [problem.vol_bounds.low, problem.vol_bounds.high];

    let mut values = Array2::<f64>::zeros((n_steps + 1, n));
    let mut current: Vec<f64> = pts.iter().map(|&y| problem.payoff.eval(y)).collect();
    values.row_mut(n_steps).assign(&ndarray::ArrayView1::from(&current));
    let mut next = vec![0.0; n];

    for k in (0..n_steps).rev() {
        let v = &current;
        next.par_iter_mut().with_min_len(1024).enumerate().for_each(|(i, out)| {
            let fwd = if i + 1 < n { (v[i + 1] - v[i]) / h } else { 0.0 };
            let bwd = if i > 0 { (v[i] - v[i - 1]) / h } else { 0.0 };
            let d2 = if i > 0 && i + 1 < n { (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h) } else { 0.0 };
            let mut best = f64::NEG_INFINITY;
            for &s in &bounds {
                let c = 0.5 * s * hq[i] + b[i];
                let first = if c >= 0.0 { c * fwd } else { c * bwd };
                best = best.max(0.5 * s * sig2[i] * d2 + first);
            }
            *out = v[i] + dt * best;
        });
        std::mem::swap(&mut current, &mut next);
        values.row_mut(k).assign(&ndarray::ArrayView1::from(&current));
    }

    let time_grid = (0..=n_steps)
        .map(|k| if k == n_steps { problem.maturity } else { problem.maturity * k as f64 / n_steps as f64 })
        .collect();
    Ok(ValueSurface { time_grid, asset_grid: pts, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductValue {
    pub intensity_factor: f64,
    pub asset_factor: f64,
    pub value: f64,
}

/// `v^μ(t, x_mu) · v^S(t, y_s)` for a claim `exp(−∫_t^T μ) f(S_T)` with
/// independent intensity and asset.
pub fn product_claim_value(
    t: f64,
    x_mu: f64,
    sol: &RiccatiSolution,
    surface: &ValueSurface,
    y_s: f64,
    maturity: f64,
) -> Result<ProductValue> {
    if (surface.maturity() - maturity).abs() > 1e-12 * maturity.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "surface maturity {} differs from claim maturity {maturity}",
            surface.maturity()
        )));
    }
    let intensity_factor = upper_bond_price(sol, t, maturity, x_mu)?;
    let asset_factor = surface.value_at(t, y_s)?;
    Ok(ProductValue { intensity_factor, asset_factor, value: intensity_factor * asset_factor })
}
