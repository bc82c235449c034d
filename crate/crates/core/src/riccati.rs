//! Generalized Riccati equations for worst-case affine bond prices.
//!
//! For `u = 0` the supremum over all models in a [`ParameterBox`] of
//! `E[exp(-∫_t^T X_s ds) | X_t = x]` is `exp(φ(T-t) + ψ(T-t) x)` where
//!
//! ```text
//! ψ' = ½ ā¹ ψ² + max_{b¹} b¹ψ − 1,   ψ(0) = u
//! φ' = ½ ā⁰ ψ² + max_{b⁰} b⁰ψ,       φ(0) = 0
//! ```
//!
//! The maxima pick the drift endpoint according to the sign of ψ; for `u = 0`
//! ψ stays nonpositive and the lower drift endpoints are selected. When the
//! drift intervals are degenerate this is the classical affine recursion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{price_maximising_model, CornerParameter, ParameterBox, StateSpace};

pub const DEFAULT_BLOWUP_GUARD: f64 = 1e6;

/// Integrator settings recorded with every solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepControl {
    pub method: &'static str,
    pub max_step: f64,
    pub tol: f64,
}

/// Options for [`solve_riccati_with`].
#[derive(Debug, Clone, Copy)]
pub struct RiccatiOptions {
    /// Relative local error tolerance.
    pub tol: f64,
    /// Upper bound on the step size as a fraction of the horizon.
    pub max_step_fraction: f64,
    pub guard: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_step_fraction: 1.0 / 64.0, guard: DEFAULT_BLOWUP_GUARD }
    }
}

/// Gridded `(φ, ψ)` with dense evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    pub u: f64,
    pub horizon: f64,
    pub time_grid: Vec<f64>,
    pub phi_values: Vec<f64>,
    pub psi_values: Vec<f64>,
    #[serde(skip)]
    phi_slopes: Vec<f64>,
    #[serde(skip)]
    psi_slopes: Vec<f64>,
    pub box_: ParameterBox,
    pub space: StateSpace,
    /// Drift slope in effect while ψ ≤ 0.
    pub slope: f64,
    /// The constant-parameter model whose classical Riccati system coincides
    /// with this one while ψ ≤ 0.
    pub extremal_model: CornerParameter,
    pub step_control: StepControl,
}

struct Rhs {
    bx: ParameterBox,
}

impl Rhs {
    #[inline]
    fn eval(&self, psi: f64) -> (f64, f64) {
        let sq = 0.5 * psi * psi;
        let dphi = self.bx.a0.high * sq + self.bx.b0.sup_linear(psi);
        let dpsi = self.bx.a1.high * sq + self.bx.b1.sup_linear(psi) - 1.0;
        (dphi, dpsi)
    }
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Solve with default options apart from `tol`.
pub fn solve_riccati(
    bx: &ParameterBox,
    space: StateSpace,
    horizon: f64,
    u: f64,
    tol: f64,
) -> Result<RiccatiSolution> {
    solve_riccati_with(bx, space, horizon, u, RiccatiOptions { tol, ..Default::default() })
}

pub fn solve_riccati_with(
    bx: &ParameterBox,
    space: StateSpace,
    horizon: f64,
    u: f64,
    opts: RiccatiOptions,
) -> Result<RiccatiSolution> {
    let extremal_model = price_maximising_model(bx, space)?;
    if !space.is_nonnegative() && bx.a1.high > 0.0 {
        return Err(Error::InvalidBox(
            "variance slope a1 must vanish on the real line".into(),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::OutOfRange { what: "horizon", value: horizon, min: 0.0, max: f64::INFINITY });
    }
    if !(opts.tol > 0.0 && opts.tol <= 1e-3) {
        return Err(Error::OutOfRange { what: "tol", value: opts.tol, min: 0.0, max: 1e-3 });
    }
    if !u.is_finite() {
        return Err(Error::InvalidInput("u must be finite".into()));
    }

    let rhs = Rhs { bx: *bx };
    let rtol = opts.tol;
    let atol = opts.tol * 1e-3;
    let max_step = horizon * opts.max_step_fraction;

    let mut t = 0.0;
    let mut y = [0.0, u];
    let (d0, d1) = rhs.eval(u);
    let mut k_first = [d0, d1];

    let mut time_grid = vec![0.0];
    let mut phi_values = vec![0.0];
    let mut psi_values = vec![u];
    let mut phi_slopes = vec![d0];
    let mut psi_slopes = vec![d1];

    let mut h = (max_step).min(0.01 * horizon).max(f64::EPSILON * horizon);
    while t < horizon {
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }
        let mut k = [[0.0f64; 2]; 7];
        k[0] = k_first;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            let (a, b) = rhs.eval(ys[1]);
            k[s] = [a, b];
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for comp in 0..2 {
            let mut inc5 = 0.0;
            let mut inc4 = 0.0;
            for s in 0..7 {
                inc5 += B5[s] * k[s][comp];
                inc4 += B4[s] * k[s][comp];
            }
            y5[comp] = y[comp] + h * inc5;
            let scale = atol + rtol * y[comp].abs().max(y5[comp].abs());
            let e = (h * (inc5 - inc4)) / scale;
            err = err.max(e.abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h < 1e-14 * horizon {
                return Err(Error::BlowUp { time: t, guard: opts.guard });
            }
            continue;
        }
        if err <= 1.0 {
            t = if last { horizon } else { t + h };
            y = y5;
            if y[1].abs() > opts.guard || y[0].abs() > opts.guard {
                return Err(Error::BlowUp { time: t, guard: opts.guard });
            }
            // FSAL: last stage is the derivative at the new point.
            k_first = k[6];
            time_grid.push(t);
            phi_values.push(y[0]);
            psi_values.push(y[1]);
            phi_slopes.push(k[6][0]);
            psi_slopes.push(k[6][1]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(max_step);
        if h < 1e-14 * horizon {
            return Err(Error::BlowUp { time: t, guard: opts.guard });
        }
    }

    Ok(RiccatiSolution {
        u,
        horizon,
        time_grid,
        phi_values,
        psi_values,
        phi_slopes,
        psi_slopes,
        box_: *bx,
        space,
        slope: extremal_model.b1,
        extremal_model,
        step_control: StepControl { method: "dopri5", max_step, tol: opts.tol },
    })
}

/// Cubic Hermite on one interval with Fritsch–Carlson limited slopes.
fn monotone_hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let delta = (y1 - y0) / h;
    let (mut m0, mut m1) = (m0, m1);
    if delta == 0.0 {
        m0 = 0.0;
        m1 = 0.0;
    } else {
        if m0 * delta < 0.0 {
            m0 = 0.0;
        }
        if m1 * delta < 0.0 {
            m1 = 0.0;
        }
        let a = m0 / delta;
        let b = m1 / delta;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m0 = tau * a * delta;
            m1 = tau * b * delta;
        }
    }
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
}

impl RiccatiSolution {
    fn locate(&self, s: f64) -> Result<usize> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if !(s >= -slack && s <= self.horizon + slack) {
            return Err(Error::OutOfRange { what: "time to maturity", value: s, min: 0.0, max: self.horizon });
        }
        let idx = self.time_grid.partition_point(|&g| g <= s);
        Ok(idx.saturating_sub(1).min(self.time_grid.len() - 2))
    }

    fn dense(&self, s: f64, values: &[f64], slopes: &[f64]) -> Result<f64> {
        let i = self.locate(s)?;
        let s = s.clamp(0.0, self.horizon);
        let (x0, x1) = (self.time_grid[i], self.time_grid[i + 1]);
        if s == x0 {
            return Ok(values[i]);
        }
        if s == x1 {
            return Ok(values[i + 1]);
        }
        Ok(monotone_hermite(x0, x1, values[i], values[i + 1], slopes[i], slopes[i + 1], s))
    }

    pub fn phi(&self, s: f64) -> Result<f64> {
        self.dense(s, &self.phi_values, &self.phi_slopes)
    }

    pub fn psi(&self, s: f64) -> Result<f64> {
        self.dense(s, &self.psi_values, &self.psi_slopes)
    }

    fn require_bond_solution(&self) -> Result<()> {
        if self.u != 0.0 {
            return Err(Error::InvalidInput(format!(
                "bond prices need a solution with u = 0, got u = {}",
                self.u
            )));
        }
        Ok(())
    }
}

/// `exp(φ(T−t) + ψ(T−t)·x)` from a `u = 0` solution.
pub fn upper_bond_price(sol: &RiccatiSolution, t: f64, maturity: f64, x: f64) -> Result<f64> {
    sol.require_bond_solution()?;
    if t > maturity {
        return Err(Error::OutOfRange { what: "valuation time", value: t, min: f64::NEG_INFINITY, max: maturity });
    }
    let tau = maturity - t;
    Ok((sol.phi(tau)? + sol.psi(tau)? * x).exp())
}

/// Value path of the longevity bond paying the survivor index at `maturity`.
///
/// `grid` must start at 0; the hazard integral uses the trapezoid rule on it.
pub fn longevity_value_path(
    grid: &[f64],
    mu_path: &[f64],
    sol: &RiccatiSolution,
    maturity: f64,
) -> Result<Vec<f64>> {
    sol.require_bond_solution()?;
    if grid.len() != mu_path.len() || grid.is_empty() {
        return Err(Error::GridMismatch(format!(
            "grid has {} nodes, path has {}",
            grid.len(),
            mu_path.len()
        )));
    }
    if grid[0] != 0.0 {
        return Err(Error::GridMismatch("grid must start at 0".into()));
    }
    let last = *grid.last().unwrap();
    if last > maturity * (1.0 + 1e-12) {
        return Err(Error::GridMismatch(format!("grid ends at {last} past maturity {maturity}")));
    }
    if maturity > sol.horizon * (1.0 + 1e-12) {
        return Err(Error::OutOfRange { what: "maturity", value: maturity, min: 0.0, max: sol.horizon });
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut integral = 0.0;
    for i in 0..grid.len() {
        if i > 0 {
            integral += 0.5 * (grid[i] - grid[i - 1]) * (mu_path[i] + mu_path[i - 1]);
        }
        let tau = (maturity - grid[i]).max(0.0);
        let exponent = sol.phi(tau)? + sol.psi(tau)? * mu_path[i];
        out.push((exponent - integral).exp());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Interval;
    use approx::assert_relative_eq;

    fn vasicek() -> ParameterBox {
        ParameterBox::new(
            Interval::point(0.04),
            Interval::point(-0.3),
            Interval::point(0.02),
            Interval::point(0.0),
        )
        .unwrap()
    }

    // High-precision values of ψ(1), φ(1) for the Vasicek box: ψ from the
    // closed form of the linear ODE, φ by 30-digit quadrature.
    const VAS_PSI1: f64 = -0.863_939_264_394_273_8;
    const VAS_PHI1: f64 = -0.015_463_422_778_384_786;
    const VAS_PSI_HALF: f64 = -0.464_306_745_249_807_3;
    const VAS_PHI_HALF: f64 = -0.004_386_196_000_300_995;

    /// Fixed-step classical RK4 on a fine grid; independent of the adaptive path.
    fn rk4_oracle(bx: &ParameterBox, horizon: f64, steps: usize) -> (f64, f64) {
        let f = |psi: f64| {
            (
                0.5 * bx.a0.high * psi * psi + bx.b0.low * psi,
                0.5 * bx.a1.high * psi * psi + bx.b1.low * psi - 1.0,
            )
        };
        let h = horizon / steps as f64;
        let (mut phi, mut psi) = (0.0, 0.0);
        for _ in 0..steps {
            let k1 = f(psi);
            let k2 = f(psi + 0.5 * h * k1.1);
            let k3 = f(psi + 0.5 * h * k2.1);
            let k4 = f(psi + h * k3.1);
            phi += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            psi += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (phi, psi)
    }

    #[test]
    fn oracle_reproduces_frozen_values() {
        let (phi, psi) = rk4_oracle(&vasicek(), 1.0, 20_000);
        assert_relative_eq!(psi, VAS_PSI1, max_relative = 1e-12);
        assert_relative_eq!(phi, VAS_PHI1, max_relative = 1e-10);
    }

    #[test]
    fn zero_box_is_linear_in_time() {
        let sol = solve_riccati(&ParameterBox::zero(), StateSpace::RealLine, 1.0, 0.0, 1e-8).unwrap();
        assert_relative_eq!(sol.psi(1.0).unwrap(), -1.0, max_relative = 1e-14);
        assert_eq!(sol.phi(1.0).unwrap(), 0.0);
        assert_eq!(sol.phi_values[0], 0.0);
        assert_eq!(sol.psi_values[0], 0.0);
        assert_eq!(*sol.time_grid.last().unwrap(), 1.0);
    }

    #[test]
    fn vasicek_against_closed_form() {
        let sol = solve_riccati(&vasicek(), StateSpace::RealLine, 1.0, 0.0, 1e-8).unwrap();
        assert_relative_eq!(sol.psi(1.0).unwrap(), VAS_PSI1, max_relative = 1e-8);
        assert_relative_eq!(sol.phi(1.0).unwrap(), VAS_PHI1, max_relative = 1e-7);
        // dense output between nodes
        assert_relative_eq!(sol.psi(0.5).unwrap(), VAS_PSI_HALF, max_relative = 1e-8);
        assert_relative_eq!(sol.phi(0.5).unwrap(), VAS_PHI_HALF, max_relative = 1e-7);
        assert_relative_eq!(
            upper_bond_price(&sol, 0.0, 1.0, 0.05).unwrap(),
            0.943_026_979_946_549,
            max_relative = 1e-8
        );
    }

    #[test]
    fn cir_against_closed_form() {
        let bx = ParameterBox::new(
            Interval::point(0.05),
            Interval::point(-0.3),
            Interval::point(0.0),
            Interval::point(0.02),
        )
        .unwrap();
        let sol = solve_riccati(&bx, StateSpace::Positive, 1.0, 0.0, 1e-8).unwrap();
        assert_relative_eq!(sol.psi(1.0).unwrap(), -0.861_467_472_940_075_1, max_relative = 1e-8);
        assert_relative_eq!(sol.phi(1.0).unwrap(), -0.022_643_953_629_881_21, max_relative = 1e-7);
    }

    #[test]
    fn bond_price_trivial_cases() {
        let sol = solve_riccati(&vasicek(), StateSpace::RealLine, 2.0, 0.0, 1e-8).unwrap();
        assert_eq!(upper_bond_price(&sol, 1.3, 1.3, 0.7).unwrap(), 1.0);
        let zero = solve_riccati(&ParameterBox::zero(), StateSpace::RealLine, 1.0, 0.0, 1e-8).unwrap();
        assert_relative_eq!(upper_bond_price(&zero, 0.0, 1.0, 0.02).unwrap(), (-0.02f64).exp(), max_relative = 1e-14);
        assert!(matches!(upper_bond_price(&sol, 0.0, 2.5, 0.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn blow_up_is_reported() {
        // ψ' = ½ψ² − 1 explodes in finite time for u = 10.
        let bx = ParameterBox::new(
            Interval::point(0.0),
            Interval::point(0.0),
            Interval::point(0.0),
            Interval::point(1.0),
        )
        .unwrap();
        let err = solve_riccati(&bx, StateSpace::NonNegative, 5.0, 10.0, 1e-6).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn rejects_state_dependent_slope() {
        let bx = ParameterBox::new(
            Interval::point(0.01),
            Interval::new(-0.3, -0.1),
            Interval::point(0.01),
            Interval::point(0.0),
        )
        .unwrap();
        assert!(matches!(
            solve_riccati(&bx, StateSpace::RealLine, 1.0, 0.0, 1e-8),
            Err(Error::NotConstantSlope { .. })
        ));
    }

    #[test]
    fn longevity_path_examples() {
        let zero = solve_riccati(&ParameterBox::zero(), StateSpace::RealLine, 1.0, 0.0, 1e-8).unwrap();
        let grid = [0.0, 0.5, 1.0];
        let y = longevity_value_path(&grid, &[0.0; 3], &zero, 1.0).unwrap();
        assert!(y.iter().all(|&v| v == 1.0));
        let y = longevity_value_path(&grid, &[0.02; 3], &zero, 1.0).unwrap();
        for v in y {
            assert_relative_eq!(v, (-0.02f64).exp(), max_relative = 1e-14);
        }

        // Hand computation: trapezoid hazard plus Riccati values at T − r.
        let sol = solve_riccati(&vasicek(), StateSpace::RealLine, 1.0, 0.0, 1e-8).unwrap();
        let y = longevity_value_path(&grid, &[0.01, 0.02, 0.03], &sol, 1.0).unwrap();
        assert_relative_eq!(y[0], 0.976_185_337_690_334_9, max_relative = 1e-8);
        assert_relative_eq!(y[1], 0.979_050_229_418_369_5, max_relative = 1e-8);
        assert_relative_eq!(y[2], 0.980_198_673_306_755_3, max_relative = 1e-14);

        assert!(matches!(
            longevity_value_path(&[0.0, 0.5, 1.5], &[0.0; 3], &sol, 1.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let errs: Vec<f64> = [1e-4, 1e-6, 1e-9]
            .iter()
            .map(|&tol| {
                let sol = solve_riccati_with(
                    &vasicek(),
                    StateSpace::RealLine,
                    1.0,
                    0.0,
                    RiccatiOptions { tol, max_step_fraction: 1.0, ..Default::default() },
                )
                .unwrap();
                (sol.phi(1.0).unwrap() - VAS_PHI1).abs() + (sol.psi(1.0).unwrap() - VAS_PSI1).abs()
            })
            .collect();
        assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "{errs:?}");
    }
}
