//! Parameter uncertainty boxes for one-dimensional affine diffusions.
//!
//! A [`ParameterBox`] is the rectangle of admissible `(b0, b1, a0, a1)` for
//! the dynamics `dX = (b0 + b1 X) dt + sqrt(a0 + a1 X^+) dW`. From it we derive
//! the state-dependent drift and variance intervals, the properness test, and
//! the constant-parameter corner models used as brute-force witnesses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval for one coefficient of the affine dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn point(value: f64) -> Self {
        Self { low: value, high: value }
    }

    pub fn is_degenerate(&self) -> bool {
        self.low == self.high
    }

    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }

    /// Endpoint maximising `coef * weight` over the interval.
    pub fn argmax_linear(&self, weight: f64) -> f64 {
        if weight >= 0.0 {
            self.high
        } else {
            self.low
        }
    }

    /// `max { c * weight : c in self }`.
    pub fn sup_linear(&self, weight: f64) -> f64 {
        (self.low * weight).max(self.high * weight)
    }

    /// Uniform grid including both endpoints; a degenerate interval yields one value.
    fn grid(&self, resolution: usize) -> Vec<f64> {
        if self.is_degenerate() {
            return vec![self.low];
        }
        let n = resolution.max(2);
        let step = (self.high - self.low) / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { self.high } else { self.low + step * i as f64 })
            .collect()
    }
}

/// The uncertainty rectangle over drift intercept/slope and variance intercept/slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub b0: Interval,
    pub b1: Interval,
    pub a0: Interval,
    pub a1: Interval,
}

impl ParameterBox {
    pub fn new(b0: Interval, b1: Interval, a0: Interval, a1: Interval) -> Result<Self> {
        let candidate = Self { b0, b1, a0, a1 };
        candidate.validate()?;
        Ok(candidate)
    }

    /// Box containing the single model `theta`.
    pub fn degenerate(theta: CornerParameter) -> Self {
        Self {
            b0: Interval::point(theta.b0),
            b1: Interval::point(theta.b1),
            a0: Interval::point(theta.a0),
            a1: Interval::point(theta.a1),
        }
    }

    pub fn zero() -> Self {
        Self::degenerate(CornerParameter { b0: 0.0, b1: 0.0, a0: 0.0, a1: 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("b0", self.b0), ("b1", self.b1), ("a0", self.a0), ("a1", self.a1)] {
            if !(iv.low.is_finite() && iv.high.is_finite()) {
                return Err(Error::InvalidBox(format!("{name} bounds must be finite")));
            }
            if iv.low > iv.high {
                return Err(Error::InvalidBox(format!(
                    "{name}: lower bound {} exceeds upper bound {}",
                    iv.low, iv.high
                )));
            }
        }
        if self.a0.low < 0.0 || self.a1.low < 0.0 {
            return Err(Error::InvalidBox("variance coefficients must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn contains(&self, theta: &CornerParameter) -> bool {
        self.b0.contains(theta.b0)
            && self.b1.contains(theta.b1)
            && self.a0.contains(theta.a0)
            && self.a1.contains(theta.a1)
    }
}

/// State space of the intensity process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpace {
    RealLine,
    NonNegative,
    Positive,
}

impl StateSpace {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            StateSpace::RealLine => x.is_finite(),
            StateSpace::NonNegative => x.is_finite() && x >= 0.0,
            StateSpace::Positive => x.is_finite() && x > 0.0,
        }
    }

    /// Whether states are confined to `[0, inf)`.
    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, StateSpace::RealLine)
    }
}

/// Bounds of a state-dependent coefficient interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineInterval {
    pub lower: f64,
    pub upper: f64,
}

/// A single constant-parameter affine model inside a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerParameter {
    pub b0: f64,
    pub b1: f64,
    pub a0: f64,
    pub a1: f64,
}

impl CornerParameter {
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.b0 + self.b1 * x
    }

    #[inline]
    pub fn variance(&self, x: f64) -> f64 {
        self.a0 + self.a1 * x.max(0.0)
    }
}

/// Upper endpoints of the drift and variance intervals at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalCoefficients {
    pub drift: f64,
    pub variance: f64,
}

/// `{ b0 + b1 x : (b0, b1) in box }`.
pub fn drift_interval(bx: &ParameterBox, x: f64) -> AffineInterval {
    let (slope_low, slope_high) = if x >= 0.0 {
        (bx.b1.low, bx.b1.high)
    } else {
        (bx.b1.high, bx.b1.low)
    };
    AffineInterval {
        lower: bx.b0.low + slope_low * x,
        upper: bx.b0.high + slope_high * x,
    }
}

/// `{ a0 + a1 x^+ : (a0, a1) in box }`.
pub fn diffusion_interval(bx: &ParameterBox, x: f64) -> AffineInterval {
    let xp = x.max(0.0);
    AffineInterval {
        lower: bx.a0.low + bx.a1.low * xp,
        upper: bx.a0.high + bx.a1.high * xp,
    }
}

/// A box is proper if it admits nonempty law families: either a strictly
/// positive variance floor, or a pure square-root diffusion whose drift floor
/// satisfies the Feller-type bound `b0_low >= a1_high / 2 > 0`.
pub fn is_proper(bx: &ParameterBox) -> bool {
    if bx.a0.low > 0.0 {
        return true;
    }
    bx.a0.low == 0.0 && bx.a0.high == 0.0 && bx.a1.high > 0.0 && bx.b0.low >= bx.a1.high / 2.0
}

/// Upper endpoints `(b̄(x), ā(x))` with slope `b1_low` for `x < 0` and `b1_high` for `x >= 0`.
pub fn extremal_coefficients(bx: &ParameterBox, x: f64) -> ExtremalCoefficients {
    let slope = if x < 0.0 { bx.b1.low } else { bx.b1.high };
    ExtremalCoefficients {
        drift: bx.b0.high + slope * x,
        variance: bx.a0.high + bx.a1.high * x.max(0.0),
    }
}

/// The state-independent upper slope, when it exists on `space`.
pub fn upper_slope(bx: &ParameterBox, space: StateSpace) -> Result<f64> {
    if space.is_nonnegative() || bx.b1.is_degenerate() {
        Ok(bx.b1.high)
    } else {
        Err(Error::NotConstantSlope { low: bx.b1.low, high: bx.b1.high })
    }
}

/// Constant-parameter model attaining the supremum of `E[exp(-∫ X ds)]` over
/// the box, for coefficient sign pattern `psi <= 0`.
///
/// With `psi <= 0` the Hamiltonian `½ a ψ² + b ψ` is maximised by the largest
/// variance and the smallest drift. The slope choice only depends on `x` through
/// its sign, so it is state-independent on nonnegative spaces; on the real line
/// it requires a degenerate slope interval.
pub fn price_maximising_model(bx: &ParameterBox, space: StateSpace) -> Result<CornerParameter> {
    bx.validate()?;
    upper_slope(bx, space)?;
    Ok(CornerParameter {
        b0: bx.b0.argmax_linear(-1.0),
        b1: bx.b1.argmax_linear(-1.0),
        a0: bx.a0.high,
        a1: bx.a1.high,
    })
}

/// Cartesian grid of equally spaced coefficient values, endpoints included.
pub fn corner_grid(bx: &ParameterBox, resolution: usize) -> Vec<CornerParameter> {
    let b0 = bx.b0.grid(resolution);
    let b1 = bx.b1.grid(resolution);
    let a0 = bx.a0.grid(resolution);
    let a1 = bx.a1.grid(resolution);
    let mut out = Vec::with_capacity(b0.len() * b1.len() * a0.len() * a1.len());
    for &p in &b0 {
        for &q in &b1 {
            for &r in &a0 {
                for &s in &a1 {
                    out.push(CornerParameter { b0: p, b1: q, a0: r, a1: s });
                }
            }
        }
    }
    out
}
