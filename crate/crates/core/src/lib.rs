//! Worst-case valuation of longevity and credit-linked claims when the
//! mortality or default intensity follows an affine diffusion whose
//! coefficients are only known to lie in a box.
//!
//! - [`params`]: parameter boxes, coefficient intervals, corner models
//! - [`riccati`]: generalized Riccati equations and worst-case bond prices
//! - [`sim`]: intensity path simulation, hazard integrals, Cox default times
//! - [`pricing`]: pure endowments, the G-PDE asset leg, product claims
//! - [`arbitrage`]: wealth processes of simple strategies and statistical checks

pub mod arbitrage;
pub mod error;
pub mod params;
pub mod pricing;
pub mod riccati;
mod rng;
pub mod sim;
pub mod tabulated;

pub use error::{Error, Result};
pub use params::{CornerParameter, Interval, ParameterBox, StateSpace};
pub use riccati::RiccatiSolution;
