//! Versioned JSON run configuration.

use std::path::{Path, PathBuf};

use robust_affine::arbitrage::SimpleStrategy;
use robust_affine::params::CornerParameter;
use robust_affine::pricing::{AssetGrid, Coefficient};
use robust_affine::sim::uniform_grid;
use robust_affine::tabulated::Table;
use robust_affine::{ParameterBox, StateSpace};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_tol() -> f64 {
    1e-8
}

fn default_resolution() -> usize {
    3
}

fn default_one() -> f64 {
    1.0
}

fn zero_coefficient() -> Coefficient {
    Coefficient::Constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(rename = "box")]
    pub parameter_box: ParameterBox,
    pub state_space: StateSpace,
    pub horizon: f64,
    pub x0: f64,
    #[serde(default = "default_tol")]
    pub riccati_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond: Option<BondSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondSettings {
    /// Times to maturity `T − t`.
    pub maturities: Vec<f64>,
    pub states: Vec<f64>,
}

/// Which intensity model `simulate` draws from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    #[default]
    Extremal,
    Corner(CornerParameter),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub corner_resolution: usize,
    #[serde(default)]
    pub model: SimModel,
    /// Times for the Cox comparison; empty means `T/4, T/2, T`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cox_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolRange {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x_mu: f64,
    pub y_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSettings {
    pub payoff_file: PathBuf,
    pub grid: AssetGrid,
    /// Bounds on the volatility σ; the PDE uses their squares.
    pub volatility: VolRange,
    pub sigma: Coefficient,
    #[serde(default = "zero_coefficient")]
    pub drift: Coefficient,
    #[serde(default = "zero_coefficient")]
    pub qv_loading: Coefficient,
    /// Time step; defaults to 90% of the stability limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    #[serde(default)]
    pub strategy_files: Vec<PathBuf>,
    /// Additional randomly drawn no-short-sale strategies.
    #[serde(default)]
    pub random_strategies: usize,
    #[serde(default = "default_one")]
    pub max_holding: f64,
    #[serde(default = "default_one")]
    pub s0: f64,
    pub asset_vol: VolRange,
    /// Market grid keeps every `stride`-th simulation time.
    pub stride: usize,
    #[serde(default = "default_one")]
    pub capital: f64,
}

/// Which command a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PriceBond,
    Simulate,
    Check,
    PriceProduct,
}

impl Command {
    pub fn id(self) -> &'static str {
        match self {
            Command::PriceBond => "price-bond",
            Command::Simulate => "simulate",
            Command::Check => "check",
            Command::PriceProduct => "price-product",
        }
    }
}

/// Inputs read from files referenced by the configuration.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub payoff: Option<Table>,
    pub strategies: Vec<(String, SimpleStrategy)>,
}

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| cfg(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn mc(&self) -> Result<&McSettings, CliError> {
        self.mc.as_ref().ok_or_else(|| cfg("missing \"mc\" section"))
    }

    pub fn cox_times(&self) -> Vec<f64> {
        match self.mc.as_ref().map(|m| m.cox_times.clone()) {
            Some(t) if !t.is_empty() => t,
            _ => vec![0.25 * self.horizon, 0.5 * self.horizon, self.horizon],
        }
    }

    /// Simulation grid thinned to the market grid used by `check`.
    pub fn market_grid(&self) -> Result<Vec<f64>, CliError> {
        let mc = self.mc()?;
        let check = self.check.as_ref().ok_or_else(|| cfg("missing \"check\" section"))?;
        let grid = uniform_grid(self.horizon, mc.dt).map_err(|e| cfg(format!("mc.dt: {e}")))?;
        if check.stride == 0 || (grid.len() - 1) % check.stride != 0 {
            return Err(cfg(format!(
                "check.stride {} must divide the {} simulation steps",
                check.stride,
                grid.len() - 1
            )));
        }
        Ok(grid.into_iter().step_by(check.stride).collect())
    }

    /// Check every constraint for `command` and read referenced files. Relative
    /// paths resolve against `base`, the directory of the config file.
    pub fn validate(&self, command: Command, base: &Path) -> Result<Loaded, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.parameter_box.validate().map_err(|e| cfg(e.to_string()))?;
        finite_positive("horizon", self.horizon)?;
        if !self.state_space.contains(self.x0) {
            return Err(cfg(format!("x0 = {} outside the state space", self.x0)));
        }
        if !(self.riccati_tol > 0.0 && self.riccati_tol <= 1e-3) {
            return Err(cfg(format!("riccati_tol {} outside (0, 1e-3]", self.riccati_tol)));
        }
        let mut loaded = Loaded::default();
        match command {
            Command::PriceBond => {
                let bond = self.bond.as_ref().ok_or_else(|| cfg("missing \"bond\" section"))?;
                if bond.maturities.is_empty() {
                    return Err(cfg("bond.maturities is empty"));
                }
                if bond.states.is_empty() {
                    return Err(cfg("bond.states is empty"));
                }
                for &m in &bond.maturities {
                    if !(m >= 0.0 && m.is_finite()) {
                        return Err(cfg(format!("maturity {m} must be nonnegative")));
                    }
                }
                if let Some(x) = bond.states.iter().find(|&&x| !self.state_space.contains(x)) {
                    return Err(cfg(format!("state {x} outside the state space")));
                }
            }
            Command::Simulate => {
                self.validate_mc()?;
                let grid = uniform_grid(self.horizon, self.mc()?.dt).map_err(|e| cfg(e.to_string()))?;
                for t in self.cox_times() {
                    if !on_grid(&grid, t) {
                        return Err(cfg(format!("cox time {t} is not a simulation grid time")));
                    }
                }
            }
            Command::Check => {
                self.validate_mc()?;
                let check = self.check.as_ref().ok_or_else(|| cfg("missing \"check\" section"))?;
                finite_positive("check.s0", check.s0)?;
                finite_positive("check.max_holding", check.max_holding)?;
                if !(0.0 <= check.asset_vol.low && check.asset_vol.low <= check.asset_vol.high)
                    || !check.asset_vol.high.is_finite()
                {
                    return Err(cfg("check.asset_vol needs 0 <= low <= high"));
                }
                if !check.capital.is_finite() {
                    return Err(cfg("check.capital must be finite"));
                }
                let grid = self.market_grid()?;
                for file in &check.strategy_files {
                    let path = base.join(file);
                    let text = std::fs::read_to_string(&path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
                    let s = SimpleStrategy::parse(&text).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
                    for &t in &s.rebalance_times {
                        if !on_grid(&grid, t) {
                            return Err(cfg(format!(
                                "{}: rebalance time {t} is not a market grid time",
                                path.display()
                            )));
                        }
                    }
                    loaded.strategies.push((file.display().to_string(), s));
                }
                if loaded.strategies.is_empty() && check.random_strategies == 0 {
                    return Err(cfg("check needs strategy_files or random_strategies"));
                }
            }
            Command::PriceProduct => {
                let pde = self.pde.as_ref().ok_or_else(|| cfg("missing \"pde\" section"))?;
                let path = base.join(&pde.payoff_file);
                let text = std::fs::read_to_string(&path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
                let payoff = Table::parse(&text).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
                let v = pde.volatility;
                if !(0.0 <= v.low && v.low <= v.high && v.high.is_finite()) {
                    return Err(cfg("pde.volatility needs 0 <= low <= high"));
                }
                if let Some(dt) = pde.dt {
                    finite_positive("pde.dt", dt)?;
                }
                let g = pde.grid;
                if g.nodes < 3 || !(g.lower < g.upper) || !g.upper.is_finite() || !g.lower.is_finite() {
                    return Err(cfg("pde.grid needs lower < upper and at least 3 nodes"));
                }
                if pde.probes.is_empty() {
                    return Err(cfg("pde.probes is empty"));
                }
                for p in &pde.probes {
                    if !(0.0..=self.horizon).contains(&p.t) {
                        return Err(cfg(format!("probe time {} outside [0, {}]", p.t, self.horizon)));
                    }
                    if !(g.lower..=g.upper).contains(&p.y_s) {
                        return Err(cfg(format!("probe asset state {} outside the grid", p.y_s)));
                    }
                    if !self.state_space.contains(p.x_mu) {
                        return Err(cfg(format!("probe intensity {} outside the state space", p.x_mu)));
                    }
                }
                loaded.payoff = Some(payoff);
            }
        }
        Ok(loaded)
    }

    fn validate_mc(&self) -> Result<(), CliError> {
        let mc = self.mc()?;
        if mc.n_paths == 0 {
            return Err(cfg("mc.n_paths must be positive"));
        }
        if mc.corner_resolution == 0 {
            return Err(cfg("mc.corner_resolution must be positive"));
        }
        uniform_grid(self.horizon, mc.dt).map_err(|e| cfg(format!("mc.dt: {e}")))?;
        if let SimModel::Corner(theta) = mc.model {
            if !self.parameter_box.contains(&theta) {
                return Err(cfg("mc.model corner lies outside the box"));
            }
        }
        Ok(())
    }
}

fn on_grid(grid: &[f64], t: f64) -> bool {
    let tol = 1e-9 * grid.last().copied().unwrap_or(1.0).max(1.0);
    grid.iter().any(|&g| (g - t).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "box": {"b0": {"low": 0, "high": 0}, "b1": {"low": 0, "high": 0},
                "a0": {"low": 0, "high": 0}, "a1": {"low": 0, "high": 0}},
        "state_space": "non_negative",
        "horizon": 1,
        "x0": 0.02,
        "bond": {"maturities": [0.5, 1], "states": [0.02]}
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let b = RunConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let bad = MINIMAL.replace("\"horizon\"", "\"horizn\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Config(_))));
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.schema_version = 2;
        assert!(c.validate(Command::PriceBond, Path::new(".")).is_err());
    }

    #[test]
    fn empty_maturities_rejected() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.bond.as_mut().unwrap().maturities.clear();
        assert!(matches!(c.validate(Command::PriceBond, Path::new(".")), Err(CliError::Config(_))));
    }
}
