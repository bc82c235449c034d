//! Simple trading strategies on the extended market `(S, S^Y)` and the
//! statistical checks behind the no-arbitrage argument.
//!
//! "Quasi-surely" is proxied by "on every simulated path under every simulated
//! measure", and expectation inequalities get a one-sided slack of
//! [`SLACK_SIGMAS`] standard errors.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{corner_grid, CornerParameter, ParameterBox, StateSpace};
use crate::riccati::{upper_bond_price, RiccatiSolution};
use crate::rng::{stream, Purpose};
use crate::sim::{
    hazard_integral, mc_bond_estimate, simulate_corner, simulate_extremal, McEstimate, PathEnsemble,
};

pub const SLACK_SIGMAS: f64 = 3.0;

/// Relative allowance for floating-point rounding in pathwise and mean comparisons.
pub const ROUNDING: f64 = 1e-12;

/// Holdings in the asset `S` and the claim `S^Y` over one rebalancing interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub asset: f64,
    pub claim: f64,
}

/// `H = Σ h_i 1_{(τ_{i−1}, τ_i]}` with deterministic rebalance dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleStrategy {
    pub rebalance_times: Vec<f64>,
    pub holdings: Vec<Holding>,
}

impl SimpleStrategy {
    pub fn new(rebalance_times: Vec<f64>, holdings: Vec<Holding>) -> Result<Self> {
        let s = Self { rebalance_times, holdings };
        s.validate()?;
        Ok(s)
    }

    /// Hold nothing on `[0, horizon]`.
    pub fn zero(horizon: f64) -> Self {
        Self { rebalance_times: vec![0.0, horizon], holdings: vec![Holding { asset: 0.0, claim: 0.0 }] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.holdings.is_empty() {
            return Err(Error::InvalidInput("strategy needs at least one interval".into()));
        }
        if self.rebalance_times.len() != self.holdings.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} rebalance times for {} intervals",
                self.rebalance_times.len(),
                self.holdings.len()
            )));
        }
        if self.rebalance_times[0] != 0.0 {
            return Err(Error::InvalidInput("first rebalance time must be 0".into()));
        }
        if self.rebalance_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("rebalance times must be strictly increasing".into()));
        }
        if self.holdings.iter().any(|h| !h.asset.is_finite() || !h.claim.is_finite()) {
            return Err(Error::InvalidInput("holdings must be finite".into()));
        }
        Ok(())
    }

    /// Parse rows `τ_left τ_right h_S h_Y`; consecutive rows must share their
    /// boundary and the first must start at 0. Errors carry the 1-based line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut holdings = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::InvalidInput(format!("line {}: {msg}", lineno + 1));
            let fields: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", fields.len())));
            }
            let mut nums = [0.0; 4];
            for (slot, f) in nums.iter_mut().zip(&fields) {
                *slot = f.parse::<f64>().map_err(|e| err(format!("{f:?}: {e}")))?;
                if !slot.is_finite() {
                    return Err(err(format!("{f:?} is not finite")));
                }
            }
            let [left, right, hs, hy] = nums;
            match times.last() {
                None if left != 0.0 => return Err(err("first interval must start at 0".into())),
                None => times.push(left),
                Some(&prev) if prev != left => {
                    return Err(err(format!("interval starts at {left}, previous ended at {prev}")))
                }
                Some(_) => {}
            }
            if right <= left {
                return Err(err(format!("empty interval ({left}, {right}]")));
            }
            times.push(right);
            holdings.push(Holding { asset: hs, claim: hy });
        }
        Self::new(times, holdings)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# tau_left tau_right h_S h_Y\n");
        for (w, h) in self.rebalance_times.windows(2).zip(&self.holdings) {
            out.push_str(&format!("{} {} {} {}\n", w[0], w[1], h.asset, h.claim));
        }
        out
    }
}

/// Which prior generated a market sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasureTag {
    Corner { theta: CornerParameter, asset_vol: f64 },
    Extremal { theta: CornerParameter, asset_vol: f64 },
}

impl MeasureTag {
    pub fn label(&self) -> String {
        match self {
            MeasureTag::Corner { theta, asset_vol } => format!(
                "corner(b0={},b1={},a0={},a1={};vol={})",
                theta.b0, theta.b1, theta.a0, theta.a1, asset_vol
            ),
            MeasureTag::Extremal { asset_vol, .. } => format!("extremal(vol={asset_vol})"),
        }
    }

    pub fn is_extremal(&self) -> bool {
        matches!(self, MeasureTag::Extremal { .. })
    }
}

/// Asset and claim price paths under one measure, on a shared grid.
#[derive(Debug, Clone)]
pub struct MarketPaths {
    pub time_grid: Vec<f64>,
    pub asset: Array2<f64>,
    pub claim: Array2<f64>,
    pub measure: MeasureTag,
}

impl MarketPaths {
    pub fn n_paths(&self) -> usize {
        self.asset.nrows()
    }

    /// Claim value at the last grid time, one entry per path.
    pub fn terminal_claim(&self) -> Vec<f64> {
        self.claim.column(self.claim.ncols() - 1).to_vec()
    }
}

/// Longevity bond values `S^L` at every `stride`-th node of the intensity grid,
/// together with driftless geometric asset paths at volatility `asset_vol`.
pub fn build_market(
    paths: &PathEnsemble,
    sol: &RiccatiSolution,
    maturity: f64,
    stride: usize,
    s0: f64,
    asset_vol: f64,
    seed: u64,
) -> Result<MarketPaths> {
    if stride == 0 || !(paths.time_grid.len() - 1).is_multiple_of(stride) {
        return Err(Error::GridMismatch(format!(
            "stride {stride} does not divide {} intervals",
            paths.time_grid.len() - 1
        )));
    }
    let last = *paths.time_grid.last().unwrap();
    if (last - maturity).abs() > 1e-12 * maturity.max(1.0) {
        return Err(Error::GridMismatch(format!("paths end at {last}, claim matures at {maturity}")));
    }
    if !(s0 > 0.0 && asset_vol >= 0.0) {
        return Err(Error::InvalidInput("asset needs s0 > 0 and vol >= 0".into()));
    }
    let record: Vec<usize> = (0..paths.time_grid.len()).step_by(stride).collect();
    let time_grid: Vec<f64> = record.iter().map(|&k| paths.time_grid[k]).collect();
    let mut phi = Vec::with_capacity(record.len());
    let mut psi = Vec::with_capacity(record.len());
    for &t in &time_grid {
        let tau = (maturity - t).max(0.0);
        phi.push(sol.phi(tau)?);
        psi.push(sol.psi(tau)?);
    }
    // Guards the u = 0 precondition of the bond representation.
    upper_bond_price(sol, 0.0, maturity, paths.x0)?;

    let hazard = hazard_integral(paths);
    let n_paths = paths.n_paths();
    let n_rec = record.len();
    let mut claim = Array2::<f64>::zeros((n_paths, n_rec));
    claim
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(p, mut row)| {
            for (j, &k) in record.iter().enumerate() {
                row[j] = (phi[j] + psi[j] * paths.values[[p, k]] - hazard.gamma[[p, k]]).exp();
            }
        });

    let mut asset = Array2::<f64>::zeros((n_paths, n_rec));
    asset
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(p, mut row)| {
            let mut rng = stream(seed, Purpose::Asset, p as u64);
            row[0] = s0;
            for j in 1..n_rec {
                let h = time_grid[j] - time_grid[j - 1];
                let z: f64 = rng.sample(StandardNormal);
                row[j] = row[j - 1] * (asset_vol * h.sqrt() * z - 0.5 * asset_vol * asset_vol * h).exp();
            }
        });

    let theta = paths.model.theta();
    let measure = match paths.model {
        crate::sim::ModelTag::Corner { .. } => MeasureTag::Corner { theta, asset_vol },
        crate::sim::ModelTag::Extremal { .. } => MeasureTag::Extremal { theta, asset_vol },
    };
    Ok(MarketPaths { time_grid, asset, claim, measure })
}

/// Wealth of one strategy under one measure.
#[derive(Debug, Clone)]
pub struct WealthReport {
    pub measure: MeasureTag,
    pub x0: f64,
    pub time_grid: Vec<f64>,
    /// `n_paths × n_times`.
    pub wealth: Array2<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

fn strategy_indices(strategy: &SimpleStrategy, grid: &[f64]) -> Result<Vec<usize>> {
    strategy
        .rebalance_times
        .iter()
        .map(|&t| {
            crate::sim::grid_index(grid, t)
                .map_err(|_| Error::GridMismatch(format!("rebalance time {t} is not a market grid time")))
        })
        .collect()
}

/// `X_t = x + Σ h^S_i (S_{τ_i∧t} − S_{τ_{i−1}∧t}) + Σ h^Y_i (S^Y_{τ_i∧t} − S^Y_{τ_{i−1}∧t})`
/// at every grid time on every path.
pub fn wealth_process(strategy: &SimpleStrategy, market: &MarketPaths, x0: f64) -> Result<WealthReport> {
    strategy.validate()?;
    let idx = strategy_indices(strategy, &market.time_grid)?;
    let n_times = market.time_grid.len();
    let mut wealth = Array2::<f64>::zeros((market.n_paths(), n_times));
    wealth
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(p, mut row)| {
            let s = market.asset.row(p);
            let y = market.claim.row(p);
            for k in 0..n_times {
                let mut gains_s = 0.0;
                let mut gains_y = 0.0;
                for (i, h) in strategy.holdings.iter().enumerate() {
                    let (a, b) = (idx[i].min(k), idx[i + 1].min(k));
                    gains_s += h.asset * (s[b] - s[a]);
                    gains_y += h.claim * (y[b] - y[a]);
                }
                row[k] = x0 + gains_s + gains_y;
            }
        });
    let (mean, stderr) = column_stats(&wealth);
    Ok(WealthReport { measure: market.measure, x0, time_grid: market.time_grid.clone(), wealth, mean, stderr })
}

fn column_stats(values: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    values
        .axis_iter(Axis(1))
        .map(|col| {
            let e = McEstimate::from_samples(col.iter().copied());
            (e.mean, e.stderr)
        })
        .unzip()
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: &'static str,
    pub pass: bool,
    /// Worst observed value of the check's statistic.
    pub statistic: f64,
    pub detail: String,
}

/// `X ≥ 0` on every path and time.
pub fn check_admissible(report: &WealthReport) -> Verdict {
    let min = report.wealth.iter().copied().fold(f64::INFINITY, f64::min);
    Verdict {
        check: "admissible",
        pass: min >= 0.0,
        statistic: min,
        detail: format!("minimum wealth {min} under {}", report.measure.label()),
    }
}

/// `mean(X_t) ≤ x0 + 3·stderr(X_t)` for every measure and grid time.
pub fn check_expectation_nonincrease(reports: &[WealthReport]) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::from("no reports");
    let mut pass = !reports.is_empty();
    for r in reports {
        for (k, (&m, &se)) in r.mean.iter().zip(&r.stderr).enumerate() {
            let excess = m - r.x0 - SLACK_SIGMAS * se;
            if excess > worst {
                worst = excess;
                detail = format!("t = {}: mean {m}, stderr {se} under {}", r.time_grid[k], r.measure.label());
            }
            if excess > 0.0 {
                pass = false;
            }
        }
    }
    Verdict { check: "expectation_nonincrease", pass, statistic: worst, detail }
}

/// Mean claim-price trajectory under one measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanPath {
    pub measure: MeasureTag,
    pub time_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn claim_mean_path(market: &MarketPaths) -> MeanPath {
    let (mean, stderr) = column_stats(&market.claim);
    MeanPath { measure: market.measure, time_grid: market.time_grid.clone(), mean, stderr }
}

/// Consecutive means nonincreasing up to `3·sqrt(se_k² + se_{k−1}²)`.
pub fn check_supermartingale(paths: &[MeanPath]) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::from("no measures");
    let mut pass = !paths.is_empty();
    for p in paths {
        for k in 1..p.mean.len() {
            let slack = SLACK_SIGMAS * p.stderr[k].hypot(p.stderr[k - 1]) + ROUNDING * p.mean[k - 1].abs();
            let excess = p.mean[k] - p.mean[k - 1] - slack;
            if excess > worst {
                worst = excess;
                detail = format!("t = {} under {}", p.time_grid[k], p.measure.label());
            }
            if excess > 0.0 {
                pass = false;
            }
        }
    }
    Verdict { check: "supermartingale", pass, statistic: worst, detail }
}

/// Means flat in time: `|m_k − m_0| ≤ 3·sqrt(se_k² + se_0²)` for every k.
pub fn check_martingale(paths: &[MeanPath]) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::from("no measures");
    let mut pass = !paths.is_empty();
    for p in paths {
        for k in 1..p.mean.len() {
            let slack = SLACK_SIGMAS * p.stderr[k].hypot(p.stderr[0]) + ROUNDING * p.mean[0].abs();
            let excess = (p.mean[k] - p.mean[0]).abs() - slack;
            if excess > worst {
                worst = excess;
                detail = format!("t = {} under {}", p.time_grid[k], p.measure.label());
            }
            if excess > 0.0 {
                pass = false;
            }
        }
    }
    Verdict { check: "martingale", pass, statistic: worst, detail }
}

/// Which holdings must be nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetSelector {
    Asset,
    Claim,
    Both,
}

pub fn check_no_short_sale(strategy: &SimpleStrategy, which: AssetSelector) -> Verdict {
    let worst = strategy
        .holdings
        .iter()
        .map(|h| match which {
            AssetSelector::Asset => h.asset,
            AssetSelector::Claim => h.claim,
            AssetSelector::Both => h.asset.min(h.claim),
        })
        .fold(f64::INFINITY, f64::min);
    Verdict {
        check: "no_short_sale",
        pass: worst >= 0.0,
        statistic: worst,
        detail: format!("smallest selected holding {worst}"),
    }
}

/// The operator price never exceeds the initial capital of a verified superhedge.
///
/// The candidate `(capital, strategy)` must dominate the terminal claim value
/// on every path of every market (up to [`ROUNDING`]),
/// otherwise it is rejected with [`Error::NotASuperhedge`].
pub fn check_superhedge_dominates(
    price: f64,
    capital: f64,
    strategy: &SimpleStrategy,
    markets: &[MarketPaths],
) -> Result<Verdict> {
    let mut min_margin = f64::INFINITY;
    for m in markets {
        let report = wealth_process(strategy, m, capital)?;
        let last = report.time_grid.len() - 1;
        for (p, (&w, &pay)) in report.wealth.column(last).iter().zip(m.claim.column(last)).enumerate() {
            let margin = w - pay;
            if margin < -ROUNDING * pay.abs().max(1.0) {
                return Err(Error::NotASuperhedge { path: p, shortfall: -margin });
            }
            min_margin = min_margin.min(margin);
        }
    }
    Ok(Verdict {
        check: "superhedge_dominates",
        pass: price <= capital,
        statistic: price - capital,
        detail: format!("price {price}, superhedging capital {capital}, smallest margin {min_margin}"),
    })
}

/// Random strategy family on `grid`: 1–4 intervals at grid dates, holdings in
/// `[0, max_holding]` (or `[−max_holding, max_holding]` when `allow_short`).
pub fn random_strategies(
    count: usize,
    grid: &[f64],
    max_holding: f64,
    allow_short: bool,
    seed: u64,
) -> Vec<SimpleStrategy> {
    let n_nodes = grid.len();
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, Purpose::Strategy, i as u64);
            let interior = n_nodes.saturating_sub(2);
            let cuts = rng.random_range(0..=3usize).min(interior);
            let mut picks: Vec<usize> = sample(&mut rng, interior.max(1), cuts).into_iter().map(|j| j + 1).collect();
            picks.sort_unstable();
            let mut times = vec![grid[0]];
            times.extend(picks.iter().map(|&j| grid[j]));
            times.push(grid[n_nodes - 1]);
            let low = if allow_short { -max_holding } else { 0.0 };
            let holdings = (0..times.len() - 1)
                .map(|_| Holding {
                    asset: rng.random_range(low..=max_holding),
                    claim: rng.random_range(low..=max_holding),
                })
                .collect();
            SimpleStrategy { rebalance_times: times, holdings }
        })
        .collect()
}

/// Search for an arbitrage of the first kind in a strategy family with zero
/// initial capital: an admissible strategy whose terminal wealth is
/// nonnegative everywhere and positive with nonzero frequency under every
/// measure. Passing is a certificate over the family only.
pub fn na1_probe(strategies: &[SimpleStrategy], markets: &[MarketPaths]) -> Result<Verdict> {
    let mut admissible = 0usize;
    for (i, s) in strategies.iter().enumerate() {
        let mut is_admissible = true;
        let mut positive_everywhere = true;
        for m in markets {
            let r = wealth_process(s, m, 0.0)?;
            if !check_admissible(&r).pass {
                is_admissible = false;
                break;
            }
            let last = r.time_grid.len() - 1;
            if !r.wealth.column(last).iter().any(|&w| w > 0.0) {
                positive_everywhere = false;
            }
        }
        if is_admissible {
            admissible += 1;
            if positive_everywhere && !markets.is_empty() {
                return Ok(Verdict {
                    check: "na1_probe",
                    pass: false,
                    statistic: i as f64,
                    detail: format!("strategy {i} is an arbitrage of the first kind on the sample"),
                });
            }
        }
    }
    Ok(Verdict {
        check: "na1_probe",
        pass: true,
        statistic: admissible as f64,
        detail: format!("{admissible} of {} strategies admissible at zero capital; none arbitrage", strategies.len()),
    })
}

/// Settings for [`simulate_markets`].
#[derive(Debug, Clone, Copy)]
pub struct MarketSettings {
    pub x0: f64,
    pub maturity: f64,
    pub dt: f64,
    pub stride: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub corner_resolution: usize,
    pub s0: f64,
    pub asset_vol_low: f64,
    pub asset_vol_high: f64,
}

/// Markets under every corner of the intensity grid crossed with both asset
/// volatility endpoints, plus the extremal intensity model at both endpoints.
pub fn simulate_markets(
    bx: &ParameterBox,
    space: StateSpace,
    sol: &RiccatiSolution,
    settings: MarketSettings,
) -> Result<Vec<MarketPaths>> {
    let mut vols = vec![settings.asset_vol_low];
    if settings.asset_vol_high != settings.asset_vol_low {
        vols.push(settings.asset_vol_high);
    }
    let mut ensembles = Vec::new();
    for theta in corner_grid(bx, settings.corner_resolution) {
        ensembles.push(simulate_corner(
            theta,
            space,
            settings.x0,
            settings.maturity,
            settings.dt,
            settings.n_paths,
            settings.seed,
        )?);
    }
    ensembles.push(simulate_extremal(
        bx,
        space,
        settings.x0,
        settings.maturity,
        settings.dt,
        settings.n_paths,
        settings.seed,
    )?);
    let mut out = Vec::with_capacity(ensembles.len() * vols.len());
    for ens in &ensembles {
        for &v in &vols {
            out.push(build_market(ens, sol, settings.maturity, settings.stride, settings.s0, v, settings.seed)?);
        }
    }
    Ok(out)
}

/// Monte Carlo bond price of one corner model against the worst-case price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceRow {
    pub theta: CornerParameter,
    pub mc: McEstimate,
    pub upper_price: f64,
    pub pass: bool,
}

/// For every corner model, `E_θ[exp(−∫_0^T μ)] ≤ p̄(0, T, x0) + 3·stderr`.
#[allow(clippy::too_many_arguments)]
pub fn corner_dominance(
    bx: &ParameterBox,
    space: StateSpace,
    sol: &RiccatiSolution,
    x0: f64,
    maturity: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    resolution: usize,
) -> Result<Vec<DominanceRow>> {
    let upper = upper_bond_price(sol, 0.0, maturity, x0)?;
    corner_grid(bx, resolution)
        .into_iter()
        .map(|theta| {
            let ens = simulate_corner(theta, space, x0, maturity, dt, n_paths, seed)?;
            let mc = mc_bond_estimate(&hazard_integral(&ens), 0.0, maturity)?;
            Ok(DominanceRow { theta, mc, upper_price: upper, pass: mc.mean <= upper + SLACK_SIGMAS * mc.stderr })
        })
        .collect()
}
