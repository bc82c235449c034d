use std::collections::BTreeMap;
use std::time::Instant;

use robust_affine::arbitrage::{
    check_admissible, check_expectation_nonincrease, check_martingale, check_no_short_sale,
    check_superhedge_dominates, check_supermartingale, claim_mean_path, na1_probe, random_strategies,
    simulate_markets, wealth_process, AssetSelector, MarketSettings, SimpleStrategy, Verdict,
};
use robust_affine::pricing::{product_claim_value, solve_g_pde, GPdeProblem, VolBounds};
use robust_affine::riccati::{solve_riccati, upper_bond_price};
use robust_affine::sim::{
    cox_consistency, cox_default_times, hazard_integral, mc_bond_estimate, simulate_corner, simulate_extremal,
    McEstimate,
};
use robust_affine::Error;

use crate::config::{Loaded, RunConfig, SimModel};
use crate::output::{Cell, CsvTable, ReportVerdict};
use crate::CliError;

/// Tables, verdicts and stage timings produced by one command.
#[derive(Default)]
pub struct Outcome {
    pub tables: Vec<CsvTable>,
    pub verdicts: Vec<ReportVerdict>,
    pub timings: BTreeMap<String, f64>,
}

impl Outcome {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }

    fn verdict(&mut self, v: Verdict, subject: impl Into<String>, asserted: bool) {
        self.verdicts.push(ReportVerdict {
            check: v.check.to_string(),
            subject: subject.into(),
            asserted,
            pass: v.pass,
            statistic: v.statistic,
            detail: v.detail,
        });
    }
}

pub fn price_bond(config: &RunConfig) -> Result<Outcome, CliError> {
    let bond = config.bond.as_ref().expect("validated");
    let horizon = bond.maturities.iter().copied().fold(config.horizon, f64::max);
    let mut out = Outcome::default();
    let sol = out.time("riccati", || {
        solve_riccati(&config.parameter_box, config.state_space, horizon, 0.0, config.riccati_tol)
    })?;
    let mut table = CsvTable::new("bond_prices", &["time_to_maturity", "x", "upper_price"]);
    for &m in &bond.maturities {
        for &x in &bond.states {
            table.push(vec![Cell::F(m), Cell::F(x), Cell::F(upper_bond_price(&sol, 0.0, m, x)?)]);
        }
    }
    out.tables.push(table);
    Ok(out)
}

pub fn simulate(config: &RunConfig) -> Result<Outcome, CliError> {
    let mc = config.mc.as_ref().expect("validated");
    let (bx, space) = (&config.parameter_box, config.state_space);
    let mut out = Outcome::default();
    let ens = out.time("simulate", || match mc.model {
        SimModel::Extremal => simulate_extremal(bx, space, config.x0, config.horizon, mc.dt, mc.n_paths, mc.seed),
        SimModel::Corner(theta) => {
            simulate_corner(theta, space, config.x0, config.horizon, mc.dt, mc.n_paths, mc.seed)
        }
    })?;
    let state_stats: Vec<(McEstimate, f64, f64)> = ens
        .values
        .columns()
        .into_iter()
        .map(|c| {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (McEstimate::from_samples(c.iter().copied()), lo, hi)
        })
        .collect();
    let hazard = hazard_integral(&ens);
    drop(ens);

    let bond = mc_bond_estimate(&hazard, 0.0, config.horizon)?;
    let sol = out.time("riccati", || solve_riccati(bx, space, config.horizon, 0.0, config.riccati_tol))?;
    let upper = upper_bond_price(&sol, 0.0, config.horizon, config.x0)?;

    let sample = out.time("cox", || cox_default_times(&hazard, mc.seed));
    let mut paths = CsvTable::new(
        "paths",
        &["t", "mean_x", "stderr_x", "min_x", "max_x", "mean_survivor_index", "stderr_survivor_index"],
    );
    for (k, (&t, (est, lo, hi))) in hazard.time_grid.iter().zip(&state_stats).enumerate() {
        let surv = McEstimate::from_samples(sample.survivor.column(k).iter().copied());
        paths.push(vec![
            Cell::F(t),
            Cell::F(est.mean),
            Cell::F(est.stderr),
            Cell::F(*lo),
            Cell::F(*hi),
            Cell::F(surv.mean),
            Cell::F(surv.stderr),
        ]);
    }

    let rows = cox_consistency(&sample, &hazard.time_grid, &config.cox_times(), 3.0)?;
    let mut cox = CsvTable::new(
        "cox",
        &["t", "empirical_survival", "mean_survivor_index", "combined_stderr", "pass"],
    );
    for r in &rows {
        cox.push(vec![
            Cell::F(r.t),
            Cell::F(r.empirical_survival),
            Cell::F(r.mean_survivor_index),
            Cell::F(r.combined_stderr),
            Cell::B(r.pass),
        ]);
        out.verdicts.push(ReportVerdict {
            check: "cox_consistency".into(),
            subject: format!("t = {}", r.t),
            asserted: true,
            pass: r.pass,
            statistic: (r.empirical_survival - r.mean_survivor_index).abs(),
            detail: format!("tolerance {}", 3.0 * r.combined_stderr),
        });
    }

    let mut bond_table = CsvTable::new("bond", &["maturity", "mc_mean", "mc_stderr", "upper_price"]);
    bond_table.push(vec![Cell::F(config.horizon), Cell::F(bond.mean), Cell::F(bond.stderr), Cell::F(upper)]);
    out.tables.extend([paths, cox, bond_table]);
    Ok(out)
}

pub fn check(config: &RunConfig, loaded: &Loaded) -> Result<Outcome, CliError> {
    let mc = config.mc.as_ref().expect("validated");
    let settings_in = config.check.as_ref().expect("validated");
    let (bx, space) = (&config.parameter_box, config.state_space);
    let mut out = Outcome::default();
    let sol = out.time("riccati", || solve_riccati(bx, space, config.horizon, 0.0, config.riccati_tol))?;
    let settings = MarketSettings {
        x0: config.x0,
        maturity: config.horizon,
        dt: mc.dt,
        stride: settings_in.stride,
        n_paths: mc.n_paths,
        seed: mc.seed,
        corner_resolution: mc.corner_resolution,
        s0: settings_in.s0,
        asset_vol_low: settings_in.asset_vol.low,
        asset_vol_high: settings_in.asset_vol.high,
    };
    let markets = out.time("markets", || simulate_markets(bx, space, &sol, settings))?;
    let grid = markets[0].time_grid.clone();

    let mut strategies: Vec<(String, SimpleStrategy)> = loaded.strategies.clone();
    strategies.extend(
        random_strategies(settings_in.random_strategies, &grid, settings_in.max_holding, false, mc.seed)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("random-{i}"), s)),
    );

    let mut wealth = CsvTable::new("wealth", &["strategy", "measure", "t", "mean", "stderr"]);
    let start = Instant::now();
    for (name, s) in &strategies {
        let reports = markets
            .iter()
            .map(|m| wealth_process(s, m, settings_in.capital))
            .collect::<Result<Vec<_>, Error>>()?;
        let nss = check_no_short_sale(s, AssetSelector::Both);
        let no_short = nss.pass;
        out.verdict(nss, name.clone(), false);
        let worst_adm = reports
            .iter()
            .map(check_admissible)
            .min_by(|a, b| a.statistic.total_cmp(&b.statistic))
            .expect("at least one market");
        out.verdict(worst_adm, name.clone(), false);
        // Only long-only strategies are covered by the expectation guarantee.
        out.verdict(check_expectation_nonincrease(&reports), name.clone(), no_short);
        for r in &reports {
            let label = r.measure.label();
            for (k, &t) in r.time_grid.iter().enumerate() {
                wealth.push(vec![
                    Cell::S(name.clone()),
                    Cell::S(label.clone()),
                    Cell::F(t),
                    Cell::F(r.mean[k]),
                    Cell::F(r.stderr[k]),
                ]);
            }
        }
    }
    out.timings.insert("strategies".into(), start.elapsed().as_secs_f64());

    let mut means = CsvTable::new("claim_means", &["measure", "t", "mean", "stderr"]);
    for m in &markets {
        let mp = claim_mean_path(m);
        let label = m.measure.label();
        for (k, &t) in mp.time_grid.iter().enumerate() {
            means.push(vec![Cell::S(label.clone()), Cell::F(t), Cell::F(mp.mean[k]), Cell::F(mp.stderr[k])]);
        }
        let v = if m.measure.is_extremal() {
            check_martingale(std::slice::from_ref(&mp))
        } else {
            check_supermartingale(std::slice::from_ref(&mp))
        };
        out.verdict(v, label, true);
    }

    let plain: Vec<SimpleStrategy> = strategies.iter().map(|(_, s)| s.clone()).collect();
    out.verdict(na1_probe(&plain, &markets)?, "all strategies", true);

    let price = upper_bond_price(&sol, 0.0, config.horizon, config.x0)?;
    let static_cost = markets
        .iter()
        .flat_map(|m| m.terminal_claim())
        .fold(f64::NEG_INFINITY, f64::max);
    let zero = SimpleStrategy::zero(config.horizon);
    out.verdict(
        check_superhedge_dominates(price, static_cost, &zero, &markets)?,
        "static superhedge at the largest simulated payoff",
        true,
    );

    let mut checks = CsvTable::new("checks", &["check", "subject", "asserted", "pass", "statistic"]);
    for v in &out.verdicts {
        checks.push(vec![
            Cell::S(v.check.clone()),
            Cell::S(csv_safe(&v.subject)),
            Cell::B(v.asserted),
            Cell::B(v.pass),
            Cell::F(v.statistic),
        ]);
    }
    out.tables.extend([checks, means, wealth]);
    Ok(out)
}

/// Labels contain commas; swap them for semicolons to keep the CSV flat.
fn csv_safe(s: &str) -> String {
    s.replace(',', ";")
}

pub fn price_product(config: &RunConfig, loaded: &Loaded) -> Result<Outcome, CliError> {
    let pde = config.pde.as_ref().expect("validated");
    let mut out = Outcome::default();
    let sol = out.time("riccati", || {
        solve_riccati(&config.parameter_box, config.state_space, config.horizon, 0.0, config.riccati_tol)
    })?;
    let mut problem = GPdeProblem {
        payoff: loaded.payoff.clone().expect("validated"),
        drift: pde.drift.clone(),
        qv_loading: pde.qv_loading.clone(),
        sigma: pde.sigma.clone(),
        vol_bounds: VolBounds::new(pde.volatility.low.powi(2), pde.volatility.high.powi(2))?,
        grid: pde.grid,
        maturity: config.horizon,
        dt: config.horizon,
    };
    problem.dt = match pde.dt {
        Some(dt) => dt,
        None => (0.9 * problem.max_stable_dt()).min(config.horizon),
    };
    let surface = out.time("g_pde", || solve_g_pde(&problem))?;

    let mut product = CsvTable::new(
        "product",
        &["t", "x_mu", "y_s", "intensity_factor", "asset_factor", "value"],
    );
    for p in &pde.probes {
        let v = product_claim_value(p.t, p.x_mu, &sol, &surface, p.y_s, config.horizon)?;
        product.push(vec![
            Cell::F(p.t),
            Cell::F(p.x_mu),
            Cell::F(p.y_s),
            Cell::F(v.intensity_factor),
            Cell::F(v.asset_factor),
            Cell::F(v.value),
        ]);
    }
    let mut asset = CsvTable::new("asset_values", &["y", "value_at_0"]);
    for (j, &y) in surface.asset_grid.iter().enumerate() {
        asset.push(vec![Cell::F(y), Cell::F(surface.values[[0, j]])]);
    }
    out.tables.extend([product, asset]);
    Ok(out)
}
