use robust_affine::arbitrage::{
    check_admissible, check_expectation_nonincrease, check_martingale, check_no_short_sale,
    check_superhedge_dominates, check_supermartingale, claim_mean_path, corner_dominance, na1_probe,
    random_strategies, simulate_markets, wealth_process, AssetSelector, Holding, MarketSettings, SimpleStrategy,
};
use robust_affine::pricing::pure_endowment_price;
use robust_affine::riccati::{solve_riccati, upper_bond_price};
use robust_affine::sim::{hazard_integral, mc_bond_estimate, simulate_corner, simulate_extremal};
use robust_affine::{CornerParameter, Error, Interval, ParameterBox, StateSpace};

fn vasicek_box() -> ParameterBox {
    ParameterBox::new(
        Interval::new(0.01, 0.04),
        Interval::point(-0.3),
        Interval::new(0.0001, 0.0004),
        Interval::point(0.0),
    )
    .unwrap()
}

fn cir_box() -> ParameterBox {
    ParameterBox::new(
        Interval::new(0.02, 0.05),
        Interval::new(-0.5, -0.3),
        Interval::point(0.0),
        Interval::new(0.01, 0.02),
    )
    .unwrap()
}

fn settings(n_paths: usize, seed: u64) -> MarketSettings {
    MarketSettings {
        x0: 0.05,
        maturity: 1.0,
        dt: 0.01,
        stride: 10,
        n_paths,
        seed,
        corner_resolution: 2,
        s0: 1.0,
        asset_vol_low: 0.1,
        asset_vol_high: 0.3,
    }
}

#[test]
fn extremal_mc_matches_riccati() {
    for (bx, space) in [(vasicek_box(), StateSpace::RealLine), (cir_box(), StateSpace::NonNegative)] {
        let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
        let upper = upper_bond_price(&sol, 0.0, 1.0, 0.05).unwrap();
        let ens = simulate_extremal(&bx, space, 0.05, 1.0, 0.002, 20_000, 11).unwrap();
        let mc = mc_bond_estimate(&hazard_integral(&ens), 0.0, 1.0).unwrap();
        assert!((mc.mean - upper).abs() <= 3.0 * mc.stderr, "{space:?}: {} vs {upper} ± {}", mc.mean, mc.stderr);
    }
}

#[test]
fn corners_never_beat_the_upper_price() {
    for (bx, space) in [(vasicek_box(), StateSpace::RealLine), (cir_box(), StateSpace::NonNegative)] {
        let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
        let rows = corner_dominance(&bx, space, &sol, 0.05, 1.0, 0.01, 4000, 5, 3).unwrap();
        assert!(rows.len() >= 9);
        for r in rows {
            assert!(r.pass, "{r:?}");
        }
    }
}

#[test]
fn corner_mc_is_below_extremal_mc() {
    let (bx, space) = (cir_box(), StateSpace::NonNegative);
    let ext = simulate_extremal(&bx, space, 0.05, 1.0, 0.01, 8000, 2).unwrap();
    let e = mc_bond_estimate(&hazard_integral(&ext), 0.0, 1.0).unwrap();
    for theta in robust_affine::params::corner_grid(&bx, 2) {
        let ens = simulate_corner(theta, space, 0.05, 1.0, 0.01, 8000, 2).unwrap();
        let c = mc_bond_estimate(&hazard_integral(&ens), 0.0, 1.0).unwrap();
        assert!(c.mean <= e.mean + 3.0 * c.stderr.hypot(e.stderr), "{theta:?}: {} > {}", c.mean, e.mean);
    }
}

#[test]
fn endowment_with_unit_payout_is_the_bond() {
    let sol = solve_riccati(&cir_box(), StateSpace::NonNegative, 2.0, 0.0, 1e-9).unwrap();
    for &(t, x) in &[(0.0, 0.05), (0.5, 0.0), (1.5, 0.2)] {
        let bond = upper_bond_price(&sol, t, 2.0, x).unwrap();
        assert_eq!(pure_endowment_price(&sol, t, 2.0, x, false, 1.0).unwrap(), bond);
        assert_eq!(pure_endowment_price(&sol, t, 2.0, x, true, 1.0).unwrap(), 0.0);
    }
}

#[test]
fn supermartingale_suite() {
    for (bx, space) in [(vasicek_box(), StateSpace::RealLine), (cir_box(), StateSpace::NonNegative)] {
        let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
        let markets = simulate_markets(&bx, space, &sol, settings(4000, 8)).unwrap();
        let (ext, corners): (Vec<_>, Vec<_>) = markets.iter().partition(|m| m.measure.is_extremal());
        let corner_means: Vec<_> = corners.iter().map(|m| claim_mean_path(m)).collect();
        let ext_means: Vec<_> = ext.iter().map(|m| claim_mean_path(m)).collect();
        assert!(check_supermartingale(&corner_means).pass, "{space:?}");
        assert!(check_martingale(&ext_means).pass, "{space:?}");
    }
}

#[test]
fn deterministic_intensity_claim_is_constant() {
    let bx = ParameterBox::degenerate(CornerParameter { b0: 0.0, b1: 0.0, a0: 0.0, a1: 0.0 });
    let sol = solve_riccati(&bx, StateSpace::NonNegative, 1.0, 0.0, 1e-10).unwrap();
    let mut s = settings(16, 1);
    s.x0 = 0.02;
    let markets = simulate_markets(&bx, StateSpace::NonNegative, &sol, s).unwrap();
    for m in &markets {
        let mp = claim_mean_path(m);
        let v = check_supermartingale(std::slice::from_ref(&mp));
        assert!(v.pass, "{v:?} {:?}", mp.mean);
        for &v in &mp.mean {
            assert!((v - mp.mean[0]).abs() < 1e-14);
        }
    }
    // Price itself as capital with the zero strategy: boundary pass.
    let price = upper_bond_price(&sol, 0.0, 1.0, 0.02).unwrap();
    let v = check_superhedge_dominates(price, price, &SimpleStrategy::zero(1.0), &markets).unwrap();
    assert!(v.pass);
    assert_eq!(v.statistic, 0.0);
}

#[test]
fn long_only_family_keeps_expectations() {
    let (bx, space) = (vasicek_box(), StateSpace::RealLine);
    let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
    let markets = simulate_markets(&bx, space, &sol, settings(4000, 21)).unwrap();
    let family = random_strategies(100, &markets[0].time_grid, 1.0, false, 21);
    for s in &family {
        assert!(check_no_short_sale(s, AssetSelector::Both).pass);
        let reports: Vec<_> = markets.iter().map(|m| wealth_process(s, m, 1.0).unwrap()).collect();
        for r in &reports {
            assert!(r.wealth.column(0).iter().all(|&w| w == 1.0));
        }
        let v = check_expectation_nonincrease(&reports);
        assert!(v.pass, "{s:?}: {}", v.detail);
    }
    let na1 = na1_probe(&family, &markets).unwrap();
    assert!(na1.pass, "{}", na1.detail);
}

#[test]
fn buy_and_hold_claim_is_not_admissible_without_capital() {
    let (bx, space) = (vasicek_box(), StateSpace::RealLine);
    let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
    let markets = simulate_markets(&bx, space, &sol, settings(2000, 3)).unwrap();
    let hold = SimpleStrategy::new(vec![0.0, 1.0], vec![Holding { asset: 0.0, claim: 1.0 }]).unwrap();
    let any_negative = markets
        .iter()
        .any(|m| !check_admissible(&wealth_process(&hold, m, 0.0).unwrap()).pass);
    assert!(any_negative);
}

#[test]
fn superhedge_below_corner_price_is_rejected() {
    let (bx, space) = (vasicek_box(), StateSpace::RealLine);
    let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
    let markets = simulate_markets(&bx, space, &sol, settings(2000, 4)).unwrap();
    let zero = SimpleStrategy::zero(1.0);
    let price = upper_bond_price(&sol, 0.0, 1.0, 0.05).unwrap();
    assert!(check_superhedge_dominates(price, 1.0, &zero, &markets).unwrap().pass);
    let corner_max = markets
        .iter()
        .filter(|m| !m.measure.is_extremal())
        .map(|m| claim_mean_path(m).mean.last().copied().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(matches!(
        check_superhedge_dominates(price, corner_max - 0.01, &zero, &markets),
        Err(Error::NotASuperhedge { .. })
    ));
}

#[test]
fn shorting_the_claim_under_the_extremal_measure_is_reported() {
    // Under the extremal model the claim price is a martingale, so a short
    // position is not expected to be rejected; only the report is checked.
    let (bx, space) = (vasicek_box(), StateSpace::RealLine);
    let sol = solve_riccati(&bx, space, 1.0, 0.0, 1e-9).unwrap();
    let markets = simulate_markets(&bx, space, &sol, settings(2000, 6)).unwrap();
    let short = SimpleStrategy::new(vec![0.0, 1.0], vec![Holding { asset: 0.0, claim: -1.0 }]).unwrap();
    assert!(!check_no_short_sale(&short, AssetSelector::Claim).pass);
    let ext: Vec<_> = markets
        .iter()
        .filter(|m| m.measure.is_extremal())
        .map(|m| wealth_process(&short, m, 1.0).unwrap())
        .collect();
    let v = check_expectation_nonincrease(&ext);
    assert!(v.statistic.is_finite());
}

#[test]
fn simulation_is_reproducible() {
    let bx = cir_box();
    let a = simulate_extremal(&bx, StateSpace::NonNegative, 0.05, 1.0, 0.01, 300, 99).unwrap();
    let b = simulate_extremal(&bx, StateSpace::NonNegative, 0.05, 1.0, 0.01, 300, 99).unwrap();
    assert_eq!(a.values, b.values);
    let sol = solve_riccati(&bx, StateSpace::NonNegative, 1.0, 0.0, 1e-9).unwrap();
    let m1 = simulate_markets(&bx, StateSpace::NonNegative, &sol, settings(100, 99)).unwrap();
    let m2 = simulate_markets(&bx, StateSpace::NonNegative, &sol, settings(100, 99)).unwrap();
    for (x, y) in m1.iter().zip(&m2) {
        assert_eq!(x.asset, y.asset);
        assert_eq!(x.claim, y.claim);
    }
}
