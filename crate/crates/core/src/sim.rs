//! Intensity path simulation and the Cox default-time construction.
//!
//! Paths follow `dX = (b0 + b1 X) dt + sqrt(a0 + a1 X^+) dW` discretised by
//! Euler–Maruyama with full truncation on nonnegative state spaces. The hazard
//! process is the trapezoid integral of the path, and default happens at the
//! first time it reaches `-ln ξ` for an independent uniform `ξ`.

use ndarray::{Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{price_maximising_model, CornerParameter, ParameterBox, StateSpace};
use crate::rng::{stream, Purpose};

pub const SCHEME_FULL_TRUNCATION: &str = "euler-maruyama/full-truncation";

/// Which model generated an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelTag {
    Corner { theta: CornerParameter },
    Extremal { box_: ParameterBox, theta: CornerParameter },
}

impl ModelTag {
    pub fn theta(&self) -> CornerParameter {
        match *self {
            ModelTag::Corner { theta } | ModelTag::Extremal { theta, .. } => theta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub time_grid: Vec<f64>,
    /// `n_paths × n_times`.
    pub values: Array2<f64>,
    pub x0: f64,
    pub model: ModelTag,
    pub space: StateSpace,
    pub seed: u64,
    pub scheme: &'static str,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.values.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.time_grid[1] - self.time_grid[0]
    }
}

#[derive(Debug, Clone)]
pub struct HazardEnsemble {
    pub time_grid: Vec<f64>,
    pub gamma: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DefaultTime {
    At(f64),
    BeyondHorizon,
}

impl DefaultTime {
    /// `τ̃ > t`.
    pub fn survives(&self, t: f64) -> bool {
        match *self {
            DefaultTime::At(tau) => tau > t,
            DefaultTime::BeyondHorizon => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DefaultSample {
    pub tau: Vec<DefaultTime>,
    pub xi: Vec<f64>,
    pub survivor: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl McEstimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in samples {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let stderr = if n > 1 { (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt() } else { 0.0 };
        Self { mean, stderr, n_paths: n }
    }
}

/// Simulation grid: `n` steps of exactly `horizon / n` with `n = horizon / dt`.
pub fn uniform_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(Error::InvalidStep(format!("horizon {horizon} shorter than dt {dt}")));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidStep(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| if i == n { horizon } else { horizon * i as f64 / n as f64 }).collect())
}

struct SimArgs {
    space: StateSpace,
    x0: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
}

fn simulate(theta: CornerParameter, model: ModelTag, args: SimArgs) -> Result<PathEnsemble> {
    let time_grid = uniform_grid(args.horizon, args.dt)?;
    if !args.space.contains(args.x0) {
        return Err(Error::InvalidInput(format!("x0 = {} outside {:?}", args.x0, args.space)));
    }
    if args.n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be positive".into()));
    }
    let n_times = time_grid.len();
    let truncate = args.space.is_nonnegative();
    let mut values = Array2::<f64>::zeros((args.n_paths, n_times));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(path, mut row)| {
            let mut rng = stream(args.seed, Purpose::Diffusion, path as u64);
            let mut state = args.x0;
            row[0] = args.x0;
            for i in 1..n_times {
                let h = time_grid[i] - time_grid[i - 1];
                let x = if truncate { state.max(0.0) } else { state };
                let z: f64 = rng.sample(StandardNormal);
                let var = theta.variance(x).max(0.0);
                state += theta.drift(x) * h + (var * h).sqrt() * z;
                row[i] = if truncate { state.max(0.0) } else { state };
            }
        });
    Ok(PathEnsemble {
        time_grid,
        values,
        x0: args.x0,
        model,
        space: args.space,
        seed: args.seed,
        scheme: SCHEME_FULL_TRUNCATION,
    })
}

/// Paths of a single constant-parameter model.
#[allow(clippy::too_many_arguments)]
pub fn simulate_corner(
    theta: CornerParameter,
    space: StateSpace,
    x0: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate(
        theta,
        ModelTag::Corner { theta },
        SimArgs { space, x0, horizon, dt, n_paths, seed },
    )
}

/// Paths of the model attaining the worst-case bond price over `bx`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_extremal(
    bx: &ParameterBox,
    space: StateSpace,
    x0: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let theta = price_maximising_model(bx, space)?;
    simulate(
        theta,
        ModelTag::Extremal { box_: *bx, theta },
        SimArgs { space, x0, horizon, dt, n_paths, seed },
    )
}

fn cumulative_trapezoid(grid: &[f64], row: ArrayView1<f64>, out: &mut [f64]) {
    out[0] = 0.0;
    for i in 1..grid.len() {
        out[i] = out[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (row[i] + row[i - 1]);
    }
}

/// `Γ_t = ∫_0^t μ_s ds` per path, trapezoid rule.
pub fn hazard_integral(paths: &PathEnsemble) -> HazardEnsemble {
    let mut gamma = Array2::<f64>::zeros(paths.values.raw_dim());
    let grid = &paths.time_grid;
    gamma
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(paths.values.axis_iter(Axis(0)))
        .for_each(|(mut out, row)| {
            let slice = out.as_slice_mut().expect("rows are contiguous");
            cumulative_trapezoid(grid, row, slice);
        });
    HazardEnsemble { time_grid: grid.clone(), gamma }
}

/// `exp(-Γ)` elementwise.
pub fn survivor_index(hazard: &HazardEnsemble) -> Array2<f64> {
    let mut out = hazard.gamma.clone();
    Zip::from(&mut out).par_for_each(|g| *g = (-*g).exp());
    out
}

fn first_passage(grid: &[f64], gamma: ArrayView1<f64>, level: f64) -> DefaultTime {
    if gamma[0] >= level {
        return DefaultTime::At(grid[0]);
    }
    for i in 1..grid.len() {
        if gamma[i] >= level {
            let (g0, g1) = (gamma[i - 1], gamma[i]);
            let frac = (level - g0) / (g1 - g0);
            return DefaultTime::At(grid[i - 1] + frac * (grid[i] - grid[i - 1]));
        }
    }
    DefaultTime::BeyondHorizon
}

/// Default times for given uniform draws `ξ ∈ (0, 1]`, one per path.
pub fn default_times_from_xi(hazard: &HazardEnsemble, xi: Vec<f64>) -> Result<DefaultSample> {
    if xi.len() != hazard.gamma.nrows() {
        return Err(Error::GridMismatch(format!(
            "{} draws for {} paths",
            xi.len(),
            hazard.gamma.nrows()
        )));
    }
    if let Some(bad) = xi.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::InvalidInput(format!("xi = {bad} outside (0, 1]")));
    }
    let tau = hazard
        .gamma
        .axis_iter(Axis(0))
        .into_par_iter()
        .zip(xi.par_iter())
        .map(|(row, &x)| first_passage(&hazard.time_grid, row, -x.ln()))
        .collect();
    Ok(DefaultSample { tau, xi, survivor: survivor_index(hazard) })
}

/// Cox construction `τ̃ = inf { t : Γ_t ≥ −ln ξ }` with `ξ` drawn from a
/// stream independent of the diffusion noise.
///
/// `P(τ̃ > t | μ) = exp(−Γ_t)` only while `Γ` is nondecreasing; on the real
/// line, paths with negative intensity survive with `exp(−max_{s≤t} Γ_s)`.
pub fn cox_default_times(hazard: &HazardEnsemble, seed: u64) -> DefaultSample {
    let xi: Vec<f64> = (0..hazard.gamma.nrows())
        .into_par_iter()
        .map(|path| {
            let u: f64 = stream(seed, Purpose::Xi, path as u64).random();
            1.0 - u
        })
        .collect();
    default_times_from_xi(hazard, xi).expect("draws lie in (0, 1]")
}

pub(crate) fn grid_index(grid: &[f64], t: f64) -> Result<usize> {
    let tol = 1e-9 * grid.last().copied().unwrap_or(1.0).abs().max(1.0);
    let idx = grid.partition_point(|&g| g < t - tol);
    if idx < grid.len() && (grid[idx] - t).abs() <= tol {
        Ok(idx)
    } else {
        Err(Error::OutOfRange {
            what: "grid time",
            value: t,
            min: grid[0],
            max: *grid.last().unwrap_or(&0.0),
        })
    }
}

/// Sample mean and standard error of `exp(−(Γ_T − Γ_t))`.
pub fn mc_bond_estimate(hazard: &HazardEnsemble, t: f64, maturity: f64) -> Result<McEstimate> {
    if t > maturity {
        return Err(Error::OutOfRange { what: "valuation time", value: t, min: 0.0, max: maturity });
    }
    let i = grid_index(&hazard.time_grid, t)?;
    let j = grid_index(&hazard.time_grid, maturity)?;
    let col_t = hazard.gamma.column(i);
    let col_big = hazard.gamma.column(j);
    Ok(McEstimate::from_samples(
        col_t.iter().zip(col_big.iter()).map(|(a, b)| (-(b - a)).exp()),
    ))
}

/// One row of the Cox survival-law comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoxCheckRow {
    pub t: f64,
    pub empirical_survival: f64,
    pub mean_survivor_index: f64,
    pub combined_stderr: f64,
    pub pass: bool,
}

/// Compare the empirical fraction `{τ̃ > t}` with the mean survivor index,
/// passing when they agree within `k` combined standard errors (binomial at
/// the mean survivor index, plus the survivor-index Monte Carlo error).
pub fn cox_consistency(sample: &DefaultSample, grid: &[f64], times: &[f64], k: f64) -> Result<Vec<CoxCheckRow>> {
    times
        .iter()
        .map(|&t| {
            let idx = grid_index(grid, t)?;
            let n = sample.tau.len() as f64;
            let alive = sample.tau.iter().filter(|d| d.survives(t)).count() as f64;
            let p = alive / n;
            let surv = McEstimate::from_samples(sample.survivor.column(idx).iter().copied());
            // Binomial spread under the hypothesis, so an all-survive sample is not degenerate.
            let q = surv.mean.clamp(0.0, 1.0);
            let binom = (q * (1.0 - q) / n).sqrt();
            let combined = (binom * binom + surv.stderr * surv.stderr).sqrt();
            Ok(CoxCheckRow {
                t,
                empirical_survival: p,
                mean_survivor_index: surv.mean,
                combined_stderr: combined,
                pass: (p - surv.mean).abs() <= k * combined,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn constant_hazard(mu: f64, dt: f64, horizon: f64, n_paths: usize) -> HazardEnsemble {
        let ens = simulate_corner(
            CornerParameter { b0: 0.0, b1: 0.0, a0: 0.0, a1: 0.0 },
            StateSpace::NonNegative,
            mu,
            horizon,
            dt,
            n_paths,
            1,
        )
        .unwrap();
        hazard_integral(&ens)
    }

    #[test]
    fn zero_dynamics_are_constant() {
        let ens = simulate_corner(
            CornerParameter { b0: 0.0, b1: 0.0, a0: 0.0, a1: 0.0 },
            StateSpace::NonNegative,
            0.02,
            1.0,
            0.01,
            16,
            5,
        )
        .unwrap();
        assert!(ens.values.iter().all(|&v| v == 0.02));
        let ext = simulate_extremal(&ParameterBox::zero(), StateSpace::RealLine, 0.03, 1.0, 0.1, 4, 5).unwrap();
        assert!(ext.values.iter().all(|&v| v == 0.03));
    }

    #[test]
    fn deterministic_linear_ode() {
        let ens = simulate_corner(
            CornerParameter { b0: 0.04, b1: -0.3, a0: 0.0, a1: 0.0 },
            StateSpace::RealLine,
            0.05,
            1.0,
            1e-4,
            2,
            9,
        )
        .unwrap();
        let exact = 0.071_598_481_609_856_85;
        let last = ens.values[[0, ens.time_grid.len() - 1]];
        // Euler global error is O(dt).
        assert!((last - exact).abs() < 1e-4 * 0.05, "{last} vs {exact}");
    }

    #[test]
    fn determinism_and_degenerate_extremal() {
        let theta = CornerParameter { b0: 0.05, b1: -0.3, a0: 0.0, a1: 0.02 };
        let a = simulate_corner(theta, StateSpace::Positive, 0.03, 1.0, 0.01, 64, 42).unwrap();
        let b = simulate_corner(theta, StateSpace::Positive, 0.03, 1.0, 0.01, 64, 42).unwrap();
        assert_eq!(a.values, b.values);
        let c = simulate_extremal(&ParameterBox::degenerate(theta), StateSpace::Positive, 0.03, 1.0, 0.01, 64, 42)
            .unwrap();
        assert_eq!(a.values, c.values);
        let d = simulate_corner(theta, StateSpace::Positive, 0.03, 1.0, 0.01, 64, 43).unwrap();
        assert_ne!(a.values, d.values);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let theta = CornerParameter { b0: 0.04, b1: -0.3, a0: 0.02, a1: 0.0 };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_corner(theta, StateSpace::RealLine, 0.05, 1.0, 0.01, 257, 3).unwrap())
        };
        assert_eq!(run(1).values, run(4).values);
    }

    #[test]
    fn full_truncation_stays_nonnegative() {
        // Violates the Feller condition so paths touch zero often.
        let theta = CornerParameter { b0: 0.001, b1: -0.5, a0: 0.0, a1: 0.2 };
        let ens = simulate_corner(theta, StateSpace::NonNegative, 0.01, 1.0, 1e-3, 500, 17).unwrap();
        assert!(ens.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_steps() {
        let theta = CornerParameter { b0: 0.0, b1: 0.0, a0: 0.0, a1: 0.0 };
        assert!(matches!(
            simulate_corner(theta, StateSpace::RealLine, 0.0, 1.0, 0.0, 1, 0),
            Err(Error::InvalidStep(_))
        ));
        assert!(matches!(
            simulate_corner(theta, StateSpace::RealLine, 0.0, 0.5, 1.0, 1, 0),
            Err(Error::InvalidStep(_))
        ));
    }

    #[test]
    fn hazard_examples() {
        let h = constant_hazard(0.02, 0.01, 1.0, 3);
        assert_relative_eq!(h.gamma[[0, 100]], 0.02, max_relative = 1e-13);
        let h = constant_hazard(0.0, 0.01, 1.0, 3);
        assert!(h.gamma.iter().all(|&g| g == 0.0));

        let linear = PathEnsemble {
            time_grid: vec![0.0, 0.5, 1.0],
            values: array![[0.0, 0.5, 1.0]],
            x0: 0.0,
            model: ModelTag::Corner { theta: CornerParameter { b0: 1.0, b1: 0.0, a0: 0.0, a1: 0.0 } },
            space: StateSpace::NonNegative,
            seed: 0,
            scheme: SCHEME_FULL_TRUNCATION,
        };
        assert_eq!(hazard_integral(&linear).gamma[[0, 2]], 0.5);
    }

    #[test]
    fn survivor_examples() {
        let zero = HazardEnsemble { time_grid: vec![0.0, 1.0], gamma: array![[0.0, 0.0]] };
        assert!(survivor_index(&zero).iter().all(|&s| s == 1.0));
        let h = constant_hazard(0.02, 0.01, 1.0, 2);
        assert_relative_eq!(survivor_index(&h)[[1, 100]], 0.980_198_673_306_755_3, max_relative = 1e-13);
        let unit = HazardEnsemble { time_grid: vec![0.0, 1.0], gamma: array![[0.0, 1.0]] };
        assert_relative_eq!(survivor_index(&unit)[[0, 1]], 0.367_879_441_171_442_3, max_relative = 1e-15);
    }

    #[test]
    fn default_time_examples() {
        let h = constant_hazard(0.02, 0.01, 1.0, 3);
        let s = default_times_from_xi(&h, vec![1.0, (-0.01f64).exp(), 0.97]).unwrap();
        assert_eq!(s.tau[0], DefaultTime::At(0.0));
        match s.tau[1] {
            DefaultTime::At(t) => assert!((t - 0.5).abs() < 1e-10, "{t}"),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.tau[2], DefaultTime::BeyondHorizon);
        assert!(default_times_from_xi(&h, vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn survivor_rows_monotone_for_nonnegative_paths() {
        let theta = CornerParameter { b0: 0.05, b1: -0.3, a0: 0.0, a1: 0.02 };
        let ens = simulate_corner(theta, StateSpace::Positive, 0.03, 1.0, 0.01, 200, 8).unwrap();
        let sample = cox_default_times(&hazard_integral(&ens), 8);
        for row in sample.survivor.axis_iter(Axis(0)) {
            assert_eq!(row[0], 1.0);
            assert!(row.windows(2).into_iter().all(|w| w[1] <= w[0]));
        }
        assert!(sample.xi.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn mc_bond_examples() {
        let h = constant_hazard(0.02, 0.01, 1.0, 10);
        let e = mc_bond_estimate(&h, 0.3, 0.3).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        let e = mc_bond_estimate(&h, 0.0, 1.0).unwrap();
        assert_relative_eq!(e.mean, (-0.02f64).exp(), max_relative = 1e-13);
        assert!(e.stderr < 1e-15);
        assert!(matches!(mc_bond_estimate(&h, 0.0, 1.005), Err(Error::OutOfRange { .. })));
    }
}
