use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_affine_cli::{run, Command, RunOptions};

const EXIT_CODES: &str = "Exit codes: 0 ok, 2 config error, 3 numeric/solver error, 4 check failure.
Every CSV starts with a `# config_sha256=...` line followed by a header row.";

/// Worst-case pricing of longevity and credit-linked claims under affine
/// intensity models with uncertain parameters.
#[derive(Parser)]
#[command(name = "robust-affine", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `output_dir`, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [env: ROBUST_AFFINE_THREADS; default: all cores].
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Upper bond prices on a maturity × state table.
    ///
    /// bond_prices.csv: time_to_maturity, x, upper_price
    #[command(after_help = EXIT_CODES)]
    PriceBond(Common),
    /// Simulate intensity paths, survivor indices and Cox default times.
    ///
    /// paths.csv: t, mean_x, stderr_x, min_x, max_x, mean_survivor_index, stderr_survivor_index
    /// cox.csv: t, empirical_survival, mean_survivor_index, combined_stderr, pass
    /// bond.csv: maturity, mc_mean, mc_stderr, upper_price
    #[command(after_help = EXIT_CODES, verbatim_doc_comment)]
    Simulate(Common),
    /// Run the no-arbitrage check suite over the corner grid and extremal model.
    ///
    /// checks.csv: check, subject, asserted, pass, statistic
    /// claim_means.csv: measure, t, mean, stderr
    /// wealth.csv: strategy, measure, t, mean, stderr
    #[command(after_help = EXIT_CODES, verbatim_doc_comment)]
    Check(Common),
    /// Value a product claim: worst-case bond times the G-PDE asset value.
    ///
    /// product.csv: t, x_mu, y_s, intensity_factor, asset_factor, value
    /// asset_values.csv: y, value_at_0
    #[command(after_help = EXIT_CODES, verbatim_doc_comment)]
    PriceProduct(Common),
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("ROBUST_AFFINE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|e| format!("ROBUST_AFFINE_THREADS={v:?}: {e}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::PriceBond(c) => (Command::PriceBond, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Check(c) => (Command::Check, c),
        Cmd::PriceProduct(c) => (Command::PriceProduct, c),
    };
    match threads(common.threads) {
        Ok(Some(0)) => {
            eprintln!("error: config error: thread count must be positive");
            return ExitCode::from(2);
        }
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: config error: {e}");
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions { out: common.out, seed: common.seed };
    match run(command, &common.config, &opts) {
        Ok(report) => {
            println!("{}: wrote {}", report.command, report.tables.join(", "));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
