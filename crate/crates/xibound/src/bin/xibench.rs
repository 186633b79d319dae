//! Command-line front end: evaluate the Ξ bound, certify the Jacobian sign
//! conjecture on a grid, sweep the discrete tightness family, run the
//! staircase benchmark, and re-summarize existing trace directories.

use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use xibound::bench::{self, RunConfig, DEFAULT_WINDOW_FRACTION};
use xibound::discrete_exact::tightness_sweep;
use xibound::joint_range::certify_conjecture;
use xibound::mi_estimators::Estimator;
use xibound::scalar_bound::{xi, xi_inverse};
use xibound::synth_data::Transform;

/// Benchmarks and exact checks for the Ξ lower bound relating
/// Jensen–Shannon divergence to KL divergence and mutual information.
#[derive(Parser)]
#[command(name = "xibench", version, about)]
struct Cli {
    /// Worker threads (overrides the XIBENCH_WORKERS env var; default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate Ξ or its inverse at a list of points.
    Xi(XiArgs),
    /// Check det J < 0 on an interior grid of the Bernoulli triangle.
    Certify(CertifyArgs),
    /// Exact MI vs the Ξ(I_JS) bound over the α-interpolated family.
    Tightness(TightnessArgs),
    /// Train estimators on the staircase task described by a TOML config.
    Staircase(StaircaseArgs),
    /// Recompute a bias/variance/MSE summary from stored traces.
    Report(ReportArgs),
}

#[derive(Args)]
struct XiArgs {
    #[command(subcommand)]
    which: XiCommand,
}

#[derive(Subcommand)]
enum XiCommand {
    /// Print Ξ(x) for each x in [0, log 2).
    Eval { values: Vec<f64> },
    /// Print Ξ⁻¹(y) for each y ≥ 0.
    Inv { values: Vec<f64> },
}

#[derive(Args)]
struct CertifyArgs {
    /// Grid resolution per axis.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    /// Require det < -margin rather than just det < 0.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Write a CSV report (failing points plus a summary line).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TightnessArgs {
    /// Sweep k = 2..=kmax.
    #[arg(long, default_value_t = 500)]
    kmax: usize,
    /// Sweep alpha = 0, step, 2·step, …, 1.
    #[arg(long, default_value_t = 0.01)]
    alpha_step: f64,
    /// Write the sweep as CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StaircaseArgs {
    /// TOML config file (keys: d, transform, schedule, seeds, estimators,
    /// batch_size, output).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's input dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Override the transform (identity|cubic|asinh|halfcube).
    #[arg(long)]
    transform: Option<Transform>,
    /// Override the batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the seed list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the estimator list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding trace_*.csv files.
    #[arg(long = "in")]
    dir: PathBuf,
    /// Fraction of each step's iterations used as the evaluation window.
    #[arg(long, default_value_t = DEFAULT_WINDOW_FRACTION)]
    window: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.or_else(|| {
        std::env::var("XIBENCH_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("xibench: cannot configure {n} workers: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("xibench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> xibound::Result<ExitCode> {
    match cmd {
        Command::Xi(args) => {
            match args.which {
                XiCommand::Eval { values } => {
                    for x in values {
                        println!("{}", xi(x)?);
                    }
                }
                XiCommand::Inv { values } => {
                    for y in values {
                        println!("{}", xi_inverse(y)?);
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify(args) => {
            let r = certify_conjecture(args.grid, args.margin)?;
            let verdict = if r.pass { "pass" } else { "FAIL" };
            println!(
                "{verdict}: {} interior points on a {g}x{g} grid, max det = {} at ({}, {}), margin {}",
                r.checked,
                r.max_det,
                r.max_det_at.0,
                r.max_det_at.1,
                r.margin,
                g = args.grid
            );
            if !r.failures.is_empty() {
                println!("{} points violate det < -margin", r.failures.len());
            }
            if let Some(path) = args.out {
                let mut csv = String::from("mu,nu,det\n");
                for (mu, nu, det) in &r.failures {
                    let _ = writeln!(csv, "{mu},{nu},{det}");
                }
                let _ = writeln!(
                    csv,
                    "# checked={} max_det={} at=({},{}) margin={} pass={}",
                    r.checked, r.max_det, r.max_det_at.0, r.max_det_at.1, r.margin, r.pass
                );
                std::fs::write(path, csv)?;
            }
            Ok(if r.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Tightness(args) => {
            if args.kmax < 2 {
                return Err(xibound::Error::Config("--kmax must be at least 2".into()));
            }
            if !(args.alpha_step > 0.0 && args.alpha_step <= 1.0) {
                return Err(xibound::Error::Config(
                    "--alpha-step must lie in (0, 1]".into(),
                ));
            }
            let ks: Vec<usize> = (2..=args.kmax).collect();
            let n_alpha = (1.0 / args.alpha_step).round() as usize;
            let alphas: Vec<f64> = (0..=n_alpha)
                .map(|i| (i as f64 * args.alpha_step).min(1.0))
                .collect();
            let rows = tightness_sweep(&ks, &alphas)?;
            let mut csv = String::from("k,alpha,mi,jsinfo,bound\n");
            for r in &rows {
                let _ = writeln!(csv, "{},{},{},{},{}", r.k, r.alpha, r.mi, r.jsinfo, r.bound);
            }
            match args.out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Staircase(args) => {
            let mut cfg = RunConfig::from_toml_file(&args.config)?;
            if let Some(d) = args.d {
                cfg.d = d;
            }
            if let Some(t) = args.transform {
                cfg.transform = t;
            }
            if let Some(b) = args.batch_size {
                cfg.batch_size = b;
            }
            if let Some(s) = args.seeds {
                cfg.seeds = s;
            }
            if let Some(e) = args.estimators {
                cfg.estimators = e;
            }
            if let Some(o) = args.output {
                cfg.output = o;
            }
            cfg.validate()?;
            let summary = bench::run_staircase(&cfg)?;
            print!("{}", summary.to_csv());
            println!("# traces and summary.csv written to {}", cfg.output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report(args) => {
            let traces = bench::read_traces(&args.dir)?;
            let summary = bench::summarize(&traces, args.window)?;
            std::fs::write(args.dir.join("summary.csv"), summary.to_csv())?;
            print!("{}", summary.to_csv());
            Ok(ExitCode::SUCCESS)
        }
    }
}
