//! Command-line front end: run configured experiments, prebuild ground
//! truth, check the closed-form weights, and emit figure data.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when a run finishes but a
//! consistency check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nestedmc::analysis::SweepAxis;
use nestedmc::harness::{
    build_example_oracle, check_weight_identity, emit_figure_data, method_name, run_experiment,
    write_variance_sweep_csv, ExampleId, ExperimentConfig, FigureId, OracleConfig,
    WEIGHT_FAMILIES,
};

#[derive(Parser)]
#[command(
    name = "nestedmc",
    version,
    about = "Nested Monte Carlo risk estimation with inner-sample recycling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write report.csv, timing.csv, and
    /// checks.csv into its output directory.
    Run {
        /// Path to a versioned JSON experiment config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Build (or load from cache) the high-precision loss curve of one
    /// example and report where it lives.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
    /// Randomized consistency checks of the closed-form weights.
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
    /// Closed-form diagnostics of the synthetic example.
    Toy {
        #[command(subcommand)]
        action: ToyAction,
    },
    /// Emit one diagnostic figure's data set from a config.
    Figure {
        /// variance_sweep, ratio_bins, loss_curves, or empirical_curves.
        #[arg(long)]
        id: String,
        /// Path to a versioned JSON experiment config.
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleAction {
    /// Simulate the curve at every node and cache it as CSV.
    Build {
        /// barrier, asian, or gmwb.
        #[arg(long)]
        example: String,
        /// Curve nodes.
        #[arg(long)]
        points: usize,
        /// Inner paths per node.
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Master seed of the oracle streams.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Paths for time-zero contract pricing.
        #[arg(long, default_value_t = 1_000_000)]
        pricing_paths: usize,
        /// Cache directory (else $NESTEDMC_CACHE_DIR, else oracle_cache).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum WeightsAction {
    /// Compare each family's closed form against its density ratio on
    /// randomized inputs and test the mean-one property.
    Check {
        /// gbm, vasicek, rsln2, gmwb, barrier, toy, or all.
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long, default_value_t = 900)]
        seed: u64,
        /// Randomized identity probes per family.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Draws behind the mean-one test.
        #[arg(long, default_value_t = 1_000_000)]
        mean_one_paths: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    N,
    M,
}

#[derive(Subcommand)]
enum ToyAction {
    /// Sweep one loop count and tabulate analytic against empirical
    /// estimator variance.
    Sweep {
        /// Which loop count varies.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Values the swept count takes.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// The other loop count, held fixed.
        #[arg(long, default_value_t = 1000)]
        fixed: usize,
        /// Independent replications per grid point.
        #[arg(long, default_value_t = 400)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> nestedmc::error::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            println!(
                "example {} | ground truth {:.6e} ({})",
                report.example.as_str(),
                report.oracle_value,
                report.oracle_note
            );
            for r in &report.methods {
                println!(
                    "{:<10} mean {:.6e}  sd {:.6e}  mse {:.6e}  inner {}  weights {}",
                    method_name(r.method),
                    r.mean_estimate,
                    r.sd_estimate,
                    r.mse,
                    r.ce_total.inner_paths,
                    r.ce_total.weight_evals
                );
            }
            if let Some(e) = &report.effort {
                println!(
                    "effort: inner path {:.1} ns, weight evaluation {:.1} ns",
                    e.gamma_ns, e.delta_ns
                );
            }
            let mut ok = true;
            for c in &report.invariants {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.note);
                ok &= c.passed;
            }
            println!(
                "wrote {}, {}, {}",
                report.report_path.display(),
                report.timing_path.display(),
                report.checks_path.display()
            );
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Oracle { action } => {
            let OracleAction::Build { example, points, paths, seed, pricing_paths, cache_dir } =
                action;
            let example = ExampleId::parse(&example)?;
            let oracle = OracleConfig {
                curve_points: points,
                curve_paths: paths,
                rho_scenarios: 1,
                pricing_paths,
                seed,
            };
            let (path, curve) = build_example_oracle(example, &oracle, cache_dir.as_deref())?;
            println!(
                "curve for {} at {} nodes, max standard error {:.3e}, cached at {}",
                example.as_str(),
                curve.values.len(),
                curve.max_standard_error(),
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Weights { action } => {
            let WeightsAction::Check { model, seed, samples, mean_one_paths } = action;
            let families: Vec<&str> = if model == "all" {
                WEIGHT_FAMILIES.to_vec()
            } else {
                vec![WEIGHT_FAMILIES
                    .iter()
                    .find(|f| **f == model)
                    .copied()
                    .ok_or_else(|| {
                        nestedmc::error::Error::Config(format!(
                            "unknown weight family {model:?}; expected one of \
                             {WEIGHT_FAMILIES:?} or all"
                        ))
                    })?]
            };
            let mut ok = true;
            for family in families {
                let report = check_weight_identity(family, samples, mean_one_paths, seed)?;
                let passed = report.passes();
                ok &= passed;
                println!(
                    "[{}] {:<8} max identity error {:.3e} over {} probes, reflexive {}, \
                     mean-one z {:.2} over {} draws",
                    if passed { "PASS" } else { "FAIL" },
                    report.family,
                    report.max_identity_error,
                    report.identity_samples,
                    if report.reflexive_exact { "exact" } else { "BROKEN" },
                    report.mean_one_z,
                    report.mean_one_paths
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Toy { action } => {
            let ToyAction::Sweep { axis, values, fixed, trials, seed, out_dir } = action;
            let (axis, name) = match axis {
                AxisArg::N => (SweepAxis::OuterCount, "n"),
                AxisArg::M => (SweepAxis::InnerCount, "m"),
            };
            let out = out_dir.join(format!("variance_sweep_{name}.csv"));
            let path = write_variance_sweep_csv(axis, &values, fixed, trials, seed, &out)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Figure { id, config } => {
            let figure = FigureId::parse(&id)?;
            let cfg = ExperimentConfig::load(&config)?;
            let path = emit_figure_data(figure, &cfg)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
