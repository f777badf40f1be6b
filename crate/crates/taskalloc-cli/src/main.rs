use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use taskalloc_cli::commands::{self, Axis, Globals};
use taskalloc_cli::{fmt::f17, CliError};

#[derive(Parser)]
#[command(name = "taskalloc", version, about = "Task-oriented power allocation experiments")]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    NumUsers,
    TotalPower,
    Seed,
}

const METHODS: [&str; 4] = ["parallel", "accelerated", "equal-power", "sum-rate"];

#[derive(Subcommand)]
enum Cmd {
    /// Run one method on a scenario; writes trace.csv, result.json, report.md.
    Solve {
        scenario: PathBuf,
        #[arg(long, default_value = "accelerated", value_parser = METHODS)]
        method: String,
        /// Use a channel dump instead of sampling from the seed.
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// Re-run methods over a parameter axis; writes sweep.csv.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values (K, P in dBm, or seeds).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "parallel,accelerated", value_parser = METHODS)]
        methods: Vec<String>,
        /// Seeds to repeat each point with (default: the scenario seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Plot MSE against iteration for one or more traces.
    Plot {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// SVG path (default: <out>/convergence.svg).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
    },
    /// Compare both solvers with a brute-force grid optimum (K ≤ 4).
    OracleCheck {
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
}

fn dispatch(cli: Cli, threads: usize) -> Result<bool, CliError> {
    let g = Globals { seed: cli.seed, out: cli.out.clone(), threads };
    match cli.cmd {
        Cmd::Solve { scenario, method, channels } => {
            let method = commands::parse_method(&method)?;
            let r = commands::cmd_solve(&g, &scenario, method, channels.as_deref())?;
            let sol = &r.solution;
            println!(
                "{}: objective {} after {} iterations (converged: {}), wrote {}",
                method.as_str(),
                f17(sol.objective.total),
                sol.iterations,
                sol.converged,
                g.out.display()
            );
            Ok(true)
        }
        Cmd::Sweep { scenario, axis, values, methods, seeds } => {
            let axis = match axis {
                AxisArg::NumUsers => Axis::NumUsers,
                AxisArg::TotalPower => Axis::TotalPower,
                AxisArg::Seed => Axis::Seed,
            };
            let methods = methods.iter().map(|m| commands::parse_method(m)).collect::<Result<Vec<_>, _>>()?;
            let rows = commands::cmd_sweep(&g, &scenario, axis, &values, &methods, &seeds)?;
            for r in &rows {
                println!(
                    "{}={} {} seed={} objective={} mle={} iterations={} converged={}",
                    axis.as_str(),
                    r.value,
                    r.method.as_str(),
                    r.seed,
                    f17(r.objective),
                    f17(r.mle),
                    r.iterations,
                    r.converged
                );
            }
            Ok(true)
        }
        Cmd::Plot { traces, output, epsilon } => {
            let out_svg = output.unwrap_or_else(|| g.out.join("convergence.svg"));
            let p = commands::cmd_plot(&traces, &out_svg, epsilon)?;
            for (label, reached) in &p.reached {
                match reached {
                    Some(it) => println!("{label}: MSE <= {epsilon:e} at iteration {it}"),
                    None => println!("{label}: MSE never reached {epsilon:e}"),
                }
            }
            println!("wrote {}", out_svg.display());
            Ok(true)
        }
        Cmd::OracleCheck { scenario, resolution } => {
            let c = commands::cmd_oracle_check(&g, &scenario, resolution)?;
            println!(
                "oracle: objective {} at resolution {} (gap bound {}{})",
                f17(c.oracle.objective_best),
                resolution,
                f17(c.oracle.gap_bound),
                if c.from_cache { ", cached" } else { "" }
            );
            for r in &c.rows {
                println!(
                    "{} {}: objective {} <= {} (converged: {})",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.method.as_str(),
                    f17(r.objective),
                    f17(r.bound),
                    r.converged
                );
            }
            Ok(c.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: could not start {} worker threads: {e}", cli.threads);
            return ExitCode::from(1);
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| dispatch(cli, threads)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
