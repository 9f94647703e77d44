use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optswitch::solver::SolveError;
use optswitch_cli::commands::{describe_limits, McRow};
use optswitch_cli::{CliError, Command, Overrides, Run, Solved};

/// Optimal switching between two regimes of a one-dimensional diffusion.
///
/// Exit status: 0 success, 2 config error, 3 solver non-convergence,
/// 4 verification failure, 1 anything else.
#[derive(Parser)]
#[command(name = "optswitch", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve and write summary.json, values.csv and transformed.csv.
    Solve(Args),
    /// Check the solution against value iteration and Monte Carlo.
    Verify(Args),
    /// Monte Carlo estimates of the optimal policy at the probe states.
    Simulate(Args),
    /// Write only the curve files.
    Curves(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Value-iteration nodes for verify; curve samples for solve and curves.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Monte Carlo paths per probe.
    #[arg(long, value_name = "N")]
    paths: Option<usize>,
    /// Monte Carlo time step.
    #[arg(long, value_name = "X")]
    dt: Option<f64>,
    /// Comma-separated probe states.
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    probes: Option<Vec<f64>>,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            grid: self.grid,
            paths: self.paths,
            dt: self.dt,
            probes: self.probes.clone(),
        }
    }
}

fn print_solution(solved: &Solved) {
    let s = solved.summary();
    if !s.switching {
        println!("switching is never optimal: v0 = g0 and v1 = g1");
    } else {
        let show = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:.10}"));
        println!("a*  = {}", show(s.a_star));
        println!("b*  = {}", show(s.b_star));
        println!("β0* = {:.10}", s.beta0_star);
        println!("β1* = {:.10}", s.beta1_star);
        println!(
            "method {}, coupling {}, {} iterations, residual {:.2e}",
            s.method, s.coupling, s.iterations, s.residual
        );
    }
    println!("limits: l_c = {}, l_d = {}", s.limits.l_c, s.limits.l_d);
}

fn print_mc(rows: &[McRow]) {
    for m in rows {
        println!(
            "MC v[{}]({}): {:.6} ± {:.6} vs {:.6}, z = {:+.2}",
            m.start, m.x, m.mean, m.std_error, m.exact, m.z
        );
    }
}

fn run(cmd: &Cmd) -> Result<(), CliError> {
    let (command, args) = match cmd {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Curves(a) => (Command::Curves, a),
    };
    let run = Run::load(&args.config, command, &args.overrides())?;
    let solved = run.solve()?;
    match command {
        Command::Solve => {
            print_solution(&solved);
            let mut files = vec![run.write_summary(&solved)?];
            files.extend(run.write_curves(&solved)?);
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Curves => {
            for f in run.write_curves(&solved)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Simulate => {
            let rows = run.simulate_probes(&solved)?;
            print_mc(&rows);
            println!("wrote {}", run.write_report("simulate.json", &rows)?.display());
        }
        Command::Verify => {
            print_solution(&solved);
            let report = run.verify(&solved)?;
            let g = &report.grid;
            println!(
                "grid: {} nodes, {} iterations, converged {}, worst relative gap {:.3e} (tol {:e})",
                g.nodes, g.iterations, g.converged, g.worst, g.tol
            );
            for gap in &g.gaps {
                println!(
                    "  v[{}]({}): grid {:.6} vs {:.6}, gap {:.3e}",
                    gap.regime, gap.x, gap.grid, gap.exact, gap.relative
                );
            }
            print_mc(&report.monte_carlo);
            println!("wrote {}", run.write_report("verify.json", &report)?.display());
            if !report.pass {
                return Err(CliError::Verification(format!(
                    "grid gap {:.3e} (tol {:e}), largest |z| {:.2} (max {})",
                    g.worst,
                    g.tol,
                    report.monte_carlo.iter().map(|m| m.z.abs()).fold(0.0, f64::max),
                    report.z_max
                )));
            }
            println!("verification passed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Solve(SolveError::InfiniteValue { limits } | SolveError::UnsupportedLimit { limits }) = &e
            {
                eprintln!("{}", describe_limits(limits));
            }
            ExitCode::from(e.exit_code())
        }
    }
}
