use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qrvie::error::{io_err, CliResult};
use qrvie::experiments;
use qrvie::output::{self, write_file};
use qrvie::pipeline::{run_solve, run_verify};
use qrvie::Scenario;

#[derive(Parser)]
#[command(name = "qrvie", version, about = "Compressed volume integral equation solver for arrays of voxelized spheres")]
struct Cli {
    /// Scenario file (flat TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a scenario key, e.g. `--set atoms=16`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the resolved scenario as a config file.
    Generate {
        #[arg(short, long, default_value = "scenario.toml")]
        output: PathBuf,
    },
    /// Run the solve pipeline and write currents, residuals and report.
    Solve,
    /// Solve and compare against the dense oracle.
    Verify,
    #[command(subcommand)]
    Experiment(Experiment),
    /// Recompute a run's metrics from its tables and print its report.
    Report {
        /// Run directory; defaults to the scenario's output_dir.
        #[arg(short, long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Experiment {
    /// P_c, A_s and gain versus tolerance.
    Consistency {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4, 1e-5])]
        eps: Vec<f64>,
    },
    /// Gain and iterations versus atom count.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64])]
        atoms: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-3])]
        eps: Vec<f64>,
        /// Also count iterations without the preconditioner.
        #[arg(long)]
        unpreconditioned: bool,
    },
    /// Whole versus split compression of a two-atom mutual block.
    Split {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4])]
        eps: Vec<f64>,
    },
}

fn emit(dir: &Path, name: &str, table: &str) -> CliResult<()> {
    print!("{table}");
    write_file(&dir.join(name), table)
}

fn run(cli: Cli) -> CliResult<bool> {
    let s = Scenario::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Generate { output } => {
            write_file(&output, &s.to_toml())?;
            Ok(true)
        }
        Command::Solve => {
            let out = run_solve(&s)?;
            output::write_run(&s.output_dir, &out)?;
            print!("{}", output::report(&out));
            let t = out.timings;
            eprintln!(
                "setup {:.3?} assembly {:.3?} compression {:.3?} solve {:.3?} oracle {:.3?}",
                t.setup, t.assembly, t.compression, t.solve, t.oracle
            );
            Ok(out.solve.converged)
        }
        Command::Verify => {
            let v = run_verify(&s)?;
            println!("converged = {}", v.converged);
            println!("iterations = {}", v.iterations);
            println!("eps_sol = {:e}", v.eps_sol);
            println!("p_c = {:e}", v.p_c);
            println!("a_s = {:e}", v.a_s);
            println!("reconstruction_error = {:e}", v.reconstruction_error);
            println!("symmetry_error = {:e}", v.symmetry_error);
            println!("diagonal_blocks_identical = {}", v.diagonal_blocks_identical);
            let ok = v.passed(s.eps);
            println!("verify = {}", if ok { "pass" } else { "fail" });
            Ok(ok)
        }
        Command::Experiment(Experiment::Consistency { eps }) => {
            let rows = experiments::consistency(&s, &eps)?;
            emit(&s.output_dir, "consistency.txt", &experiments::consistency_table(&rows))?;
            Ok(true)
        }
        Command::Experiment(Experiment::Scaling { atoms, eps, unpreconditioned }) => {
            let rows = experiments::scaling(&s, &atoms, &eps, unpreconditioned)?;
            emit(&s.output_dir, "scaling.txt", &experiments::scaling_table(&rows))?;
            Ok(true)
        }
        Command::Experiment(Experiment::Split { eps }) => {
            let points = experiments::split(&s, &eps)?;
            emit(&s.output_dir, "split.txt", &experiments::split_table(&points))?;
            Ok(true)
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or(s.output_dir);
            let read = |name: &str| {
                let p = dir.join(name);
                std::fs::read_to_string(&p).map_err(io_err(p))
            };
            let report = read(output::REPORT_FILE)?;
            let sum = output::summarize(&read(output::CURRENTS_FILE)?, &read(output::RESIDUALS_FILE)?)?;
            print!("{report}");
            println!("# recomputed from tables");
            println!("table_dofs = {}", sum.dofs);
            println!("table_loops = {}", sum.loops);
            println!("table_iterations = {}", sum.iterations);
            println!("table_final_residual = {:e}", sum.final_residual);
            println!("table_current_norm = {:e}", sum.current_norm);
            let parsed: toml::Table = toml::from_str(&report).map_err(|e| qrvie::CliError::Format(e.to_string()))?;
            let same = parsed.get("iterations").and_then(|v| v.as_integer()) == Some(sum.iterations as i64)
                && parsed.get("dofs").and_then(|v| v.as_integer()) == Some(sum.dofs as i64);
            println!("consistent = {same}");
            Ok(same && parsed.get("converged").and_then(|v| v.as_bool()) == Some(true))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
