use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neumann_ocp::run::{run_audit, run_solve, run_study_cmd, RunOptions};
use neumann_ocp::{RunError, StudyConfig};

#[derive(Parser)]
#[command(name = "neumann-ocp", version, about = "Neumann boundary control with control constraints: solves, rate studies and KKT audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the first level of a configuration.
    Solve(Common),
    /// Run a convergence study and write the rate table.
    Study(Common),
    /// Solve every level and check the optimality conditions.
    AuditKkt(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    config: PathBuf,
    /// Worker threads for independent levels.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip the SVG plot.
    #[arg(long)]
    no_plot: bool,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the seconds column empty so repeated runs give identical CSV.
    #[arg(long)]
    no_timing: bool,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions { jobs: self.jobs.max(1), plot: !self.no_plot, out: self.out.clone(), timing: !self.no_timing }
    }

    fn config(&self) -> Result<StudyConfig, RunError> {
        let mut cfg = StudyConfig::load(&self.config)?;
        cfg.apply_env()?;
        Ok(cfg)
    }
}

fn execute(cmd: &Command) -> Result<(), RunError> {
    match cmd {
        Command::Solve(c) => {
            let s = run_solve(&c.config()?, &c.options())?;
            println!(
                "converged in {} iterations, cost {:.10e}, kkt residual {:.3e}; output in {}",
                s.iterations,
                s.cost,
                s.kkt_residual,
                s.out.display()
            );
        }
        Command::Study(c) => {
            let cfg = c.config()?;
            let report = run_study_cmd(&cfg, &c.options())?;
            println!("errors against {}", report.reference);
            if let Some(f) = &report.fits {
                println!(
                    "fitted rates: y {:.3}, u {:.3}, p {:.3}, y+u {:.3}",
                    f.y.slope, f.u.slope, f.p.slope, f.combined.slope
                );
            }
        }
        Command::AuditKkt(c) => {
            let rows = run_audit(&c.config()?, &c.options())?;
            println!("{} conditions within tolerance", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("neumann-ocp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
