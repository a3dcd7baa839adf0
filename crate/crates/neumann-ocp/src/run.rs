//! The `solve`, `study` and `audit-kkt` commands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use neumann_ocp_core::Error as CoreError;

use crate::config::StudyConfig;
use crate::meshio::load_mesh;
use crate::plot::{loglog_svg, Series};
use crate::report::{
    kkt_components, kkt_passes, rows_of, write_control_csv, write_fit_csv, write_state_csv, write_study_csv,
    write_summary_csv, KKT_TOLERANCES,
};
use crate::study::{case_for, level_specs, run_study, sweep_size, with_level, StudyReport};
use crate::{RunError, Sweep};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub jobs: usize,
    pub plot: bool,
    /// Replaces the configured output directory.
    pub out: Option<PathBuf>,
    /// Write wall clock times; without them the CSV output is reproducible
    /// byte for byte.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, plot: true, out: None, timing: true }
    }
}

fn out_dir(cfg: &StudyConfig, opts: &RunOptions) -> Result<PathBuf, RunError> {
    let dir = opts.out.clone().unwrap_or_else(|| cfg.output.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, RunError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Outcome of a single solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveSummary {
    pub iterations: usize,
    pub cost: f64,
    pub kkt_residual: f64,
    pub out: PathBuf,
}

/// Solves the first level of the configuration and writes `summary.csv`,
/// `control.csv` and `state.csv`. On non-convergence the best iterate is
/// written with status `not-converged` before the error is returned.
pub fn run_solve(cfg: &StudyConfig, opts: &RunOptions) -> Result<SolveSummary, RunError> {
    let case = case_for(cfg)?;
    let mesh = cfg.mesh_file.as_deref().map(load_mesh).transpose()?;
    let spec = level_specs(cfg)[0];
    let dir = out_dir(cfg, opts)?;
    with_level(cfg, &case.data, &spec, mesh.as_ref(), |run| {
        let (status, sol, err) = match run.result {
            Ok(sol) => ("converged", sol, None),
            Err(CoreError::NonConvergence { iterations, kkt_residual, best }) => {
                let err = CoreError::NonConvergence { iterations, kkt_residual, best: best.clone() };
                ("not-converged", *best, Some(err))
            }
            Err(e) => return Err(e.into()),
        };
        write_summary_csv(status, run.problem, &sol, create(&dir, "summary.csv")?)?;
        write_control_csv(run.problem, &sol, create(&dir, "control.csv")?)?;
        write_state_csv(run.problem, &sol, create(&dir, "state.csv")?)?;
        match err {
            Some(e) => Err(e.into()),
            None => Ok(SolveSummary {
                iterations: sol.iterations,
                cost: sol.cost,
                kkt_residual: sol.kkt_residual,
                out: dir.clone(),
            }),
        }
    })
}

/// Runs a study and writes `study.csv`, `study_fit.csv` and, unless
/// disabled, `study.svg`.
pub fn run_study_cmd(cfg: &StudyConfig, opts: &RunOptions) -> Result<StudyReport, RunError> {
    if cfg.levels < 3 {
        return Err(RunError::Config(format!("a rate study needs at least 3 levels, got {}", cfg.levels)));
    }
    let dir = out_dir(cfg, opts)?;
    let report = run_study(cfg, opts.jobs)?;
    write_study_csv(&rows_of(&report, opts.timing), cfg.sweep, create(&dir, "study.csv")?)?;
    write_fit_csv(&report, create(&dir, "study_fit.csv")?)?;
    if opts.plot {
        let sizes = report.sizes();
        let pts = |f: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> { (0..sizes.len()).map(|i| (sizes[i], f(i))).collect() };
        let lv = &report.levels;
        let series = [
            Series { label: "state L2", points: pts(&|i| lv[i].errors.y_l2) },
            Series { label: "control L2(boundary)", points: pts(&|i| lv[i].errors.u_l2) },
            Series { label: "adjoint energy", points: pts(&|i| lv[i].errors.p_energy) },
        ];
        let x_label = match cfg.sweep {
            Sweep::Mesh => "h",
            Sweep::Boundary => "rho",
            Sweep::Coarse => "H",
        };
        let title = format!("{} ({:?}), errors against {}", cfg.case, cfg.mode, report.reference);
        fs::write(dir.join("study.svg"), loglog_svg(&title, x_label, &series))?;
    }
    Ok(report)
}

/// One audited KKT condition.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub level: usize,
    pub size: f64,
    pub component: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl AuditRow {
    pub fn passes(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Solves every level and checks each KKT component against its tolerance;
/// writes `kkt_audit.csv` and fails if any component is out of tolerance.
pub fn run_audit(cfg: &StudyConfig, opts: &RunOptions) -> Result<Vec<AuditRow>, RunError> {
    let case = case_for(cfg)?;
    let mesh = cfg.mesh_file.as_deref().map(load_mesh).transpose()?;
    let dir = out_dir(cfg, opts)?;
    let specs = level_specs(cfg);
    let per_level = crate::study::run_pool(specs.len(), opts.jobs, |i| {
        with_level(cfg, &case.data, &specs[i], mesh.as_ref(), |run| {
            let sol = run.result?;
            let size = sweep_size(cfg.sweep, &run.geometry);
            Ok(kkt_components(&sol.kkt, &KKT_TOLERANCES)
                .into_iter()
                .map(|(component, value, tolerance)| AuditRow { level: specs[i].level, size, component, value, tolerance })
                .collect::<Vec<_>>())
        })
    });
    let mut rows = Vec::new();
    for r in per_level {
        rows.extend(r?);
    }
    let mut w = csv::Writer::from_writer(create(&dir, "kkt_audit.csv")?);
    w.write_record(["level", "size", "component", "value", "tolerance", "pass"])?;
    for r in &rows {
        w.write_record([
            r.level.to_string(),
            format!("{:.6e}", r.size),
            r.component.to_string(),
            format!("{:.3e}", r.value),
            format!("{:.0e}", r.tolerance),
            r.passes().to_string(),
        ])?;
    }
    w.flush()?;
    let failed: Vec<String> =
        rows.iter().filter(|r| !r.passes()).map(|r| format!("level {} {}", r.level, r.component)).collect();
    if failed.is_empty() {
        Ok(rows)
    } else {
        Err(RunError::Audit(failed.join(", ")))
    }
}

/// KKT check used by callers holding a report instead of raw rows.
pub fn study_kkt_passes(report: &StudyReport) -> bool {
    report.reference_kkt.is_none_or(|k| kkt_passes(&k, &KKT_TOLERANCES))
        && report.levels.iter().all(|l| {
        kkt_passes(&l.kkt, &KKT_TOLERANCES) && l.fine_kkt.is_none_or(|k| kkt_passes(&k, &KKT_TOLERANCES))
    })
}
