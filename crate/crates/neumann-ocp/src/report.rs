//! CSV tables written by the runner.

use std::io::Write;

use neumann_ocp_core::ocp::{ActiveSet, KktReport, OcpProblem, OcpSolution};

use crate::config::Sweep;
use crate::study::StudyReport;

pub const STUDY_HEADER: [&str; 12] = [
    "level", "h", "rho", "H", "err_y_L2", "err_u_L2G", "err_p_energy", "rate_y", "rate_u", "rate_p", "iters", "seconds",
];

/// One row of a rate table.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub level: usize,
    pub h: f64,
    pub rho: f64,
    pub coarse_h: Option<f64>,
    pub err_y: f64,
    pub err_u: f64,
    pub err_p: f64,
    pub iters: usize,
    /// Left empty when timing is disabled.
    pub seconds: Option<f64>,
}

impl StudyRow {
    fn size(&self, sweep: Sweep) -> f64 {
        match sweep {
            Sweep::Mesh => self.h,
            Sweep::Boundary => self.rho,
            Sweep::Coarse => self.coarse_h.unwrap_or(self.h),
        }
    }
}

pub fn rows_of(report: &StudyReport, timing: bool) -> Vec<StudyRow> {
    report
        .levels
        .iter()
        .map(|l| StudyRow {
            level: l.spec.level,
            h: l.geometry.h,
            rho: l.geometry.rho,
            coarse_h: l.geometry.coarse_h,
            err_y: l.errors.y_l2,
            err_u: l.errors.u_l2,
            err_p: l.errors.p_energy,
            iters: l.iterations,
            seconds: timing.then_some(l.seconds),
        })
        .collect()
}

/// `log(e_i / e_{i-1}) / log(s_i / s_{i-1})`, when both errors are positive.
pub fn pairwise_rate(e0: f64, e1: f64, s0: f64, s1: f64) -> Option<f64> {
    (e0 > 0.0 && e1 > 0.0 && s0 > 0.0 && s1 > 0.0 && s0 != s1).then(|| (e1 / e0).ln() / (s1 / s0).ln())
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Rate table with pairwise rates against the swept mesh size. Rate cells
/// are empty on the first level and wherever an error is zero.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], sweep: Sweep, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STUDY_HEADER)?;
    for (i, r) in rows.iter().enumerate() {
        let rate = |e: fn(&StudyRow) -> f64| -> String {
            if i == 0 {
                return String::new();
            }
            let p = &rows[i - 1];
            opt(pairwise_rate(e(p), e(r), p.size(sweep), r.size(sweep)), |v| format!("{v:.4}"))
        };
        out.write_record([
            r.level.to_string(),
            sci(r.h),
            sci(r.rho),
            opt(r.coarse_h, sci),
            sci(r.err_y),
            sci(r.err_u),
            sci(r.err_p),
            rate(|r| r.err_y),
            rate(|r| r.err_u),
            rate(|r| r.err_p),
            r.iters.to_string(),
            opt(r.seconds, |s| format!("{s:.3}")),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Fitted slopes, one line per error component.
pub fn write_fit_csv<W: Write>(report: &StudyReport, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["component", "slope", "excluded_levels"])?;
    if let Some(f) = &report.fits {
        for (name, fit) in [("y", &f.y), ("u", &f.u), ("p", &f.p), ("y+u", &f.combined)] {
            let excluded: Vec<String> = fit.excluded.iter().map(|e| e.to_string()).collect();
            out.write_record([name.to_string(), format!("{:.4}", fit.slope), excluded.join(" ")])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "status",
    "iterations",
    "cost",
    "kkt_residual",
    "stationarity",
    "sign_lower",
    "sign_upper",
    "complementarity_lower",
    "complementarity_upper",
    "feasibility",
    "y_L2",
    "u_L2G",
    "p_energy",
    "controls",
];

pub fn write_summary_csv<W: Write>(status: &str, problem: &OcpProblem, sol: &OcpSolution, w: W) -> csv::Result<()> {
    let k = &sol.kkt;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    out.write_record([
        status.to_string(),
        sol.iterations.to_string(),
        sci(sol.cost),
        sci(sol.kkt_residual),
        sci(k.stationarity),
        sci(k.sign_lower),
        sci(k.sign_upper),
        sci(k.complementarity_lower),
        sci(k.complementarity_upper),
        sci(k.feasibility),
        sci(problem.mass().quad_form(&sol.y).max(0.0).sqrt()),
        sci(problem.control().norm(&sol.u)),
        sci(problem.space().fine_operator().quad_form(&sol.p).max(0.0).sqrt()),
        sol.u.len().to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

/// Control, multipliers and active set per control degree of freedom.
pub fn write_control_csv<W: Write>(problem: &OcpProblem, sol: &OcpSolution, w: W) -> csv::Result<()> {
    let ctl = problem.control();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "x", "y", "weight", "u", "lambda1", "lambda2", "active"])?;
    for e in 0..ctl.len() {
        let p = ctl.points()[e];
        let active = match sol.active[e] {
            ActiveSet::Lower => "lower",
            ActiveSet::Upper => "upper",
            ActiveSet::Inactive => "inactive",
        };
        out.write_record([
            e.to_string(),
            sci(p[0]),
            sci(p[1]),
            sci(ctl.weights()[e]),
            sci(sol.u[e]),
            sci(sol.lambda1[e]),
            sci(sol.lambda2[e]),
            active.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// State and adjoint at the fine mesh vertices.
pub fn write_state_csv<W: Write>(problem: &OcpProblem, sol: &OcpSolution, w: W) -> csv::Result<()> {
    let mesh = problem.space().fine_mesh();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vertex", "x", "y", "state", "adjoint"])?;
    for (i, v) in mesh.vertices().iter().enumerate() {
        out.write_record([i.to_string(), sci(v[0]), sci(v[1]), sci(sol.y[i]), sci(sol.p[i])])?;
    }
    out.flush()?;
    Ok(())
}

/// Tolerances of the KKT audit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktTolerances {
    pub sign: f64,
    pub complementarity: f64,
    pub stationarity: f64,
    pub feasibility: f64,
}

pub const KKT_TOLERANCES: KktTolerances =
    KktTolerances { sign: 1e-12, complementarity: 1e-10, stationarity: 1e-8, feasibility: 1e-12 };

/// `(component, value, tolerance)` for every audited condition.
pub fn kkt_components(k: &KktReport, tol: &KktTolerances) -> [(&'static str, f64, f64); 6] {
    [
        ("stationarity", k.stationarity, tol.stationarity),
        ("sign_lower", k.sign_lower, tol.sign),
        ("sign_upper", k.sign_upper, tol.sign),
        ("complementarity_lower", k.complementarity_lower, tol.complementarity),
        ("complementarity_upper", k.complementarity_upper, tol.complementarity),
        ("feasibility", k.feasibility, tol.feasibility),
    ]
}

pub fn kkt_passes(k: &KktReport, tol: &KktTolerances) -> bool {
    kkt_components(k, tol).iter().all(|(_, v, t)| v <= t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_errors_give_unit_rates() {
        let rows: Vec<StudyRow> = (0..3)
            .map(|i| {
                let s = 0.5f64.powi(i as i32);
                StudyRow {
                    level: i,
                    h: s,
                    rho: s,
                    coarse_h: None,
                    err_y: 2.0 * s,
                    err_u: 3.0 * s,
                    err_p: s,
                    iters: 1,
                    seconds: None,
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_study_csv(&rows, Sweep::Mesh, &mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), STUDY_HEADER.to_vec());
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.unwrap();
            for col in 7..10 {
                if i == 0 {
                    assert_eq!(&rec[col], "");
                } else {
                    assert_eq!(rec[col].parse::<f64>().unwrap(), 1.0);
                }
            }
            assert_eq!(&rec[3], "");
            assert_eq!(&rec[11], "");
        }
    }

    #[test]
    fn zero_errors_leave_rates_empty() {
        assert_eq!(pairwise_rate(0.0, 1.0, 1.0, 0.5), None);
        assert_eq!(pairwise_rate(1.0, 0.25, 1.0, 0.5), Some(2.0));
    }
}
