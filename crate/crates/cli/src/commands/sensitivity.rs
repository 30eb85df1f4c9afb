use rayon::prelude::*;
use rdnr_core::ccg::{solve_subproblem, CcgSettings, SpStrategy};
use rdnr_core::engine::ClarabelBackend;
use rdnr_core::formulation::uncertainty::XiRowKind;
use rdnr_core::oracle::{finite_diff_sensitivity, Component, VERTEX_DIM_GUARD};
use rdnr_core::sensitivity::{
    second_stage_sensitivity, topology_stability_scan, RowRef, RowSensitivity, ScanReport, ScanSettings, SensitivityReport,
};
use serde::Serialize;

use super::{cmd_solve, prepare, Prepared, Summary};
use crate::config::{RunConfig, Task};
use crate::error::{CliError, Result};
use crate::output::{self, SENSITIVITY_SCHEMA};

/// One line of `sensitivity.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct SensitivityRow {
    pub label: String,
    pub set: &'static str,
    pub row: usize,
    pub multiplier: f64,
    pub range_lo: f64,
    pub range_hi: f64,
    pub active: bool,
    pub degenerate: bool,
    pub slack: f64,
    /// Central difference of the worst-case value, when brute force is affordable.
    pub fd: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct SensitivityFile<'a> {
    schema: &'static str,
    case: &'a str,
    alpha: &'a [f64],
    xi: &'a [f64],
    w_star: &'a [f64],
    dual_value: f64,
    primal_value: f64,
    duality_gap: f64,
    stationarity_residual: f64,
    period_budget: &'a [f64],
    unit_budget: &'a [f64],
    resizing: &'a [f64],
    scan: Option<&'a ScanReport>,
}

pub struct SensitivityOutput {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub report: SensitivityReport,
    pub rows: Vec<SensitivityRow>,
    pub scan: Option<ScanReport>,
}

impl SensitivityOutput {
    pub fn headline(&self) -> String {
        let active = self.report.active_rows().count();
        format!(
            "{} rows ({} active), dual value {:.8}, duality gap {:.2e}",
            self.rows.len(),
            active,
            self.report.dual_value,
            self.report.duality_gap()
        )
    }
}

fn summary_matches(s: &Summary, p: &Prepared, cfg: &RunConfig) -> bool {
    let unc = &p.inst.unc;
    s.case == p.case.name
        && s.horizon == p.case.horizon
        && (s.gamma_t - unc.gamma_t).abs() <= 1e-12
        && s.gamma_i == unc.gamma_i
        && s.extension == cfg.extension
        && s.alpha.len() == p.case.num_branches()
        && s.xi.len() == unc.n_w
}

/// Finite differences per row; `None` where brute force is out of reach or
/// the row has no single scalar to perturb.
pub fn finite_differences(p: &Prepared, alpha: &[f64], xi: &[f64], rows: &[RowSensitivity], h: f64) -> Vec<Option<f64>> {
    let unc = &p.inst.unc;
    if unc.n_aux > 0 || unc.n_w > VERTEX_DIM_GUARD {
        return vec![None; rows.len()];
    }
    let coupled = unc.xi_rows.iter().any(|r| matches!(r.kind, XiRowKind::Extension { .. }));
    let backend = ClarabelBackend::default();
    rows.par_iter()
        .map(|r| {
            let comp = match r.row {
                RowRef::Fixed { row } => Some(Component::Row(row)),
                RowRef::Resizing { row } => match unc.xi_rows[row].kind {
                    XiRowKind::Cap { k } if !coupled => Some(Component::Xi(k)),
                    _ => None,
                },
            }?;
            finite_diff_sensitivity(&p.inst.model, unc, &backend, alpha, xi, comp, h).ok()
        })
        .collect()
}

pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<SensitivityOutput> {
    let Task::Sensitivity { solve, fd_step, scan } = cfg.task else {
        return Err(CliError::Config("not a sensitivity configuration".into()));
    };
    let backend = ClarabelBackend::default();
    let (p, alpha, xi, lambda) = if solve {
        let r = cmd_solve(cfg)?;
        let lambda = r.outcome.worst_case.recourse.lambda.clone();
        (r.prepared, r.outcome.alpha, r.outcome.xi, lambda)
    } else {
        let s = Summary::load(cfg)?.ok_or(CliError::NotSolved)?;
        let p = prepare(cfg)?;
        if !summary_matches(&s, &p, cfg) {
            return Err(CliError::NotSolved);
        }
        let alpha: Vec<f64> = s.alpha.iter().map(|&a| f64::from(a)).collect();
        let strategy = cfg.sp_strategy.unwrap_or_else(|| SpStrategy::default_for(&p.inst.unc));
        let sp = solve_subproblem(&p.inst.model, &p.inst.unc, &backend, &alpha, &s.xi, strategy, &CcgSettings::default().sp_bnb)?;
        let lambda = sp.recourse.lambda;
        (p, alpha, s.xi, lambda)
    };
    let report = second_stage_sensitivity(&backend, &p.inst.model, &p.inst.unc, &xi, &lambda, &p.inst.resize_cost)?;
    let fd = finite_differences(&p, &alpha, &xi, &report.rows, fd_step);
    let rows: Vec<SensitivityRow> = report
        .rows
        .iter()
        .zip(fd)
        .map(|(r, fd)| {
            let (set, row) = match r.row {
                RowRef::Fixed { row } => ("fixed", row),
                RowRef::Resizing { row } => ("resizing", row),
            };
            SensitivityRow {
                label: r.label.clone(),
                set,
                row,
                multiplier: r.multiplier,
                range_lo: r.range.0,
                range_hi: r.range.1,
                active: r.active,
                degenerate: r.degenerate,
                slack: r.slack,
                fd,
            }
        })
        .collect();
    let scan = if scan {
        let settings = ScanSettings { seed: cfg.seed, ccg: cfg.ccg_settings(), ..ScanSettings::default() };
        Some(topology_stability_scan(&p.case, &p.opts, &backend, &settings)?)
    } else {
        None
    };
    let dir = &cfg.out;
    output::ensure_dir(dir)?;
    output::write_csv(&dir.join("sensitivity.csv"), &rows)?;
    let file = SensitivityFile {
        schema: SENSITIVITY_SCHEMA,
        case: &p.case.name,
        alpha: &alpha,
        xi: &xi,
        w_star: &report.w_star,
        dual_value: report.dual_value,
        primal_value: report.primal_value,
        duality_gap: report.duality_gap(),
        stationarity_residual: report.stationarity_residual,
        period_budget: &report.period_budget,
        unit_budget: &report.unit_budget,
        resizing: &report.resizing,
        scan: scan.as_ref(),
    };
    output::write_json(&dir.join("sensitivity.json"), &file)?;
    Ok(SensitivityOutput { alpha, xi, report, rows, scan })
}
