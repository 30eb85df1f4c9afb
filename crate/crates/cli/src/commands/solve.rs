use std::time::Instant;

use rdnr_core::ccg::{run_mapping_ccg, CcgOutcome, SpStrategy};
use rdnr_core::engine::ClarabelBackend;
use serde::{Deserialize, Serialize};

use super::{prepare, Prepared};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{self, RunTiming, SUMMARY_SCHEMA};

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub case: String,
    pub horizon: usize,
    pub algorithm: String,
    pub converged: bool,
    pub objective: f64,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub eps: f64,
    pub iterations: usize,
    pub sp_strategy: SpStrategy,
    pub first_stage_cost: f64,
    pub worst_case_value: f64,
    pub worst_case_w: Vec<f64>,
    pub total_slack: f64,
    pub alpha: Vec<u8>,
    pub open_branches: Vec<u32>,
    pub xi: Vec<f64>,
    pub gamma_t: f64,
    pub gamma_i: Option<f64>,
    pub m_s: f64,
    pub extension: bool,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl Summary {
    /// Reads a previous summary, or `None` when there is none.
    pub fn load(cfg: &RunConfig) -> Result<Option<Summary>> {
        let path = cfg.out.join("summary.json");
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let s: Summary = serde_json::from_str(&text)?;
        Ok((s.schema == SUMMARY_SCHEMA).then_some(s))
    }
}

pub struct SolveReport {
    pub prepared: Prepared,
    pub outcome: CcgOutcome,
    pub summary: Summary,
    pub seconds: f64,
}

impl SolveReport {
    pub fn headline(&self) -> String {
        let s = &self.summary;
        format!(
            "{}: objective {:.8} gap {:.3e} after {} iterations ({}), open branches {:?}",
            s.case,
            s.objective,
            s.gap,
            s.iterations,
            if s.converged { "converged" } else { "not converged" },
            s.open_branches
        )
    }
}

pub fn summarize(cfg: &RunConfig, p: &Prepared, out: &CcgOutcome) -> Summary {
    let unc = &p.inst.unc;
    let mut notes = Vec::new();
    if unc.gamma_t == 0.0 || unc.gamma_i == Some(0.0) {
        notes.push("singleton uncertainty: a zero budget leaves only the forecast".to_string());
    }
    if !out.converged {
        notes.push(format!("iteration budget reached with gap {:.3e}", out.gap()));
    }
    Summary {
        schema: SUMMARY_SCHEMA.to_string(),
        case: p.case.name.clone(),
        horizon: p.case.horizon,
        algorithm: "mapping-ccg".to_string(),
        converged: out.converged,
        objective: out.objective,
        lb: out.lb,
        ub: out.ub,
        gap: out.gap(),
        eps: cfg.eps,
        iterations: out.iterations,
        sp_strategy: out.strategy,
        first_stage_cost: p.inst.first_stage_cost(&out.alpha, &out.xi),
        worst_case_value: out.worst_case.value,
        worst_case_w: out.worst_case.w_star.clone(),
        total_slack: out.worst_case.recourse.total_slack(),
        alpha: out.alpha.iter().map(|&a| u8::from(a > 0.5)).collect(),
        open_branches: p.case.branches.iter().zip(&out.alpha).filter(|(_, &a)| a < 0.5).map(|(b, _)| b.id).collect(),
        xi: out.xi.clone(),
        gamma_t: unc.gamma_t,
        gamma_i: unc.gamma_i,
        m_s: p.inst.model.slack_penalty,
        extension: cfg.extension,
        seed: cfg.seed,
        notes,
    }
}

/// Writes topology, resizing, convergence and summary files for one run.
pub fn write_solution(cfg: &RunConfig, p: &Prepared, out: &CcgOutcome, summary: &Summary, prefix: &str) -> Result<()> {
    let dir = &cfg.out;
    output::ensure_dir(dir)?;
    output::write_json(&dir.join(format!("{prefix}topology.json")), &output::topology_json(&p.case, &out.alpha))?;
    output::write_text(&dir.join(format!("{prefix}topology.dot")), &output::topology_dot(&p.case, &out.alpha))?;
    let unc = &p.inst.unc;
    let rows = output::resizing_rows(&p.case, &out.xi, &unc.w_min, &unc.w_max, &unc.forecast, &p.inst.resize_cost);
    output::write_csv(&dir.join(format!("{prefix}resizing.csv")), &rows)?;
    output::write_csv(&dir.join(format!("{prefix}convergence.csv")), &output::convergence_rows(&out.log))?;
    output::write_json(&dir.join(format!("{prefix}summary.json")), summary)
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveReport> {
    let prepared = prepare(cfg)?;
    let backend = ClarabelBackend::default();
    let start = Instant::now();
    let outcome = run_mapping_ccg(&prepared.inst, &backend, &cfg.ccg_settings())?;
    let seconds = start.elapsed().as_secs_f64();
    let summary = summarize(cfg, &prepared, &outcome);
    write_solution(cfg, &prepared, &outcome, &summary, "")?;
    output::write_timings(&cfg.out, vec![RunTiming::new("mapping-ccg", seconds, &outcome.log)])?;
    Ok(SolveReport { prepared, outcome, summary, seconds })
}
