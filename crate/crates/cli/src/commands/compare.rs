use std::fmt::Write as _;
use std::time::Instant;

use rdnr_core::benders::{run_modified_benders, BendersOutcome};
use rdnr_core::ccg::{run_mapping_ccg, CcgOutcome};
use rdnr_core::engine::ClarabelBackend;
use serde::Serialize;

use super::prepare;
use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{self, RunTiming};

/// Gap at which iteration counts are compared.
pub const COMPARE_GAP: f64 = 1e-3;

/// One line of `compare.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub algorithm: String,
    pub iterations: usize,
    pub iterations_to_gap: Option<usize>,
    pub converged: bool,
    pub stop: String,
    pub objective: f64,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
}

/// One line of `compare_log.csv`; a side stops contributing once it ended.
#[derive(Clone, Debug, Serialize)]
pub struct CompareLogRow {
    pub iter: usize,
    pub ccg_lb: Option<f64>,
    pub ccg_ub: Option<f64>,
    pub ccg_gap: Option<f64>,
    pub benders_lb: Option<f64>,
    pub benders_ub: Option<f64>,
    pub benders_gap: Option<f64>,
}

pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub ccg: CcgOutcome,
    pub benders: BendersOutcome,
    pub ccg_seconds: f64,
    pub benders_seconds: f64,
}

impl CompareReport {
    /// Both methods converged and their objectives differ by more than the gap.
    pub fn objectives_disagree(&self) -> bool {
        self.ccg.converged && self.benders.converged() && (self.ccg.objective - self.benders.objective).abs() > COMPARE_GAP
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14}{:>6}{:>10}{:>16}{:>12}{:>12}", "algorithm", "iter", "to 1e-3", "objective", "gap", "seconds");
        for (r, t) in self.rows.iter().zip([self.ccg_seconds, self.benders_seconds]) {
            let to = r.iterations_to_gap.map_or("-".to_string(), |n| n.to_string());
            let _ = writeln!(s, "{:<14}{:>6}{:>10}{:>16.8}{:>12.3e}{:>12.2}", r.algorithm, r.iterations, to, r.objective, r.gap, t);
        }
        s
    }
}

fn log_rows(ccg: &CcgOutcome, bd: &BendersOutcome) -> Vec<CompareLogRow> {
    let n = ccg.log.records.len().max(bd.log.records.len());
    (0..n)
        .map(|i| {
            let c = ccg.log.records.get(i);
            let b = bd.log.records.get(i);
            CompareLogRow {
                iter: i + 1,
                ccg_lb: c.map(|r| r.lb),
                ccg_ub: c.map(|r| r.ub),
                ccg_gap: c.map(|r| r.gap),
                benders_lb: b.map(|r| r.lb),
                benders_ub: b.map(|r| r.ub),
                benders_gap: b.map(|r| r.gap),
            }
        })
        .collect()
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport> {
    let p = prepare(cfg)?;
    let backend = ClarabelBackend::default();
    let t0 = Instant::now();
    let ccg = run_mapping_ccg(&p.inst, &backend, &cfg.ccg_settings())?;
    let ccg_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let benders = run_modified_benders(&p.inst, &backend, &cfg.benders_settings())?;
    let benders_seconds = t1.elapsed().as_secs_f64();
    let rows = vec![
        CompareRow {
            algorithm: "mapping-ccg".into(),
            iterations: ccg.iterations,
            iterations_to_gap: ccg.log.iterations_to(COMPARE_GAP),
            converged: ccg.converged,
            stop: if ccg.converged { "converged" } else { "iteration-limit" }.into(),
            objective: ccg.objective,
            lb: ccg.lb,
            ub: ccg.ub,
            gap: ccg.gap(),
        },
        CompareRow {
            algorithm: "benders".into(),
            iterations: benders.iterations,
            iterations_to_gap: benders.log.iterations_to(COMPARE_GAP),
            converged: benders.converged(),
            stop: serde_json::to_value(benders.stop)?.as_str().unwrap_or_default().to_string(),
            objective: benders.objective,
            lb: benders.lb,
            ub: benders.ub,
            gap: benders.gap(),
        },
    ];
    let dir = &cfg.out;
    output::ensure_dir(dir)?;
    output::write_csv(&dir.join("compare.csv"), &rows)?;
    output::write_csv(&dir.join("compare_log.csv"), &log_rows(&ccg, &benders))?;
    output::write_csv(&dir.join("convergence_ccg.csv"), &output::convergence_rows(&ccg.log))?;
    output::write_csv(&dir.join("convergence_benders.csv"), &output::convergence_rows(&benders.log))?;
    output::write_timings(
        dir,
        vec![RunTiming::new("mapping-ccg", ccg_seconds, &ccg.log), RunTiming::new("benders", benders_seconds, &benders.log)],
    )?;
    let report = CompareReport { rows, ccg, benders, ccg_seconds, benders_seconds };
    if report.objectives_disagree() {
        log::warn!("converged objectives differ by more than {COMPARE_GAP}");
    }
    Ok(report)
}
