//! Report files. CSV files never carry wall-clock data so that repeated runs
//! with the same configuration produce identical bytes; timings go to
//! `timings.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rdnr_core::ccg::{ConvergenceLog, IterationRecord};
use rdnr_core::network::NetworkCase;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

pub const SUMMARY_SCHEMA: &str = "rdnr-summary/1";
pub const SENSITIVITY_SCHEMA: &str = "rdnr-sensitivity/1";
pub const TIMINGS_SCHEMA: &str = "rdnr-timings/1";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        k => CliError::Config(format!("{k:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Branch id to 0/1 switch state, in file order.
pub fn topology_json(case: &NetworkCase, alpha: &[f64]) -> Value {
    let mut m = Map::new();
    for (b, &a) in case.branches.iter().zip(alpha) {
        m.insert(b.id.to_string(), Value::from(u8::from(a > 0.5)));
    }
    Value::Object(m)
}

/// Graphviz rendering of the closed branches.
pub fn topology_dot(case: &NetworkCase, alpha: &[f64]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "graph \"{}\" {{", case.name.replace('"', "'"));
    let _ = writeln!(s, "  node [shape=circle];");
    for (i, bus) in case.buses.iter().enumerate() {
        let shape = if i == case.substation { " [shape=doublecircle]" } else { "" };
        let _ = writeln!(s, "  {}{shape};", bus.id);
    }
    for (b, &a) in case.branches.iter().zip(alpha) {
        if a > 0.5 {
            let _ = writeln!(s, "  {} -- {} [label=\"{}\"];", case.buses[b.from].id, case.buses[b.to].id, b.id);
        }
    }
    s.push_str("}\n");
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct ResizingRow {
    pub coordinate: usize,
    pub bus: u32,
    pub period: usize,
    pub xi: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub forecast: f64,
    pub resize_cost: f64,
}

pub fn resizing_rows(case: &NetworkCase, xi: &[f64], w_min: &[f64], w_max: &[f64], forecast: &[f64], cost: &[f64]) -> Vec<ResizingRow> {
    (0..xi.len())
        .map(|k| {
            let (i, t) = (k / case.horizon, k % case.horizon);
            ResizingRow {
                coordinate: k,
                bus: case.buses[case.renewables[i].bus].id,
                period: t,
                xi: xi[k],
                w_min: w_min[k],
                w_max: w_max[k],
                forecast: forecast[k],
                resize_cost: cost[k],
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub n_binaries: usize,
    pub n_rows: usize,
    pub mp_nodes: usize,
    pub sp_value: f64,
    pub w_fingerprint: String,
    pub lambda_fingerprint: String,
    pub jittered: bool,
}

impl From<&IterationRecord> for ConvergenceRow {
    fn from(r: &IterationRecord) -> Self {
        ConvergenceRow {
            iter: r.iter,
            lb: r.lb,
            ub: r.ub,
            gap: r.gap,
            n_binaries: r.n_binaries,
            n_rows: r.n_rows,
            mp_nodes: r.mp_nodes,
            sp_value: r.sp_value,
            w_fingerprint: r.w_fingerprint.clone(),
            lambda_fingerprint: r.lambda_fingerprint.clone(),
            jittered: r.jittered,
        }
    }
}

pub fn convergence_rows(log: &ConvergenceLog) -> Vec<ConvergenceRow> {
    log.records.iter().map(ConvergenceRow::from).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTiming {
    pub iter: usize,
    pub mp_seconds: f64,
    pub sp_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunTiming {
    pub algorithm: String,
    pub total_seconds: f64,
    pub iterations: Vec<IterationTiming>,
}

impl RunTiming {
    pub fn new(algorithm: &str, total_seconds: f64, log: &ConvergenceLog) -> Self {
        RunTiming {
            algorithm: algorithm.to_string(),
            total_seconds,
            iterations: log
                .records
                .iter()
                .map(|r| IterationTiming { iter: r.iter, mp_seconds: r.mp_seconds, sp_seconds: r.sp_seconds })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub schema: &'static str,
    pub runs: Vec<RunTiming>,
}

pub fn write_timings(dir: &Path, runs: Vec<RunTiming>) -> Result<()> {
    write_json(&dir.join("timings.json"), &Timings { schema: TIMINGS_SCHEMA, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rdnr_core::cases;

    #[test]
    fn topology_keeps_file_order_and_closed_edges() {
        let c = cases::case33();
        let alpha: Vec<f64> = (0..c.num_branches()).map(|k| if k < 32 { 1.0 } else { 0.0 }).collect();
        let text = serde_json::to_string(&topology_json(&c, &alpha)).unwrap();
        let ids: Vec<String> = c.branches.iter().map(|b| b.id.to_string()).collect();
        let pos: Vec<usize> = ids.iter().map(|id| text.find(&format!("\"{id}\":")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let dot = topology_dot(&c, &alpha);
        assert_eq!(dot.matches(" -- ").count(), 32);
        assert!(dot.contains("doublecircle"));
    }

    #[test]
    fn csv_has_header_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![IterationTiming { iter: 1, mp_seconds: 0.5, sp_seconds: 0.25 }];
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next(), Some("iter,mp_seconds,sp_seconds"));
        assert_eq!(text.lines().count(), 2);
    }
}
