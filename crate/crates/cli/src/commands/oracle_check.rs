use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdnr_core::ccg::mapping::block_argmax;
use rdnr_core::ccg::{solve_subproblem, CcgSettings, Instance, SpStrategy};
use rdnr_core::engine::{ClarabelBackend, ConicBackend};
use rdnr_core::error::Error;
use rdnr_core::formulation::{evaluate_q, UncertaintyPolyhedron};
use rdnr_core::network::topology::max_weight_tree;
use rdnr_core::network::NetworkCase;
use rdnr_core::oracle::{self, TOY_WEIGHTS};
use rdnr_core::polytope;
use rdnr_core::sensitivity::second_stage_sensitivity;
use serde::Serialize;

use super::{prepare, Prepared};
use crate::config::{RunConfig, Task};
use crate::error::{CliError, Result};
use crate::output;

/// Agreement required of every numerical cross-check.
pub const ORACLE_TOL: f64 = 1e-6;

/// Draws per check that solves a mixed-integer program per draw.
const MILP_DRAWS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

/// One line of `oracle.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    fn measured(name: &str, value: f64, detail: String) -> Check {
        Check {
            name: name.into(),
            status: if value <= ORACLE_TOL { CheckStatus::Pass } else { CheckStatus::Fail },
            value: Some(value),
            tolerance: Some(ORACLE_TOL),
            detail,
        }
    }

    fn flag(name: &str, ok: bool, detail: String) -> Check {
        Check { name: name.into(), status: if ok { CheckStatus::Pass } else { CheckStatus::Fail }, value: None, tolerance: None, detail }
    }

    fn skip(name: &str, detail: String) -> Check {
        Check { name: name.into(), status: CheckStatus::Skip, value: None, tolerance: None, detail }
    }

    /// Guards become skips, any other error a failure.
    fn from_result(name: &str, r: rdnr_core::Result<Check>) -> Check {
        match r {
            Ok(c) => c,
            Err(Error::Guard(m)) => Check::skip(name, m),
            Err(e) => Check::flag(name, false, e.to_string()),
        }
    }
}

pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn lines(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skip => "SKIP",
            };
            let _ = writeln!(s, "{status} {}: {}", c.name, c.detail);
        }
        s
    }
}

fn random_alpha(case: &NetworkCase, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..case.num_branches()).map(|_| rng.gen()).collect();
    max_weight_tree(case, &w)
}

fn random_w(unc: &UncertaintyPolyhedron, rng: &mut impl Rng) -> Vec<f64> {
    (0..unc.n_w).map(|k| rng.gen_range(unc.w_min[k]..=unc.w_max[k])).collect()
}

/// Resizing decision in the domain with a non-empty uncertainty set.
fn random_xi(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng) -> rdnr_core::Result<Vec<f64>> {
    let zeros = vec![0.0; inst.unc.n_w];
    for _ in 0..1000 {
        let xi: Vec<f64> = (0..inst.domain.n_w).map(|k| rng.gen_range(inst.domain.lower[k]..=inst.domain.upper[k])).collect();
        if inst.domain.contains(&xi, 0.0) && block_argmax(backend, &inst.unc, &zeros, &xi, true).is_some() {
            return Ok(xi);
        }
    }
    Err(Error::Uncertainty("no admissible resizing found in 1000 draws".into()))
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Largest distance between matched vertices of two sorted lists, or
/// infinity when the counts differ.
fn vertex_set_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().map(|v| b.iter().map(|u| sup_dist(u, v)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

fn production_vertices(unc: &UncertaintyPolyhedron, xi: &[f64]) -> rdnr_core::Result<Vec<Vec<f64>>> {
    let (a, b) = unc.dense_rows(xi)?;
    polytope::enumerate_vertices(&a, &b, &unc.w_min, &unc.w_max, 1e-10)
}

fn check_radiality(case: &NetworkCase) -> rdnr_core::Result<Check> {
    let c = oracle::check_radiality_rows(case)?;
    let mut ok = c.mismatches == 0;
    let mut detail = format!("{} assignments, {} spanning trees, {} mismatches", c.assignments, c.trees, c.mismatches);
    if case.branches.iter().all(|b| b.switchable) {
        let edges: Vec<(usize, usize)> = case.branches.iter().map(|b| (b.from, b.to)).collect();
        let kirchhoff = oracle::kirchhoff_count(case.num_buses(), &edges).round() as usize;
        ok &= kirchhoff == c.trees;
        let _ = write!(detail, ", matrix-tree count {kirchhoff}");
    }
    Ok(Check::flag("radiality-rows", ok, detail))
}

fn check_box() -> rdnr_core::Result<Check> {
    let a = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
    let b = vec![1.0, 0.0, 1.0, 0.0];
    let basis = oracle::basis_vertices(&a, &b, 2)?.vertices;
    let prod = polytope::enumerate_vertices(&[], &[], &[0.0, 0.0], &[1.0, 1.0], 1e-10)?;
    let ok = basis.len() == 4 && vertex_set_distance(&basis, &prod) < 1e-9;
    Ok(Check::flag("box-vertices", ok, format!("basis {} vertices, production {}", basis.len(), prod.len())))
}

fn check_toy_vertices() -> rdnr_core::Result<Check> {
    let toy = oracle::toy_set();
    let mut ok = true;
    let mut parts = Vec::new();
    for (xi, want) in [([0.75, 0.75], 4), ([0.75, 0.4], 3)] {
        let basis = oracle::enumerate_vertices(&toy, &xi)?.vertices;
        let prod = production_vertices(&toy, &xi)?;
        ok &= basis.len() == want && vertex_set_distance(&basis, &prod) < 1e-9;
        parts.push(format!("xi {xi:?}: basis {}, production {}", basis.len(), prod.len()));
    }
    Ok(Check::flag("toy-vertices", ok, parts.join("; ")))
}

fn check_toy_mapping(backend: &dyn ConicBackend) -> rdnr_core::Result<Check> {
    let toy = oracle::toy_set();
    let mut worst: f64 = 0.0;
    for (xi, want) in [([0.75, 0.75], [0.25, 0.5]), ([0.75, 0.4], [0.35, 0.4])] {
        let c = oracle::mapping_cross_check(backend, &toy, &TOY_WEIGHTS, &xi)?;
        worst = worst.max(c.value_spread()).max(c.point_gap()).max(sup_dist(&c.vertex.0, &want));
    }
    Ok(Check::measured("toy-mapping", worst, format!("vertex, block and LP agree within {worst:.2e}")))
}

fn check_case_vertices(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng) -> rdnr_core::Result<Check> {
    let mut worst: f64 = 0.0;
    let mut counts = Vec::new();
    for xi in [inst.unc.w_max.clone(), random_xi(inst, backend, rng)?] {
        let basis = oracle::enumerate_vertices(&inst.unc, &xi)?.vertices;
        let prod = production_vertices(&inst.unc, &xi)?;
        worst = worst.max(vertex_set_distance(&basis, &prod));
        counts.push(basis.len());
    }
    Ok(Check::measured("case-vertices", worst, format!("vertex counts {counts:?}, production matches within {worst:.2e}")))
}

fn check_case_mapping(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng, draws: usize) -> rdnr_core::Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let alpha = random_alpha(&inst.case, rng);
        let xi = random_xi(inst, backend, rng)?;
        let w = random_w(&inst.unc, rng);
        let lambda = evaluate_q(&inst.model, backend, &alpha, &w)?.lambda;
        let g = inst.model.g.tmul(&lambda);
        let c = oracle::mapping_cross_check_with(backend, &inst.unc, &inst.block_unc, &g, &xi)?;
        worst = worst.max(c.value_spread() / (1.0 + c.vertex.1.abs()));
    }
    let extended = inst.unc.xi_rows.len() > inst.unc.n_w;
    let what = if extended { "extended block" } else { "block" };
    Ok(Check::measured("case-mapping", worst, format!("{draws} draws, vertex, {what} and LP within {worst:.2e}")))
}

fn check_convexity(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng, draws: usize) -> rdnr_core::Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let alpha = random_alpha(&inst.case, rng);
        let (a, b) = (random_w(&inst.unc, rng), random_w(&inst.unc, rng));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        let qa = evaluate_q(&inst.model, backend, &alpha, &a)?.value;
        let qb = evaluate_q(&inst.model, backend, &alpha, &b)?.value;
        let qm = evaluate_q(&inst.model, backend, &alpha, &mid)?.value;
        let scale = 1.0 + qa.abs().max(qb.abs());
        worst = worst.max((qm - 0.5 * (qa + qb)) / scale);
    }
    Ok(Check::measured("q-convexity", worst, format!("{draws} midpoint pairs, worst excess {worst:.2e}")))
}

fn check_duality(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng, draws: usize) -> rdnr_core::Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let alpha = random_alpha(&inst.case, rng);
        let w = random_w(&inst.unc, rng);
        let sol = evaluate_q(&inst.model, backend, &alpha, &w)?;
        worst = worst.max(oracle::duality_residual(&sol) / (1.0 + sol.value.abs())).max(sol.residual);
    }
    Ok(Check::measured("strong-duality", worst, format!("{draws} recourse solves, worst residual {worst:.2e}")))
}

fn integral(v: f64) -> bool {
    v.fract() == 0.0
}

fn check_strategies(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng, draws: usize) -> rdnr_core::Result<Check> {
    let unc = &inst.unc;
    if !(integral(unc.gamma_t) && unc.gamma_i.is_none_or(integral)) {
        return Err(Error::Guard("the milp strategy needs integer budgets".into()));
    }
    if SpStrategy::default_for(unc) != SpStrategy::VertexEnum {
        return Err(Error::Guard("vertex enumeration is out of range for this set".into()));
    }
    let bnb = CcgSettings::default().sp_bnb;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let alpha = random_alpha(&inst.case, rng);
        let xi = random_xi(inst, backend, rng)?;
        let v = solve_subproblem(&inst.model, unc, backend, &alpha, &xi, SpStrategy::VertexEnum, &bnb)?.value;
        let m = solve_subproblem(&inst.model, unc, backend, &alpha, &xi, SpStrategy::BigMMilp, &bnb)?.value;
        worst = worst.max((v - m).abs() / (1.0 + v.abs()));
    }
    Ok(Check::measured("sp-strategies", worst, format!("{draws} draws, vertex and milp within {worst:.2e}")))
}

fn check_sensitivity(inst: &Instance, backend: &dyn ConicBackend, rng: &mut impl Rng) -> rdnr_core::Result<Check> {
    let alpha = random_alpha(&inst.case, rng);
    let xi = random_xi(inst, backend, rng)?;
    let strategy = SpStrategy::default_for(&inst.unc);
    let sp = solve_subproblem(&inst.model, &inst.unc, backend, &alpha, &xi, strategy, &CcgSettings::default().sp_bnb)?;
    let r = second_stage_sensitivity(backend, &inst.model, &inst.unc, &xi, sp.lambda(), &inst.resize_cost)?;
    let worst = (r.duality_gap() / (1.0 + r.primal_value.abs())).max(r.stationarity_residual);
    Ok(Check::measured(
        "sensitivity-duality",
        worst,
        format!("dual {:.8} primal {:.8}, residual {:.2e}", r.dual_value, r.primal_value, r.stationarity_residual),
    ))
}

/// Every check in a fixed order with one seeded generator.
pub fn run_checks(p: &Prepared, backend: &dyn ConicBackend, samples: usize, seed: u64) -> Vec<Check> {
    let inst = &p.inst;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let milp = samples.min(MILP_DRAWS);
    vec![
        Check::from_result("radiality-rows", check_radiality(&p.case)),
        Check::from_result("box-vertices", check_box()),
        Check::from_result("toy-vertices", check_toy_vertices()),
        Check::from_result("toy-mapping", check_toy_mapping(backend)),
        Check::from_result("case-vertices", check_case_vertices(inst, backend, &mut rng)),
        Check::from_result("case-mapping", check_case_mapping(inst, backend, &mut rng, milp)),
        Check::from_result("q-convexity", check_convexity(inst, backend, &mut rng, samples)),
        Check::from_result("strong-duality", check_duality(inst, backend, &mut rng, samples)),
        Check::from_result("sp-strategies", check_strategies(inst, backend, &mut rng, samples)),
        Check::from_result("sensitivity-duality", check_sensitivity(inst, backend, &mut rng)),
    ]
}

/// Writes `oracle.csv` and fails when any check fails.
pub fn cmd_oracle_check(cfg: &RunConfig) -> Result<OracleReport> {
    let Task::OracleCheck { samples } = cfg.task else {
        return Err(CliError::Config("not an oracle-check configuration".into()));
    };
    let p = prepare(cfg)?;
    let backend = ClarabelBackend::default();
    let report = OracleReport { checks: run_checks(&p, &backend, samples, cfg.seed) };
    output::ensure_dir(&cfg.out)?;
    output::write_csv(&cfg.out.join("oracle.csv"), &report.checks)?;
    let failed: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(report)
    } else {
        print!("{}", report.lines());
        Err(CliError::OracleFailed(failed.join(", ")))
    }
}
