//! Sensitivity of the worst-case value to the uncertainty data, and the
//! topology stability scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ccg::mapping::block_argmax;
use crate::ccg::{run_mapping_ccg, CcgSettings, Instance, InstanceOptions};
use crate::engine::{ConicBackend, ConicProgram, ConicStatus};
use crate::error::{Error, Result};
use crate::formulation::uncertainty::{PolyRowKind, XiRowKind};
use crate::formulation::{CompactModel, UncertaintyPolyhedron};
use crate::network::NetworkCase;

/// Slack below which a row counts as active at `w*`.
pub const ACTIVE_TOL: f64 = 1e-7;

/// Multiplier ranges wider than this are reported as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-7;

/// Which row of the uncertainty set a multiplier belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum RowRef {
    /// Row of `F w ≤ f`.
    Fixed { row: usize },
    /// Row depending on `ξ`.
    Resizing { row: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct RowSensitivity {
    pub label: String,
    pub row: RowRef,
    pub multiplier: f64,
    /// Smallest and largest multiplier over the optimal dual face.
    pub range: (f64, f64),
    pub active: bool,
    pub slack: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SensitivityReport {
    /// One per row of `F w ≤ f`.
    pub pi: Vec<f64>,
    /// One per ξ-dependent row.
    pub theta: Vec<f64>,
    /// Fixed rows first, then ξ-dependent rows.
    pub rows: Vec<RowSensitivity>,
    /// `min(Σ θ on the rows of ξ_k, c_ξk)` per coordinate.
    pub resizing: Vec<f64>,
    /// Sum of `π` over each period's budget rows.
    pub period_budget: Vec<f64>,
    /// Sum of `π` over each unit's budget rows (multi-period cases only).
    pub unit_budget: Vec<f64>,
    pub w_star: Vec<f64>,
    /// `fᵀπ + (ξ + c)ᵀθ`
    pub dual_value: f64,
    /// `−(Gᵀλ)ᵀ w*`
    pub primal_value: f64,
    /// `‖Gᵀλ + Fᵀπ + Pᵀθ‖∞`
    pub stationarity_residual: f64,
}

impl SensitivityReport {
    pub fn duality_gap(&self) -> f64 {
        (self.dual_value - self.primal_value).abs()
    }

    pub fn active_rows(&self) -> impl Iterator<Item = &RowSensitivity> {
        self.rows.iter().filter(|r| r.active)
    }
}

/// Short label of a fixed row.
pub fn row_label(kind: &PolyRowKind) -> String {
    match *kind {
        PolyRowKind::Upper { k } => format!("upper[{k}]"),
        PolyRowKind::Lower { k } => format!("lower[{k}]"),
        PolyRowKind::PeriodBudget { t, signs } => format!("budget[{t},{signs:b}]"),
        PolyRowKind::UnitBudget { unit, signs } => format!("unit_budget[{unit},{signs:b}]"),
        PolyRowKind::DeviationPos { k } => format!("dev_pos[{k}]"),
        PolyRowKind::DeviationNeg { k } => format!("dev_neg[{k}]"),
        PolyRowKind::PeriodBudgetLifted { t } => format!("budget[{t}]"),
        PolyRowKind::UnitBudgetLifted { unit } => format!("unit_budget[{unit}]"),
    }
}

/// Short label of a ξ-dependent row.
pub fn xi_row_label(kind: &XiRowKind) -> String {
    match *kind {
        XiRowKind::Cap { k } => format!("cap[{k}]"),
        XiRowKind::Extension { k } => format!("ext[{k}]"),
    }
}

struct DualLp {
    program: ConicProgram,
    pi: Vec<usize>,
    theta: Vec<usize>,
}

/// `min fᵀπ + (ξ + c)ᵀθ  s.t.  Fᵀπ + Pᵀθ = −g, F_uᵀπ = 0, π, θ ≥ 0`
fn dual_lp(unc: &UncertaintyPolyhedron, g: &[f64], xi: &[f64]) -> DualLp {
    let mut p = ConicProgram::new();
    let pi: Vec<usize> = unc.rows.iter().map(|r| p.add_var(0.0, f64::INFINITY, r.rhs)).collect();
    let theta: Vec<usize> = unc.xi_rhs(xi).into_iter().map(|c| p.add_var(0.0, f64::INFINITY, c)).collect();
    let mut stat_w: Vec<Vec<(usize, f64)>> = vec![Vec::new(); unc.n_w];
    let mut stat_u: Vec<Vec<(usize, f64)>> = vec![Vec::new(); unc.n_aux];
    for (r, row) in unc.rows.iter().enumerate() {
        row.w.iter().for_each(|&(k, a)| stat_w[k].push((pi[r], a)));
        row.u.iter().for_each(|&(k, a)| stat_u[k].push((pi[r], a)));
    }
    for (r, row) in unc.xi_rows.iter().enumerate() {
        row.w.iter().for_each(|&(k, a)| stat_w[k].push((theta[r], a)));
    }
    for (k, terms) in stat_w.into_iter().enumerate() {
        p.add_eq(terms, -g[k]);
    }
    for terms in stat_u {
        p.add_eq(terms, 0.0);
    }
    DualLp { program: p, pi, theta }
}

/// Optimal `(π, θ)` of the dual of `max_{w ∈ W(ξ)} −gᵀw` and its value.
pub fn dual_multipliers(
    backend: &dyn ConicBackend,
    unc: &UncertaintyPolyhedron,
    g: &[f64],
    xi: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let lp = dual_lp(unc, g, xi);
    let sol = backend.solve(&lp.program)?;
    match sol.status {
        ConicStatus::Optimal => {}
        ConicStatus::Infeasible | ConicStatus::Unbounded => {
            return Err(Error::Infeasible("sensitivity dual is infeasible; the recourse multipliers are stale".into()))
        }
        s => return Err(Error::Solver(format!("sensitivity dual ended with status {s:?}"))),
    }
    let pi: Vec<f64> = lp.pi.iter().map(|&v| sol.x[v].max(0.0)).collect();
    let theta: Vec<f64> = lp.theta.iter().map(|&v| sol.x[v].max(0.0)).collect();
    let value =
        unc.f().iter().zip(&pi).map(|(f, p)| f * p).sum::<f64>() + unc.xi_rhs(xi).iter().zip(&theta).map(|(c, t)| c * t).sum::<f64>();
    Ok((pi, theta, value))
}

/// Optimal value of a variable over the optimal face, `None` when unbounded.
fn face_extreme(backend: &dyn ConicBackend, face: &ConicProgram, var: usize, sign: f64) -> Result<Option<f64>> {
    let mut q = face.clone();
    q.objective.iter_mut().for_each(|c| *c = 0.0);
    q.objective[var] = sign;
    let sol = backend.solve(&q)?;
    match sol.status {
        ConicStatus::Optimal => Ok(Some(sol.x[var])),
        ConicStatus::Unbounded => Ok(None),
        s => Err(Error::Solver(format!("multiplier range solve ended with status {s:?}"))),
    }
}

/// Multipliers of `max_{w ∈ W(ξ)} −(Gᵀλ)ᵀw` for the recourse dual `λ`.
/// `resize_cost` is `c_ξ`, one entry per coordinate.
pub fn second_stage_sensitivity(
    backend: &dyn ConicBackend,
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    xi: &[f64],
    lambda: &[f64],
    resize_cost: &[f64],
) -> Result<SensitivityReport> {
    if lambda.len() != model.num_rows() || xi.len() != unc.n_w || resize_cost.len() != unc.n_w {
        return Err(Error::InvalidInput("dimension mismatch in sensitivity inputs".into()));
    }
    let g = model.g.tmul(lambda);
    let lp = dual_lp(unc, &g, xi);
    let (pi, theta, dual_value) = dual_multipliers(backend, unc, &g, xi)?;
    let xr = unc.xi_rhs(xi);

    let (w_star, u_star) =
        block_argmax(backend, unc, &g, xi, true).ok_or_else(|| Error::Uncertainty("uncertainty set is empty at this resizing".into()))?;
    let primal_value: f64 = -g.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>();

    let mut resid = g.clone();
    let mut resid_u = vec![0.0; unc.n_aux];
    for (r, row) in unc.rows.iter().enumerate() {
        row.w.iter().for_each(|&(k, a)| resid[k] += a * pi[r]);
        row.u.iter().for_each(|&(k, a)| resid_u[k] += a * pi[r]);
    }
    for (r, row) in unc.xi_rows.iter().enumerate() {
        row.w.iter().for_each(|&(k, a)| resid[k] += a * theta[r]);
    }
    let stationarity_residual = resid.iter().chain(&resid_u).fold(0.0f64, |m, v| m.max(v.abs()));

    // optimal face: the dual rows plus an objective cap
    let mut face = lp.program.clone();
    let cap = dual_value + 1e-9 * (1.0 + dual_value.abs());
    face.add_le(face.objective.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(j, &c)| (j, c)).collect(), cap);

    let mut rows = Vec::with_capacity(unc.rows.len() + unc.xi_rows.len());
    let mut entries: Vec<(String, RowRef, f64, f64, usize)> = Vec::new();
    for (r, row) in unc.rows.iter().enumerate() {
        let lhs: f64 = row.w.iter().map(|&(k, a)| a * w_star[k]).sum::<f64>() + row.u.iter().map(|&(k, a)| a * u_star[k]).sum::<f64>();
        entries.push((row_label(&row.kind), RowRef::Fixed { row: r }, pi[r], row.rhs - lhs, lp.pi[r]));
    }
    for (r, row) in unc.xi_rows.iter().enumerate() {
        let lhs: f64 = row.w.iter().map(|&(k, a)| a * w_star[k]).sum();
        entries.push((xi_row_label(&row.kind), RowRef::Resizing { row: r }, theta[r], xr[r] - lhs, lp.theta[r]));
    }
    for (label, row, multiplier, slack, var) in entries {
        let active = slack <= ACTIVE_TOL;
        // complementary slackness pins inactive multipliers to zero on the whole face
        let range = if active {
            let lo = face_extreme(backend, &face, var, 1.0)?.unwrap_or(0.0).max(0.0);
            let hi = face_extreme(backend, &face, var, -1.0)?.unwrap_or(f64::INFINITY);
            (lo.min(multiplier), hi.max(multiplier))
        } else {
            (0.0, 0.0)
        };
        rows.push(RowSensitivity { label, row, multiplier, range, active, slack, degenerate: range.1 - range.0 > DEGENERATE_TOL });
    }

    let mut theta_sum = vec![0.0; unc.n_w];
    for (r, row) in unc.xi_rows.iter().enumerate() {
        theta_sum[row.xi] += theta[r];
    }
    let resizing = theta_sum.iter().zip(resize_cost).map(|(t, c)| t.min(*c)).collect();
    let sum_where = |n: usize, which: &dyn Fn(&PolyRowKind) -> Option<usize>| {
        let mut out = vec![0.0; n];
        for (r, row) in unc.rows.iter().enumerate() {
            if let Some(i) = which(&row.kind) {
                out[i] += pi[r];
            }
        }
        out
    };
    let period_budget = sum_where(unc.horizon, &|k| match *k {
        PolyRowKind::PeriodBudget { t, .. } | PolyRowKind::PeriodBudgetLifted { t } => Some(t),
        _ => None,
    });
    let unit_budget = if unc.gamma_i.is_some() {
        sum_where(unc.n_rg, &|k| match *k {
            PolyRowKind::UnitBudget { unit, .. } | PolyRowKind::UnitBudgetLifted { unit } => Some(unit),
            _ => None,
        })
    } else {
        Vec::new()
    };

    Ok(SensitivityReport { pi, theta, rows, resizing, period_budget, unit_budget, w_star, dual_value, primal_value, stationarity_residual })
}

#[derive(Clone, Debug)]
pub struct ScanSettings {
    /// Relative perturbation of the renewable bands and budgets.
    pub magnitude: f64,
    /// Defaults to twice the number of rows of `F w ≤ f`.
    pub samples: Option<usize>,
    pub seed: u64,
    pub ccg: CcgSettings,
    /// Also evaluate single branch exchanges of each optimum to detect ties.
    pub check_ties: bool,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings { magnitude: 0.01, samples: None, seed: 7, ccg: CcgSettings::default(), check_ties: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TopologyCount {
    pub alpha: Vec<f64>,
    /// Samples in which this topology was optimal.
    pub optimal: usize,
    /// Samples in which it tied with the optimum within ε without being returned.
    pub tied: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub samples: usize,
    pub topologies: Vec<TopologyCount>,
    /// Sample index and error message of each failed solve.
    pub failures: Vec<(usize, String)>,
}

impl ScanReport {
    /// More than one topology reached the optimum within ε.
    pub fn multiplicity(&self) -> bool {
        self.topologies.len() > 1
    }
}

/// Case with renewable bands and budgets scaled by independent factors in
/// `[1 − m, 1 + m]`; sample 0 is the base case.
pub fn perturb_case(case: &NetworkCase, opts: &InstanceOptions, magnitude: f64, rng: &mut impl Rng) -> (NetworkCase, InstanceOptions) {
    let mut c = case.clone();
    let mut o = opts.clone();
    let factor = |rng: &mut dyn rand::RngCore| {
        if magnitude > 0.0 {
            1.0 + rng.gen_range(-magnitude..=magnitude)
        } else {
            1.0
        }
    };
    for rg in &mut c.renewables {
        let lo = rg.band[0] * factor(rng);
        let hi = rg.band[1] * factor(rng);
        if lo < hi {
            rg.band = [lo, hi];
        }
    }
    let n_rg = c.renewables.len() as f64;
    let g = opts.uncertainty.gamma_t.unwrap_or(0.5 * n_rg);
    o.uncertainty.gamma_t = Some((g * factor(rng)).clamp(0.0, n_rg));
    if c.horizon > 1 {
        let g = opts.uncertainty.gamma_i.unwrap_or(0.5 * c.horizon as f64);
        o.uncertainty.gamma_i = Some((g * factor(rng)).clamp(0.0, c.horizon as f64));
    }
    (c, o)
}

/// Radial topologies one branch exchange away from `alpha`.
fn exchanges(case: &NetworkCase, alpha: &[f64]) -> Vec<Vec<f64>> {
    use crate::network::topology::is_radial;
    let mut out = Vec::new();
    for open in (0..alpha.len()).filter(|&k| alpha[k] < 0.5) {
        for close in (0..alpha.len()).filter(|&k| alpha[k] > 0.5 && case.branches[k].switchable) {
            let mut a = alpha.to_vec();
            a[open] = 1.0;
            a[close] = 0.0;
            if is_radial(case, &a) {
                out.push(a);
            }
        }
    }
    out
}

struct SampleResult {
    optimal: Vec<f64>,
    tied: Vec<Vec<f64>>,
}

fn run_sample(inst: &Instance, backend: &dyn ConicBackend, settings: &ScanSettings) -> Result<SampleResult> {
    let out = run_mapping_ccg(inst, backend, &settings.ccg)?;
    let mut tied = Vec::new();
    if settings.check_ties {
        for a in exchanges(&inst.case, &out.alpha) {
            let sp = crate::ccg::solve_subproblem(&inst.model, &inst.unc, backend, &a, &out.xi, out.strategy, &settings.ccg.sp_bnb)?;
            if inst.first_stage_cost(&a, &out.xi) + sp.value <= out.objective + settings.ccg.eps {
                tied.push(a);
            }
        }
    }
    Ok(SampleResult { optimal: out.alpha, tied })
}

/// Re-solves the decomposition under sampled perturbations of the
/// uncertainty data and counts the optimal topologies.
pub fn topology_stability_scan(
    case: &NetworkCase,
    opts: &InstanceOptions,
    backend: &dyn ConicBackend,
    settings: &ScanSettings,
) -> Result<ScanReport> {
    if !(settings.magnitude >= 0.0 && settings.magnitude < 1.0) {
        return Err(Error::InvalidInput(format!("perturbation magnitude {} outside [0, 1)", settings.magnitude)));
    }
    let base = Instance::new(case, opts)?;
    let samples = settings.samples.unwrap_or(2 * base.unc.num_rows()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut variants = vec![(case.clone(), opts.clone())];
    for _ in 1..samples {
        variants.push(perturb_case(case, opts, settings.magnitude, &mut rng));
    }
    let resize_zero = base.resize_cost.iter().all(|&c| c == 0.0);
    let results: Vec<Result<SampleResult>> = variants
        .par_iter()
        .map(|(c, o)| {
            let inst = Instance::new(c, o)?;
            let inst = if resize_zero { inst.without_resizing_cost() } else { inst };
            run_sample(&inst, backend, settings)
        })
        .collect();

    let mut topologies: Vec<TopologyCount> = Vec::new();
    let mut bump = |alpha: &[f64], optimal: bool| {
        let i = match topologies.iter().position(|t| t.alpha == alpha) {
            Some(i) => i,
            None => {
                topologies.push(TopologyCount { alpha: alpha.to_vec(), optimal: 0, tied: 0 });
                topologies.len() - 1
            }
        };
        if optimal {
            topologies[i].optimal += 1;
        } else {
            topologies[i].tied += 1;
        }
    };
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                bump(&s.optimal, true);
                s.tied.iter().for_each(|a| bump(a, false));
            }
            Err(e) => {
                log::warn!("scan sample {i} failed: {e}");
                failures.push((i, e.to_string()));
            }
        }
    }
    Ok(ScanReport { samples, topologies, failures })
}
