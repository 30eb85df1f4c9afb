//! Mapping-based column-and-constraint generation.

pub mod mapping;
pub mod master;
pub mod subproblem;

use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::Instant;

use serde::Serialize;

pub use mapping::{add_mapping_block, BlockKind, BlockVars, XiRef};
pub use master::{ColumnKind, Master, MasterSettings, MasterSolution};
pub use subproblem::{solve_subproblem, SpStrategy, SubproblemResult};

use crate::engine::{BnbSettings, ConicBackend};
use crate::error::{Error, Result};
use crate::formulation::{
    build_resizing_domain, build_second_stage, build_uncertainty, default_slack_penalty, relax_recourse, BigMPolicy, CompactModel,
    ResizingDomain, UncertaintyOptions, UncertaintyPolyhedron,
};
use crate::network::NetworkCase;

/// Everything the decomposition needs about one case.
#[derive(Clone, Debug)]
pub struct Instance {
    pub case: NetworkCase,
    /// Relaxed recourse.
    pub model: CompactModel,
    /// Sign-expanded when budgets are short enough, used by the subproblem.
    pub unc: UncertaintyPolyhedron,
    /// Encoding with the fewest rows, used inside KKT blocks.
    pub block_unc: UncertaintyPolyhedron,
    pub domain: ResizingDomain,
    pub switch_cost: Vec<f64>,
    pub resize_cost: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct InstanceOptions {
    pub uncertainty: UncertaintyOptions,
    /// Slack penalty; defaults to `1000 · max |b|`.
    pub m_s: Option<f64>,
    pub big_m: BigMPolicy,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        InstanceOptions { uncertainty: UncertaintyOptions::default(), m_s: None, big_m: BigMPolicy::PerBranch }
    }
}

impl Instance {
    pub fn new(case: &NetworkCase, opts: &InstanceOptions) -> Result<Self> {
        let base = build_second_stage(case, opts.big_m)?;
        let m_s = opts.m_s.unwrap_or_else(|| default_slack_penalty(&base));
        let model = relax_recourse(&base, m_s)?;
        let unc = build_uncertainty(case, &opts.uncertainty)?;
        let block_unc = if unc.n_aux == 0 {
            let lifted = build_uncertainty(case, &UncertaintyOptions { force_lifted: true, ..opts.uncertainty.clone() })?;
            if lifted.num_rows() + lifted.n_aux < unc.num_rows() {
                lifted
            } else {
                unc.clone()
            }
        } else {
            unc.clone()
        };
        let domain = build_resizing_domain(&unc);
        let resize_cost = (0..unc.n_w).map(|k| case.costs.resizing[k / case.horizon][k % case.horizon]).collect();
        Ok(Instance { case: case.clone(), model, unc, block_unc, domain, switch_cost: case.costs.switching.clone(), resize_cost })
    }

    /// `c_αᵀα − c_ξᵀξ`
    pub fn first_stage_cost(&self, alpha: &[f64], xi: &[f64]) -> f64 {
        let a: f64 = self.switch_cost.iter().zip(alpha).map(|(c, a)| c * a).sum();
        let r: f64 = self.resize_cost.iter().zip(xi).map(|(c, x)| c * x).sum();
        a - r
    }

    /// Default floor for the recourse epigraph.
    pub fn default_l_floor(&self) -> f64 {
        self.model.cost_floor().min(0.0)
    }

    pub fn without_resizing_cost(mut self) -> Self {
        self.resize_cost.iter_mut().for_each(|c| *c = 0.0);
        self
    }
}

/// How generated columns tie their scenario to the master.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnMode {
    /// Full KKT mapping blocks.
    Mapping,
    /// KKT blocks without the ξ-dependent rows.
    Degenerate,
    /// Scenario pinned to the subproblem's worst case.
    Classical,
}

#[derive(Clone, Debug)]
pub struct CcgSettings {
    pub eps: f64,
    pub max_iter: usize,
    /// `None` picks by dimension.
    pub sp_strategy: Option<SpStrategy>,
    pub mode: ColumnMode,
    pub xi_fixed: Option<Vec<f64>>,
    pub l_floor: Option<f64>,
    pub mp_bnb: Option<BnbSettings>,
    pub sp_bnb: BnbSettings,
    /// Size of the cost perturbation used to escape a repeated dual.
    pub jitter: f64,
    pub record_timings: bool,
}

impl Default for CcgSettings {
    fn default() -> Self {
        CcgSettings {
            eps: 1e-4,
            max_iter: 50,
            sp_strategy: None,
            mode: ColumnMode::Mapping,
            xi_fixed: None,
            l_floor: None,
            mp_bnb: None,
            sp_bnb: BnbSettings { abs_gap: 1e-8, ..BnbSettings::default() },
            jitter: 1e-9,
            record_timings: true,
        }
    }
}

impl CcgSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn master_bnb(&self) -> BnbSettings {
        self.mp_bnb.clone().unwrap_or(BnbSettings { abs_gap: self.eps / 10.0, ..BnbSettings::default() })
    }
}

/// Stable short hash of a vector rounded to 1e-9.
pub fn fingerprint(v: &[f64]) -> String {
    let mut h = DefaultHasher::new();
    for x in v {
        ((x * 1e9).round() as i64).hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub mp_seconds: f64,
    pub sp_seconds: f64,
    pub n_binaries: usize,
    pub n_rows: usize,
    pub mp_nodes: usize,
    pub sp_value: f64,
    pub w_star: Vec<f64>,
    pub w_fingerprint: String,
    pub lambda_fingerprint: String,
    pub jittered: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConvergenceLog {
    pub records: Vec<IterationRecord>,
}

impl ConvergenceLog {
    pub fn lb_nondecreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].lb >= w[0].lb)
    }

    pub fn ub_nonincreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].ub <= w[0].ub)
    }

    /// First iteration whose gap is below `gap`.
    pub fn iterations_to(&self, gap: f64) -> Option<usize> {
        self.records.iter().find(|r| r.gap < gap).map(|r| r.iter)
    }
}

#[derive(Clone, Debug)]
pub struct CcgOutcome {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    /// Objective of the incumbent, equal to the final upper bound.
    pub objective: f64,
    pub lb: f64,
    pub ub: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log: ConvergenceLog,
    /// Subproblem at the incumbent.
    pub worst_case: SubproblemResult,
    /// Last master solution.
    pub final_master: MasterSolution,
    /// Multipliers that generated each column.
    pub column_lambdas: Vec<Vec<f64>>,
    pub strategy: SpStrategy,
}

impl CcgOutcome {
    pub fn gap(&self) -> f64 {
        self.ub - self.lb
    }
}

struct History {
    columns: Vec<(Vec<f64>, ColumnKind)>,
}

fn build_master(inst: &Instance, settings: &MasterSettings, history: &History) -> Result<Master> {
    let mut m = Master::new(inst, settings.clone())?;
    for (lambda, kind) in &history.columns {
        m.add_column(inst, lambda, kind.clone())?;
    }
    Ok(m)
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-7)
}

/// Runs the decomposition until `UB − LB < ε` or the iteration budget ends.
pub fn run_mapping_ccg(inst: &Instance, backend: &dyn ConicBackend, settings: &CcgSettings) -> Result<CcgOutcome> {
    settings.validate()?;
    let strategy = settings.sp_strategy.unwrap_or_else(|| SpStrategy::default_for(&inst.unc));
    let mp_bnb = settings.master_bnb();
    let mut ms = MasterSettings {
        l_floor: settings.l_floor.unwrap_or_else(|| inst.default_l_floor()),
        xi_fixed: settings.xi_fixed.clone(),
        m_scale: 1.0,
    };
    let mut history = History { columns: Vec::new() };
    let mut master = build_master(inst, &ms, &history)?;
    let mut log = ConvergenceLog::default();
    let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut incumbent: Option<(Vec<f64>, Vec<f64>, SubproblemResult)> = None;
    let mut visited: Vec<(Vec<f64>, Vec<f64>, String)> = Vec::new();
    let mut converged = false;
    let mut last_master = None;
    let mut hints: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let clock = |t: Instant| if settings.record_timings { t.elapsed().as_secs_f64() } else { 0.0 };

    for iter in 1..=settings.max_iter {
        let t0 = Instant::now();
        let mut sol = master.solve(inst, backend, &mp_bnb, &hints)?;
        while sol.saturation >= 1.0 - 1e-6 {
            if ms.m_scale >= 1e4 {
                return Err(Error::BigMSaturated(format!("master block multipliers ({:.6})", sol.saturation)));
            }
            ms.m_scale *= 10.0;
            log::warn!("master block multiplier at its bound, rebuilding with scale {}", ms.m_scale);
            master = build_master(inst, &ms, &history)?;
            sol = master.solve(inst, backend, &mp_bnb, &hints)?;
        }
        let mp_seconds = clock(t0);
        hints.insert(0, (sol.alpha.clone(), sol.xi.clone()));
        hints.truncate(3);
        if sol.bound < lb - 1e-7 {
            log::warn!("master bound fell from {lb} to {}", sol.bound);
        }
        lb = lb.max(sol.bound);

        let t1 = Instant::now();
        let mut sp = solve_subproblem(&inst.model, &inst.unc, backend, &sol.alpha, &sol.xi, strategy, &settings.sp_bnb)?;
        let mut lam_fp = fingerprint(sp.lambda());
        let mut jittered = false;
        let repeated = visited.iter().any(|(a, x, f)| same(a, &sol.alpha) && same(x, &sol.xi) && *f == lam_fp);
        if repeated && settings.jitter > 0.0 {
            let jm = subproblem::jittered(&inst.model, settings.jitter);
            let alt = solve_subproblem(&jm, &inst.unc, backend, &sol.alpha, &sol.xi, strategy, &settings.sp_bnb)?;
            let exact = crate::formulation::evaluate_q(&inst.model, backend, &sol.alpha, &alt.w_star)?;
            sp = SubproblemResult {
                value: exact.value,
                w_star: alt.w_star,
                // duals of the perturbed model, value of the original one
                recourse: alt.recourse,
                work: sp.work,
                saturation: sp.saturation,
            };
            lam_fp = fingerprint(sp.lambda());
            jittered = true;
            log::info!("repeated first stage at iteration {iter}, re-solved with jitter");
        }
        visited.push((sol.alpha.clone(), sol.xi.clone(), lam_fp.clone()));
        let sp_seconds = clock(t1);

        let value = inst.first_stage_cost(&sol.alpha, &sol.xi) + sp.value;
        if value < ub {
            ub = value;
            incumbent = Some((sol.alpha.clone(), sol.xi.clone(), sp.clone()));
        }
        if lb > ub + settings.eps {
            log::warn!("lower bound {lb} exceeds upper bound {ub}");
        }
        log.records.push(IterationRecord {
            iter,
            lb,
            ub,
            gap: ub - lb,
            mp_seconds,
            sp_seconds,
            n_binaries: master.num_binaries(),
            n_rows: master.num_rows(),
            mp_nodes: sol.nodes,
            sp_value: sp.value,
            w_star: sp.w_star.clone(),
            w_fingerprint: fingerprint(&sp.w_star),
            lambda_fingerprint: lam_fp,
            jittered,
        });
        log::info!("iteration {iter}: lb {lb:.6} ub {ub:.6}");
        last_master = Some(sol);
        if ub - lb < settings.eps {
            converged = true;
            break;
        }
        let kind = match settings.mode {
            ColumnMode::Mapping => ColumnKind::Mapping(BlockKind::Kkt),
            ColumnMode::Degenerate => ColumnKind::Mapping(BlockKind::Degenerate),
            ColumnMode::Classical => ColumnKind::Fixed(sp.w_star.clone()),
        };
        master.add_column(inst, sp.lambda(), kind.clone())?;
        history.columns.push((sp.lambda().to_vec(), kind));
    }

    let (alpha, xi, worst_case) = incumbent.expect("at least one iteration ran");
    Ok(CcgOutcome {
        alpha,
        xi,
        objective: ub,
        lb,
        ub,
        converged,
        iterations: log.records.len(),
        log,
        worst_case,
        final_master: last_master.expect("at least one iteration ran"),
        column_lambdas: history.columns.into_iter().map(|(l, _)| l).collect(),
        strategy,
    })
}
