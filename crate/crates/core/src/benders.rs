//! Modified Benders decomposition with dual cuts that keep the resizing
//! decision in the inner worst case.

use std::time::Instant;

use serde::Serialize;

use crate::ccg::mapping::block_argmax;
use crate::ccg::{
    fingerprint, solve_subproblem, ColumnKind, ConvergenceLog, Instance, IterationRecord, Master, MasterSettings, SpStrategy,
    SubproblemResult,
};
use crate::engine::{BnbSettings, ConicBackend};
use crate::error::{Error, Result};
use crate::formulation::UncertaintyPolyhedron;
use crate::sensitivity::dual_multipliers;

/// One optimality cut built from the recourse multipliers `λ` at a first stage.
#[derive(Clone, Debug, Serialize)]
pub struct BendersCut {
    pub lambda: Vec<f64>,
    /// `Gᵀλ`
    pub weights: Vec<f64>,
    /// `Aᵀλ`
    pub alpha_coef: Vec<f64>,
    /// `λᵀγ`
    pub constant: f64,
    /// Multipliers of the inner worst case at the generating point.
    pub pi: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    /// Worst-case recourse at the generating point.
    pub value: f64,
    pub w_star: Vec<f64>,
}

impl BendersCut {
    fn first_stage_part(&self, alpha: &[f64]) -> f64 {
        self.constant + self.alpha_coef.iter().zip(alpha).map(|(a, x)| a * x).sum::<f64>()
    }

    /// Cut with `(π, θ)` frozen: `λᵀ(A α + γ) + fᵀπ + (ξ + c)ᵀθ`. It is a
    /// tangent of a concave function of `ξ` and can exceed the recourse value.
    pub fn tangent_value(&self, unc: &UncertaintyPolyhedron, alpha: &[f64], xi: &[f64]) -> f64 {
        let f: f64 = unc.f().iter().zip(&self.pi).map(|(f, p)| f * p).sum();
        let c: f64 = unc.xi_rhs(xi).iter().zip(&self.theta).map(|(c, t)| c * t).sum();
        self.first_stage_part(alpha) + f + c
    }

    /// Cut with the inner worst case re-solved: `λᵀ(A α + γ) + max_{w ∈ W(ξ)} −(Gᵀλ)ᵀw`.
    pub fn exact_value(&self, backend: &dyn ConicBackend, unc: &UncertaintyPolyhedron, alpha: &[f64], xi: &[f64]) -> Result<f64> {
        let (w, _) = block_argmax(backend, unc, &self.weights, xi, true)
            .ok_or_else(|| Error::Uncertainty("uncertainty set is empty at this resizing".into()))?;
        let inner: f64 = -self.weights.iter().zip(&w).map(|(g, v)| g * v).sum::<f64>();
        Ok(self.first_stage_part(alpha) + inner)
    }
}

/// Worst-case recourse at `(x, ξ)` and the cut generated there.
pub fn solve_benders_subproblem(
    inst: &Instance,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
    strategy: SpStrategy,
    bnb: &BnbSettings,
) -> Result<(SubproblemResult, BendersCut)> {
    let model = &inst.model;
    let sp = solve_subproblem(model, &inst.unc, backend, x, xi, strategy, bnb)?;
    let lambda = sp.lambda().to_vec();
    let weights = model.g.tmul(&lambda);
    let (pi, theta, _) = dual_multipliers(backend, &inst.unc, &weights, xi)?;
    let cut = BendersCut {
        alpha_coef: model.a.tmul(&lambda),
        constant: lambda.iter().zip(&model.gamma).map(|(l, g)| l * g).sum(),
        weights,
        lambda,
        pi,
        theta,
        alpha: x.to_vec(),
        xi: xi.to_vec(),
        value: sp.value,
        w_star: sp.w_star.clone(),
    };
    Ok((sp, cut))
}

#[derive(Clone, Debug)]
pub struct BendersSettings {
    pub eps: f64,
    pub max_iter: usize,
    /// Wall-clock budget in seconds, checked between iterations.
    pub time_limit: Option<f64>,
    pub sp_strategy: Option<SpStrategy>,
    pub xi_fixed: Option<Vec<f64>>,
    pub l_floor: Option<f64>,
    pub mp_bnb: Option<BnbSettings>,
    pub sp_bnb: BnbSettings,
    pub record_timings: bool,
}

impl Default for BendersSettings {
    fn default() -> Self {
        BendersSettings {
            eps: 1e-4,
            max_iter: 100,
            time_limit: None,
            sp_strategy: None,
            xi_fixed: None,
            l_floor: None,
            mp_bnb: None,
            sp_bnb: BnbSettings { abs_gap: 1e-8, ..BnbSettings::default() },
            record_timings: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    IterationLimit,
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct BendersOutcome {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    /// Objective of the incumbent, equal to the final upper bound.
    pub objective: f64,
    pub lb: f64,
    pub ub: f64,
    pub stop: StopReason,
    pub iterations: usize,
    pub log: ConvergenceLog,
    pub cuts: Vec<BendersCut>,
    pub strategy: SpStrategy,
}

impl BendersOutcome {
    pub fn gap(&self) -> f64 {
        self.ub - self.lb
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

fn build_master(inst: &Instance, settings: &MasterSettings, cuts: &[BendersCut]) -> Result<Master> {
    let mut m = Master::new(inst, settings.clone())?;
    for c in cuts {
        m.add_column(inst, &c.lambda, ColumnKind::Cut)?;
    }
    Ok(m)
}

/// Alternates a master over `(α, ξ, L)` with accumulated cuts and the
/// worst-case subproblem until `UB − LB < ε` or a budget ends.
pub fn run_modified_benders(inst: &Instance, backend: &dyn ConicBackend, settings: &BendersSettings) -> Result<BendersOutcome> {
    if !(settings.eps > 0.0 && settings.eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {}", settings.eps)));
    }
    if settings.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let strategy = settings.sp_strategy.unwrap_or_else(|| SpStrategy::default_for(&inst.unc));
    let mp_bnb = settings.mp_bnb.clone().unwrap_or(BnbSettings { abs_gap: settings.eps / 10.0, ..BnbSettings::default() });
    let mut ms = MasterSettings {
        l_floor: settings.l_floor.unwrap_or_else(|| inst.default_l_floor()),
        xi_fixed: settings.xi_fixed.clone(),
        m_scale: 1.0,
    };
    let start = Instant::now();
    let mut cuts: Vec<BendersCut> = Vec::new();
    let mut master = build_master(inst, &ms, &cuts)?;
    let mut log = ConvergenceLog::default();
    let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut incumbent: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut hints: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut stop = StopReason::IterationLimit;
    let clock = |t: Instant| if settings.record_timings { t.elapsed().as_secs_f64() } else { 0.0 };

    for iter in 1..=settings.max_iter {
        let t0 = Instant::now();
        let mut sol = master.solve(inst, backend, &mp_bnb, &hints)?;
        while sol.saturation >= 1.0 - 1e-6 {
            if ms.m_scale >= 1e4 {
                return Err(Error::BigMSaturated(format!("master cut multipliers ({:.6})", sol.saturation)));
            }
            ms.m_scale *= 10.0;
            log::warn!("master cut multiplier at its bound, rebuilding with scale {}", ms.m_scale);
            master = build_master(inst, &ms, &cuts)?;
            sol = master.solve(inst, backend, &mp_bnb, &hints)?;
        }
        let mp_seconds = clock(t0);
        hints.insert(0, (sol.alpha.clone(), sol.xi.clone()));
        hints.truncate(3);
        lb = lb.max(sol.bound);

        let t1 = Instant::now();
        let (sp, cut) = solve_benders_subproblem(inst, backend, &sol.alpha, &sol.xi, strategy, &settings.sp_bnb)?;
        let sp_seconds = clock(t1);
        let value = inst.first_stage_cost(&sol.alpha, &sol.xi) + sp.value;
        if value < ub {
            ub = value;
            incumbent = Some((sol.alpha.clone(), sol.xi.clone()));
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
            lambda_fingerprint: fingerprint(sp.lambda()),
            jittered: false,
        });
        log::info!("benders iteration {iter}: lb {lb:.6} ub {ub:.6}");
        if ub - lb < settings.eps {
            stop = StopReason::Converged;
            break;
        }
        if settings.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() >= t) {
            stop = StopReason::TimeLimit;
            break;
        }
        master.add_column(inst, &cut.lambda, ColumnKind::Cut)?;
        cuts.push(cut);
    }

    let (alpha, xi) = incumbent.expect("at least one iteration ran");
    Ok(BendersOutcome { alpha, xi, objective: ub, lb, ub, stop, iterations: log.records.len(), log, cuts, strategy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccg::InstanceOptions;
    use crate::engine::ClarabelBackend;
    use crate::formulation::UncertaintyOptions;
    use crate::oracle::enumerate_radial_topologies;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn case6() -> Instance {
        Instance::new(&crate::cases::case6(), &InstanceOptions::default()).unwrap()
    }

    /// Resizing drawn from the domain box, kept when `W(ξ)` is non-empty.
    fn draw_xi(inst: &Instance, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let d = &inst.domain;
            let xi: Vec<f64> = (0..d.n_w).map(|k| rng.gen_range(d.lower[k]..=d.upper[k])).collect();
            if d.contains(&xi, 0.0) && !crate::oracle::enumerate_vertices(&inst.unc, &xi).unwrap().vertices.is_empty() {
                return xi;
            }
        }
    }

    #[test]
    fn cut_is_tight_at_its_generating_point() {
        let inst = case6();
        let be = ClarabelBackend::default();
        let tops = enumerate_radial_topologies(&inst.case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let a = &tops[rng.gen_range(0..tops.len())];
            let xi = draw_xi(&inst, &mut rng);
            let (sp, cut) = solve_benders_subproblem(&inst, &be, a, &xi, SpStrategy::VertexEnum, &BnbSettings::default()).unwrap();
            let exact = cut.exact_value(&be, &inst.unc, a, &xi).unwrap();
            assert!((exact - sp.value).abs() <= 1e-6 * (1.0 + sp.value.abs()), "{exact} vs {}", sp.value);
            let tangent = cut.tangent_value(&inst.unc, a, &xi);
            assert!((tangent - sp.value).abs() <= 1e-6 * (1.0 + sp.value.abs()), "{tangent} vs {}", sp.value);
        }
    }

    #[test]
    fn cuts_underestimate_the_worst_case_and_the_tangent_dominates() {
        let inst = case6();
        let be = ClarabelBackend::default();
        let tops = enumerate_radial_topologies(&inst.case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cuts = Vec::new();
        for _ in 0..3 {
            let a = &tops[rng.gen_range(0..tops.len())];
            let xi = draw_xi(&inst, &mut rng);
            cuts.push(solve_benders_subproblem(&inst, &be, a, &xi, SpStrategy::VertexEnum, &BnbSettings::default()).unwrap().1);
        }
        for _ in 0..50 {
            let a = &tops[rng.gen_range(0..tops.len())];
            let xi = draw_xi(&inst, &mut rng);
            let (_, s) = crate::oracle::brute_force_worst_case(&inst.model, &inst.unc, &be, a, &xi).unwrap();
            for c in &cuts {
                let exact = c.exact_value(&be, &inst.unc, a, &xi).unwrap();
                assert!(exact <= s + 1e-6 * (1.0 + s.abs()), "cut {exact} above worst case {s}");
                assert!(c.tangent_value(&inst.unc, a, &xi) >= exact - 1e-7);
            }
        }
    }

    #[test]
    fn zero_budget_makes_the_tangent_exact() {
        let opts = InstanceOptions { uncertainty: UncertaintyOptions { gamma_t: Some(0.0), ..Default::default() }, ..Default::default() };
        let inst = Instance::new(&crate::cases::case6(), &opts).unwrap();
        let be = ClarabelBackend::default();
        let a = enumerate_radial_topologies(&inst.case).unwrap().remove(0);
        let xi = inst.unc.w_max.clone();
        let (_, cut) = solve_benders_subproblem(&inst, &be, &a, &xi, SpStrategy::VertexEnum, &BnbSettings::default()).unwrap();
        for s in [0.0, 0.3, 0.7, 1.0] {
            let x2: Vec<f64> = (0..inst.unc.n_w).map(|k| inst.unc.forecast[k] + s * (inst.unc.w_max[k] - inst.unc.forecast[k])).collect();
            let exact = cut.exact_value(&be, &inst.unc, &a, &x2).unwrap();
            assert!((cut.tangent_value(&inst.unc, &a, &x2) - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn single_iteration_reports_a_positive_gap() {
        let inst = case6();
        let out = run_modified_benders(&inst, &ClarabelBackend::default(), &BendersSettings { max_iter: 1, ..Default::default() }).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.stop, StopReason::IterationLimit);
        assert!(out.gap() > 0.0);
    }

    #[test]
    fn rejects_bad_settings() {
        let inst = case6();
        let be = ClarabelBackend::default();
        assert!(run_modified_benders(&inst, &be, &BendersSettings { eps: 0.0, ..Default::default() }).is_err());
        assert!(run_modified_benders(&inst, &be, &BendersSettings { max_iter: 0, ..Default::default() }).is_err());
    }
}
