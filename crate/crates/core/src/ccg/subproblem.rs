//! Worst-case recourse over `W(ξ)` for a fixed first stage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mapping::{add_mapping_block, multiplier_bound, BlockKind, XiRef};
use crate::engine::{solve_mi_conic, AffineExpr, BnbSettings, ConicBackend, ConicProgram, MiStatus};
use crate::error::{Error, Result};
use crate::formulation::{evaluate_q, RecourseSolution};
use crate::formulation::{CompactModel, UncertaintyPolyhedron};
use crate::polytope;

/// Largest uncertain dimension the vertex strategy takes by default.
pub const VERTEX_DIM_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpStrategy {
    /// One recourse solve per vertex of `W(ξ)`.
    VertexEnum,
    /// One mixed-integer program over the dual recourse and a KKT block.
    BigMMilp,
}

impl SpStrategy {
    pub fn default_for(unc: &UncertaintyPolyhedron) -> Self {
        if unc.n_w <= VERTEX_DIM_LIMIT && unc.n_aux == 0 {
            SpStrategy::VertexEnum
        } else {
            SpStrategy::BigMMilp
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubproblemResult {
    /// `S = max_w Q(x, w)` on the relaxed recourse.
    pub value: f64,
    pub w_star: Vec<f64>,
    pub recourse: RecourseSolution,
    /// Vertices evaluated (vertex strategy) or B&B nodes (milp strategy).
    pub work: usize,
    /// Largest complementarity saturation seen in the milp strategy.
    pub saturation: f64,
}

impl SubproblemResult {
    pub fn lambda(&self) -> &[f64] {
        &self.recourse.lambda
    }
}

/// Relative tolerance within which two vertex values count as tied.
const TIE_TOL: f64 = 1e-9;

fn pick_worst(verts: &[Vec<f64>], sols: Vec<RecourseSolution>) -> (usize, RecourseSolution) {
    // vertices arrive sorted, so the first value within the tie band wins
    let best = sols.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    let band = TIE_TOL * (1.0 + best.abs());
    let i = sols.iter().position(|s| s.value >= best - band).unwrap_or(0);
    debug_assert!(i < verts.len());
    (i, sols.into_iter().nth(i).expect("non-empty"))
}

fn vertex_enum(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
) -> Result<SubproblemResult> {
    let (a, b) = unc.dense_rows(xi)?;
    let verts = polytope::enumerate_vertices(&a, &b, &unc.w_min, &unc.w_max, 1e-10)?;
    if verts.is_empty() {
        return Err(Error::Uncertainty("uncertainty set is empty at this resizing".into()));
    }
    let sols: Vec<RecourseSolution> = verts.par_iter().map(|w| evaluate_q(model, backend, x, w)).collect::<Result<_>>()?;
    let (i, sol) = pick_worst(&verts, sols);
    Ok(SubproblemResult { value: sol.value, w_star: verts[i].clone(), recourse: sol, work: verts.len(), saturation: 0.0 })
}

/// Dual recourse with the worst case encoded by a KKT block whose weights
/// are `Gᵀλ`. Returns the program and the block's `w` columns.
pub fn dual_milp(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    x: &[f64],
    xi: &[f64],
) -> Result<(ConicProgram, super::mapping::BlockVars)> {
    if !model.is_relaxed() {
        return Err(Error::InvalidInput("the milp strategy needs the relaxed recourse".into()));
    }
    let m = model.num_rows();
    let mut p = ConicProgram::new();
    // maximise: minimise the negated objective
    let ax = model.a.mul(x);
    let lambda: Vec<usize> = (0..m).map(|r| p.add_var(0.0, f64::INFINITY, -(ax[r] + model.gamma[r]))).collect();
    let mut stat: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_y];
    for r in 0..m {
        for &(j, v) in model.b.row(r) {
            stat[j].push((lambda[r], v));
        }
    }
    for c in &model.cones {
        let eta = p.add_var(0.0, f64::INFINITY, 0.0);
        let mu: Vec<usize> = (0..c.tail.len()).map(|_| p.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)).collect();
        for &(j, a) in &c.head {
            stat[j].push((eta, -a));
        }
        for (i, t) in c.tail.iter().enumerate() {
            for &(j, a) in t {
                stat[j].push((mu[i], -a));
            }
        }
        p.add_cone(AffineExpr::new(vec![(eta, 1.0)], 0.0), mu.iter().map(|&v| AffineExpr::new(vec![(v, 1.0)], 0.0)).collect());
    }
    for (j, row) in stat.into_iter().enumerate() {
        p.add_eq(row, -model.cost[j]);
    }
    let mut et: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_s];
    for r in 0..m {
        for &(j, v) in model.e.row(r) {
            et[j].push((lambda[r], v));
        }
    }
    for row in et {
        p.add_le(row, model.slack_penalty);
    }
    let mut gt: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_w];
    for r in 0..m {
        for &(k, v) in model.g.row(r) {
            gt[k].push((lambda[r], v));
        }
    }
    // every G entry sits on a row whose multiplier is capped by m_s
    let c_max = model.slack_penalty * gt.iter().map(|t| t.iter().map(|&(_, v)| v.abs()).sum::<f64>()).fold(1.0, f64::max);
    let weights: Vec<AffineExpr> = gt.into_iter().map(|t| AffineExpr::new(t, 0.0)).collect();
    let block = add_mapping_block(&mut p, unc, &weights, &XiRef::Fixed(xi.to_vec()), BlockKind::Kkt, multiplier_bound(unc, c_max))?;
    // at a KKT point −gᵀw = fᵀπ + (ξ + c)ᵀθ
    let f = unc.f();
    for (r, &v) in block.pi.iter().enumerate() {
        p.objective[v] = -f[r];
    }
    let xr = unc.xi_rhs(xi);
    for (r, &v) in block.theta.iter().enumerate() {
        p.objective[v] = -xr[r];
    }
    Ok((p, block))
}

fn big_m_milp(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
    bnb: &BnbSettings,
) -> Result<SubproblemResult> {
    let integral = |g: f64| (g - g.round()).abs() <= 1e-9;
    if !integral(unc.gamma_t) || unc.gamma_i.is_some_and(|g| !integral(g)) {
        return Err(Error::InvalidInput("the milp strategy needs integer budgets".into()));
    }
    let (p, block) = dual_milp(model, unc, x, xi)?;
    let sol = solve_mi_conic(&p, backend, bnb)?;
    match sol.status {
        MiStatus::Optimal => {}
        MiStatus::NodeLimit => return Err(Error::NodeLimit { gap: sol.gap() }),
        s => return Err(Error::Solver(format!("subproblem ended with status {s:?}"))),
    }
    let saturation = block.saturation(&sol.x);
    if saturation >= 1.0 - 1e-6 {
        return Err(Error::BigMSaturated(format!("subproblem multiplier at its bound ({saturation:.6})")));
    }
    let w: Vec<f64> = block.w.iter().enumerate().map(|(k, &v)| sol.x[v].clamp(unc.w_min[k], unc.w_max[k])).collect();
    let recourse = evaluate_q(model, backend, x, &w)?;
    Ok(SubproblemResult { value: recourse.value, w_star: w, recourse, work: sol.nodes, saturation })
}

/// Solves the subproblem with the given strategy.
pub fn solve_subproblem(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
    strategy: SpStrategy,
    bnb: &BnbSettings,
) -> Result<SubproblemResult> {
    match strategy {
        SpStrategy::VertexEnum => {
            if unc.n_aux > 0 {
                return Err(Error::Guard("vertex enumeration needs the sign-expanded uncertainty set".into()));
            }
            vertex_enum(model, unc, backend, x, xi)
        }
        SpStrategy::BigMMilp => big_m_milp(model, unc, backend, x, xi, bnb),
    }
}

/// Copy of the model with a small deterministic perturbation of the recourse
/// costs, used to move off a degenerate dual.
pub fn jittered(model: &CompactModel, size: f64) -> CompactModel {
    let mut m = model.clone();
    for (j, c) in m.cost.iter_mut().enumerate() {
        // golden-ratio sequence in (-1, 1)
        let u = ((j as f64 + 1.0) * 0.618_033_988_749_895).fract() * 2.0 - 1.0;
        *c += size * u;
    }
    m
}
