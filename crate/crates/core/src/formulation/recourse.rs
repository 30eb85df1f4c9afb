//! Recourse evaluation `Q(x, w)` with duals mapped back onto the compact rows.

use rayon::prelude::*;

use super::uncertainty::UncertaintyPolyhedron;
use super::CompactModel;
use crate::engine::{AffineExpr, ConicBackend, ConicProgram, ConicSolution, ConicStatus, Sense};
use crate::error::{Error, Result};
use crate::polytope;

/// Scaled stationarity residual above which duals are rejected.
pub const DUAL_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
enum RowMap {
    Row(usize),
    Upper(usize, f64),
    Lower(usize, f64),
    PairUp(usize),
    PairLo(usize),
}

/// Solver-ready program for fixed `(x, w)` plus the map back to compact rows.
pub struct RecourseProgram {
    pub program: ConicProgram,
    map: Vec<RowMap>,
    n_y: usize,
}

#[derive(Clone, Debug)]
pub struct RecourseSolution {
    pub value: f64,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// One non-negative multiplier per compact row.
    pub lambda: Vec<f64>,
    /// Per cone: `[λ_h, μ_1, μ_2, μ_3]`.
    pub cone_duals: Vec<Vec<f64>>,
    /// `λᵀ(A x + γ − G w)`
    pub dual_value: f64,
    /// Scaled residual of `b + Bᵀλ − Dᵀλ_h − Cᵀμ = 0` and `Eᵀλ ≤ m_s`.
    pub residual: f64,
    pub reduced_accuracy: bool,
}

impl RecourseSolution {
    pub fn total_slack(&self) -> f64 {
        self.s.iter().sum()
    }
}

fn same_negated(a: &[(usize, f64)], b: &[(usize, f64)]) -> bool {
    a.len() == b.len() && a.iter().all(|&(j, v)| b.iter().any(|&(k, u)| k == j && (u + v).abs() <= 1e-14 * (1.0 + v.abs())))
}

/// Builds the continuous recourse program. Rows touching a single column
/// become bounds and complementary row pairs with no room between them
/// become equalities; both are undone when duals are reported.
pub fn recourse_program(model: &CompactModel, x: &[f64], w: &[f64]) -> Result<RecourseProgram> {
    if x.len() != model.n_x || w.len() != model.n_w {
        return Err(Error::InvalidInput("decision or scenario has the wrong length".into()));
    }
    let h = model.rhs(x, w);
    let m = model.num_rows();
    let mut p = ConicProgram::new();
    p.add_vars(model.n_y, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for j in 0..model.n_y {
        p.objective[j] = model.cost[j];
    }
    for _ in 0..model.n_s {
        p.add_var(0.0, f64::INFINITY, model.slack_penalty);
    }
    let mut map = vec![RowMap::Row(usize::MAX); m];
    let mut upper_src: Vec<Option<usize>> = vec![None; model.n_y];
    let mut lower_src: Vec<Option<usize>> = vec![None; model.n_y];
    let mut handled = vec![false; m];

    let mut r = 0;
    while r + 1 < m {
        let (br, bn) = (model.b.row(r), model.b.row(r + 1));
        let scale = 1.0 + h[r].abs();
        if br.len() > 1
            && model.e.row(r).is_empty()
            && model.e.row(r + 1).is_empty()
            && (h[r] + h[r + 1]).abs() <= 1e-12 * scale
            && same_negated(br, bn)
        {
            let pr = p.add_row(br.to_vec(), Sense::Eq, h[r]);
            map[r] = RowMap::PairUp(pr);
            map[r + 1] = RowMap::PairLo(pr);
            handled[r] = true;
            handled[r + 1] = true;
            r += 2;
        } else {
            r += 1;
        }
    }
    for r in 0..m {
        if handled[r] {
            continue;
        }
        let row = model.b.row(r);
        if row.len() == 1 && model.e.row(r).is_empty() {
            let (j, a) = row[0];
            let bound = h[r] / a;
            if a > 0.0 {
                if upper_src[j].is_none() || bound < p.upper[j] {
                    if let Some(old) = upper_src[j] {
                        handled[old] = false;
                    }
                    p.upper[j] = bound;
                    upper_src[j] = Some(r);
                    handled[r] = true;
                }
            } else if lower_src[j].is_none() || bound > p.lower[j] {
                if let Some(old) = lower_src[j] {
                    handled[old] = false;
                }
                p.lower[j] = bound;
                lower_src[j] = Some(r);
                handled[r] = true;
            }
        }
    }
    for j in 0..model.n_y {
        if let Some(r) = upper_src[j] {
            map[r] = RowMap::Upper(j, model.b.row(r)[0].1);
        }
        if let Some(r) = lower_src[j] {
            map[r] = RowMap::Lower(j, model.b.row(r)[0].1);
        }
        if p.lower[j] > p.upper[j] {
            let gap = p.lower[j] - p.upper[j];
            if gap <= 1e-10 * (1.0 + p.upper[j].abs()) {
                p.lower[j] = p.upper[j];
            } else {
                return Err(Error::Infeasible(format!("recourse column {j} has empty bounds")));
            }
        }
    }
    for r in 0..m {
        if handled[r] {
            continue;
        }
        let mut terms = model.b.row(r).to_vec();
        for &(j, v) in model.e.row(r) {
            terms.push((model.n_y + j, -v));
        }
        let pr = p.add_row(terms, Sense::Le, h[r]);
        map[r] = RowMap::Row(pr);
    }
    for c in &model.cones {
        p.add_cone(AffineExpr::new(c.head.clone(), 0.0), c.tail.iter().map(|t| AffineExpr::new(t.clone(), 0.0)).collect());
    }
    Ok(RecourseProgram { program: p, map, n_y: model.n_y })
}

impl RecourseProgram {
    fn lambda(&self, sol: &ConicSolution) -> Vec<f64> {
        self.map
            .iter()
            .map(|m| match *m {
                RowMap::Row(pr) => sol.row_duals[pr].max(0.0),
                RowMap::Upper(j, a) => sol.upper_duals[j].max(0.0) / a,
                RowMap::Lower(j, a) => sol.lower_duals[j].max(0.0) / (-a),
                RowMap::PairUp(pr) => sol.row_duals[pr].max(0.0),
                RowMap::PairLo(pr) => (-sol.row_duals[pr]).max(0.0),
            })
            .collect()
    }
}

/// Stationarity residual of compact-row duals, scaled by the multiplier size.
pub fn dual_residual(model: &CompactModel, lambda: &[f64], cone_duals: &[Vec<f64>]) -> f64 {
    let mut g = model.cost.clone();
    let bt = model.b.tmul(lambda);
    for j in 0..model.n_y {
        g[j] += bt[j];
    }
    for (c, z) in model.cones.iter().zip(cone_duals) {
        for &(j, a) in &c.head {
            g[j] -= z[0] * a;
        }
        for (i, t) in c.tail.iter().enumerate() {
            for &(j, a) in t {
                g[j] -= z[i + 1] * a;
            }
        }
    }
    let mut res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if model.n_s > 0 {
        let et = model.e.tmul(lambda);
        res = res.max(et.iter().fold(0.0f64, |m, &v| m.max(v - model.slack_penalty)));
    }
    let scale = 1.0 + lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    res / scale
}

/// Solves the recourse problem at `(x, w)` and returns primal and dual data.
pub fn evaluate_q(model: &CompactModel, backend: &dyn ConicBackend, x: &[f64], w: &[f64]) -> Result<RecourseSolution> {
    let rp = recourse_program(model, x, w)?;
    let sol = backend.solve(&rp.program)?;
    match sol.status {
        ConicStatus::Optimal => {}
        ConicStatus::Infeasible => return Err(Error::Infeasible("recourse problem is infeasible".into())),
        s => return Err(Error::Solver(format!("recourse solve ended with status {s:?}"))),
    }
    let lambda = rp.lambda(&sol);
    let cone_duals = sol.cone_duals.clone();
    let residual = dual_residual(model, &lambda, &cone_duals);
    if residual > DUAL_RESIDUAL_TOL {
        return Err(Error::DualResidual { residual });
    }
    let h = model.rhs(x, w);
    let dual_value = -lambda.iter().zip(&h).map(|(l, v)| l * v).sum::<f64>();
    Ok(RecourseSolution {
        value: sol.objective,
        y: sol.x[..rp.n_y].to_vec(),
        s: sol.x[rp.n_y..].to_vec(),
        lambda,
        cone_duals,
        dual_value,
        residual,
        reduced_accuracy: sol.reduced_accuracy,
    })
}

#[derive(Clone, Debug)]
pub struct FeasibilityReport {
    /// Largest total row violation needed over the vertices of `W(ξ)`.
    pub max_violation: f64,
    pub worst_w: Vec<f64>,
    pub vertices: usize,
}

/// Minimum total linear-row violation at `(x, w)`, cones kept exact.
fn violation_at(model: &CompactModel, backend: &dyn ConicBackend, x: &[f64], w: &[f64]) -> Result<f64> {
    let h = model.rhs(x, w);
    let mut p = ConicProgram::new();
    p.add_vars(model.n_y, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for r in 0..model.num_rows() {
        let eta = p.add_var(0.0, f64::INFINITY, 1.0);
        let mut terms = model.b.row(r).to_vec();
        terms.push((eta, -1.0));
        p.add_le(terms, h[r]);
    }
    for c in &model.cones {
        p.add_cone(AffineExpr::new(c.head.clone(), 0.0), c.tail.iter().map(|t| AffineExpr::new(t.clone(), 0.0)).collect());
    }
    let s = crate::engine::solve_conic(backend, &p)?;
    Ok(s.objective.max(0.0))
}

/// Worst-case violation of the unrelaxed recourse rows over `W(ξ)`.
pub fn check_robust_feasibility(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
) -> Result<FeasibilityReport> {
    let (a, b) = unc.dense_rows(xi)?;
    let verts = polytope::enumerate_vertices(&a, &b, &unc.w_min, &unc.w_max, 1e-10)?;
    if verts.is_empty() {
        return Err(Error::Uncertainty("uncertainty set is empty at this resizing".into()));
    }
    let vals: Vec<Result<f64>> = verts.par_iter().map(|w| violation_at(model, backend, x, w)).collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, v) in vals.into_iter().enumerate() {
        let v = v?;
        if v > best.0 + 1e-12 {
            best = (v, i);
        }
    }
    Ok(FeasibilityReport { max_violation: best.0, worst_w: verts[best.1].clone(), vertices: verts.len() })
}

#[cfg(test)]
mod tests {
    use super::super::{build_second_stage, default_slack_penalty, relax_recourse, BigMPolicy};
    use super::*;
    use crate::cases;
    use crate::engine::ClarabelBackend;

    fn radial_alpha(c: &crate::network::NetworkCase) -> Vec<f64> {
        c.branches.iter().map(|b| if b.id == 6 || b.id == 7 { 0.0 } else { 1.0 }).collect()
    }

    #[test]
    fn strong_duality_and_residual_on_case6() {
        let c = cases::case6();
        let m = build_second_stage(&c, BigMPolicy::PerBranch).unwrap();
        let m = relax_recourse(&m, default_slack_penalty(&m)).unwrap();
        let x = radial_alpha(&c);
        for w in [[0.3, 0.28], [0.15, 0.28], [0.45, 0.14]] {
            let s = evaluate_q(&m, &ClarabelBackend::default(), &x, &w).unwrap();
            assert!(s.residual <= DUAL_RESIDUAL_TOL);
            assert!((s.value - s.dual_value).abs() <= 1e-6 * (1.0 + s.value.abs()), "{} vs {}", s.value, s.dual_value);
            assert!(s.lambda.iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn islanded_bus_uses_slack() {
        let mut c = cases::case6();
        // bus 6 is reached through branches 5 and 6; open both and drop its reactive load
        let b6 = c.bus_index(6).unwrap();
        c.buses[b6].q_load[0] = 0.0;
        let m = build_second_stage(&c, BigMPolicy::PerBranch).unwrap();
        let m = relax_recourse(&m, 1000.0).unwrap();
        let x: Vec<f64> = c.branches.iter().map(|b| if b.id == 5 || b.id == 6 { 0.0 } else { 1.0 }).collect();
        let w = [0.3, 0.0];
        let s = evaluate_q(&m, &ClarabelBackend::default(), &x, &w).unwrap();
        let load = c.buses[b6].p_load[0];
        assert!((s.s[m.index.slack(b6, 0)] - load).abs() < 1e-6);
    }

    #[test]
    fn feasibility_of_islanded_bus_counts_both_balances() {
        let c = cases::case6();
        let m = build_second_stage(&c, BigMPolicy::PerBranch).unwrap();
        let x: Vec<f64> = c.branches.iter().map(|b| if b.id == 5 || b.id == 6 { 0.0 } else { 1.0 }).collect();
        let b6 = c.bus_index(6).unwrap();
        let w = [0.3, 0.0];
        let v = violation_at(&m, &ClarabelBackend::default(), &x, &w).unwrap();
        let expect = c.buses[b6].p_load[0] + c.buses[b6].q_load[0];
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
    }
}
