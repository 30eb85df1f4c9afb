//! Brute-force reference routines for cross-checking the optimised paths on
//! small instances. Nothing here is used by the solvers themselves.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};

use crate::ccg::mapping::{add_mapping_block, constant_weights, multiplier_bound, BlockKind, XiRef};
use crate::engine::{solve_mi_conic, BnbSettings, ConicBackend, ConicProgram, MiStatus};
use crate::error::{Error, Result};
use crate::formulation::uncertainty::{PolyRow, PolyRowKind, XiRow, XiRowKind};
use crate::formulation::{evaluate_q, CompactModel, RecourseSolution, UncertaintyPolyhedron};
use crate::network::topology::{is_radial, radiality_rows, satisfies_rows, DEFAULT_LOOP_CAP};
use crate::network::NetworkCase;
use crate::polytope::lex_cmp;

/// Largest uncertain dimension accepted by basis enumeration.
pub const VERTEX_DIM_GUARD: usize = 12;

/// Largest number of row subsets basis enumeration will try.
pub const SUBSET_GUARD: u128 = 5_000_000;

/// Largest number of spanning trees enumerated.
pub const TREE_GUARD: usize = 2000;

/// Largest branch count for the exhaustive radiality check.
pub const EXHAUSTIVE_BRANCHES: usize = 12;

const FEAS_TOL: f64 = 1e-9;
const DISTINCT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct VertexList {
    /// Sorted lexicographically.
    pub vertices: Vec<Vec<f64>>,
    /// Hash of the row data the list was built from.
    pub fingerprint: String,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn polyhedron_fingerprint(a: &[Vec<f64>], b: &[f64]) -> String {
    let mut h = DefaultHasher::new();
    for (row, rhs) in a.iter().zip(b) {
        for v in row.iter().chain(std::iter::once(rhs)) {
            ((v * 1e9).round() as i64).hash(&mut h);
        }
    }
    format!("{:016x}", h.finish())
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), f);
    }
}

/// Vertices of `{w : A w ≤ b}` by solving every square subsystem.
pub fn basis_vertices(a: &[Vec<f64>], b: &[f64], n: usize) -> Result<VertexList> {
    if n > VERTEX_DIM_GUARD {
        return Err(Error::Guard(format!("vertex enumeration limited to dimension {VERTEX_DIM_GUARD}, got {n}")));
    }
    let subsets = binomial(a.len(), n);
    if subsets > SUBSET_GUARD {
        return Err(Error::Guard(format!("basis enumeration would try {subsets} row subsets")));
    }
    let mut found: Vec<Vec<f64>> = Vec::new();
    for_each_subset(a.len(), n, &mut |rows| {
        let m = DMatrix::from_fn(n, n, |i, j| a[rows[i]][j]);
        let rhs = DVector::from_fn(n, |i, _| b[rows[i]]);
        let Some(w) = m.lu().solve(&rhs) else {
            return;
        };
        if w.iter().any(|v| !v.is_finite()) {
            return;
        }
        let feasible =
            a.iter().zip(b).all(|(row, &bi)| row.iter().zip(w.iter()).map(|(r, x)| r * x).sum::<f64>() <= bi + FEAS_TOL * (1.0 + bi.abs()));
        if !feasible {
            return;
        }
        let w: Vec<f64> = w.iter().copied().collect();
        if !found.iter().any(|v| v.iter().zip(&w).all(|(p, q)| (p - q).abs() <= DISTINCT_TOL)) {
            found.push(w);
        }
    });
    found.sort_by(|p, q| lex_cmp(p, q));
    Ok(VertexList { vertices: found, fingerprint: polyhedron_fingerprint(a, b) })
}

/// Vertices of `W(ξ)` by basis enumeration over all `n_w`-subsets of rows.
pub fn enumerate_vertices(unc: &UncertaintyPolyhedron, xi: &[f64]) -> Result<VertexList> {
    if unc.n_w > VERTEX_DIM_GUARD {
        return Err(Error::Guard(format!("vertex enumeration limited to dimension {VERTEX_DIM_GUARD}, got {}", unc.n_w)));
    }
    let (mut a, mut b) = unc.dense_rows(xi)?;
    // the bounds are part of the set even when F omits them
    for k in 0..unc.n_w {
        let mut e = vec![0.0; unc.n_w];
        e[k] = 1.0;
        a.push(e.clone());
        b.push(unc.w_max[k]);
        e[k] = -1.0;
        a.push(e);
        b.push(-unc.w_min[k]);
    }
    basis_vertices(&a, &b, unc.n_w)
}

/// Worst case of the relaxed recourse over the vertices of `W(ξ)`; ties go
/// to the lexicographically smallest vertex.
pub fn brute_force_worst_case(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let verts = enumerate_vertices(unc, xi)?;
    if verts.vertices.is_empty() {
        return Err(Error::Uncertainty("uncertainty set is empty".into()));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for w in &verts.vertices {
        let v = evaluate_q(model, backend, x, w)?.value;
        if best.as_ref().is_none_or(|(_, b)| v > b + 1e-9 * (1.0 + b.abs())) {
            best = Some((w.clone(), v));
        }
    }
    Ok(best.expect("non-empty"))
}

/// Largest `−gᵀw` over the vertices of `W(ξ)`, with its maximiser.
pub fn brute_force_linear(unc: &UncertaintyPolyhedron, g: &[f64], xi: &[f64]) -> Result<(Vec<f64>, f64)> {
    let verts = enumerate_vertices(unc, xi)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for w in verts.vertices {
        let v = -g.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        if best.as_ref().is_none_or(|(_, b)| v > b + 1e-12) {
            best = Some((w, v));
        }
    }
    best.ok_or_else(|| Error::Uncertainty("uncertainty set is empty".into()))
}

/// Every spanning tree of the case graph that keeps all non-switchable
/// branches closed, as 0/1 branch vectors, found by contraction and deletion.
pub fn enumerate_radial_topologies(case: &NetworkCase) -> Result<Vec<Vec<f64>>> {
    let edges: Vec<(usize, usize)> = case.branches.iter().map(|b| (b.from, b.to)).collect();
    let fixed: Vec<bool> = case.branches.iter().map(|b| !b.switchable).collect();
    let trees = spanning_trees(case.num_buses(), &edges, TREE_GUARD)?;
    Ok(trees.into_iter().filter(|t| t.iter().zip(&fixed).all(|(&a, &f)| !f || a > 0.5)).collect())
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Whether the vertices joined by `parent` plus the edges from `from` on
/// form one component.
fn can_connect(parent: &[usize], edges: &[(usize, usize)], from: usize) -> bool {
    let mut p = parent.to_vec();
    let mut comps = (0..p.len()).filter(|&v| p[v] == v).count();
    for &(a, b) in &edges[from..] {
        let (ra, rb) = (find(&mut p, a), find(&mut p, b));
        if ra != rb {
            p[ra] = rb;
            comps -= 1;
        }
    }
    comps == 1
}

/// All spanning trees of a multigraph on `n` vertices, as 0/1 edge vectors.
pub fn spanning_trees(n: usize, edges: &[(usize, usize)], guard: usize) -> Result<Vec<Vec<f64>>> {
    fn rec(
        k: usize,
        edges: &[(usize, usize)],
        parent: &mut Vec<usize>,
        chosen: &mut Vec<f64>,
        picked: usize,
        n: usize,
        out: &mut Vec<Vec<f64>>,
        guard: usize,
    ) -> Result<()> {
        if picked + 1 == n {
            if out.len() == guard {
                return Err(Error::Guard(format!("more than {guard} spanning trees")));
            }
            out.push(chosen.clone());
            return Ok(());
        }
        if k == edges.len() || !can_connect(parent, edges, k) {
            return Ok(());
        }
        let (a, b) = edges[k];
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            // contract edge k
            let saved = parent.clone();
            parent[ra] = rb;
            chosen[k] = 1.0;
            rec(k + 1, edges, parent, chosen, picked + 1, n, out, guard)?;
            chosen[k] = 0.0;
            *parent = saved;
        }
        // delete edge k
        rec(k + 1, edges, parent, chosen, picked, n, out, guard)
    }
    let mut out = Vec::new();
    if n == 0 {
        return Ok(out);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut chosen = vec![0.0; edges.len()];
    rec(0, edges, &mut parent, &mut chosen, 0, n, &mut out, guard)?;
    Ok(out)
}

/// Number of spanning trees by the matrix-tree theorem.
pub fn kirchhoff_count(n: usize, edges: &[(usize, usize)]) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] -= 1.0;
        lap[(b, a)] -= 1.0;
    }
    lap.view((1, 1), (n - 1, n - 1)).into_owned().determinant()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialityCheck {
    pub assignments: usize,
    pub trees: usize,
    /// Assignments where the rows and the spanning-tree test disagree.
    pub mismatches: usize,
}

/// Compares the radiality rows against the spanning-tree test on every 0/1
/// branch assignment.
pub fn check_radiality_rows(case: &NetworkCase) -> Result<RadialityCheck> {
    let m = case.num_branches();
    if m > EXHAUSTIVE_BRANCHES {
        return Err(Error::Guard(format!("exhaustive radiality check limited to {EXHAUSTIVE_BRANCHES} branches, got {m}")));
    }
    let rows = radiality_rows(case, DEFAULT_LOOP_CAP)?;
    let mut check = RadialityCheck { assignments: 0, trees: 0, mismatches: 0 };
    for mask in 0u32..(1 << m) {
        let alpha: Vec<f64> = (0..m).map(|k| f64::from((mask >> k) & 1)).collect();
        let fixed_ok = case.branches.iter().zip(&alpha).all(|(b, &a)| b.switchable || a > 0.5);
        let tree = is_radial(case, &alpha) && fixed_ok;
        let rows_ok = satisfies_rows(&rows, &alpha) && fixed_ok;
        check.assignments += 1;
        check.trees += usize::from(tree);
        check.mismatches += usize::from(tree != rows_ok);
    }
    Ok(check)
}

/// Coordinate of the uncertainty data perturbed by a finite difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    /// Right-hand side of row `r` of `F w ≤ f`.
    Row(usize),
    /// Resizing coordinate `ξ_k`.
    Xi(usize),
    /// Period budget `Γ_t`: every row of that budget moves together.
    PeriodBudget(usize),
}

fn perturbed(unc: &UncertaintyPolyhedron, xi: &[f64], c: Component, d: f64) -> Result<(UncertaintyPolyhedron, Vec<f64>)> {
    let mut u = unc.clone();
    let mut x = xi.to_vec();
    match c {
        Component::Row(r) => {
            if r >= u.rows.len() {
                return Err(Error::InvalidInput(format!("row {r} out of range")));
            }
            u = u.with_rhs_shift(r, d);
        }
        Component::Xi(k) => {
            if k >= x.len() {
                return Err(Error::InvalidInput(format!("resizing coordinate {k} out of range")));
            }
            x[k] += d;
        }
        Component::PeriodBudget(t) => {
            let mut hit = false;
            for row in &mut u.rows {
                let this = match row.kind {
                    PolyRowKind::PeriodBudget { t: rt, .. } | PolyRowKind::PeriodBudgetLifted { t: rt } => rt == t,
                    _ => false,
                };
                if this {
                    row.rhs += d;
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::InvalidInput(format!("no budget rows for period {t}")));
            }
            u.gamma_t += d;
        }
    }
    Ok((u, x))
}

/// Central difference of `value(W, ξ)` as one component moves by `±h`.
pub fn central_difference(
    unc: &UncertaintyPolyhedron,
    xi: &[f64],
    component: Component,
    h: f64,
    value: impl Fn(&UncertaintyPolyhedron, &[f64]) -> Result<f64>,
) -> Result<f64> {
    if !(1e-5..=1e-2).contains(&h) {
        return Err(Error::InvalidInput(format!("step {h} outside [1e-5, 1e-2]")));
    }
    let mut vals = [0.0; 2];
    for (i, d) in [h, -h].into_iter().enumerate() {
        let (u, x) = perturbed(unc, xi, component, d)?;
        if enumerate_vertices(&u, &x)?.vertices.is_empty() {
            return Err(Error::Uncertainty("degenerate perturbation".into()));
        }
        vals[i] = value(&u, &x)?;
    }
    Ok((vals[0] - vals[1]) / (2.0 * h))
}

/// Central difference of the worst-case recourse value in one component.
pub fn finite_diff_sensitivity(
    model: &CompactModel,
    unc: &UncertaintyPolyhedron,
    backend: &dyn ConicBackend,
    x: &[f64],
    xi: &[f64],
    component: Component,
    h: f64,
) -> Result<f64> {
    central_difference(unc, xi, component, h, |u, xv| Ok(brute_force_worst_case(model, u, backend, x, xv)?.1))
}

/// Largest violation of midpoint convexity of `Q(x, ·)` over the given pairs.
pub fn convexity_violation(model: &CompactModel, backend: &dyn ConicBackend, x: &[f64], pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (a, b) in pairs {
        let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
        let qa = evaluate_q(model, backend, x, a)?.value;
        let qb = evaluate_q(model, backend, x, b)?.value;
        let qm = evaluate_q(model, backend, x, &mid)?.value;
        worst = worst.max(qm - 0.5 * (qa + qb));
    }
    Ok(worst)
}

/// Gap between primal value and dual value of one recourse solve.
pub fn duality_residual(sol: &RecourseSolution) -> f64 {
    (sol.value - sol.dual_value).abs() / (1.0 + sol.value.abs())
}

/// Largest residual of the branch-flow equations of a recourse point,
/// evaluated from the case data rather than the compact rows.
pub fn distflow_residual(case: &NetworkCase, model: &CompactModel, alpha: &[f64], w: &[f64], sol: &RecourseSolution) -> f64 {
    let idx = &model.index;
    let y = &sol.y;
    let slack = |bus: usize, t: usize| -> f64 {
        if model.n_s == 0 {
            0.0
        } else {
            sol.s[idx.slack(bus, t)]
        }
    };
    let mut res: f64 = 0.0;
    for t in 0..case.horizon {
        for (j, bus) in case.buses.iter().enumerate() {
            let mut p = -bus.p_load[t];
            let mut q = -bus.q_load[t];
            for (k, br) in case.branches.iter().enumerate() {
                if br.to == j {
                    p += y[idx.p(k, t)] - br.r * y[idx.l(k, t)];
                    q += y[idx.q(k, t)] - br.x * y[idx.l(k, t)];
                }
                if br.from == j {
                    p -= y[idx.p(k, t)];
                    q -= y[idx.q(k, t)];
                }
            }
            for (g, th) in case.thermals.iter().enumerate() {
                if th.bus == j {
                    p += y[idx.pg(g, t)];
                    q += y[idx.qg(g, t)];
                }
            }
            for (s, st) in case.storages.iter().enumerate() {
                if st.bus == j {
                    p += y[idx.pb(s, t)];
                }
            }
            for (i, rg) in case.renewables.iter().enumerate() {
                if rg.bus == j {
                    p += w[case.w_index(i, t)];
                }
            }
            res = res.max((p.abs() - slack(j, t)).max(0.0)).max(q.abs());
            let v = y[idx.v(j, t)];
            let (lo, hi) = if bus.substation { (1.0, 1.0) } else { (bus.v_min, bus.v_max) };
            res = res.max(lo - v).max(v - hi);
        }
        for (k, br) in case.branches.iter().enumerate() {
            let (p, q, l) = (y[idx.p(k, t)], y[idx.q(k, t)], y[idx.l(k, t)]);
            let (vi, vj) = (y[idx.v(br.from, t)], y[idx.v(br.to, t)]);
            if alpha[k] > 0.5 {
                let drop = vj - vi + 2.0 * (br.r * p + br.x * q) - (br.r * br.r + br.x * br.x) * l;
                res = res.max(drop.abs());
                // p² + q² ≤ l v_from
                res = res.max(p * p + q * q - l * vi);
            } else {
                res = res.max(p.abs()).max(q.abs()).max(l.abs());
            }
        }
    }
    res
}

/// Worst case of `−gᵀw` over `W(ξ)` reached by three independent routes.
#[derive(Clone, Debug)]
pub struct MappingCheck {
    /// Vertex enumeration.
    pub vertex: (Vec<f64>, f64),
    /// A feasible point of the KKT mapping block and its value.
    pub block: (Vec<f64>, f64),
    /// Optimal value of the LP dual.
    pub lp_value: f64,
}

impl MappingCheck {
    /// Largest pairwise difference of the three values.
    pub fn value_spread(&self) -> f64 {
        let v = [self.vertex.1, self.block.1, self.lp_value];
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Sup-norm distance between the vertex and block points.
    pub fn point_gap(&self) -> f64 {
        self.vertex.0.iter().zip(&self.block.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn mapping_cross_check(backend: &dyn ConicBackend, unc: &UncertaintyPolyhedron, g: &[f64], xi: &[f64]) -> Result<MappingCheck> {
    mapping_cross_check_with(backend, unc, unc, g, xi)
}

/// As [`mapping_cross_check`], enumerating vertices of `vertex_unc` while the
/// block and the LP use `unc`, another encoding of the same set.
pub fn mapping_cross_check_with(
    backend: &dyn ConicBackend,
    vertex_unc: &UncertaintyPolyhedron,
    unc: &UncertaintyPolyhedron,
    g: &[f64],
    xi: &[f64],
) -> Result<MappingCheck> {
    let vertex = brute_force_linear(vertex_unc, g, xi)?;
    let c_max = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut p = ConicProgram::new();
    let b = add_mapping_block(&mut p, unc, &constant_weights(g), &XiRef::Fixed(xi.to_vec()), BlockKind::Kkt, multiplier_bound(unc, c_max))?;
    let s = solve_mi_conic(&p, backend, &BnbSettings::default())?;
    if s.status != MiStatus::Optimal {
        return Err(Error::Solver(format!("mapping block solve ended with status {:?}", s.status)));
    }
    let w: Vec<f64> = b.w.iter().map(|&v| s.x[v]).collect();
    let value = -g.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let (_, _, lp_value) = crate::sensitivity::dual_multipliers(backend, unc, g, xi)?;
    Ok(MappingCheck { vertex, block: (w, value), lp_value })
}

/// Two coordinates in `[0.25, 0.75]`, forecast 0.5, budget `Γ = 1`, caps `w ≤ ξ`.
pub fn toy_set() -> UncertaintyPolyhedron {
    let mut rows = Vec::new();
    for k in 0..2 {
        rows.push(PolyRow { w: vec![(k, 1.0)], u: vec![], rhs: 0.75, kind: PolyRowKind::Upper { k } });
        rows.push(PolyRow { w: vec![(k, -1.0)], u: vec![], rhs: -0.25, kind: PolyRowKind::Lower { k } });
    }
    for signs in 0u64..4 {
        let s = |b: u64| if signs & (1 << b) != 0 { -1.0 } else { 1.0 };
        rows.push(PolyRow {
            w: vec![(0, s(0) / 0.25), (1, s(1) / 0.25)],
            u: vec![],
            rhs: 1.0 + (s(0) + s(1)) * 0.5 / 0.25,
            kind: PolyRowKind::PeriodBudget { t: 0, signs },
        });
    }
    UncertaintyPolyhedron {
        n_rg: 2,
        horizon: 1,
        n_w: 2,
        n_aux: 0,
        forecast: vec![0.5, 0.5],
        half_width: vec![0.25, 0.25],
        w_min: vec![0.25, 0.25],
        w_max: vec![0.75, 0.75],
        gamma_t: 1.0,
        gamma_i: None,
        rows,
        xi_rows: (0..2).map(|k| XiRow { w: vec![(k, 1.0)], xi: k, constant: 0.0, kind: XiRowKind::Cap { k } }).collect(),
    }
}

/// Weights `Gᵀλ` of the toy worst case.
pub const TOY_WEIGHTS: [f64; 2] = [0.79, 0.63];

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> UncertaintyPolyhedron {
        toy_set()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-9)
    }

    #[test]
    fn toy_routes_agree() {
        let be = crate::engine::ClarabelBackend::default();
        for (xi, w) in [([0.75, 0.75], [0.25, 0.5]), ([0.75, 0.4], [0.35, 0.4])] {
            let c = mapping_cross_check(&be, &toy(), &TOY_WEIGHTS, &xi).unwrap();
            assert!(c.value_spread() < 1e-6 && c.point_gap() < 1e-6, "{c:?}");
            assert!(close(&c.vertex.0, &w));
        }
    }

    #[test]
    fn unit_box_has_four_vertices() {
        let a = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let v = basis_vertices(&a, &[1.0, 0.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(v.vertices.len(), 4);
    }

    #[test]
    fn toy_vertices_uncapped_and_capped() {
        let u = toy();
        let v = enumerate_vertices(&u, &[0.75, 0.75]).unwrap().vertices;
        let want = [[0.25, 0.5], [0.5, 0.25], [0.5, 0.75], [0.75, 0.5]];
        assert_eq!(v.len(), 4);
        assert!(v.iter().zip(&want).all(|(p, q)| close(p, q)));
        let v = enumerate_vertices(&u, &[0.75, 0.4]).unwrap().vertices;
        let want = [[0.35, 0.4], [0.5, 0.25], [0.65, 0.4]];
        assert_eq!(v.len(), 3);
        assert!(v.iter().zip(&want).all(|(p, q)| close(p, q)));
    }

    #[test]
    fn toy_linear_worst_case() {
        let u = toy();
        let (w, _) = brute_force_linear(&u, &[0.79, 0.63], &[0.75, 0.75]).unwrap();
        assert!(close(&w, &[0.25, 0.5]));
        let (w, _) = brute_force_linear(&u, &[0.79, 0.63], &[0.75, 0.4]).unwrap();
        assert!(close(&w, &[0.35, 0.4]));
    }

    #[test]
    fn dimension_guard() {
        let a = vec![vec![0.0; 13]];
        assert!(matches!(basis_vertices(&a, &[1.0], 13), Err(Error::Guard(_))));
    }

    #[test]
    fn tree_counts() {
        let tri = [(0, 1), (1, 2), (2, 0)];
        assert_eq!(spanning_trees(3, &tri, TREE_GUARD).unwrap().len(), 3);
        let path = [(0, 1), (1, 2), (2, 3)];
        assert_eq!(spanning_trees(4, &path, TREE_GUARD).unwrap().len(), 1);
        // theta graph: three paths of length two between vertices 0 and 1
        let theta = [(0, 2), (2, 1), (0, 3), (3, 1), (0, 4), (4, 1)];
        let n = spanning_trees(5, &theta, TREE_GUARD).unwrap().len();
        assert_eq!(n as f64, kirchhoff_count(5, &theta).round());
        assert_eq!(n, 12);
    }

    #[test]
    fn tree_guard_trips() {
        // complete graph on 7 vertices has 7⁵ = 16807 trees
        let edges: Vec<(usize, usize)> = (0..7).flat_map(|a| (a + 1..7).map(move |b| (a, b))).collect();
        assert!(matches!(spanning_trees(7, &edges, TREE_GUARD), Err(Error::Guard(_))));
    }

    #[test]
    fn inactive_row_has_zero_derivative() {
        let u = toy();
        let g = [0.79, 0.63];
        let val = |uu: &UncertaintyPolyhedron, x: &[f64]| Ok(brute_force_linear(uu, &g, x)?.1);
        // the upper bound on w₁ is slack at the worst case
        let d = central_difference(&u, &[0.75, 0.75], Component::Row(0), 1e-4, val).unwrap();
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let u = toy();
        let r = central_difference(&u, &[0.75, 0.75], Component::Xi(0), 0.5, |_, _| Ok(0.0));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn emptying_perturbation_is_reported() {
        let u = toy();
        // ξ₂ at its lower bound: shrinking further empties the set
        let r = central_difference(&u, &[0.75, 0.25], Component::Xi(1), 1e-3, |_, _| Ok(0.0));
        match r {
            Err(Error::Uncertainty(m)) => assert_eq!(m, "degenerate perturbation"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
