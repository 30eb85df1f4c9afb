//! KKT description of `argmax_{w ∈ W(ξ)} −(Gᵀλ)ᵀ w` as rows of a program.

use crate::engine::complementarity::{linearize_complementarity, multiplier_saturation, ComplementarityPair};
use crate::engine::{solve_conic, AffineExpr, ConicBackend, ConicProgram};
use crate::error::Result;
use crate::formulation::uncertainty::XiRowKind;
use crate::formulation::UncertaintyPolyhedron;

/// How the resizing decision enters a block.
#[derive(Clone, Debug)]
pub enum XiRef {
    Vars(Vec<usize>),
    Fixed(Vec<f64>),
}

impl XiRef {
    fn expr(&self, k: usize, constant: f64) -> AffineExpr {
        match self {
            XiRef::Vars(v) => AffineExpr::new(vec![(v[k], 1.0)], constant),
            XiRef::Fixed(x) => AffineExpr::new(vec![], x[k] + constant),
        }
    }

    fn upper(&self, unc: &UncertaintyPolyhedron, k: usize) -> f64 {
        match self {
            XiRef::Vars(_) => unc.w_max[k],
            XiRef::Fixed(x) => x[k],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Full mapping including the ξ-dependent rows.
    Kkt,
    /// ξ-dependent rows dropped; the block reduces to a fixed-uncertainty argmax.
    Degenerate,
}

/// Columns added for one block.
#[derive(Clone, Debug)]
pub struct BlockVars {
    pub w: Vec<usize>,
    pub u: Vec<usize>,
    pub pi: Vec<usize>,
    pub theta: Vec<usize>,
    pub z: Vec<usize>,
    pub pairs: Vec<ComplementarityPair>,
    /// Envelope rows standing in for `ξθ` in the duality cut.
    pub envelopes: Vec<Envelope>,
}

impl BlockVars {
    pub fn saturation(&self, x: &[f64]) -> f64 {
        multiplier_saturation(&self.pairs, x)
    }
}

/// McCormick under-estimator `t ≥ max(lo θ, hi θ + M (ξ − hi))` of `ξθ`
/// for `ξ ∈ [lo, hi]`, `θ ∈ [0, M]`.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub xi: usize,
    pub theta: usize,
    pub t: usize,
    pub m: f64,
    pub row_lo: usize,
    pub row_hi: usize,
}

impl Envelope {
    /// Rewrites both rows for the current bounds of `ξ` in `p`.
    pub fn refresh(&self, p: &mut ConicProgram) {
        let (lo, hi) = (p.lower[self.xi], p.upper[self.xi]);
        let r = &mut p.rows[self.row_lo];
        r.terms = vec![(self.theta, lo), (self.t, -1.0)];
        r.rhs = 0.0;
        let r = &mut p.rows[self.row_hi];
        r.terms = vec![(self.theta, hi), (self.xi, self.m), (self.t, -1.0)];
        r.rhs = self.m * hi;
    }

    /// `ξθ − t` at `x`; positive when the envelope is loose.
    pub fn error(&self, x: &[f64]) -> f64 {
        x[self.xi] * x[self.theta] - x[self.t]
    }
}

/// Upper bound used for the multipliers of a block whose objective weights
/// are bounded by `c_max` in absolute value.
pub fn multiplier_bound(unc: &UncertaintyPolyhedron, c_max: f64) -> f64 {
    // budget prices are at most max_k |g_k| Δw_k, so each coordinate's
    // multipliers stay below |g_k| + price / Δw_k; coupling rows add one such term each
    let hmax = unc.half_width.iter().cloned().fold(0.0, f64::max);
    let hmin = unc.half_width.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_ext = unc.xi_rows.iter().filter(|r| matches!(r.kind, XiRowKind::Extension { .. })).count();
    2.0 * c_max * (1.0 + hmax / hmin) * (1.0 + n_ext as f64) + 1.0
}

/// Adds primal rows `w ∈ W(ξ)` (with fresh `w`, `u` columns) and returns them.
pub fn add_membership(p: &mut ConicProgram, unc: &UncertaintyPolyhedron, xi: &XiRef, with_xi_rows: bool) -> (Vec<usize>, Vec<usize>) {
    let w: Vec<usize> = (0..unc.n_w).map(|k| p.add_var(unc.w_min[k], unc.w_max[k], 0.0)).collect();
    let gmax = unc.gamma_t.max(unc.gamma_i.unwrap_or(0.0));
    let u: Vec<usize> = (0..unc.n_aux).map(|_| p.add_var(0.0, gmax, 0.0)).collect();
    for r in &unc.rows {
        let mut terms: Vec<(usize, f64)> = r.w.iter().map(|&(k, a)| (w[k], a)).collect();
        terms.extend(r.u.iter().map(|&(k, a)| (u[k], a)));
        p.add_le(terms, r.rhs);
    }
    if with_xi_rows {
        for r in &unc.xi_rows {
            let rhs = xi.expr(r.xi, r.constant);
            let mut terms: Vec<(usize, f64)> = r.w.iter().map(|&(k, a)| (w[k], a)).collect();
            terms.extend(rhs.terms.iter().map(|&(j, a)| (j, -a)));
            p.add_le(terms, rhs.constant);
        }
    }
    (w, u)
}

/// Adds the KKT block for weights `g` (affine in existing columns): every
/// optimal `w` of `max −gᵀw` over `W(ξ)` is feasible, nothing else is.
pub fn add_mapping_block(
    p: &mut ConicProgram,
    unc: &UncertaintyPolyhedron,
    weights: &[AffineExpr],
    xi: &XiRef,
    kind: BlockKind,
    m_multiplier: f64,
) -> Result<BlockVars> {
    let with_xi = kind == BlockKind::Kkt;
    let (w, u) = add_membership(p, unc, xi, with_xi);
    let pi: Vec<usize> = (0..unc.num_rows()).map(|_| p.add_var(0.0, f64::INFINITY, 0.0)).collect();
    let theta: Vec<usize> = if with_xi { (0..unc.xi_rows.len()).map(|_| p.add_var(0.0, f64::INFINITY, 0.0)).collect() } else { Vec::new() };

    // g_k + Σ_r π_r F_rk + Σ_r θ_r P_rk = 0
    let mut stat_w: Vec<Vec<(usize, f64)>> = vec![Vec::new(); unc.n_w];
    let mut stat_u: Vec<Vec<(usize, f64)>> = vec![Vec::new(); unc.n_aux];
    for (r, row) in unc.rows.iter().enumerate() {
        for &(k, a) in &row.w {
            stat_w[k].push((pi[r], a));
        }
        for &(k, a) in &row.u {
            stat_u[k].push((pi[r], a));
        }
    }
    for (r, row) in unc.xi_rows.iter().enumerate().filter(|_| with_xi) {
        for &(k, a) in &row.w {
            stat_w[k].push((theta[r], a));
        }
    }
    for k in 0..unc.n_w {
        let mut terms = stat_w[k].clone();
        terms.extend(weights[k].terms.iter().cloned());
        p.add_eq(terms, -weights[k].constant);
    }
    for row in stat_u {
        p.add_eq(row, 0.0);
    }

    let gmax = unc.gamma_t.max(unc.gamma_i.unwrap_or(0.0));
    let mut pairs = Vec::new();
    for (r, row) in unc.rows.iter().enumerate() {
        // slack f_r − F_r (w, u), bounded over the box and u ∈ [0, gmax]
        let mut terms: Vec<(usize, f64)> = row.w.iter().map(|&(k, a)| (w[k], -a)).collect();
        terms.extend(row.u.iter().map(|&(k, a)| (u[k], -a)));
        let mut max_slack = row.rhs;
        for &(k, a) in &row.w {
            max_slack -= if a > 0.0 { a * unc.w_min[k] } else { a * unc.w_max[k] };
        }
        for &(_, a) in &row.u {
            max_slack -= if a > 0.0 { 0.0 } else { a * gmax };
        }
        pairs.push(ComplementarityPair {
            multiplier: pi[r],
            slack: AffineExpr::new(terms, row.rhs),
            m_multiplier,
            m_slack: max_slack.max(1e-6),
        });
    }
    if with_xi {
        for (r, row) in unc.xi_rows.iter().enumerate() {
            let rhs = xi.expr(row.xi, row.constant);
            let mut terms = rhs.terms.clone();
            terms.extend(row.w.iter().map(|&(k, a)| (w[k], -a)));
            let mut max_slack = xi.upper(unc, row.xi) + row.constant;
            for &(k, a) in &row.w {
                max_slack -= if a > 0.0 { a * unc.w_min[k] } else { a * unc.w_max[k] };
            }
            pairs.push(ComplementarityPair {
                multiplier: theta[r],
                slack: AffineExpr::new(terms, rhs.constant),
                m_multiplier,
                m_slack: max_slack.max(1e-6),
            });
        }
    }
    let z = linearize_complementarity(p, &pairs)?;
    let constant = weights.iter().all(|e| e.terms.is_empty());
    let envelopes = if constant { add_duality_cut(p, unc, weights, xi, &w, &pi, &theta, m_multiplier) } else { Vec::new() };
    Ok(BlockVars { w, u, pi, theta, z, pairs, envelopes })
}

/// Strong duality `−gᵀw ≥ fᵀπ + Σ (ξ + c)ᵀθ`, implied by the KKT rows but
/// not by their relaxation. Products `ξθ` are replaced by McCormick under-estimators,
/// so the row stays valid and is exact when `ξ` is fixed.
#[allow(clippy::too_many_arguments)]
fn add_duality_cut(
    p: &mut ConicProgram,
    unc: &UncertaintyPolyhedron,
    weights: &[AffineExpr],
    xi: &XiRef,
    w: &[usize],
    pi: &[usize],
    theta: &[usize],
    m_theta: f64,
) -> Vec<Envelope> {
    let mut envelopes = Vec::new();
    let mut terms: Vec<(usize, f64)> = w.iter().zip(weights).map(|(&v, g)| (v, g.constant)).collect();
    terms.extend(pi.iter().zip(&unc.rows).map(|(&v, r)| (v, r.rhs)));
    for (&th, row) in theta.iter().zip(&unc.xi_rows) {
        match xi {
            XiRef::Fixed(x) => terms.push((th, x[row.xi] + row.constant)),
            XiRef::Vars(v) => {
                let t = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
                let e = Envelope { xi: v[row.xi], theta: th, t, m: m_theta, row_lo: p.add_le(vec![], 0.0), row_hi: p.add_le(vec![], 0.0) };
                e.refresh(p);
                envelopes.push(e);
                terms.push((th, row.constant));
                terms.push((t, 1.0));
            }
        }
    }
    p.add_le(terms, 0.0);
    envelopes
}

/// Maximiser of `−gᵀw` over `W(ξ)` as `(w, u)`, or `None` when the set is empty.
pub fn block_argmax(
    backend: &dyn ConicBackend,
    unc: &UncertaintyPolyhedron,
    g: &[f64],
    xi: &[f64],
    with_xi_rows: bool,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut q = ConicProgram::new();
    let (w, u) = add_membership(&mut q, unc, &XiRef::Fixed(xi.to_vec()), with_xi_rows);
    for (&v, &gk) in w.iter().zip(g) {
        q.objective[v] = gk;
    }
    let sol = solve_conic(backend, &q).ok()?;
    Some((w.iter().map(|&v| sol.x[v]).collect(), u.iter().map(|&v| sol.x[v]).collect()))
}

/// Constant weights `Gᵀλ` as affine expressions.
pub fn constant_weights(g: &[f64]) -> Vec<AffineExpr> {
    g.iter().map(|&v| AffineExpr::new(vec![], v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{solve_mi_conic, BnbSettings, ClarabelBackend, MiStatus};

    fn toy() -> UncertaintyPolyhedron {
        crate::oracle::toy_set()
    }

    /// Projection of the block onto w, probed by minimising and maximising each coordinate.
    fn block_extent(xi: [f64; 2]) -> Vec<[f64; 2]> {
        let unc = toy();
        let g = [0.79, 0.63];
        let mut out = Vec::new();
        for (k, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
            let mut p = ConicProgram::new();
            let b = add_mapping_block(
                &mut p,
                &unc,
                &constant_weights(&g),
                &XiRef::Fixed(xi.to_vec()),
                BlockKind::Kkt,
                multiplier_bound(&unc, 0.79),
            )
            .unwrap();
            p.objective[b.w[k]] = sign;
            let s = solve_mi_conic(&p, &ClarabelBackend::default(), &BnbSettings::default()).unwrap();
            assert_eq!(s.status, MiStatus::Optimal);
            assert!(b.saturation(&s.x) < 0.999);
            out.push([s.x[b.w[0]], s.x[b.w[1]]]);
        }
        out
    }

    #[test]
    fn toy_block_is_a_single_point() {
        for p in block_extent([0.75, 0.75]) {
            assert!((p[0] - 0.25).abs() < 1e-6 && (p[1] - 0.5).abs() < 1e-6, "{p:?}");
        }
        for p in block_extent([0.75, 0.4]) {
            assert!((p[0] - 0.35).abs() < 1e-6 && (p[1] - 0.4).abs() < 1e-6, "{p:?}");
        }
    }
}
