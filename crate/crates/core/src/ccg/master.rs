//! Master problem over `(α, ξ, L)` with one recourse copy per generated column.

use super::mapping::{
    add_mapping_block, add_membership, block_argmax, constant_weights, multiplier_bound, BlockKind, BlockVars, Envelope, XiRef,
};
use super::Instance;
use crate::engine::{solve_mi_conic_with, AffineExpr, BnbHooks, BnbSettings, ConicBackend, ConicProgram, MiStatus, Sense};
use crate::error::{Error, Result};
use crate::network::topology::{max_weight_tree, radiality_rows, DEFAULT_LOOP_CAP};

/// Envelope error below which a resizing coordinate is not split.
const SPATIAL_TOL: f64 = 1e-6;

/// Boxes narrower than this share of the root range are not split.
const SPATIAL_MIN_WIDTH: f64 = 1.0 / 64.0;

/// Boxes narrower than this are never split.
const SPATIAL_FLOOR: f64 = 1e-9;

/// Resizing coordinate with the largest envelope error, split at its
/// midpoint. `min_width` is the narrowest box still split, per coordinate.
fn spatial_split(xi: &[usize], min_width: &[f64], envelopes: &[&Envelope], q: &ConicProgram, x: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in xi.iter().enumerate() {
        let (lo, hi) = (q.lower[v], q.upper[v]);
        if hi - lo <= min_width[k].max(SPATIAL_FLOOR) {
            continue;
        }
        let err: f64 = envelopes.iter().filter(|e| e.xi == v).map(|e| e.error(x).max(0.0)).sum();
        if err > SPATIAL_TOL && best.is_none_or(|(_, b)| err > b) {
            best = Some((v, err));
        }
    }
    best.map(|(v, _)| (v, 0.5 * (q.lower[v] + q.upper[v])))
}

/// How the scenario of a column is tied to the first stage.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnKind {
    /// `w^i ∈ K(ξ, λ^i)`.
    Mapping(BlockKind),
    /// `w^i` pinned to a scenario found earlier.
    Fixed(Vec<f64>),
    /// No recourse copy: `L ≥ λᵀ(A α + γ) + fᵀπ + (ξ + c)ᵀθ` over the dual
    /// of the inner worst case, so the master picks its minimum.
    Cut,
}

impl ColumnKind {
    /// Block kind of the scenario, `None` for fixed scenarios.
    pub fn block(&self) -> Option<BlockKind> {
        match self {
            ColumnKind::Mapping(bk) => Some(*bk),
            ColumnKind::Cut | ColumnKind::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ColumnVars {
    pub y: Vec<usize>,
    pub s: Vec<usize>,
    /// Scenario columns, empty for fixed scenarios.
    pub w: Vec<usize>,
    pub block: Option<BlockVars>,
    pub kind: ColumnKind,
    /// Block weights `Gᵀλ`.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MasterSettings {
    /// Lower bound on the recourse epigraph `L`.
    pub l_floor: f64,
    /// When set, `ξ` is fixed to this value.
    pub xi_fixed: Option<Vec<f64>>,
    /// Multiplier on the default KKT multiplier bound.
    pub m_scale: f64,
}

#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub l: f64,
    /// Objective of the incumbent.
    pub objective: f64,
    /// Proven lower bound.
    pub bound: f64,
    pub nodes: usize,
    /// Scenario of every column at the optimum.
    pub column_w: Vec<Vec<f64>>,
    pub saturation: f64,
}

pub struct Master {
    pub program: ConicProgram,
    pub alpha: Vec<usize>,
    pub xi: Vec<usize>,
    pub l: usize,
    pub columns: Vec<ColumnVars>,
    settings: MasterSettings,
}

impl Master {
    pub fn new(inst: &Instance, settings: MasterSettings) -> Result<Self> {
        let case = &inst.case;
        let mut p = ConicProgram::new();
        let alpha: Vec<usize> = case
            .branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                let v = p.add_binary(inst.switch_cost[k]);
                if !br.switchable {
                    p.lower[v] = 1.0;
                }
                v
            })
            .collect();
        for row in radiality_rows(case, DEFAULT_LOOP_CAP)? {
            let terms = row.branches.iter().map(|&k| (alpha[k], 1.0)).collect();
            p.add_row(terms, row.sense, row.rhs);
        }
        let d = &inst.domain;
        let xi: Vec<usize> = (0..d.n_w)
            .map(|k| match &settings.xi_fixed {
                Some(v) => p.add_var(v[k], v[k], -inst.resize_cost[k]),
                None => p.add_var(d.lower[k], d.upper[k], -inst.resize_cost[k]),
            })
            .collect();
        if settings.xi_fixed.is_none() {
            for (terms, rhs) in &d.rows {
                p.add_le(terms.iter().map(|&(k, a)| (xi[k], a)).collect(), *rhs);
            }
            // W(ξ) must stay non-empty
            add_membership(&mut p, &inst.block_unc, &XiRef::Vars(xi.clone()), true);
        }
        let l = p.add_var(settings.l_floor, f64::INFINITY, 1.0);
        Ok(Master { program: p, alpha, xi, l, columns: Vec::new(), settings })
    }

    fn xi_ref(&self) -> XiRef {
        match &self.settings.xi_fixed {
            Some(v) => XiRef::Fixed(v.clone()),
            None => XiRef::Vars(self.xi.clone()),
        }
    }

    /// Adds a recourse copy with scenario tied by `kind`; `lambda` supplies
    /// the block weights for mapping columns.
    pub fn add_column(&mut self, inst: &Instance, lambda: &[f64], kind: ColumnKind) -> Result<()> {
        if kind == ColumnKind::Cut {
            return self.add_cut(inst, lambda);
        }
        let model = &inst.model;
        let xi_ref = self.xi_ref();
        let p = &mut self.program;
        let g = model.g.tmul(lambda);
        let (w, block) = match kind.block() {
            None => (Vec::new(), None),
            Some(bk) => {
                let c_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let m_pi = self.settings.m_scale * multiplier_bound(&inst.block_unc, c_max);
                let b = add_mapping_block(p, &inst.block_unc, &constant_weights(&g), &xi_ref, bk, m_pi)?;
                (b.w.clone(), Some(b))
            }
        };
        let y = p.add_vars(model.n_y, f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let s = p.add_vars(model.n_s, 0.0, f64::INFINITY, 0.0);
        // A α + B y + γ ≤ G w + E s
        for r in 0..model.num_rows() {
            let mut terms: Vec<(usize, f64)> = model.a.row(r).iter().map(|&(j, v)| (self.alpha[j], v)).collect();
            terms.extend(model.b.row(r).iter().map(|&(j, v)| (y[j], v)));
            terms.extend(model.e.row(r).iter().map(|&(j, v)| (s[j], -v)));
            let mut rhs = -model.gamma[r];
            match &kind {
                ColumnKind::Fixed(wf) => rhs += model.g.row(r).iter().map(|&(k, v)| v * wf[k]).sum::<f64>(),
                _ => terms.extend(model.g.row(r).iter().map(|&(k, v)| (w[k], -v))),
            }
            p.add_row(terms, Sense::Le, rhs);
        }
        for c in &model.cones {
            let map = |t: &[(usize, f64)]| AffineExpr::new(t.iter().map(|&(j, a)| (y[j], a)).collect(), 0.0);
            p.add_cone(map(&c.head), c.tail.iter().map(|t| map(t)).collect());
        }
        // L ≥ bᵀy + m_s 1ᵀs
        let mut terms: Vec<(usize, f64)> = model.cost.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(j, &c)| (y[j], c)).collect();
        terms.extend(s.iter().map(|&j| (j, model.slack_penalty)));
        terms.push((self.l, -1.0));
        p.add_le(terms, 0.0);
        self.columns.push(ColumnVars { y, s, w, block, kind, weights: g });
        Ok(())
    }

    fn add_cut(&mut self, inst: &Instance, lambda: &[f64]) -> Result<()> {
        let model = &inst.model;
        let unc = &inst.block_unc;
        let g = model.g.tmul(lambda);
        let c_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m_theta = self.settings.m_scale * multiplier_bound(unc, c_max);
        let fixed_xi = self.settings.xi_fixed.clone();
        let p = &mut self.program;
        let pi: Vec<usize> = unc.rows.iter().map(|_| p.add_var(0.0, f64::INFINITY, 0.0)).collect();
        let theta_cap = if fixed_xi.is_some() { f64::INFINITY } else { m_theta };
        let theta: Vec<usize> = unc.xi_rows.iter().map(|_| p.add_var(0.0, theta_cap, 0.0)).collect();
        // Fᵀπ + Pᵀθ = −Gᵀλ, F_uᵀπ = 0
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
        let at = model.a.tmul(lambda);
        let mut terms: Vec<(usize, f64)> = self.alpha.iter().zip(&at).filter(|(_, &a)| a != 0.0).map(|(&v, &a)| (v, a)).collect();
        terms.extend(pi.iter().zip(&unc.rows).filter(|(_, r)| r.rhs != 0.0).map(|(&v, r)| (v, r.rhs)));
        let mut envelopes = Vec::new();
        for (&th, row) in theta.iter().zip(&unc.xi_rows) {
            match &fixed_xi {
                Some(x) => terms.push((th, x[row.xi] + row.constant)),
                None => {
                    // ξθ replaced by an under-estimator refined by spatial branching
                    let t = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
                    let e = Envelope {
                        xi: self.xi[row.xi],
                        theta: th,
                        t,
                        m: m_theta,
                        row_lo: p.add_le(vec![], 0.0),
                        row_hi: p.add_le(vec![], 0.0),
                    };
                    e.refresh(p);
                    envelopes.push(e);
                    if row.constant != 0.0 {
                        terms.push((th, row.constant));
                    }
                    terms.push((t, 1.0));
                }
            }
        }
        terms.push((self.l, -1.0));
        let lg: f64 = lambda.iter().zip(&model.gamma).map(|(l, c)| l * c).sum();
        p.add_le(terms, -lg);
        let block = BlockVars { w: Vec::new(), u: Vec::new(), pi, theta, z: Vec::new(), pairs: Vec::new(), envelopes };
        self.columns.push(ColumnVars {
            y: Vec::new(),
            s: Vec::new(),
            w: Vec::new(),
            block: Some(block),
            kind: ColumnKind::Cut,
            weights: g,
        });
        Ok(())
    }

    pub fn num_binaries(&self) -> usize {
        self.program.num_binaries()
    }

    pub fn num_rows(&self) -> usize {
        self.program.rows.len()
    }

    /// Binary assignment for a radial `α` with every block's active set
    /// taken from its argmax at `ξ`.
    pub fn completion(&self, inst: &Instance, backend: &dyn ConicBackend, alpha: &[f64], xi: &[f64]) -> Option<Vec<(usize, f64)>> {
        let tree = max_weight_tree(&inst.case, alpha);
        let mut fix: Vec<(usize, f64)> = self.alpha.iter().zip(&tree).map(|(&v, &a)| (v, a)).collect();
        let unc = &inst.block_unc;
        for c in &self.columns {
            let (Some(block), Some(bk)) = (&c.block, c.kind.block()) else {
                continue;
            };
            let with_xi = bk == BlockKind::Kkt;
            let (wv, uv) = block_argmax(backend, unc, &c.weights, xi, with_xi)?;
            let mut slacks: Vec<f64> = unc
                .rows
                .iter()
                .map(|r| r.rhs - r.w.iter().map(|&(k, a)| a * wv[k]).sum::<f64>() - r.u.iter().map(|&(k, a)| a * uv[k]).sum::<f64>())
                .collect();
            if with_xi {
                slacks.extend(unc.xi_rows.iter().map(|r| xi[r.xi] + r.constant - r.w.iter().map(|&(k, a)| a * wv[k]).sum::<f64>()));
            }
            fix.extend(block.z.iter().zip(&slacks).map(|(&z, &sl)| (z, if sl <= 1e-7 { 1.0 } else { 0.0 })));
        }
        Some(fix)
    }

    /// Solves the master; `hints` are `(α, ξ)` pairs used to seed incumbents.
    pub fn solve(
        &self,
        inst: &Instance,
        backend: &dyn ConicBackend,
        bnb: &BnbSettings,
        hints: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<MasterSolution> {
        let complete = |x: &[f64]| {
            let alpha: Vec<f64> = self.alpha.iter().map(|&v| x[v]).collect();
            let xi: Vec<f64> = self.xi.iter().map(|&v| x[v].clamp(self.program.lower[v], self.program.upper[v])).collect();
            self.completion(inst, backend, &alpha, &xi)
        };
        // complementarity binaries first: fixing them tightens the bound far more than topology
        let mut priority = vec![1u32; self.program.num_vars()];
        for &v in &self.alpha {
            priority[v] = 0;
        }
        let envelopes: Vec<&Envelope> = self.columns.iter().filter_map(|c| c.block.as_ref()).flat_map(|b| &b.envelopes).collect();
        // mapping blocks are exact once their binaries are fixed, cuts are not
        let cut_envelopes: Vec<&Envelope> =
            self.columns.iter().filter(|c| c.kind == ColumnKind::Cut).filter_map(|c| c.block.as_ref()).flat_map(|b| &b.envelopes).collect();
        let refresh = |q: &mut ConicProgram| envelopes.iter().for_each(|e| e.refresh(q));
        let coarse: Vec<f64> = self.xi.iter().map(|&v| SPATIAL_MIN_WIDTH * (self.program.upper[v] - self.program.lower[v])).collect();
        let fine = vec![0.0; self.xi.len()];
        let spatial = |q: &ConicProgram, x: &[f64], integral: bool| {
            if integral {
                spatial_split(&self.xi, &fine, &cut_envelopes, q, x)
            } else {
                spatial_split(&self.xi, &coarse, &envelopes, q, x)
            }
        };
        let hooks = BnbHooks {
            starts: hints.iter().filter_map(|(a, x)| self.completion(inst, backend, a, x)).collect(),
            completion: Some(&complete),
            priority: Some(priority),
            refresh: Some(&refresh),
            spatial: if envelopes.is_empty() { None } else { Some(&spatial) },
        };
        let sol = solve_mi_conic_with(&self.program, backend, bnb, &hooks)?;
        match sol.status {
            MiStatus::Optimal => {}
            MiStatus::NodeLimit => return Err(Error::NodeLimit { gap: sol.gap() }),
            MiStatus::Infeasible => return Err(Error::Infeasible("master problem is infeasible".into())),
            MiStatus::Unbounded => return Err(Error::Solver("master problem is unbounded".into())),
        }
        let x = &sol.x;
        let alpha: Vec<f64> = self.alpha.iter().map(|&v| x[v].round()).collect();
        let xi: Vec<f64> = self.xi.iter().map(|&v| x[v].clamp(self.program.lower[v], self.program.upper[v])).collect();
        let column_w = self
            .columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Fixed(w) => w.clone(),
                _ => c.w.iter().map(|&v| x[v]).collect(),
            })
            .collect();
        let theta_saturation = cut_envelopes.iter().map(|e| x[e.theta] / e.m).fold(0.0, f64::max);
        let saturation = self.columns.iter().filter_map(|c| c.block.as_ref()).map(|b| b.saturation(x)).fold(theta_saturation, f64::max);
        Ok(MasterSolution {
            alpha,
            xi,
            l: x[self.l],
            objective: sol.objective,
            bound: sol.bound.min(sol.objective),
            nodes: sol.nodes,
            column_w,
            saturation,
        })
    }
}
