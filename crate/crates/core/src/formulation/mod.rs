//! Compact second-stage model `A x + B y + γ ≤ G w + E s` with branch-flow cones.

mod recourse;
pub mod uncertainty;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::sparse::SparseMatrix;

pub use recourse::{check_robust_feasibility, evaluate_q, recourse_program, FeasibilityReport, RecourseSolution};
pub use uncertainty::{build_resizing_domain, build_uncertainty, ResizingDomain, UncertaintyOptions, UncertaintyPolyhedron};

/// What a row of the compact model encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowTag {
    FlowPUpper { branch: usize, t: usize },
    FlowPLower { branch: usize, t: usize },
    FlowQUpper { branch: usize, t: usize },
    FlowQLower { branch: usize, t: usize },
    CurrentUpper { branch: usize, t: usize },
    CurrentLower { branch: usize, t: usize },
    VoltageDropUpper { branch: usize, t: usize },
    VoltageDropLower { branch: usize, t: usize },
    VoltageUpper { bus: usize, t: usize },
    VoltageLower { bus: usize, t: usize },
    ActiveBalanceUpper { bus: usize, t: usize },
    ActiveBalanceLower { bus: usize, t: usize },
    ReactiveBalanceUpper { bus: usize, t: usize },
    ReactiveBalanceLower { bus: usize, t: usize },
    ThermalPUpper { unit: usize, t: usize },
    ThermalPLower { unit: usize, t: usize },
    ThermalQUpper { unit: usize, t: usize },
    ThermalQLower { unit: usize, t: usize },
    StoragePUpper { unit: usize, t: usize },
    StoragePLower { unit: usize, t: usize },
    SocUpper { unit: usize, t: usize },
    SocLower { unit: usize, t: usize },
}

/// Column layout of the recourse vector `y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarIndex {
    pub horizon: usize,
    pub n_branch: usize,
    pub n_bus: usize,
    pub n_thermal: usize,
    pub n_storage: usize,
}

impl VarIndex {
    fn block(&self, which: usize) -> usize {
        let t = self.horizon;
        let sizes = [self.n_branch, self.n_branch, self.n_branch, self.n_bus, self.n_thermal, self.n_thermal, self.n_storage];
        sizes[..which].iter().sum::<usize>() * t
    }
    pub fn p(&self, k: usize, t: usize) -> usize {
        self.block(0) + k * self.horizon + t
    }
    pub fn q(&self, k: usize, t: usize) -> usize {
        self.block(1) + k * self.horizon + t
    }
    pub fn l(&self, k: usize, t: usize) -> usize {
        self.block(2) + k * self.horizon + t
    }
    pub fn v(&self, bus: usize, t: usize) -> usize {
        self.block(3) + bus * self.horizon + t
    }
    pub fn pg(&self, g: usize, t: usize) -> usize {
        self.block(4) + g * self.horizon + t
    }
    pub fn qg(&self, g: usize, t: usize) -> usize {
        self.block(5) + g * self.horizon + t
    }
    pub fn pb(&self, s: usize, t: usize) -> usize {
        self.block(6) + s * self.horizon + t
    }
    pub fn n_y(&self) -> usize {
        self.block(7)
    }
    /// Slack column for the active balance of `bus` in period `t`.
    pub fn slack(&self, bus: usize, t: usize) -> usize {
        bus * self.horizon + t
    }
}

/// One rotated cone `p² + q² ≤ l v` written as `‖C y‖ ≤ dᵀ y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelCone {
    pub head: Vec<(usize, f64)>,
    pub tail: Vec<Vec<(usize, f64)>>,
    pub branch: usize,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompactModel {
    pub n_x: usize,
    pub n_y: usize,
    pub n_w: usize,
    pub n_s: usize,
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub gamma: Vec<f64>,
    pub g: SparseMatrix,
    pub e: SparseMatrix,
    pub cost: Vec<f64>,
    /// Penalty per unit of slack (m_s); zero when the model is not relaxed.
    pub slack_penalty: f64,
    pub cones: Vec<ModelCone>,
    pub tags: Vec<RowTag>,
    pub index: VarIndex,
    /// Per-branch coupling constant of the voltage-drop rows.
    pub big_m: Vec<f64>,
}

/// How the voltage-drop coupling constant is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BigMPolicy {
    /// Per-branch bound from voltage range, flow limits and current limit.
    PerBranch,
    Uniform(f64),
}

impl CompactModel {
    pub fn num_rows(&self) -> usize {
        self.tags.len()
    }

    pub fn is_relaxed(&self) -> bool {
        self.n_s > 0
    }

    /// Right-hand side `G w − A x − γ` of the recourse rows.
    pub fn rhs(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let gw = self.g.mul(w);
        let ax = self.a.mul(x);
        (0..self.num_rows()).map(|r| gw[r] - ax[r] - self.gamma[r]).collect()
    }

    /// Smallest possible recourse cost over the variable bounds implied by
    /// single-variable rows; used as a floor for the master epigraph.
    pub fn cost_floor(&self) -> f64 {
        let mut lo = vec![f64::NEG_INFINITY; self.n_y];
        let mut hi = vec![f64::INFINITY; self.n_y];
        for r in 0..self.num_rows() {
            let row = self.b.row(r);
            if row.len() != 1 || self.a.row(r).iter().any(|&(_, v)| v != 0.0) || !self.g.row(r).is_empty() {
                continue;
            }
            let (j, a) = row[0];
            let bound = -self.gamma[r] / a;
            if a > 0.0 {
                hi[j] = hi[j].min(bound);
            } else {
                lo[j] = lo[j].max(bound);
            }
        }
        let mut floor = 0.0;
        for j in 0..self.n_y {
            let c = self.cost[j];
            if c > 0.0 {
                floor += c * lo[j];
            } else if c < 0.0 {
                floor += c * hi[j];
            }
        }
        if floor.is_finite() {
            floor
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Sparse export: matrices as triplets plus a cone manifest.
    pub fn export(&self) -> ExportedModel {
        let trip = |m: &SparseMatrix| m.triplets().collect::<Vec<_>>();
        ExportedModel {
            n_x: self.n_x,
            n_y: self.n_y,
            n_w: self.n_w,
            n_s: self.n_s,
            rows: self.num_rows(),
            a: trip(&self.a),
            b: trip(&self.b),
            g: trip(&self.g),
            e: trip(&self.e),
            gamma: self.gamma.clone(),
            cost: self.cost.clone(),
            slack_penalty: self.slack_penalty,
            cones: self.cones.clone(),
            tags: self.tags.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExportedModel {
    pub n_x: usize,
    pub n_y: usize,
    pub n_w: usize,
    pub n_s: usize,
    pub rows: usize,
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<(usize, usize, f64)>,
    pub g: Vec<(usize, usize, f64)>,
    pub e: Vec<(usize, usize, f64)>,
    pub gamma: Vec<f64>,
    pub cost: Vec<f64>,
    pub slack_penalty: f64,
    pub cones: Vec<ModelCone>,
    pub tags: Vec<RowTag>,
}

struct Builder {
    a: Vec<Vec<(usize, f64)>>,
    b: Vec<Vec<(usize, f64)>>,
    g: Vec<Vec<(usize, f64)>>,
    gamma: Vec<f64>,
    tags: Vec<RowTag>,
}

impl Builder {
    fn row(&mut self, tag: RowTag, a: Vec<(usize, f64)>, b: Vec<(usize, f64)>, gamma: f64, g: Vec<(usize, f64)>) {
        self.a.push(a);
        self.b.push(b);
        self.g.push(g);
        self.gamma.push(gamma);
        self.tags.push(tag);
    }

    fn pair(&mut self, up: RowTag, lo: RowTag, b: Vec<(usize, f64)>, gamma: f64, g: Vec<(usize, f64)>) {
        let nb = b.iter().map(|&(j, v)| (j, -v)).collect();
        let ng = g.iter().map(|&(j, v)| (j, -v)).collect();
        self.row(up, vec![], b, gamma, g);
        self.row(lo, vec![], nb, -gamma, ng);
    }
}

fn to_sparse(rows: Vec<Vec<(usize, f64)>>, ncols: usize) -> SparseMatrix {
    let mut m = SparseMatrix::new(rows.len(), ncols);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row {
            m.add(r, c, v);
        }
    }
    m
}

/// Per-branch voltage-drop constant: voltage range plus the largest drop term.
pub fn branch_big_m(case: &NetworkCase, k: usize) -> f64 {
    let br = &case.branches[k];
    let vmax = case.buses.iter().map(|b| b.v_max).fold(f64::MIN, f64::max);
    let vmin = case.buses.iter().map(|b| b.v_min).fold(f64::MAX, f64::min);
    let pmax = br.p_max.abs().max(br.p_min.abs());
    let qmax = br.q_max.abs().max(br.q_min.abs());
    (vmax - vmin.min(1.0)).max(vmax.max(1.0) - vmin) + 2.0 * (br.r * pmax + br.x * qmax) + (br.r * br.r + br.x * br.x) * br.l_max
}

/// Assembles the branch-flow second stage for every period of the horizon.
pub fn build_second_stage(case: &NetworkCase, policy: BigMPolicy) -> Result<CompactModel> {
    let t_n = case.horizon;
    let idx = VarIndex {
        horizon: t_n,
        n_branch: case.num_branches(),
        n_bus: case.num_buses(),
        n_thermal: case.thermals.len(),
        n_storage: case.storages.len(),
    };
    let big_m: Vec<f64> = match policy {
        BigMPolicy::PerBranch => (0..case.num_branches()).map(|k| branch_big_m(case, k)).collect(),
        BigMPolicy::Uniform(m) => vec![m; case.num_branches()],
    };
    let big_m = match case.big_m {
        Some(m) if policy == BigMPolicy::PerBranch => vec![m; case.num_branches()],
        _ => big_m,
    };
    if let Some(m) = big_m.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidInput(format!("unbounded or non-positive big-M requested ({m})")));
    }

    let mut bd = Builder { a: Vec::new(), b: Vec::new(), g: Vec::new(), gamma: Vec::new(), tags: Vec::new() };
    let mut cones = Vec::new();
    let mut cost = vec![0.0; idx.n_y()];

    for t in 0..t_n {
        for (k, br) in case.branches.iter().enumerate() {
            let (p, q, l) = (idx.p(k, t), idx.q(k, t), idx.l(k, t));
            let (vi, vj) = (idx.v(br.from, t), idx.v(br.to, t));
            bd.row(RowTag::FlowPUpper { branch: k, t }, vec![(k, -br.p_max)], vec![(p, 1.0)], 0.0, vec![]);
            bd.row(RowTag::FlowPLower { branch: k, t }, vec![(k, br.p_min)], vec![(p, -1.0)], 0.0, vec![]);
            bd.row(RowTag::FlowQUpper { branch: k, t }, vec![(k, -br.q_max)], vec![(q, 1.0)], 0.0, vec![]);
            bd.row(RowTag::FlowQLower { branch: k, t }, vec![(k, br.q_min)], vec![(q, -1.0)], 0.0, vec![]);
            bd.row(RowTag::CurrentUpper { branch: k, t }, vec![(k, -br.l_max)], vec![(l, 1.0)], 0.0, vec![]);
            bd.row(RowTag::CurrentLower { branch: k, t }, vec![], vec![(l, -1.0)], 0.0, vec![]);
            let z2 = br.r * br.r + br.x * br.x;
            let drop = vec![(vj, 1.0), (vi, -1.0), (p, 2.0 * br.r), (q, 2.0 * br.x), (l, -z2)];
            let neg: Vec<(usize, f64)> = drop.iter().map(|&(j, v)| (j, -v)).collect();
            let m = big_m[k];
            bd.row(RowTag::VoltageDropUpper { branch: k, t }, vec![(k, m)], drop, -m, vec![]);
            bd.row(RowTag::VoltageDropLower { branch: k, t }, vec![(k, m)], neg, -m, vec![]);
            cones.push(ModelCone {
                head: vec![(l, 1.0), (vi, 1.0)],
                tail: vec![vec![(p, 2.0)], vec![(q, 2.0)], vec![(l, 1.0), (vi, -1.0)]],
                branch: k,
                t,
            });
        }
        for (j, bus) in case.buses.iter().enumerate() {
            let v = idx.v(j, t);
            let (vmin, vmax) = if bus.substation { (1.0, 1.0) } else { (bus.v_min, bus.v_max) };
            bd.row(RowTag::VoltageUpper { bus: j, t }, vec![], vec![(v, 1.0)], -vmax, vec![]);
            bd.row(RowTag::VoltageLower { bus: j, t }, vec![], vec![(v, -1.0)], vmin, vec![]);

            let mut pinj = Vec::new();
            let mut qinj = Vec::new();
            for (k, br) in case.branches.iter().enumerate() {
                if br.to == j {
                    pinj.push((idx.p(k, t), 1.0));
                    pinj.push((idx.l(k, t), -br.r));
                    qinj.push((idx.q(k, t), 1.0));
                    qinj.push((idx.l(k, t), -br.x));
                }
                if br.from == j {
                    pinj.push((idx.p(k, t), -1.0));
                    qinj.push((idx.q(k, t), -1.0));
                }
            }
            for (g, th) in case.thermals.iter().enumerate() {
                if th.bus == j {
                    pinj.push((idx.pg(g, t), 1.0));
                    qinj.push((idx.qg(g, t), 1.0));
                }
            }
            for (s, st) in case.storages.iter().enumerate() {
                if st.bus == j {
                    pinj.push((idx.pb(s, t), 1.0));
                }
            }
            // injection − load ≤ −w  and  load − injection ≤ w
            let gw: Vec<(usize, f64)> =
                case.renewables.iter().enumerate().filter(|(_, r)| r.bus == j).map(|(i, _)| (case.w_index(i, t), -1.0)).collect();
            bd.pair(RowTag::ActiveBalanceUpper { bus: j, t }, RowTag::ActiveBalanceLower { bus: j, t }, merge(pinj), -bus.p_load[t], gw);
            bd.pair(
                RowTag::ReactiveBalanceUpper { bus: j, t },
                RowTag::ReactiveBalanceLower { bus: j, t },
                merge(qinj),
                -bus.q_load[t],
                vec![],
            );
        }
        for (g, th) in case.thermals.iter().enumerate() {
            let (pg, qg) = (idx.pg(g, t), idx.qg(g, t));
            bd.row(RowTag::ThermalPUpper { unit: g, t }, vec![], vec![(pg, 1.0)], -th.p_max, vec![]);
            bd.row(RowTag::ThermalPLower { unit: g, t }, vec![], vec![(pg, -1.0)], th.p_min, vec![]);
            bd.row(RowTag::ThermalQUpper { unit: g, t }, vec![], vec![(qg, 1.0)], -th.q_max, vec![]);
            bd.row(RowTag::ThermalQLower { unit: g, t }, vec![], vec![(qg, -1.0)], th.q_min, vec![]);
            cost[pg] = case.costs.thermal_p[g];
            cost[qg] = case.costs.thermal_q[g];
        }
        for (s, st) in case.storages.iter().enumerate() {
            let pb = idx.pb(s, t);
            bd.row(RowTag::StoragePUpper { unit: s, t }, vec![], vec![(pb, 1.0)], -st.p_max, vec![]);
            bd.row(RowTag::StoragePLower { unit: s, t }, vec![], vec![(pb, -1.0)], st.p_min, vec![]);
            // state of charge after period t: S0 − dt Σ_{τ≤t} p_τ
            let cum_neg: Vec<(usize, f64)> = (0..=t).map(|tau| (idx.pb(s, tau), -st.dt)).collect();
            let cum_pos: Vec<(usize, f64)> = (0..=t).map(|tau| (idx.pb(s, tau), st.dt)).collect();
            bd.row(RowTag::SocUpper { unit: s, t }, vec![], cum_neg, st.soc_init - st.soc_max, vec![]);
            bd.row(RowTag::SocLower { unit: s, t }, vec![], cum_pos, st.soc_min - st.soc_init, vec![]);
            cost[pb] = case.costs.storage[s];
        }
    }

    let m = bd.tags.len();
    let n_w = case.num_w();
    Ok(CompactModel {
        n_x: case.num_branches(),
        n_y: idx.n_y(),
        n_w,
        n_s: 0,
        a: to_sparse(bd.a, case.num_branches()),
        b: to_sparse(bd.b, idx.n_y()),
        gamma: bd.gamma,
        g: to_sparse(bd.g, n_w),
        e: SparseMatrix::new(m, 0),
        cost,
        slack_penalty: 0.0,
        cones,
        tags: bd.tags,
        index: idx,
        big_m,
    })
}

fn merge(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (j, v) in terms {
        if let Some(e) = out.iter_mut().find(|e| e.0 == j) {
            e.1 += v;
        } else {
            out.push((j, v));
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Default slack penalty: 10³ times the largest recourse cost coefficient.
pub fn default_slack_penalty(model: &CompactModel) -> f64 {
    let m = model.cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    1e3 * if m > 0.0 { m } else { 1.0 }
}

/// Adds a non-negative slack per active-balance pair, penalised by `m_s`.
pub fn relax_recourse(model: &CompactModel, m_s: f64) -> Result<CompactModel> {
    if !(m_s > 0.0 && m_s.is_finite()) {
        return Err(Error::InvalidInput(format!("slack penalty must be positive, got {m_s}")));
    }
    let idx = &model.index;
    let n_s = idx.n_bus * idx.horizon;
    let mut e = SparseMatrix::new(model.num_rows(), n_s);
    for (r, tag) in model.tags.iter().enumerate() {
        match *tag {
            RowTag::ActiveBalanceUpper { bus, t } | RowTag::ActiveBalanceLower { bus, t } => e.add(r, idx.slack(bus, t), 1.0),
            _ => {}
        }
    }
    let mut out = model.clone();
    out.n_s = n_s;
    out.e = e;
    out.slack_penalty = m_s;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn dimensions_match_layout() {
        let c = cases::case6();
        let m = build_second_stage(&c, BigMPolicy::PerBranch).unwrap();
        assert_eq!(m.n_y, 3 * 7 + 6 + 2 + 1);
        assert_eq!(m.n_w, 2);
        assert_eq!(m.cones.len(), 7);
        assert_eq!(m.b.nrows, m.num_rows());
        assert_eq!(m.a.ncols, 7);
        let relaxed = relax_recourse(&m, default_slack_penalty(&m)).unwrap();
        assert_eq!(relaxed.n_s, 6);
        assert_eq!(relaxed.slack_penalty, 1000.0);
        assert_eq!(relaxed.e.nnz(), 12);
    }

    #[test]
    fn rejects_bad_big_m() {
        let c = cases::case6();
        assert!(build_second_stage(&c, BigMPolicy::Uniform(0.0)).is_err());
        assert!(build_second_stage(&c, BigMPolicy::Uniform(-1.0)).is_err());
        let m = build_second_stage(&c, BigMPolicy::PerBranch).unwrap();
        assert!(relax_recourse(&m, 0.0).is_err());
    }

    #[test]
    fn big_m_covers_drop_terms() {
        let c = cases::case6();
        for k in 0..c.num_branches() {
            let br = &c.branches[k];
            let m = branch_big_m(&c, k);
            assert!(m >= 1.21 - 0.81 + 2.0 * (br.r + br.x) * 1.0);
        }
    }

    #[test]
    fn cost_floor_accounts_for_charging() {
        let c = cases::case6();
        let m = build_second_stage(&c, BigMPolicy::PerBranch).unwrap();
        // thermal at p_min = 0, storage charging at −0.05 with cost 0.4
        assert!((m.cost_floor() + 0.02).abs() < 1e-12);
    }
}
