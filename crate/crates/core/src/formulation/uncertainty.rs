//! Budgeted renewable uncertainty `W(ξ) = {w : F w ≤ f, w ≤ ξ}` and the resizing domain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::NetworkCase;

/// Budgets with at most this many terms are written as one row per sign
/// pattern, which keeps the set in `w` alone. Longer budgets use one
/// auxiliary deviation variable per coordinate.
pub const EXPAND_LIMIT: usize = 10;

#[derive(Clone, Debug, Default)]
pub struct UncertaintyOptions {
    /// Per-period budget; defaults to half the number of renewables.
    pub gamma_t: Option<f64>,
    /// Per-renewable budget over the horizon; defaults to half the horizon.
    pub gamma_i: Option<f64>,
    /// Coupling rows `Σ_{j≠i} w_j ≥ β_i − ξ_i`, one per coordinate.
    pub extension: Option<Vec<f64>>,
    /// Force the lifted budget encoding even for short budgets.
    pub force_lifted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolyRowKind {
    Upper { k: usize },
    Lower { k: usize },
    PeriodBudget { t: usize, signs: u64 },
    UnitBudget { unit: usize, signs: u64 },
    DeviationPos { k: usize },
    DeviationNeg { k: usize },
    PeriodBudgetLifted { t: usize },
    UnitBudgetLifted { unit: usize },
}

impl PolyRowKind {
    pub fn is_period_budget(&self) -> bool {
        matches!(self, PolyRowKind::PeriodBudget { .. } | PolyRowKind::PeriodBudgetLifted { .. })
    }
    pub fn is_unit_budget(&self) -> bool {
        matches!(self, PolyRowKind::UnitBudget { .. } | PolyRowKind::UnitBudgetLifted { .. })
    }
}

/// `wᵀ·w_terms + uᵀ·u_terms ≤ rhs`
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyRow {
    pub w: Vec<(usize, f64)>,
    pub u: Vec<(usize, f64)>,
    pub rhs: f64,
    pub kind: PolyRowKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiRowKind {
    Cap { k: usize },
    Extension { k: usize },
}

/// `wᵀ·w_terms ≤ ξ[xi] + constant`
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiRow {
    pub w: Vec<(usize, f64)>,
    pub xi: usize,
    pub constant: f64,
    pub kind: XiRowKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UncertaintyPolyhedron {
    pub n_rg: usize,
    pub horizon: usize,
    pub n_w: usize,
    /// Auxiliary deviation variables (zero when every budget is expanded).
    pub n_aux: usize,
    pub forecast: Vec<f64>,
    pub half_width: Vec<f64>,
    pub w_min: Vec<f64>,
    pub w_max: Vec<f64>,
    pub gamma_t: f64,
    pub gamma_i: Option<f64>,
    pub rows: Vec<PolyRow>,
    /// Cap rows first (one per coordinate), then extension rows.
    pub xi_rows: Vec<XiRow>,
}

impl UncertaintyPolyhedron {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn f(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs).collect()
    }

    /// Right-hand sides of the ξ-dependent rows.
    pub fn xi_rhs(&self, xi: &[f64]) -> Vec<f64> {
        self.xi_rows.iter().map(|r| xi[r.xi] + r.constant).collect()
    }

    /// Deviation variables at their smallest feasible value for `w`.
    pub fn minimal_aux(&self, w: &[f64]) -> Vec<f64> {
        if self.n_aux == 0 {
            return Vec::new();
        }
        (0..self.n_w).map(|k| (w[k] - self.forecast[k]).abs() / self.half_width[k]).collect()
    }

    /// Largest violation of `F w ≤ f` and the ξ-rows at `(w, ξ)`.
    pub fn max_violation(&self, w: &[f64], xi: &[f64]) -> f64 {
        let u = self.minimal_aux(w);
        let mut v: f64 = 0.0;
        for r in &self.rows {
            let lhs: f64 = r.w.iter().map(|&(k, a)| a * w[k]).sum::<f64>() + r.u.iter().map(|&(k, a)| a * u[k]).sum::<f64>();
            v = v.max(lhs - r.rhs);
        }
        for r in &self.xi_rows {
            let lhs: f64 = r.w.iter().map(|&(k, a)| a * w[k]).sum();
            v = v.max(lhs - xi[r.xi] - r.constant);
        }
        v
    }

    pub fn contains(&self, w: &[f64], xi: &[f64], tol: f64) -> bool {
        self.max_violation(w, xi) <= tol
    }

    /// Dense description in `w` of `W(ξ)`, for vertex enumeration.
    pub fn dense_rows(&self, xi: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if self.n_aux > 0 {
            return Err(Error::Guard("vertex enumeration needs the expanded budget encoding".into()));
        }
        let mut a = Vec::with_capacity(self.rows.len() + self.xi_rows.len());
        let mut b = Vec::with_capacity(a.capacity());
        for r in &self.rows {
            let mut row = vec![0.0; self.n_w];
            for &(k, v) in &r.w {
                row[k] += v;
            }
            a.push(row);
            b.push(r.rhs);
        }
        for (r, rhs) in self.xi_rows.iter().zip(self.xi_rhs(xi)) {
            let mut row = vec![0.0; self.n_w];
            for &(k, v) in &r.w {
                row[k] += v;
            }
            a.push(row);
            b.push(rhs);
        }
        Ok((a, b))
    }

    /// A copy with the right-hand side of row `r` moved by `delta`. Moving a
    /// bound row moves the matching coordinate bound with it.
    pub fn with_rhs_shift(&self, r: usize, delta: f64) -> Self {
        let mut c = self.clone();
        c.rows[r].rhs += delta;
        match c.rows[r].kind {
            PolyRowKind::Upper { k } => c.w_max[k] += delta,
            PolyRowKind::Lower { k } => c.w_min[k] -= delta,
            _ => {}
        }
        c
    }

    /// Extension constant `β` used when building default coupling rows.
    pub fn default_extension(&self) -> Vec<f64> {
        (0..self.n_w)
            .map(|k| {
                let (i, t) = (k / self.horizon, k % self.horizon);
                let others: f64 = (0..self.n_rg)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let kj = j * self.horizon + t;
                        self.forecast[kj] - 0.5 * self.half_width[kj]
                    })
                    .sum();
                self.w_max[k] + others
            })
            .collect()
    }
}

fn sign_rows(coords: &[usize], forecast: &[f64], hw: &[f64], gamma: f64, kind: impl Fn(u64) -> PolyRowKind) -> Vec<PolyRow> {
    let n = coords.len();
    (0u64..(1u64 << n))
        .map(|mask| {
            let mut w = Vec::with_capacity(n);
            let mut rhs = gamma;
            for (bit, &k) in coords.iter().enumerate() {
                let s = if mask & (1 << bit) != 0 { -1.0 } else { 1.0 };
                w.push((k, s / hw[k]));
                rhs += s * forecast[k] / hw[k];
            }
            PolyRow { w, u: vec![], rhs, kind: kind(mask) }
        })
        .collect()
}

/// Builds the budgeted set. Forecast bands come from the case.
pub fn build_uncertainty(case: &NetworkCase, opts: &UncertaintyOptions) -> Result<UncertaintyPolyhedron> {
    let (n_rg, t_n) = (case.renewables.len(), case.horizon);
    let n_w = n_rg * t_n;
    if n_rg == 0 {
        return Err(Error::Uncertainty("case has no renewable units".into()));
    }
    let mut forecast = vec![0.0; n_w];
    let mut w_min = vec![0.0; n_w];
    let mut w_max = vec![0.0; n_w];
    for (i, rg) in case.renewables.iter().enumerate() {
        for t in 0..t_n {
            let k = case.w_index(i, t);
            let (lo, hi) = (rg.band[0] * rg.forecast[t], rg.band[1] * rg.forecast[t]);
            w_min[k] = lo;
            w_max[k] = hi;
            forecast[k] = 0.5 * (lo + hi);
        }
    }
    let half_width: Vec<f64> = (0..n_w).map(|k| 0.5 * (w_max[k] - w_min[k])).collect();
    if let Some(k) = (0..n_w).find(|&k| !(half_width[k] > 0.0)) {
        return Err(Error::Uncertainty(format!("coordinate {k} has an empty forecast band (Δw = 0)")));
    }
    let gamma_t = opts.gamma_t.unwrap_or(0.5 * n_rg as f64);
    if !(0.0..=n_rg as f64).contains(&gamma_t) {
        return Err(Error::Uncertainty(format!("period budget {gamma_t} outside [0, {n_rg}]")));
    }
    let gamma_i = if t_n > 1 {
        let g = opts.gamma_i.unwrap_or(0.5 * t_n as f64);
        if !(0.0..=t_n as f64).contains(&g) {
            return Err(Error::Uncertainty(format!("unit budget {g} outside [0, {t_n}]")));
        }
        Some(g)
    } else {
        None
    };

    let lift_period = opts.force_lifted || n_rg > EXPAND_LIMIT;
    let lift_unit = gamma_i.is_some() && (opts.force_lifted || t_n > EXPAND_LIMIT);
    let n_aux = if lift_period || lift_unit { n_w } else { 0 };

    let mut rows = Vec::new();
    for k in 0..n_w {
        rows.push(PolyRow { w: vec![(k, 1.0)], u: vec![], rhs: w_max[k], kind: PolyRowKind::Upper { k } });
        rows.push(PolyRow { w: vec![(k, -1.0)], u: vec![], rhs: -w_min[k], kind: PolyRowKind::Lower { k } });
    }
    if n_aux > 0 {
        // (w − w̄)/Δw ≤ u and (w̄ − w)/Δw ≤ u
        for k in 0..n_w {
            rows.push(PolyRow {
                w: vec![(k, 1.0 / half_width[k])],
                u: vec![(k, -1.0)],
                rhs: forecast[k] / half_width[k],
                kind: PolyRowKind::DeviationPos { k },
            });
            rows.push(PolyRow {
                w: vec![(k, -1.0 / half_width[k])],
                u: vec![(k, -1.0)],
                rhs: -forecast[k] / half_width[k],
                kind: PolyRowKind::DeviationNeg { k },
            });
        }
    }
    for t in 0..t_n {
        let coords: Vec<usize> = (0..n_rg).map(|i| case.w_index(i, t)).collect();
        if lift_period {
            rows.push(PolyRow {
                w: vec![],
                u: coords.iter().map(|&k| (k, 1.0)).collect(),
                rhs: gamma_t,
                kind: PolyRowKind::PeriodBudgetLifted { t },
            });
        } else {
            rows.extend(sign_rows(&coords, &forecast, &half_width, gamma_t, |signs| PolyRowKind::PeriodBudget { t, signs }));
        }
    }
    if let Some(g) = gamma_i {
        for i in 0..n_rg {
            let coords: Vec<usize> = (0..t_n).map(|t| case.w_index(i, t)).collect();
            if lift_unit {
                rows.push(PolyRow {
                    w: vec![],
                    u: coords.iter().map(|&k| (k, 1.0)).collect(),
                    rhs: g,
                    kind: PolyRowKind::UnitBudgetLifted { unit: i },
                });
            } else {
                rows.extend(sign_rows(&coords, &forecast, &half_width, g, |signs| PolyRowKind::UnitBudget { unit: i, signs }));
            }
        }
    }

    let mut xi_rows: Vec<XiRow> = (0..n_w).map(|k| XiRow { w: vec![(k, 1.0)], xi: k, constant: 0.0, kind: XiRowKind::Cap { k } }).collect();
    if let Some(beta) = &opts.extension {
        if beta.len() != n_w {
            return Err(Error::Uncertainty(format!("extension needs {n_w} constants, got {}", beta.len())));
        }
        for k in 0..n_w {
            let (i, t) = (k / t_n, k % t_n);
            let w: Vec<(usize, f64)> = (0..n_rg).filter(|&j| j != i).map(|j| (case.w_index(j, t), -1.0)).collect();
            xi_rows.push(XiRow { w, xi: k, constant: -beta[k], kind: XiRowKind::Extension { k } });
        }
    }

    Ok(UncertaintyPolyhedron { n_rg, horizon: t_n, n_w, n_aux, forecast, half_width, w_min, w_max, gamma_t, gamma_i, rows, xi_rows })
}

/// Admissible resizing decisions: `w_min ≤ ξ ≤ w_max` plus aggregate
/// shortfall rows that keep the budget able to reach the capped region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResizingDomain {
    pub n_w: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `Σ a_k ξ_k ≤ rhs`
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl ResizingDomain {
    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        (0..self.n_w).all(|k| xi[k] >= self.lower[k] - tol && xi[k] <= self.upper[k] + tol)
            && self.rows.iter().all(|(terms, rhs)| terms.iter().map(|&(k, a)| a * xi[k]).sum::<f64>() <= rhs + tol)
    }
}

pub fn build_resizing_domain(unc: &UncertaintyPolyhedron) -> ResizingDomain {
    let mut rows = Vec::new();
    let term = |k: usize| (k, -1.0 / unc.half_width[k]);
    let shift = |k: usize| unc.forecast[k] / unc.half_width[k];
    for t in 0..unc.horizon {
        let ks: Vec<usize> = (0..unc.n_rg).map(|i| i * unc.horizon + t).collect();
        rows.push((ks.iter().map(|&k| term(k)).collect(), unc.gamma_t - ks.iter().map(|&k| shift(k)).sum::<f64>()));
    }
    if let Some(g) = unc.gamma_i {
        for i in 0..unc.n_rg {
            let ks: Vec<usize> = (0..unc.horizon).map(|t| i * unc.horizon + t).collect();
            rows.push((ks.iter().map(|&k| term(k)).collect(), g - ks.iter().map(|&k| shift(k)).sum::<f64>()));
        }
    }
    ResizingDomain { n_w: unc.n_w, lower: unc.w_min.clone(), upper: unc.w_max.clone(), rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn case6_rows() {
        let c = cases::case6();
        let u = build_uncertainty(&c, &UncertaintyOptions::default()).unwrap();
        assert_eq!(u.n_w, 2);
        assert_eq!(u.n_aux, 0);
        // 4 box rows + 4 sign rows, no per-unit budget for one period
        assert_eq!(u.num_rows(), 8);
        assert_eq!(u.gamma_t, 1.0);
        assert!(u.gamma_i.is_none());
        assert!((u.w_min[0] - 0.15).abs() < 1e-12 && (u.w_max[0] - 0.45).abs() < 1e-12);
        assert!(u.contains(&u.forecast, &u.w_max, 1e-12));
        assert!(!u.contains(&u.w_max, &u.w_max, 1e-9));
    }

    #[test]
    fn multi_period_adds_unit_budgets() {
        let c = cases::case6().with_horizon(4).unwrap();
        let u = build_uncertainty(&c, &UncertaintyOptions::default()).unwrap();
        assert_eq!(u.n_w, 8);
        assert_eq!(u.gamma_i, Some(2.0));
        assert_eq!(u.num_rows(), 16 + 4 * 4 + 2 * 16);
    }

    #[test]
    fn lifted_and_expanded_agree_on_membership() {
        let c = cases::case33();
        let e = build_uncertainty(&c, &UncertaintyOptions::default()).unwrap();
        let l = build_uncertainty(&c, &UncertaintyOptions { force_lifted: true, ..Default::default() }).unwrap();
        assert_eq!(e.num_rows(), 12 + 64);
        let mut w = e.forecast.clone();
        w[..3].copy_from_slice(&e.w_max[..3]);
        assert!(e.contains(&w, &e.w_max, 1e-9) && l.contains(&w, &l.w_max, 1e-9));
        w[3] = e.w_min[3] + 0.3 * e.half_width[3];
        assert!(!e.contains(&w, &e.w_max, 1e-9) && !l.contains(&w, &l.w_max, 1e-9));
    }

    #[test]
    fn empty_band_and_bad_budget_rejected() {
        let mut c = cases::case6();
        c.renewables[0].forecast[0] = 0.0;
        assert!(matches!(build_uncertainty(&c, &UncertaintyOptions::default()), Err(Error::Uncertainty(_))));
        let c = cases::case6();
        let bad = UncertaintyOptions { gamma_t: Some(3.0), ..Default::default() };
        assert!(build_uncertainty(&c, &bad).is_err());
    }

    #[test]
    fn resizing_domain_contains_upper_corner() {
        let c = cases::case33();
        let u = build_uncertainty(&c, &UncertaintyOptions::default()).unwrap();
        let d = build_resizing_domain(&u);
        assert!(d.contains(&u.w_max, 1e-12));
        assert!(!d.contains(&u.w_min, 1e-9));
    }
}
