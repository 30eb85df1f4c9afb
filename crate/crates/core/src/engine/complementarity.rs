//! Big-M linearisation of complementarity pairs `0 ≤ m ⟂ g ≥ 0`.

use super::{AffineExpr, ConicProgram};
use crate::error::{Error, Result};

/// One pair: multiplier column `m` and slack expression `g` (both ≥ 0 at feasibility).
#[derive(Clone, Debug)]
pub struct ComplementarityPair {
    pub multiplier: usize,
    pub slack: AffineExpr,
    pub m_multiplier: f64,
    pub m_slack: f64,
}

/// Adds one binary per pair with `m ≤ M_m z` and `g ≤ M_g (1 − z)`. Returns the binaries.
pub fn linearize_complementarity(p: &mut ConicProgram, pairs: &[ComplementarityPair]) -> Result<Vec<usize>> {
    let mut zs = Vec::with_capacity(pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        if !(pair.m_multiplier > 0.0 && pair.m_slack > 0.0) || !pair.m_multiplier.is_finite() || !pair.m_slack.is_finite() {
            return Err(Error::InvalidInput(format!(
                "complementarity pair {k} has non-positive big-M ({}, {})",
                pair.m_multiplier, pair.m_slack
            )));
        }
        let z = p.add_binary(0.0);
        p.add_le(vec![(pair.multiplier, 1.0), (z, -pair.m_multiplier)], 0.0);
        // g + M_g z ≤ M_g
        let mut terms = pair.slack.terms.clone();
        terms.push((z, pair.m_slack));
        p.add_le(terms, pair.m_slack - pair.slack.constant);
        zs.push(z);
    }
    Ok(zs)
}

/// Reports the largest ratio `value / M` over multipliers and slacks at `x`.
/// Values near one mean a big-M may be cutting off a valid point.
pub fn saturation(pairs: &[ComplementarityPair], x: &[f64]) -> f64 {
    pairs.iter().map(|p| (x[p.multiplier] / p.m_multiplier).max(p.slack.eval(x) / p.m_slack)).fold(0.0, f64::max)
}

/// Largest `multiplier / M` ratio. Slacks may legitimately reach their
/// bound, multipliers at their bound mean the bound was too small.
pub fn multiplier_saturation(pairs: &[ComplementarityPair], x: &[f64]) -> f64 {
    pairs.iter().map(|p| x[p.multiplier] / p.m_multiplier).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{solve_mi_conic, BnbSettings, ClarabelBackend};

    #[test]
    fn kkt_of_one_dimensional_lp() {
        // max w s.t. w ≤ 0.7 written as KKT: 1 = π, slack 0.7 - w, π ≥ 0.
        let mut p = ConicProgram::new();
        let w = p.add_var(0.0, 1.0, 0.0);
        let pi = p.add_var(0.0, f64::INFINITY, 0.0);
        p.add_eq(vec![(pi, 1.0)], 1.0);
        p.add_le(vec![(w, 1.0)], 0.7);
        let pairs = [ComplementarityPair { multiplier: pi, slack: AffineExpr::new(vec![(w, -1.0)], 0.7), m_multiplier: 2.0, m_slack: 1.0 }];
        let zs = linearize_complementarity(&mut p, &pairs).unwrap();
        assert_eq!(zs.len(), 1);
        // minimise w: complementarity must still force w = 0.7
        p.objective[w] = 1.0;
        let s = solve_mi_conic(&p, &ClarabelBackend::default(), &BnbSettings::default()).unwrap();
        assert!((s.x[w] - 0.7).abs() < 1e-7);
        assert!(saturation(&pairs, &s.x) <= 0.5 + 1e-7);
    }

    #[test]
    fn rejects_bad_big_m() {
        let mut p = ConicProgram::new();
        let m = p.add_var(0.0, 1.0, 0.0);
        let pairs = [ComplementarityPair { multiplier: m, slack: AffineExpr::default(), m_multiplier: 0.0, m_slack: 1.0 }];
        assert!(linearize_complementarity(&mut p, &pairs).is_err());
    }
}
