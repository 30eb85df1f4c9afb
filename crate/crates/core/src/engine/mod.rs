//! Conic programs, the solver backend and mixed-binary branch-and-bound.
//!
//! Programs are always minimisation problems of the form
//!
//! ```text
//! min cᵀx + c0
//! s.t. a_rᵀx ≤ b_r or = b_r       (linear rows)
//!      ‖T_k x + t_k‖ ≤ h_kᵀx + h0_k (second-order cones)
//!      l ≤ x ≤ u, x_j ∈ {0,1} for binary j
//! ```
//!
//! Dual information follows the stationarity convention
//! `c + Σ λ_r a_r − Σ_k (η_k h_k + T_kᵀ μ_k) − ν_lo + ν_up = 0`
//! with `λ_r ≥ 0` on inequality rows and `‖μ_k‖ ≤ η_k`.

mod bnb;
mod clarabel_backend;
pub mod complementarity;

pub use bnb::{solve_mi_conic, solve_mi_conic_with, BnbHooks, BnbSettings, Completion, MiSolution, MiStatus, Refresh, Spatial};
pub use clarabel_backend::ClarabelBackend;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        AffineExpr { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

/// `‖tail‖₂ ≤ head`
#[derive(Clone, Debug, PartialEq)]
pub struct SocBlock {
    pub head: AffineExpr,
    pub tail: Vec<AffineExpr>,
}

impl SocBlock {
    /// Signed violation `‖tail‖ − head` (non-positive when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let n: f64 = self.tail.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
        n - self.head.eval(x)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<SocBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.binary.push(false);
        self.objective.len() - 1
    }

    pub fn add_vars(&mut self, n: usize, lower: f64, upper: f64, cost: f64) -> Vec<usize> {
        (0..n).map(|_| self.add_var(lower, upper, cost)).collect()
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.add_var(0.0, 1.0, cost);
        self.binary[j] = true;
        j
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LinearRow { terms, sense, rhs });
        self.rows.len() - 1
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(terms, Sense::Le, rhs)
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(terms, Sense::Eq, rhs)
    }

    pub fn add_cone(&mut self, head: AffineExpr, tail: Vec<AffineExpr>) -> usize {
        self.cones.push(SocBlock { head, tail });
        self.cones.len() - 1
    }

    pub fn num_binaries(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Checks structural consistency (indices in range, finite data, ordered bounds).
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.binary.len() != n {
            return Err(Error::InvalidInput("variable arrays have mismatched length".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::InvalidInput(format!("variable {j} has bounds [{}, {}]", self.lower[j], self.upper[j])));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::InvalidInput(format!("variable {j} has non-finite cost")));
            }
        }
        let bad = |terms: &[(usize, f64)]| terms.iter().any(|&(j, a)| j >= n || !a.is_finite());
        for (r, row) in self.rows.iter().enumerate() {
            if bad(&row.terms) || !row.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("row {r} references a bad column or value")));
            }
        }
        for (k, cone) in self.cones.iter().enumerate() {
            let exprs = std::iter::once(&cone.head).chain(cone.tail.iter());
            for e in exprs {
                if bad(&e.terms) || !e.constant.is_finite() {
                    return Err(Error::InvalidInput(format!("cone {k} references a bad column or value")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of rows, cones and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|&(j, a)| a * x[j]).sum();
            let r = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            v = v.max(r);
        }
        for c in &self.cones {
            v = v.max(c.violation(x));
        }
        for j in 0..x.len() {
            v = v.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: ConicStatus,
    /// Solver returned a reduced-accuracy solution.
    pub reduced_accuracy: bool,
    pub objective: f64,
    pub x: Vec<f64>,
    pub row_duals: Vec<f64>,
    /// Per cone: `[η, μ_1, ..., μ_m]`.
    pub cone_duals: Vec<Vec<f64>>,
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == ConicStatus::Optimal
    }

    /// Stationarity residual (∞-norm) of the reported duals against `p`.
    pub fn stationarity_residual(&self, p: &ConicProgram) -> f64 {
        let n = p.num_vars();
        let mut g = p.objective.clone();
        for (r, row) in p.rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                g[j] += self.row_duals[r] * a;
            }
        }
        for (k, cone) in p.cones.iter().enumerate() {
            let z = &self.cone_duals[k];
            for &(j, a) in &cone.head.terms {
                g[j] -= z[0] * a;
            }
            for (i, t) in cone.tail.iter().enumerate() {
                for &(j, a) in &t.terms {
                    g[j] -= z[i + 1] * a;
                }
            }
        }
        (0..n).map(|j| (g[j] - self.lower_duals[j] + self.upper_duals[j]).abs()).fold(0.0, f64::max)
    }
}

/// Accuracy knobs shared by every conic solve.
#[derive(Clone, Debug)]
pub struct ConicSettings {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
}

impl Default for ConicSettings {
    fn default() -> Self {
        ConicSettings { tol_gap: 1e-9, tol_feas: 1e-9, max_iter: 200 }
    }
}

/// A continuous conic solver. Binary flags are ignored by backends.
pub trait ConicBackend: Send + Sync {
    fn solve(&self, p: &ConicProgram) -> Result<ConicSolution>;
}

/// Solves a continuous conic program, returning an error unless it reaches optimality.
pub fn solve_conic(backend: &dyn ConicBackend, p: &ConicProgram) -> Result<ConicSolution> {
    let sol = backend.solve(p)?;
    match sol.status {
        ConicStatus::Optimal => Ok(sol),
        ConicStatus::Infeasible => Err(Error::Infeasible("conic program is infeasible".into())),
        ConicStatus::Unbounded => Err(Error::Solver("conic program is unbounded".into())),
        s => Err(Error::Solver(format!("conic solve ended with status {s:?}"))),
    }
}
