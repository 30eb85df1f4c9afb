use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConicBackend, ConicProgram, ConicSettings, ConicSolution, ConicStatus, Sense};
use crate::error::{Error, Result};

/// Interior-point backend built on Clarabel.
#[derive(Clone, Debug, Default)]
pub struct ClarabelBackend {
    pub settings: ConicSettings,
}

#[derive(Clone, Copy)]
enum RowOrigin {
    Row(usize),
    Lower(usize),
    Upper(usize),
    Fixed(usize),
}

struct Assembled {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    zero_rows: Vec<RowOrigin>,
    nonneg_rows: Vec<RowOrigin>,
}

fn assemble(p: &ConicProgram) -> Assembled {
    let n = p.num_vars();
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut m = 0usize;
    let mut zero_rows = Vec::new();
    let mut nonneg_rows = Vec::new();

    let mut push = |terms: &[(usize, f64)], rhs: f64, m: &mut usize, b: &mut Vec<f64>| {
        for &(j, a) in terms {
            if a != 0.0 {
                ii.push(*m);
                jj.push(j);
                vv.push(a);
            }
        }
        b.push(rhs);
        *m += 1;
    };

    for (r, row) in p.rows.iter().enumerate() {
        if row.sense == Sense::Eq {
            push(&row.terms, row.rhs, &mut m, &mut b);
            zero_rows.push(RowOrigin::Row(r));
        }
    }
    for j in 0..n {
        if p.lower[j] == p.upper[j] {
            push(&[(j, 1.0)], p.lower[j], &mut m, &mut b);
            zero_rows.push(RowOrigin::Fixed(j));
        }
    }
    for (r, row) in p.rows.iter().enumerate() {
        if row.sense == Sense::Le {
            push(&row.terms, row.rhs, &mut m, &mut b);
            nonneg_rows.push(RowOrigin::Row(r));
        }
    }
    for j in 0..n {
        if p.lower[j] == p.upper[j] {
            continue;
        }
        if p.lower[j].is_finite() {
            push(&[(j, -1.0)], -p.lower[j], &mut m, &mut b);
            nonneg_rows.push(RowOrigin::Lower(j));
        }
        if p.upper[j].is_finite() {
            push(&[(j, 1.0)], p.upper[j], &mut m, &mut b);
            nonneg_rows.push(RowOrigin::Upper(j));
        }
    }
    let mut cones = Vec::new();
    if !zero_rows.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(zero_rows.len()));
    }
    if !nonneg_rows.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg_rows.len()));
    }
    for cone in &p.cones {
        let neg: Vec<(usize, f64)> = cone.head.terms.iter().map(|&(j, a)| (j, -a)).collect();
        push(&neg, cone.head.constant, &mut m, &mut b);
        for t in &cone.tail {
            let neg: Vec<(usize, f64)> = t.terms.iter().map(|&(j, a)| (j, -a)).collect();
            push(&neg, t.constant, &mut m, &mut b);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + cone.tail.len()));
    }
    let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
    Assembled { a, b, cones, zero_rows, nonneg_rows }
}

fn map_status(s: SolverStatus) -> (ConicStatus, bool) {
    match s {
        SolverStatus::Solved => (ConicStatus::Optimal, false),
        SolverStatus::AlmostSolved => (ConicStatus::Optimal, true),
        SolverStatus::PrimalInfeasible => (ConicStatus::Infeasible, false),
        SolverStatus::AlmostPrimalInfeasible => (ConicStatus::Infeasible, true),
        SolverStatus::DualInfeasible => (ConicStatus::Unbounded, false),
        SolverStatus::AlmostDualInfeasible => (ConicStatus::Unbounded, true),
        SolverStatus::MaxIterations | SolverStatus::MaxTime => (ConicStatus::IterationLimit, false),
        _ => (ConicStatus::NumericalFailure, false),
    }
}

impl ClarabelBackend {
    pub fn new(settings: ConicSettings) -> Self {
        ClarabelBackend { settings }
    }

    fn run(&self, p: &ConicProgram, asm: &Assembled, loose: bool) -> Result<ConicSolution> {
        let n = p.num_vars();
        let scale = if loose { 100.0 } else { 1.0 };
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(if loose { 2 * self.settings.max_iter } else { self.settings.max_iter })
            .tol_gap_abs(self.settings.tol_gap * scale)
            .tol_gap_rel(self.settings.tol_gap * scale)
            .tol_feas(self.settings.tol_feas * scale)
            .presolve_enable(false)
            .build()
            .map_err(|e| Error::Solver(format!("bad solver settings: {e}")))?;
        let pmat = CscMatrix::<f64>::zeros((n, n));
        let mut solver = DefaultSolver::new(&pmat, &p.objective, &asm.a, &asm.b, &asm.cones, settings)
            .map_err(|e| Error::Solver(format!("solver setup failed: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let (status, reduced) = map_status(sol.status);

        let mut row_duals = vec![0.0; p.rows.len()];
        let mut lower_duals = vec![0.0; n];
        let mut upper_duals = vec![0.0; n];
        let origins = asm.zero_rows.iter().chain(asm.nonneg_rows.iter());
        for (k, origin) in origins.enumerate() {
            let z = sol.z[k];
            match *origin {
                RowOrigin::Row(r) => row_duals[r] = z,
                RowOrigin::Lower(j) => lower_duals[j] = z,
                RowOrigin::Upper(j) => upper_duals[j] = z,
                RowOrigin::Fixed(j) => {
                    if z >= 0.0 {
                        upper_duals[j] = z
                    } else {
                        lower_duals[j] = -z
                    }
                }
            }
        }
        let mut offset = asm.zero_rows.len() + asm.nonneg_rows.len();
        let mut cone_duals = Vec::with_capacity(p.cones.len());
        for cone in &p.cones {
            let d = 1 + cone.tail.len();
            cone_duals.push(sol.z[offset..offset + d].to_vec());
            offset += d;
        }
        Ok(ConicSolution {
            status,
            reduced_accuracy: reduced,
            objective: sol.obj_val + p.objective_offset,
            x: sol.x.clone(),
            row_duals,
            cone_duals,
            lower_duals,
            upper_duals,
            iterations: sol.iterations,
        })
    }
}

impl ConicBackend for ClarabelBackend {
    fn solve(&self, p: &ConicProgram) -> Result<ConicSolution> {
        p.validate()?;
        let asm = assemble(p);
        let first = self.run(p, &asm, false)?;
        match first.status {
            ConicStatus::IterationLimit | ConicStatus::NumericalFailure => {
                let second = self.run(p, &asm, true)?;
                if second.status == ConicStatus::Optimal {
                    Ok(ConicSolution { reduced_accuracy: true, ..second })
                } else {
                    Ok(first)
                }
            }
            _ => Ok(first),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{solve_conic, AffineExpr};

    #[test]
    fn lp_with_duals() {
        // min -x - y  s.t. x + 2y ≤ 4, 3x + y ≤ 6, x,y ≥ 0 -> (1.6, 1.2)
        let mut p = ConicProgram::new();
        let x = p.add_var(0.0, f64::INFINITY, -1.0);
        let y = p.add_var(0.0, f64::INFINITY, -1.0);
        p.add_le(vec![(x, 1.0), (y, 2.0)], 4.0);
        p.add_le(vec![(x, 3.0), (y, 1.0)], 6.0);
        let s = solve_conic(&ClarabelBackend::default(), &p).unwrap();
        assert!((s.x[0] - 1.6).abs() < 1e-7 && (s.x[1] - 1.2).abs() < 1e-7);
        assert!((s.objective + 2.8).abs() < 1e-7);
        assert!((s.row_duals[0] - 0.4).abs() < 1e-6);
        assert!((s.row_duals[1] - 0.2).abs() < 1e-6);
        assert!(s.stationarity_residual(&p) < 1e-7);
    }

    #[test]
    fn socp_with_duals() {
        // min t s.t. ‖(x-1, y-2)‖ ≤ t, x + y = 0
        let mut p = ConicProgram::new();
        let x = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let y = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let t = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.add_eq(vec![(x, 1.0), (y, 1.0)], 0.0);
        p.add_cone(
            AffineExpr::new(vec![(t, 1.0)], 0.0),
            vec![AffineExpr::new(vec![(x, 1.0)], -1.0), AffineExpr::new(vec![(y, 1.0)], -2.0)],
        );
        let s = solve_conic(&ClarabelBackend::default(), &p).unwrap();
        assert!((s.objective - 3.0 / 2f64.sqrt()).abs() < 1e-7);
        assert!(s.stationarity_residual(&p) < 1e-7);
        let z = &s.cone_duals[0];
        assert!((z[0] - 1.0).abs() < 1e-6);
        assert!(z[0] + 1e-9 >= (z[1] * z[1] + z[2] * z[2]).sqrt());
    }

    #[test]
    fn infeasible_and_fixed() {
        let mut p = ConicProgram::new();
        let x = p.add_var(0.0, 1.0, 1.0);
        p.add_le(vec![(x, -1.0)], -2.0);
        let s = ClarabelBackend::default().solve(&p).unwrap();
        assert_eq!(s.status, ConicStatus::Infeasible);

        let mut q = ConicProgram::new();
        let x = q.add_var(0.5, 0.5, 2.0);
        let y = q.add_var(0.0, 3.0, 1.0);
        q.add_le(vec![(x, -1.0), (y, -1.0)], -1.0);
        let s = solve_conic(&ClarabelBackend::default(), &q).unwrap();
        assert!((s.x[x] - 0.5).abs() < 1e-9);
        assert!((s.objective - 1.5).abs() < 1e-7);
        assert!(s.stationarity_residual(&q) < 1e-7);
    }
}
