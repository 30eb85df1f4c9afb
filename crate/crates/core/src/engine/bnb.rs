use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::{debug, warn};

use super::{ConicBackend, ConicProgram, ConicSolution, ConicStatus};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BnbSettings {
    /// Absolute optimality gap at which the search stops.
    pub abs_gap: f64,
    pub int_tol: f64,
    pub node_limit: usize,
    /// Run the rounding heuristic every this many nodes (0 disables it).
    pub heuristic_every: usize,
}

impl Default for BnbSettings {
    fn default() -> Self {
        BnbSettings { abs_gap: 1e-5, int_tol: 1e-6, node_limit: 100_000, heuristic_every: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MiStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
}

#[derive(Clone, Debug)]
pub struct MiSolution {
    pub status: MiStatus,
    pub x: Vec<f64>,
    /// Incumbent objective.
    pub objective: f64,
    /// Proven lower bound.
    pub bound: f64,
    pub nodes: usize,
    /// Best-bound values as nodes are popped (nondecreasing).
    pub bound_history: Vec<f64>,
    /// Incumbent values each time it improves (nonincreasing).
    pub incumbent_history: Vec<f64>,
    pub numerical_failures: usize,
    /// Continuous solution with binaries fixed at the incumbent, including duals.
    pub polished: Option<ConicSolution>,
}

impl MiSolution {
    pub fn gap(&self) -> f64 {
        self.objective - self.bound
    }
}

struct Node {
    bound: f64,
    id: u64,
    depth: usize,
    /// `(var, lower, upper)` tightenings along the path from the root.
    bounds: Vec<Bound>,
    relaxed: Option<ConicSolution>,
}

type Bound = (usize, f64, f64);

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Maps a relaxed point to a full binary assignment worth trying.
pub type Completion<'a> = dyn Fn(&[f64]) -> Option<Vec<(usize, f64)>> + 'a;

/// Rewrites bound-dependent rows after a node's bounds are applied.
pub type Refresh<'a> = dyn Fn(&mut ConicProgram) + 'a;

/// Given a node program, its relaxed point and whether every binary is
/// integral there, names a continuous variable and split point to branch on
/// before any binary. Integral nodes without a split are offered as incumbents.
pub type Spatial<'a> = dyn Fn(&ConicProgram, &[f64], bool) -> Option<(usize, f64)> + 'a;

/// Optional problem knowledge for the search.
#[derive(Default)]
pub struct BnbHooks<'a> {
    /// Binary assignments tried before the first node.
    pub starts: Vec<Vec<(usize, f64)>>,
    /// Replaces plain rounding in the periodic heuristic.
    pub completion: Option<&'a Completion<'a>>,
    /// Branching priority per variable; higher classes branch first.
    pub priority: Option<Vec<u32>>,
    pub refresh: Option<&'a Refresh<'a>>,
    pub spatial: Option<&'a Spatial<'a>>,
}

fn with_bounds(p: &ConicProgram, bounds: &[Bound], refresh: Option<&Refresh>) -> ConicProgram {
    let mut q = p.clone();
    for &(j, lo, hi) in bounds {
        q.lower[j] = q.lower[j].max(lo);
        q.upper[j] = q.upper[j].min(hi);
    }
    if let Some(f) = refresh {
        f(&mut q);
    }
    q
}

fn fixed(fixings: &[(usize, f64)]) -> Vec<Bound> {
    fixings.iter().map(|&(j, v)| (j, v, v)).collect()
}

enum Relax {
    Solved(ConicSolution),
    Infeasible,
    Unbounded,
    Failed,
}

fn relax(backend: &dyn ConicBackend, q: &ConicProgram) -> Result<Relax> {
    if (0..q.num_vars()).any(|j| q.lower[j] > q.upper[j]) {
        return Ok(Relax::Infeasible);
    }
    let s = backend.solve(q)?;
    Ok(match s.status {
        ConicStatus::Optimal => Relax::Solved(s),
        ConicStatus::Infeasible => Relax::Infeasible,
        ConicStatus::Unbounded => Relax::Unbounded,
        _ => Relax::Failed,
    })
}

/// Most fractional binary within the highest fractional priority class,
/// lowest index on ties.
fn branching_var(p: &ConicProgram, x: &[f64], tol: f64, priority: Option<&[u32]>) -> Option<usize> {
    let mut best: Option<(usize, u32, f64)> = None;
    for j in 0..p.num_vars() {
        if !p.binary[j] {
            continue;
        }
        let f = x[j] - x[j].floor();
        let frac = f.min(1.0 - f);
        if frac <= tol {
            continue;
        }
        let pr = priority.map_or(0, |v| v[j]);
        let better = match best {
            None => true,
            Some((_, bp, bf)) => pr > bp || (pr == bp && frac > bf + 1e-12),
        };
        if better {
            best = Some((j, pr, frac));
        }
    }
    best.map(|(j, _, _)| j)
}

fn first_free_binary(q: &ConicProgram) -> Option<usize> {
    (0..q.num_vars()).find(|&j| q.binary[j] && q.lower[j] != q.upper[j])
}

fn is_integral(p: &ConicProgram, x: &[f64], tol: f64) -> bool {
    (0..p.num_vars()).all(|j| !p.binary[j] || (x[j] - x[j].round()).abs() <= tol)
}

struct Search<'a> {
    p: &'a ConicProgram,
    backend: &'a dyn ConicBackend,
    int_tol: f64,
    incumbent: Option<ConicSolution>,
    incumbent_value: f64,
    incumbent_history: Vec<f64>,
    failures: usize,
    refresh: Option<&'a Refresh<'a>>,
    spatial: Option<&'a Spatial<'a>>,
}

impl Search<'_> {
    fn offer(&mut self, s: ConicSolution) {
        if s.objective < self.incumbent_value && is_integral(self.p, &s.x, self.int_tol) {
            debug!("bnb: new incumbent {:.6e}", s.objective);
            self.incumbent_value = s.objective;
            self.incumbent_history.push(s.objective);
            self.incumbent = Some(s);
        }
    }

    fn try_fixings(&mut self, fixings: &[(usize, f64)]) -> Result<()> {
        let q = with_bounds(self.p, &fixed(fixings), self.refresh);
        if let Relax::Solved(s) = relax(self.backend, &q)? {
            // a point the spatial hook would still split is not exact
            if self.spatial.and_then(|f| f(&q, &s.x, true)).is_none() {
                self.offer(s);
            }
        }
        Ok(())
    }

    /// Fixes every binary to its rounded value and solves the remaining continuous problem.
    fn try_rounding(&mut self, x: &[f64]) -> Result<()> {
        let fixings: Vec<(usize, f64)> =
            (0..self.p.num_vars()).filter(|&j| self.p.binary[j]).map(|j| (j, x[j].round().clamp(0.0, 1.0))).collect();
        self.try_fixings(&fixings)
    }

    fn heuristic(&mut self, x: &[f64], completion: Option<&Completion>) -> Result<()> {
        match completion {
            Some(f) => match f(x) {
                Some(fix) => self.try_fixings(&fix),
                None => Ok(()),
            },
            None => self.try_rounding(x),
        }
    }
}

/// Best-bound branch-and-bound over the binary variables of `p`.
pub fn solve_mi_conic(p: &ConicProgram, backend: &dyn ConicBackend, settings: &BnbSettings) -> Result<MiSolution> {
    solve_mi_conic_with(p, backend, settings, &BnbHooks::default())
}

/// As [`solve_mi_conic`], with start assignments, a completion heuristic
/// and branching priorities.
pub fn solve_mi_conic_with(p: &ConicProgram, backend: &dyn ConicBackend, settings: &BnbSettings, hooks: &BnbHooks) -> Result<MiSolution> {
    p.validate()?;
    let mut search = Search {
        p,
        backend,
        int_tol: settings.int_tol,
        incumbent: None,
        incumbent_value: f64::INFINITY,
        incumbent_history: Vec::new(),
        failures: 0,
        refresh: hooks.refresh,
        spatial: hooks.spatial,
    };
    let priority = hooks.priority.as_deref();
    if let Some(pr) = priority {
        if pr.len() != p.num_vars() {
            return Err(Error::InvalidInput("priority vector has the wrong length".into()));
        }
    }
    for start in &hooks.starts {
        search.try_fixings(start)?;
    }
    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut bound_history = Vec::new();
    let mut nodes = 0usize;

    match relax(backend, &with_bounds(p, &[], hooks.refresh))? {
        Relax::Infeasible => return Ok(empty(MiStatus::Infeasible, p)),
        Relax::Unbounded => return Ok(empty(MiStatus::Unbounded, p)),
        Relax::Failed => {
            search.failures += 1;
            heap.push(Node { bound: f64::NEG_INFINITY, id: next_id, depth: 0, bounds: Vec::new(), relaxed: None });
        }
        Relax::Solved(s) => heap.push(Node { bound: s.objective, id: next_id, depth: 0, bounds: Vec::new(), relaxed: Some(s) }),
    }
    next_id += 1;

    let mut last_bound = f64::NEG_INFINITY;
    let mut status = MiStatus::Optimal;
    let mut final_bound = f64::INFINITY;

    while let Some(node) = heap.pop() {
        let b = node.bound.max(last_bound);
        last_bound = b;
        if b >= search.incumbent_value - settings.abs_gap {
            final_bound = b.min(search.incumbent_value);
            heap.clear();
            break;
        }
        bound_history.push(b);
        nodes += 1;
        if nodes > settings.node_limit {
            status = MiStatus::NodeLimit;
            final_bound = b;
            break;
        }

        let q = with_bounds(p, &node.bounds, hooks.refresh);
        let children: [Bound; 2] = match node.relaxed {
            Some(s) => {
                let v = branching_var(p, &s.x, settings.int_tol, priority);
                let split = hooks.spatial.and_then(|f| f(&q, &s.x, v.is_none()));
                if v.is_none() && split.is_none() {
                    search.offer(s);
                    continue;
                }
                if v.is_some() && settings.heuristic_every > 0 && (nodes - 1).is_multiple_of(settings.heuristic_every) {
                    search.heuristic(&s.x, hooks.completion)?;
                }
                match split {
                    Some((j, at)) => [(j, q.lower[j], at), (j, at, q.upper[j])],
                    None => {
                        let j = v.expect("fractional binary");
                        [(j, 0.0, 0.0), (j, 1.0, 1.0)]
                    }
                }
            }
            None => match first_free_binary(&q) {
                Some(j) => [(j, 0.0, 0.0), (j, 1.0, 1.0)],
                None => {
                    warn!("bnb: node with every binary fixed failed to solve; dropped");
                    continue;
                }
            },
        };

        for tightening in children {
            let mut bounds = node.bounds.clone();
            bounds.push(tightening);
            let child = match relax(backend, &with_bounds(p, &bounds, hooks.refresh))? {
                Relax::Infeasible => continue,
                Relax::Unbounded => return Ok(empty(MiStatus::Unbounded, p)),
                Relax::Failed => {
                    search.failures += 1;
                    Node { bound: b, id: next_id, depth: node.depth + 1, bounds, relaxed: None }
                }
                Relax::Solved(s) => Node { bound: s.objective.max(b), id: next_id, depth: node.depth + 1, bounds, relaxed: Some(s) },
            };
            next_id += 1;
            if child.bound < search.incumbent_value - settings.abs_gap {
                heap.push(child);
            }
        }
    }
    if final_bound == f64::INFINITY {
        // every open node was pruned or solved
        final_bound = search.incumbent_value;
    }

    let Some(best) = search.incumbent else {
        if status == MiStatus::NodeLimit {
            return Err(Error::NodeLimit { gap: f64::INFINITY });
        }
        return Ok(empty(MiStatus::Infeasible, p));
    };
    Ok(MiSolution {
        status,
        objective: best.objective,
        x: best.x.clone(),
        bound: final_bound.min(best.objective),
        nodes,
        bound_history,
        incumbent_history: search.incumbent_history,
        numerical_failures: search.failures,
        polished: Some(best),
    })
}

fn empty(status: MiStatus, p: &ConicProgram) -> MiSolution {
    MiSolution {
        status,
        x: vec![f64::NAN; p.num_vars()],
        objective: f64::INFINITY,
        bound: f64::INFINITY,
        nodes: 0,
        bound_history: Vec::new(),
        incumbent_history: Vec::new(),
        numerical_failures: 0,
        polished: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AffineExpr, ClarabelBackend};

    fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> ConicProgram {
        let mut p = ConicProgram::new();
        let vars: Vec<usize> = values.iter().map(|&v| p.add_binary(-v)).collect();
        p.add_le(vars.iter().zip(weights).map(|(&j, &w)| (j, w)).collect(), cap);
        p
    }

    fn brute_force(values: &[f64], weights: &[f64], cap: f64) -> f64 {
        let n = values.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let (mut v, mut w) = (0.0, 0.0);
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    v += values[i];
                    w += weights[i];
                }
            }
            if w <= cap + 1e-12 {
                best = best.max(v);
            }
        }
        -best
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let values = [10.0, 13.0, 7.0, 8.0, 4.0, 9.5];
        let weights = [5.0, 7.0, 3.0, 4.0, 2.0, 5.5];
        let p = knapsack(&values, &weights, 13.0);
        let s = solve_mi_conic(&p, &ClarabelBackend::default(), &BnbSettings::default()).unwrap();
        assert_eq!(s.status, MiStatus::Optimal);
        assert!((s.objective - brute_force(&values, &weights, 13.0)).abs() < 1e-6);
        assert!(s.bound_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(s.incumbent_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(s.gap() <= 1e-5 + 1e-12);
    }

    #[test]
    fn mixed_socp() {
        // min t  s.t. ‖(x - 0.3, y - 0.8)‖ ≤ t, x,y binary -> (0,1), t = sqrt(0.09+0.04)
        let mut p = ConicProgram::new();
        let x = p.add_binary(0.0);
        let y = p.add_binary(0.0);
        let t = p.add_var(0.0, 10.0, 1.0);
        p.add_cone(
            AffineExpr::new(vec![(t, 1.0)], 0.0),
            vec![AffineExpr::new(vec![(x, 1.0)], -0.3), AffineExpr::new(vec![(y, 1.0)], -0.8)],
        );
        let s = solve_mi_conic(&p, &ClarabelBackend::default(), &BnbSettings::default()).unwrap();
        assert!((s.objective - 0.13f64.sqrt()).abs() < 1e-6);
        assert!(s.x[x].abs() < 1e-9 && (s.x[y] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_binary_program() {
        let mut p = ConicProgram::new();
        let x = p.add_binary(1.0);
        let y = p.add_binary(1.0);
        p.add_eq(vec![(x, 1.0), (y, 1.0)], 1.5);
        let s = solve_mi_conic(&p, &ClarabelBackend::default(), &BnbSettings::default()).unwrap();
        assert_eq!(s.status, MiStatus::Infeasible);
    }
}
