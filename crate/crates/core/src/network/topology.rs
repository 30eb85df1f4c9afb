//! Loop enumeration and radiality.

use super::NetworkCase;
use crate::engine::Sense;
use crate::error::{Error, Result};

pub const DEFAULT_LOOP_CAP: usize = 10_000;

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// A simple cycle, as branch indices ordered by branch id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub branches: Vec<usize>,
}

/// `Σ_{k∈branches} α_k (sense) rhs`
#[derive(Clone, Debug, PartialEq)]
pub struct RadialityRow {
    pub branches: Vec<usize>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Every simple cycle of the branch multigraph, in canonical order
/// (smallest branch id, then length, then ids).
pub fn enumerate_loops(case: &NetworkCase, cap: usize) -> Result<Vec<Loop>> {
    let n = case.num_buses();
    let ids: Vec<u32> = case.branches.iter().map(|b| b.id).collect();
    let adj = case.adjacency();
    let mut order: Vec<usize> = (0..case.num_branches()).collect();
    order.sort_by_key(|&k| ids[k]);

    let mut loops: Vec<Vec<usize>> = Vec::new();
    for &e in &order {
        let (start, target) = (case.branches[e].to, case.branches[e].from);
        let mut on_path = vec![false; n];
        on_path[start] = true;
        let mut path = vec![e];
        // iterative DFS with explicit neighbour cursors
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            if top.1 >= adj[node].len() {
                stack.pop();
                on_path[node] = false;
                path.pop();
                continue;
            }
            let (next, br) = adj[node][top.1];
            top.1 += 1;
            if ids[br] <= ids[e] {
                continue;
            }
            if next == target {
                let mut cyc = path.clone();
                cyc.push(br);
                loops.push(cyc);
                if loops.len() > cap {
                    return Err(Error::CycleCap { cap });
                }
                continue;
            }
            if on_path[next] {
                continue;
            }
            on_path[next] = true;
            path.push(br);
            stack.push((next, 0));
        }
    }
    let mut keyed: Vec<(Vec<u32>, Vec<usize>)> = loops
        .into_iter()
        .map(|mut l| {
            l.sort_by_key(|&k| ids[k]);
            (l.iter().map(|&k| ids[k]).collect(), l)
        })
        .collect();
    keyed.sort_by(|a, b| a.0[0].cmp(&b.0[0]).then(a.0.len().cmp(&b.0.len())).then(a.0.cmp(&b.0)));
    Ok(keyed.into_iter().map(|(_, branches)| Loop { branches }).collect())
}

/// Spanning-tree rows: one equality over all branches and one inequality per loop.
pub fn radiality_rows(case: &NetworkCase, cap: usize) -> Result<Vec<RadialityRow>> {
    let mut rows =
        vec![RadialityRow { branches: (0..case.num_branches()).collect(), sense: Sense::Eq, rhs: (case.num_buses() - 1) as f64 }];
    for l in enumerate_loops(case, cap)? {
        let rhs = (l.branches.len() - 1) as f64;
        rows.push(RadialityRow { branches: l.branches, sense: Sense::Le, rhs });
    }
    Ok(rows)
}

/// Whether the closed branches (α > 0.5) form a spanning tree.
pub fn is_radial(case: &NetworkCase, alpha: &[f64]) -> bool {
    let n = case.num_buses();
    let closed: Vec<usize> = (0..case.num_branches()).filter(|&k| alpha[k] > 0.5).collect();
    if closed.len() + 1 != n {
        return false;
    }
    let mut uf = UnionFind::new(n);
    closed.iter().all(|&k| uf.union(case.branches[k].from, case.branches[k].to))
}

/// Spanning tree of largest total weight (Kruskal), keeping every
/// non-switchable branch. Ties go to the lower branch index.
pub fn max_weight_tree(case: &NetworkCase, weight: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..case.num_branches()).collect();
    let key = |k: usize| if case.branches[k].switchable { weight[k] } else { f64::INFINITY };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let mut uf = UnionFind::new(case.num_buses());
    let mut alpha = vec![0.0; case.num_branches()];
    for k in order {
        if uf.union(case.branches[k].from, case.branches[k].to) {
            alpha[k] = 1.0;
        }
    }
    alpha
}

/// Whether `alpha` satisfies every radiality row exactly.
pub fn satisfies_rows(rows: &[RadialityRow], alpha: &[f64]) -> bool {
    rows.iter().all(|r| {
        let s: f64 = r.branches.iter().map(|&k| alpha[k]).sum();
        match r.sense {
            Sense::Eq => (s - r.rhs).abs() < 1e-9,
            Sense::Le => s <= r.rhs + 1e-9,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn case6_loops() {
        let c = cases::case6();
        let loops = enumerate_loops(&c, DEFAULT_LOOP_CAP).unwrap();
        assert_eq!(loops.len(), 3);
        let rows = radiality_rows(&c, DEFAULT_LOOP_CAP).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].rhs, 5.0);
    }

    #[test]
    fn cap_is_enforced() {
        let c = cases::case33();
        assert!(matches!(enumerate_loops(&c, 3), Err(Error::CycleCap { cap: 3 })));
    }

    #[test]
    fn radial_check() {
        let c = cases::case6();
        let mut alpha = vec![1.0; c.num_branches()];
        assert!(!is_radial(&c, &alpha));
        // open both ties of the bundled six-bus case
        for (k, b) in c.branches.iter().enumerate() {
            if b.id == 6 || b.id == 7 {
                alpha[k] = 0.0;
            }
        }
        assert!(is_radial(&c, &alpha));
    }
}
