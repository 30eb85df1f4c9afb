//! Vertex enumeration of bounded polytopes `{x : lo ≤ x ≤ hi, A x ≤ b}` by
//! the double-description cutting scheme: start from the box corners and
//! cut by one halfspace at a time, creating new vertices on edges that cross
//! the cutting hyperplane.

use crate::error::{Error, Result};

/// Vertex count beyond which enumeration is abandoned.
pub const VERTEX_CAP: usize = 200_000;

#[derive(Clone)]
struct Vertex {
    x: Vec<f64>,
    /// Indices of tight constraints (box constraints are `0..2n`).
    active: Vec<u64>,
}

fn bit_set(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn bit_and(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn bit_iter(bits: &[u64]) -> impl Iterator<Item = usize> + '_ {
    bits.iter().enumerate().flat_map(|(w, &word)| (0..64).filter(move |b| word & (1 << b) != 0).map(move |b| w * 64 + b))
}

fn bit_count(bits: &[u64]) -> usize {
    bits.iter().map(|w| w.count_ones() as usize).sum()
}

/// Numerical rank of the given rows.
pub fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    if m.is_empty() {
        return 0;
    }
    let n = m[0].len();
    let mut r = 0;
    for c in 0..n {
        if r == m.len() {
            break;
        }
        let (piv, val) = (r..m.len()).map(|i| (i, m[i][c].abs())).fold((r, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if val <= tol {
            continue;
        }
        m.swap(r, piv);
        for i in 0..m.len() {
            if i != r {
                let f = m[i][c] / m[r][c];
                if f != 0.0 {
                    for j in c..n {
                        m[i][j] -= f * m[r][j];
                    }
                }
            }
        }
        r += 1;
    }
    r
}

/// All vertices, sorted lexicographically.
pub fn enumerate_vertices(a: &[Vec<f64>], b: &[f64], lo: &[f64], hi: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let n = lo.len();
    if n == 0 {
        return Ok(vec![vec![]]);
    }
    if n > 20 {
        return Err(Error::Guard(format!("vertex enumeration limited to 20 dimensions, got {n}")));
    }
    if (0..n).any(|k| lo[k] > hi[k] + tol) {
        return Ok(Vec::new());
    }
    let m_total = 2 * n + a.len();
    let words = m_total.div_ceil(64);

    // normalised constraint normals, box included
    let mut normals: Vec<Vec<f64>> = Vec::with_capacity(m_total);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        normals.push(e.clone());
        e[k] = -1.0;
        normals.push(e);
    }
    let mut rhs: Vec<f64> = Vec::with_capacity(m_total);
    for k in 0..n {
        rhs.push(hi[k]);
        rhs.push(-lo[k]);
    }
    for (row, &bv) in a.iter().zip(b) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-14 {
            if bv < -tol {
                return Ok(Vec::new());
            }
            normals.push(vec![0.0; n]);
            rhs.push(f64::INFINITY);
            continue;
        }
        normals.push(row.iter().map(|v| v / norm).collect());
        rhs.push(bv / norm);
    }

    let degenerate_box: Vec<bool> = (0..n).map(|k| (hi[k] - lo[k]).abs() <= tol).collect();
    let mut verts: Vec<Vertex> = Vec::new();
    let corners = 1usize << n;
    for mask in 0..corners {
        // skip duplicate corners along collapsed axes
        if (0..n).any(|k| degenerate_box[k] && mask & (1 << k) != 0) {
            continue;
        }
        let mut x = vec![0.0; n];
        let mut active = vec![0u64; words];
        for k in 0..n {
            if mask & (1 << k) != 0 {
                x[k] = hi[k];
                bit_set(&mut active, 2 * k);
                if degenerate_box[k] {
                    bit_set(&mut active, 2 * k + 1);
                }
            } else {
                x[k] = lo[k];
                bit_set(&mut active, 2 * k + 1);
                if degenerate_box[k] {
                    bit_set(&mut active, 2 * k);
                }
            }
        }
        verts.push(Vertex { x, active });
    }

    for h in 2 * n..m_total {
        if !rhs[h].is_finite() {
            continue;
        }
        let slack: Vec<f64> = verts.iter().map(|v| normals[h].iter().zip(&v.x).map(|(a, x)| a * x).sum::<f64>() - rhs[h]).collect();
        let plus: Vec<usize> = (0..verts.len()).filter(|&i| slack[i] > tol).collect();
        if plus.is_empty() {
            for (i, v) in verts.iter_mut().enumerate() {
                if slack[i] >= -tol {
                    bit_set(&mut v.active, h);
                }
            }
            continue;
        }
        let minus: Vec<usize> = (0..verts.len()).filter(|&i| slack[i] < -tol).collect();
        let mut next: Vec<Vertex> = Vec::new();
        for &pi in &plus {
            for &mi in &minus {
                let common = bit_and(&verts[pi].active, &verts[mi].active);
                if bit_count(&common) < n - 1 {
                    continue;
                }
                let rows: Vec<Vec<f64>> = bit_iter(&common).map(|c| normals[c].clone()).collect();
                if rank(&rows, 1e-9) != n - 1 {
                    continue;
                }
                let (sp, sm) = (slack[pi], slack[mi]);
                let t = sp / (sp - sm);
                let x: Vec<f64> = verts[pi].x.iter().zip(&verts[mi].x).map(|(p, m)| p + t * (m - p)).collect();
                let mut active = common;
                bit_set(&mut active, h);
                next.push(Vertex { x, active });
            }
        }
        for (i, v) in verts.iter().enumerate() {
            if slack[i] <= tol {
                let mut v = v.clone();
                if slack[i] >= -tol {
                    bit_set(&mut v.active, h);
                }
                next.push(v);
            }
        }
        if next.len() > VERTEX_CAP {
            return Err(Error::Guard(format!("more than {VERTEX_CAP} vertices")));
        }
        verts = next;
        if verts.is_empty() {
            return Ok(Vec::new());
        }
    }

    let mut out: Vec<Vec<f64>> = verts.into_iter().map(|v| v.x).collect();
    out.sort_by(|a, b| lex_cmp(a, b));
    out.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-9));
    Ok(out)
}

pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_cut_by_diagonal() {
        // unit square with x + y ≤ 1.5
        let v = enumerate_vertices(&[vec![1.0, 1.0]], &[1.5], &[0.0, 0.0], &[1.0, 1.0], 1e-10).unwrap();
        assert_eq!(v.len(), 5);
        assert!(v.iter().any(|p| (p[0] - 0.5).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cross_polytope_in_a_box() {
        // |x| + |y| + |z| ≤ 1 inside [-1,1]^3: 6 vertices
        let mut a = Vec::new();
        for mask in 0..8 {
            a.push((0..3).map(|k| if mask & (1 << k) != 0 { -1.0 } else { 1.0 }).collect());
        }
        let b = vec![1.0; 8];
        let v = enumerate_vertices(&a, &b, &[-1.0; 3], &[1.0; 3], 1e-10).unwrap();
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn empty_polytope() {
        let v = enumerate_vertices(&[vec![1.0]], &[-1.0], &[0.0], &[1.0], 1e-10).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn rank_of_dependent_rows() {
        assert_eq!(rank(&[vec![1.0, 2.0], vec![2.0, 4.0]], 1e-12), 1);
        assert_eq!(rank(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], 1e-12), 2);
    }
}
