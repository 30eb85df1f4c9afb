//! Row-major sparse matrix used for the compact model blocks.

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseMatrix { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    /// Adds `v` to entry (r, c). Zero values are dropped.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.nrows && c < self.ncols, "sparse index out of range");
        if v == 0.0 {
            return;
        }
        let row = &mut self.rows[r];
        if let Some(e) = row.iter_mut().find(|e| e.0 == c) {
            e.1 += v;
        } else {
            row.push((c, v));
        }
    }

    pub fn push_row(&mut self) -> usize {
        self.rows.push(Vec::new());
        self.nrows += 1;
        self.nrows - 1
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows[r].iter().find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// y = M x
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        self.rows.iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }

    /// y = Mᵀ x
    pub fn tmul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_and_transpose_agree_with_dense() {
        let mut m = SparseMatrix::new(2, 3);
        m.add(0, 0, 1.0);
        m.add(0, 2, -2.0);
        m.add(1, 1, 3.0);
        m.add(1, 1, 1.0);
        assert_eq!(m.mul(&[1.0, 2.0, 3.0]), vec![-5.0, 8.0]);
        assert_eq!(m.tmul(&[1.0, 1.0]), vec![1.0, 4.0, -2.0]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.to_dense()[1][1], 4.0);
    }
}
