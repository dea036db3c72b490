//! Compressed sparse row storage for the large, mostly-empty neuron
//! matrices (spike flow, normalized propagation operator).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Square `n × n` matrix from `(row, col, value)` triplets; duplicates
    /// are summed and explicit zeros dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self { n, row_ptr, cols, vals };
        m.drop_zeros();
        m
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0; self.n + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&c) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Same sparsity pattern, values replaced by `f(row, col, value)`.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.vals[k] = f(r, self.cols[k], self.vals[k]);
            }
        }
        out.drop_zeros();
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let trip = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(move |(c, &v)| (r, c, v)))
            .collect();
        Self::from_triplets(n, trip)
    }

    /// `self · x` for a dense row-major `n × k` block.
    pub fn mul_dense(&self, x: &[f64], k: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n * k);
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in 0..self.n {
            let o = &mut out[r * k..(r + 1) * k];
            for (c, v) in self.row(r) {
                let xr = &x[c * k..(c + 1) * k];
                for (oi, xi) in o.iter_mut().zip(xr) {
                    *oi += v * xi;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_dense(x, 1, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 1, 1.0), (2, 0, 4.0), (0, 1, 2.0), (1, 1, 0.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.row_sums(), vec![3.0, 0.0, 4.0]);
    }

    #[test]
    fn dense_round_trip_and_product() {
        let d = vec![vec![0.0, 2.0, 0.0], vec![2.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let m = CsrMatrix::from_dense(&d);
        assert_eq!(m.to_dense(), d);
        assert!(m.is_symmetric(0.0));
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![2.0, 3.0, 1.0]);
        let mut out = vec![0.0; 6];
        m.mul_dense(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2, &mut out);
        assert_eq!(out, vec![0.0, 2.0, 3.0, 1.0, 0.0, 1.0]);
    }
}
