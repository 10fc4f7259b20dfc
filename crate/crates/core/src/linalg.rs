//! Minimal dense f64 matrix kernels for the dynamics model and planner.
//!
//! All kernels are bit-deterministic: every output element is accumulated
//! in a fixed sequential order, so results do not depend on thread count
//! or scheduling when the row loops run under rayon.

use rayon::prelude::*;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Row count below which kernels stay sequential.
const PAR_MIN_ROWS: usize = 32;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Gather a subset of rows into a new matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// `self (r x k) * other (k x c)`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        let cols = other.cols;
        let run_row = |i: usize, out_row: &mut [f64]| {
            let a_row = self.row(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for j in 0..cols {
                    out_row[j] += aik * b_row[j];
                }
            }
        };
        if self.rows >= PAR_MIN_ROWS {
            out.data
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| run_row(i, row));
        } else {
            for i in 0..self.rows {
                let mut row = vec![0.0; cols];
                run_row(i, &mut row);
                out.row_mut(i).copy_from_slice(&row);
            }
        }
        out
    }

    /// `self (r x k) * other^T (c x k)` -> `(r x c)`.
    pub fn matmul_bt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_bt shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        let cols = other.rows;
        let run_row = |i: usize, out_row: &mut [f64]| {
            let a_row = self.row(i);
            for (j, o) in out_row.iter_mut().enumerate().take(cols) {
                *o = dot(a_row, other.row(j));
            }
        };
        if self.rows >= PAR_MIN_ROWS {
            out.data
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| run_row(i, row));
        } else {
            for i in 0..self.rows {
                let mut row = vec![0.0; cols];
                run_row(i, &mut row);
                out.row_mut(i).copy_from_slice(&row);
            }
        }
        out
    }

    /// `self^T (k x r) * other (r x c)` -> `(k x c)`; `self` is `(r x k)`.
    pub fn matmul_at(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_at shape mismatch");
        let k = self.cols;
        let c = other.cols;
        let mut out = Matrix::zeros(k, c);
        let run_row = |i: usize, out_row: &mut [f64]| {
            for b in 0..self.rows {
                let x = self.get(b, i);
                if x == 0.0 {
                    continue;
                }
                let o_row = other.row(b);
                for j in 0..c {
                    out_row[j] += x * o_row[j];
                }
            }
        };
        if k >= PAR_MIN_ROWS {
            out.data
                .par_chunks_mut(c)
                .enumerate()
                .for_each(|(i, row)| run_row(i, row));
        } else {
            for i in 0..k {
                let mut row = vec![0.0; c];
                run_row(i, &mut row);
                out.row_mut(i).copy_from_slice(&row);
            }
        }
        out
    }

    /// Add a bias row to every row.
    pub fn add_row_broadcast(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols, "bias length mismatch");
        for i in 0..self.rows {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, b) in row.iter_mut().zip(bias) {
                *r += b;
            }
        }
    }

    pub fn relu_inplace(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Zero the entries of `self` where `activated` is not positive
    /// (backprop through ReLU given the post-activation values).
    pub fn mask_by_positive(&mut self, activated: &Matrix) {
        assert_eq!(self.rows, activated.rows);
        assert_eq!(self.cols, activated.cols);
        for (v, a) in self.data.iter_mut().zip(&activated.data) {
            if *a <= 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Column sums (used for bias gradients).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Cheap deterministic fill.
        let mut data = Vec::with_capacity(rows * cols);
        let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        for _ in 0..rows * cols {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push(((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5);
        }
        Matrix::from_flat(rows, cols, data)
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_naive() {
        let a = small(7, 5, 1);
        let b = small(5, 9, 2);
        let fast = a.matmul(&b);
        let slow = naive_matmul(&a, &b);
        for i in 0..fast.rows() {
            for j in 0..fast.cols() {
                assert!((fast.get(i, j) - slow.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_products_match_naive() {
        let a = small(6, 4, 3);
        let b = small(8, 4, 4); // a * b^T : 6x8
        let got = a.matmul_bt(&b);
        for i in 0..6 {
            for j in 0..8 {
                let want = dot(a.row(i), b.row(j));
                assert!((got.get(i, j) - want).abs() < 1e-12);
            }
        }
        let x = small(10, 3, 5);
        let y = small(10, 7, 6); // x^T * y : 3x7
        let got = x.matmul_at(&y);
        for i in 0..3 {
            for j in 0..7 {
                let mut want = 0.0;
                for b in 0..10 {
                    want += x.get(b, i) * y.get(b, j);
                }
                assert!((got.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_rows_bit_equal_sequential() {
        // Large enough to trip the parallel path; compare against the
        // sequential naive loop bit-for-bit.
        let a = small(64, 33, 7);
        let b = small(33, 21, 8);
        let fast = a.matmul(&b);
        let slow = naive_matmul(&a, &b);
        assert_eq!(fast.data(), slow.data());
    }

    #[test]
    fn relu_and_mask() {
        let mut m = Matrix::from_flat(2, 2, vec![-1.0, 2.0, 0.0, -3.0]);
        let mut g = Matrix::from_flat(2, 2, vec![5.0, 5.0, 5.0, 5.0]);
        m.relu_inplace();
        assert_eq!(m.data(), &[0.0, 2.0, 0.0, 0.0]);
        g.mask_by_positive(&m);
        assert_eq!(g.data(), &[0.0, 5.0, 0.0, 0.0]);
    }
}
