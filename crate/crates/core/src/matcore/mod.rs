//! Dense column-major storage and the BLAS-like kernels the factorizations
//! are built from.
//!
//! Indices in this API are 0-based: element `(i, j)` lives at
//! `data[j * rows + i]`, so every column is a contiguous slice.

mod io;
mod metrics;

pub use io::{
    format_csv, format_matrix_market, parse_csv, parse_matrix_market, read_matrix, write_matrix,
    MatrixFormat,
};
pub use metrics::{metrics, Metrics};

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counting::{with_ops, Arith, OpCounter};
use crate::error::{Error, Result};

/// Edge of the square cache blocks used by [`matmul`].
pub const GEMM_BLOCK: usize = 64;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{:>12.5e}", self[(i, j)]))
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_col_major",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row-major nested rows. All rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (i, ncols),
                    right: (i, row.len()),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Ok(m)
    }

    /// Entries i.i.d. uniform in `[-1, 1]` from a ChaCha8 stream seeded with
    /// `seed`, filled in column-major order.
    pub fn random_uniform(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let rows = self.rows;
        &mut self.data[j * rows..(j + 1) * rows]
    }

    /// Mutable access to two distinct columns at once.
    pub fn col_pair_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a, b, "col_pair_mut needs distinct columns");
        let rows = self.rows;
        if a < b {
            let (lo, hi) = self.data.split_at_mut(b * rows);
            (&mut lo[a * rows..(a + 1) * rows], &mut hi[..rows])
        } else {
            let (lo, hi) = self.data.split_at_mut(a * rows);
            (&mut hi[..rows], &mut lo[b * rows..(b + 1) * rows])
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|M(i, j)|` with `i > j`.
    pub fn max_lower_triangle(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.cols {
            for i in (j + 1)..self.rows {
                m = m.max(self[(i, j)].abs());
            }
        }
        m
    }

    /// First non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|p| (p % self.rows, p / self.rows))
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.find_non_finite() {
            Some((row, col)) => Err(Error::NonFinite { row, col }),
            None => Ok(()),
        }
    }

    /// Copies the `rows × cols` block whose top-left corner is `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let mut s = Self::zeros(rows, cols);
        for j in 0..cols {
            s.col_mut(j)
                .copy_from_slice(&self.col(c0 + j)[r0..r0 + rows]);
        }
        s
    }

    /// Overwrites the block at `(r0, c0)` with `block`.
    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for j in 0..block.cols {
            self.col_mut(c0 + j)[r0..r0 + block.rows].copy_from_slice(block.col(j));
        }
    }

    /// Negates row `i` in place.
    pub fn negate_row(&mut self, i: usize) {
        for j in 0..self.cols {
            let x = &mut self[(i, j)];
            *x = -*x;
        }
    }

    /// Zeroes every entry strictly below the diagonal.
    pub fn clear_lower_triangle(&mut self) {
        for j in 0..self.cols {
            for i in (j + 1)..self.rows {
                self[(i, j)] = 0.0;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// `C = A·B` as a blocked triple loop.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix, counter: Option<&mut OpCounter>) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(with_ops!(counter, |ops| gemm(a, b, GEMM_BLOCK, ops)))
}

pub(crate) fn gemm<A: Arith>(a: &DenseMatrix, b: &DenseMatrix, block: usize, ops: A) -> DenseMatrix {
    let (m, inner, n) = (a.rows, a.cols, b.cols);
    let mut c = DenseMatrix::zeros(m, n);
    for jb in (0..n).step_by(block) {
        let j_end = (jb + block).min(n);
        for kb in (0..inner).step_by(block) {
            let k_end = (kb + block).min(inner);
            for ib in (0..m).step_by(block) {
                let i_end = (ib + block).min(m);
                for j in jb..j_end {
                    for k in kb..k_end {
                        let bkj = b[(k, j)];
                        let a_col = &a.col(k)[ib..i_end];
                        let c_col = &mut c.col_mut(j)[ib..i_end];
                        for (cij, &aik) in c_col.iter_mut().zip(a_col) {
                            *cij = ops.add(*cij, ops.mul(aik, bkj));
                        }
                    }
                }
            }
        }
    }
    c
}

/// `y = A·x`.
pub fn matvec(a: &DenseMatrix, x: &[f64], counter: Option<&mut OpCounter>) -> Result<Vec<f64>> {
    if a.cols != x.len() {
        return Err(Error::DimensionMismatch {
            op: "matvec",
            left: a.shape(),
            right: (x.len(), 1),
        });
    }
    Ok(with_ops!(counter, |ops| gemv(a, x, ops)))
}

fn gemv<A: Arith>(a: &DenseMatrix, x: &[f64], ops: A) -> Vec<f64> {
    let mut y = vec![0.0; a.rows];
    for (j, &xj) in x.iter().enumerate() {
        for (yi, &aij) in y.iter_mut().zip(a.col(j)) {
            *yi = ops.add(*yi, ops.mul(aij, xj));
        }
    }
    y
}

/// `y(j) = Σ_i A(row0 + i, col0 + j) · x(i)` over the trailing block that
/// starts at `(row0, col0)`. This is the transposed GEMV of a Householder
/// trailing update.
pub(crate) fn gemv_t_block<A: Arith>(
    a: &DenseMatrix,
    row0: usize,
    col0: usize,
    x: &[f64],
    ops: A,
) -> Vec<f64> {
    debug_assert_eq!(a.rows - row0, x.len());
    (col0..a.cols)
        .map(|j| dot(&a.col(j)[row0..], x, &ops))
        .collect()
}

/// Left-to-right dot product, first term not added to zero.
#[inline]
pub(crate) fn dot<A: Arith>(x: &[f64], y: &[f64], ops: A) -> f64 {
    let mut it = x.iter().zip(y);
    let Some((&x0, &y0)) = it.next() else {
        return 0.0;
    };
    let mut acc = ops.mul(x0, y0);
    for (&xi, &yi) in it {
        acc = ops.add(acc, ops.mul(xi, yi));
    }
    acc
}

/// Euclidean norm of `A(from_row.., col)`.
pub fn column_norm2(
    a: &DenseMatrix,
    col: usize,
    from_row: usize,
    counter: Option<&mut OpCounter>,
) -> Result<f64> {
    if col >= a.cols {
        return Err(Error::IndexOutOfBounds {
            what: "col",
            index: col,
            limit: a.cols,
        });
    }
    if from_row >= a.rows {
        return Err(Error::IndexOutOfBounds {
            what: "from_row",
            index: from_row,
            limit: a.rows,
        });
    }
    Ok(with_ops!(counter, |ops| norm2(&a.col(col)[from_row..], ops)))
}

pub(crate) fn norm2<A: Arith>(v: &[f64], ops: A) -> f64 {
    let ss = dot(v, v, &ops);
    ops.sqrt(ss)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: textbook i-j-k loop over row-major copies.
    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> Vec<Vec<f64>> {
        let mut c = vec![vec![0.0; b.cols()]; a.rows()];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, cij) in row.iter_mut().enumerate() {
                for t in 0..a.cols() {
                    *cij += a[(i, t)] * b[(t, j)];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_identity_is_exact() {
        let m = DenseMatrix::random_uniform(3, 4, 7);
        let left = matmul(&DenseMatrix::identity(3), &m, None).unwrap();
        let right = matmul(&m, &DenseMatrix::identity(4), None).unwrap();
        assert_eq!(left, m);
        assert_eq!(right, m);
    }

    #[test]
    fn matmul_two_by_two() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap();
        let c = matmul(&a, &b, None).unwrap();
        assert_eq!(c, DenseMatrix::from_rows(&[[19.0, 22.0], [43.0, 50.0]]).unwrap());
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        for (m, k, n, seed) in [(8, 8, 8, 1), (70, 65, 130, 2), (1, 9, 3, 3)] {
            let a = DenseMatrix::random_uniform(m, k, seed);
            let b = DenseMatrix::random_uniform(k, n, seed + 100);
            let c = matmul(&a, &b, None).unwrap();
            let want = naive_matmul(&a, &b);
            for i in 0..m {
                for j in 0..n {
                    let scale = want[i][j].abs().max(1.0);
                    assert!((c[(i, j)] - want[i][j]).abs() <= 1e-13 * scale);
                }
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let err = matmul(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 3), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn matmul_counts_one_mul_and_add_per_term() {
        let a = DenseMatrix::random_uniform(5, 6, 1);
        let b = DenseMatrix::random_uniform(6, 7, 2);
        let mut c = OpCounter::default();
        matmul(&a, &b, Some(&mut c)).unwrap();
        assert_eq!(c.mul, 5 * 6 * 7);
        assert_eq!(c.add, 5 * 6 * 7);
        assert_eq!(c.div + c.sqrt, 0);
    }

    #[test]
    fn matvec_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(matvec(&DenseMatrix::identity(4), &x, None).unwrap(), x.to_vec());
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&a, &[1.0, 1.0], None).unwrap(), vec![3.0, 7.0]);
        assert!(matvec(&a, &[1.0], None).is_err());
    }

    #[test]
    fn matvec_matches_double_loop() {
        let a = DenseMatrix::random_uniform(16, 16, 11);
        let x: Vec<f64> = DenseMatrix::random_uniform(16, 1, 12).into_data();
        let y = matvec(&a, &x, None).unwrap();
        for i in 0..16 {
            let mut want = 0.0;
            for t in 0..16 {
                want += a[(i, t)] * x[t];
            }
            assert!((y[i] - want).abs() <= 1e-13 * want.abs().max(1.0));
        }
    }

    #[test]
    fn column_norm_cases() {
        let m = DenseMatrix::from_rows(&[[3.0, 0.0, 2.0], [4.0, 0.0, 2.0]]).unwrap();
        assert_eq!(column_norm2(&m, 0, 0, None).unwrap(), 5.0);
        assert_eq!(column_norm2(&m, 1, 0, None).unwrap(), 0.0);
        assert_eq!(column_norm2(&m, 0, 1, None).unwrap(), 4.0);
        let c = DenseMatrix::from_col_major(4, 1, vec![2.0; 4]).unwrap();
        assert_eq!(column_norm2(&c, 0, 0, None).unwrap(), 4.0);
        assert!(column_norm2(&m, 3, 0, None).is_err());
        assert!(column_norm2(&m, 0, 2, None).is_err());
    }

    #[test]
    fn column_norm_is_sqrt_of_counted_sum_of_squares() {
        let m = DenseMatrix::random_uniform(9, 2, 5);
        let mut c = OpCounter::default();
        let norm = column_norm2(&m, 1, 2, Some(&mut c)).unwrap();
        let v = &m.col(1)[2..];
        let mut ss = v[0] * v[0];
        for x in &v[1..] {
            ss += x * x;
        }
        assert_eq!(norm, ss.sqrt());
        assert_eq!((c.mul, c.add, c.sqrt), (7, 6, 1));
    }

    #[test]
    fn submatrix_roundtrip() {
        let m = DenseMatrix::random_uniform(6, 5, 3);
        let s = m.submatrix(2, 1, 3, 4);
        assert_eq!(s[(0, 0)], m[(2, 1)]);
        let mut z = DenseMatrix::zeros(6, 5);
        z.set_submatrix(2, 1, &s);
        assert_eq!(z[(4, 4)], m[(4, 4)]);
        assert_eq!(z[(1, 1)], 0.0);
    }

    #[test]
    fn col_pair_mut_either_order() {
        let mut m = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let (a, b) = m.col_pair_mut(2, 0);
        assert_eq!((a[0], b[0]), (3.0, 1.0));
    }
}
