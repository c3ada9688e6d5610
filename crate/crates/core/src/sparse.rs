//! Compressed sparse row matrices and the direct solvers used by the scheme.
//!
//! Assembly goes through [`TripletBuilder`], which sums duplicate entries in
//! insertion order so that repeated assemblies are bit-for-bit reproducible.
//! Factorizations are delegated to `faer`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Appends all entries of `mat` scaled by `factor`, shifted by the given offsets.
    pub fn push_block(&mut self, row_offset: usize, col_offset: usize, mat: &CsrMatrix, factor: f64) {
        for (i, j, v) in mat.iter() {
            self.push(row_offset + i, col_offset + j, factor * v);
        }
    }

    /// Appends the transpose of `mat`, shifted by the given offsets.
    pub fn push_block_transposed(&mut self, row_offset: usize, col_offset: usize, mat: &CsrMatrix) {
        for (i, j, v) in mat.iter() {
            self.push(row_offset + j, col_offset + i, v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps duplicates in insertion order
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut b = TripletBuilder::with_capacity(n, n, n);
        for (i, &d) in diag.iter().enumerate() {
            b.push(i, i, d);
        }
        b.build()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |p| (i, self.indices[p], self.data[p]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(p) => self.data[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec: dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `yᵀ A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        dot(y, &self.mul_vec(x))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.iter() {
            b.push(j, i, v);
        }
        b.build()
    }

    pub fn scaled(&self, factor: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, factor: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        b.push_block(0, 0, self, 1.0);
        b.push_block(0, 0, other, factor);
        b.build()
    }

    /// Row sums, i.e. `A·1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Restriction to the given row and column index lists (in the given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (new_i, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let nj = col_map[j];
                if nj != usize::MAX {
                    b.push(new_i, nj, v);
                }
            }
        }
        b.build()
    }

    /// Exact (bitwise) symmetry test.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            out[i][j] += v;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<_> = self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets).map_err(|e| {
            Error::Singular {
                context: format!("sparse matrix creation failed: {e:?}"),
            }
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Direct solver used for the unsymmetric Newton systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    #[default]
    SparseLu,
    DenseLu,
}

fn col_from(rhs: &[f64]) -> Col<f64> {
    Col::from_fn(rhs.len(), |i| rhs[i])
}

fn check_solution(mat: &CsrMatrix, rhs: &[f64], x: Vec<f64>, context: &str) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            context: format!("{context}: non-finite solution"),
        });
    }
    let r = mat.mul_vec(&x);
    let scale = norm_inf(rhs) + mat.max_abs() * norm_inf(&x);
    let res = r.iter().zip(rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if res > 1e-6 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular {
            context: format!("{context}: residual {res:.3e} relative to scale {scale:.3e}"),
        });
    }
    Ok(x)
}

/// Solves `mat · x = rhs` with a general (unsymmetric) direct factorization.
pub fn solve_general(mat: &CsrMatrix, rhs: &[f64], solver: LinearSolver, context: &str) -> Result<Vec<f64>> {
    check_dim("solve_general", mat.nrows(), rhs.len())?;
    check_dim("solve_general (square)", mat.nrows(), mat.ncols())?;
    if rhs.is_empty() {
        return Ok(Vec::new());
    }
    let b = col_from(rhs);
    let x: Vec<f64> = match solver {
        LinearSolver::SparseLu => {
            let lu = mat.to_faer()?.sp_lu().map_err(|e| Error::Singular {
                context: format!("{context}: {e:?}"),
            })?;
            let x = lu.solve(&b);
            (0..x.nrows()).map(|i| x[i]).collect()
        }
        LinearSolver::DenseLu => {
            let dense = mat.to_dense();
            let m = Mat::from_fn(mat.nrows(), mat.ncols(), |i, j| dense[i][j]);
            let x = m.partial_piv_lu().solve(&b);
            (0..x.nrows()).map(|i| x[i]).collect()
        }
    };
    check_solution(mat, rhs, x, context)
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct CholeskyFactor {
    inner: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl CholeskyFactor {
    pub fn new(mat: &CsrMatrix) -> Result<Self> {
        check_dim("cholesky (square)", mat.nrows(), mat.ncols())?;
        let inner = mat
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Singular {
                context: format!("cholesky: {e:?}"),
            })?;
        Ok(Self { inner, n: mat.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_dim("cholesky solve", self.n, rhs.len())?;
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let x = self.inner.solve(&col_from(rhs));
        let x: Vec<f64> = (0..x.nrows()).map(|i| x[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                context: "cholesky solve: non-finite solution".into(),
            });
        }
        Ok(x)
    }
}
