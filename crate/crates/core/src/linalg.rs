//! CSR matrices and the conjugate-gradient solver used for the tumor equation.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Nodal coefficient vector.
pub type DenseVector = Vec<f64>;

/// Square sparse matrix in compressed-row storage. Column indices are
/// strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given per-row column lists (sorted and deduplicated here).
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            if let Some(&c) = cols.last() {
                if c >= n {
                    return Err(Error::DimensionMismatch { expected: n, got: c + 1 });
                }
            }
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Ok(CsrMatrix { n, row_ptr, col_idx, values: vec![0.0; nnz] })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i.max(j) + 1 });
            }
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(rows)?;
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same sparsity pattern, all values zero.
    pub fn zeros_like(&self) -> Self {
        CsrMatrix { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    /// Storage slot of entry `(i, j)`, if it is in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` is not in the sparsity pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) not in pattern"));
        self.values[k] += v;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> DenseVector {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> DenseVector {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + alpha * other`; both must share this matrix's pattern or a sub-pattern of it.
    pub fn axpy_pattern(&mut self, alpha: f64, other: &CsrMatrix) {
        for i in 0..other.n {
            for (j, v) in other.row(i) {
                self.add(i, j, alpha * v);
            }
        }
    }

    /// Adds `d[i]` to each diagonal entry.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, &v) in d.iter().enumerate() {
            self.add(i, i, v);
        }
    }

    /// Structural and value symmetry: `|A_ij - A_ji| <= rel_tol * max|A|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let tol = rel_tol * self.max_abs();
        (0..self.n).all(|i| {
            self.row(i).all(|(j, v)| match self.slot(j, i) {
                Some(k) => (self.values[k] - v).abs() <= tol,
                None => false,
            })
        })
    }

    pub fn spmv(&self, x: &[f64]) -> Result<DenseVector> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_dims(x, y)?;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
        Ok(())
    }

    /// Row-parallel product; each row is summed in the same order as [`spmv_into`],
    /// so the result is bit-identical.
    ///
    /// [`spmv_into`]: CsrMatrix::spmv_into
    pub fn par_spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_dims(x, y)?;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        Ok(())
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        if y.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: y.len() });
        }
        Ok(())
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.values[k] * x[self.col_idx[k]];
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    #[default]
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual target `||b - Ax|| <= tol * ||b||`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 * n`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
    pub parallel: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-10, max_iter: None, preconditioner: Preconditioner::None, parallel: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: DenseVector,
    pub iterations: usize,
    /// Final relative residual `||b - Ax|| / ||b||` (0 when `b = 0`).
    pub residual: f64,
}

/// Conjugate gradients for a symmetric positive-definite `a`, optionally warm-started.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &CgOptions) -> Result<CgOutcome> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("CG tolerance must be positive".into()));
    }
    if n == 0 {
        return Ok(CgOutcome { x: Vec::new(), iterations: 0, residual: 0.0 });
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mv = |x: &[f64], y: &mut [f64]| {
        if opts.parallel {
            a.par_spmv_into(x, y)
        } else {
            a.spmv_into(x, y)
        }
    };

    let mut x = match x0 {
        Some(x0) if x0.len() != n => return Err(Error::DimensionMismatch { expected: n, got: x0.len() }),
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let inv_diag: Option<Vec<f64>> = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(a.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect()),
    };
    let precondition = |r: &[f64], z: &mut Vec<f64>| match &inv_diag {
        None => z.copy_from_slice(r),
        Some(inv) => z.iter_mut().zip(r.iter().zip(inv)).for_each(|(z, (r, d))| *z = r * d),
    };

    let mut ap = vec![0.0; n];
    mv(&x, &mut ap)?;
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, ax)| b - ax).collect();
    let target = opts.tol * bnorm;
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok(CgOutcome { x, iterations: 0, residual: rnorm / bnorm });
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        mv(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence { iterations: it, residual: rnorm / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            // Recompute the true residual so the reported value is not the recursive estimate.
            mv(&x, &mut ap)?;
            let true_r = b.iter().zip(&ap).map(|(b, ax)| (b - ax).powi(2)).sum::<f64>().sqrt();
            if true_r <= target {
                return Ok(CgOutcome { x, iterations: it, residual: true_r / bnorm });
            }
            r.iter_mut().zip(b.iter().zip(&ap)).for_each(|(r, (b, ax))| *r = b - ax);
            rnorm = true_r;
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rnorm / bnorm })
}

/// Jacobi sweeps on an M-matrix system started from the nonnegative part of `x`.
///
/// With nonpositive off-diagonals, positive diagonal and `b >= 0`, every sweep
/// is a sum of nonnegative terms divided by a positive number, so the result is
/// nonnegative in floating point, not just in exact arithmetic. At least one
/// sweep is always taken; sweeping stops once the relative residual is `<= tol`.
/// Returns the number of sweeps.
pub fn mmatrix_jacobi_polish(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_sweeps: usize) -> Result<usize> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len().min(x.len()) });
    }
    let bnorm = norm2(b);
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive diagonal at row {i}")));
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut next = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_sweeps.max(1) {
        for i in 0..n {
            let mut s = b[i];
            for (j, v) in a.row(i) {
                if j != i {
                    s -= v * x[j];
                }
            }
            next[i] = s / diag[i];
        }
        x.copy_from_slice(&next);
        a.spmv_into(x, &mut ax)?;
        residual = b.iter().zip(&ax).map(|(b, ax)| (b - ax).powi(2)).sum::<f64>().sqrt();
        if residual <= tol * bnorm {
            return Ok(sweep);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        residual: if bnorm > 0.0 { residual / bnorm } else { residual },
    })
}
