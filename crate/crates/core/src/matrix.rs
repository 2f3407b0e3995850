//! Dense symmetric and diagonal matrix wrappers plus the plain-text dump
//! format.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense symmetric matrix. The lower triangle is authoritative; constructors
/// mirror it, so `self[(i, j)] == self[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds the matrix from `f(i, j)` evaluated for `i >= j`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Copies the lower triangle of `m` onto the upper one.
    pub fn from_lower(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix expected");
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(j, i)] = m[(i, j)];
            }
        }
        SymMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_dense(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    /// Row sums.
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.0.row_iter().map(|r| r.sum()))
    }

    pub fn diagonal(&self) -> DiagMatrix {
        DiagMatrix(self.0.diagonal())
    }

    /// `d^T A d` congruence with a diagonal matrix given by its entries.
    pub fn congruence_diag(&self, d: &DVector<f64>) -> Self {
        let n = self.dim();
        let mut m = self.0.clone();
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] *= d[i] * d[j];
            }
        }
        SymMatrix(m)
    }

    /// `max |a_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Plain text: first line `n`, then `n` rows of `n` space-separated values.
    pub fn to_text(&self) -> String {
        dense_to_text(&self.0)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(SymMatrix::from_lower(dense_from_text(text)?))
    }
}

pub(crate) fn dense_to_text(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 25);
    let _ = writeln!(out, "{}", m.nrows());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.17e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub(crate) fn dense_from_text(text: &str) -> Result<DMatrix<f64>> {
    let parse_err = |what: &str| Error::Io(format!("malformed matrix text: {what}"));
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .ok_or_else(|| parse_err("empty"))?
        .trim()
        .parse()
        .map_err(|_| parse_err("bad dimension"))?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let line = lines.next().ok_or_else(|| parse_err("missing row"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| parse_err("bad number")))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(parse_err("row length"));
        }
        for (j, v) in vals.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Diagonal matrix stored by its (positive) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMatrix(pub DVector<f64>);

impl DiagMatrix {
    pub fn new(entries: DVector<f64>) -> Self {
        DiagMatrix(entries)
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        DiagMatrix(DVector::from_vec(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    pub fn inverse(&self) -> DiagMatrix {
        DiagMatrix(self.0.map(|v| 1.0 / v))
    }

    pub fn inv_sqrt(&self) -> DVector<f64> {
        self.0.map(|v| 1.0 / v.sqrt())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.0)
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.to_dense())
    }

    /// One line of space-separated entries.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:.17e}");
        }
        out.push('\n');
        out
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Sparse row view of a banded symmetric matrix, for repeated products with
/// dense matrices.
#[derive(Debug, Clone)]
pub struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    /// Sums duplicate `(row, col, value)` entries.
    pub fn from_triplets(nrows: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            rows[i].push((j, v));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        SparseRows { rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn transpose(&self, ncols: usize) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                rows[j].push((i, v));
            }
        }
        SparseRows { rows }
    }

    /// `xᵀ self y`.
    pub fn bilinear(&self, x: &[(usize, f64)], y: &DVector<f64>) -> f64 {
        x.iter().map(|&(i, xi)| xi * self.rows[i].iter().map(|&(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect())
            .collect();
        SparseRows { rows }
    }

    /// `self * x`.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows.len(), x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for (i, row) in self.rows.iter().enumerate() {
                out[(i, c)] = row.iter().map(|&(j, v)| v * col[j]).sum();
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum()))
    }
}
