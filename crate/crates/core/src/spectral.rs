//! Spectral condition numbers of preconditioned systems.
//!
//! All benchmarked systems are products `G A` of two SPD matrices. With
//! `A = L Lᵀ`, `G A` is similar to the symmetric matrix `Lᵀ G L`, so its
//! spectrum is real and positive and `κ_S(G A) = λ_max / λ_min`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// Ascending eigenvalues of a symmetric matrix or SPD pencil.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub source: String,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// `ρ(X) ρ(X^{-1})`, i.e. the ratio of extreme magnitudes.
    pub fn condition(&self) -> f64 {
        let mags = self.eigenvalues.iter().map(|v| v.abs());
        let (lo, hi) = mags.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi / lo
    }
}

/// Lower Cholesky factor `L` with `L Lᵀ = S`.
pub fn spd_factor(s: &SymMatrix) -> Result<DMatrix<f64>> {
    if !s.is_finite() {
        return Err(Error::not_spd("matrix with non-finite entries"));
    }
    Cholesky::new(s.as_dense().clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::not_spd("matrix"))
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eig(s: &SymMatrix) -> Spectrum {
    Spectrum { eigenvalues: sorted_eigenvalues(s.as_dense().clone()), source: "symmetric".into() }
}

/// Eigenpairs of a symmetric matrix, ascending; eigenvectors as columns.
pub fn sym_eig_vectors(s: &SymMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(s.as_dense().clone());
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(e.eigenvectors.nrows(), idx.len(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Spectrum of `G A` for SPD `G` and `A`, computed as the spectrum of
/// `Lᵀ (S⁻¹ G S⁻¹) L` where `S A S = L Lᵀ` and `S = diag(A)^{-1/2}`.
pub fn pencil_spectrum(g: &SymMatrix, a: &SymMatrix) -> Result<Spectrum> {
    if g.dim() != a.dim() {
        return Err(Error::InvalidParameter(format!("dimension mismatch {} vs {}", g.dim(), a.dim())));
    }
    let n = a.dim();
    let diag = a.as_dense().diagonal();
    if diag.iter().any(|&v| !(v > 0.0)) || !g.as_dense().diagonal().iter().all(|&v| v > 0.0) {
        return Err(Error::not_spd("operator in preconditioned product"));
    }
    let s = diag.map(|v| 1.0 / v.sqrt());
    let sas = SymMatrix::from_lower_fn(n, |i, j| a.get(i, j) * s[i] * s[j]);
    let l = spd_factor(&sas)?;
    let gs = DMatrix::from_fn(n, n, |i, j| g.get(i, j) / (s[i] * s[j]));
    let x = l.transpose() * gs * &l;
    let x = SymMatrix::from_lower(x);
    let mut spec = sym_eig(&x);
    spec.source = "pencil".into();
    if !(spec.min() > 0.0) {
        return Err(Error::not_spd("preconditioner"));
    }
    Ok(spec)
}

/// `κ_S(G A) = ρ(G A) ρ((G A)^{-1})`.
pub fn kappa(g: &SymMatrix, a: &SymMatrix) -> Result<f64> {
    let s = pencil_spectrum(g, a)?;
    Ok(s.max() / s.min())
}

/// `κ_S(A G)`, computed by factoring `G` instead of `A`.
pub fn kappa_reversed(g: &SymMatrix, a: &SymMatrix) -> Result<f64> {
    kappa(a, g)
}
