//! Opposite-order preconditioners `G = C⁻¹ B C⁻ᵀ` for the single layer
//! matrix, with the coupling matrix `C` being the lumped mass `D`, the full
//! mass `M`, a Richardson approximation of `M⁻¹`, or `diag M`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::{DiagMatrix, SparseRows, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecondKind {
    Lumped,
    Mass,
    Richardson(usize),
    Jacobi,
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "lumped" | "d" => Ok(Self::Lumped),
            "mass" | "m" => Ok(Self::Mass),
            "jacobi" | "j" => Ok(Self::Jacobi),
            _ => {
                let k = s
                    .strip_prefix("richardson:")
                    .or_else(|| s.strip_prefix("richardson"))
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown preconditioner '{s}'")))?;
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad Richardson iteration count in '{s}'")))?;
                if k == 0 {
                    return Err(Error::InvalidParameter("Richardson needs at least one iteration".into()));
                }
                Ok(Self::Richardson(k))
            }
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lumped => write!(f, "lumped"),
            Self::Mass => write!(f, "mass"),
            Self::Richardson(k) => write!(f, "richardson:{k}"),
            Self::Jacobi => write!(f, "jacobi"),
        }
    }
}

/// Parses a comma separated preconditioner list.
pub fn parse_precond_list(s: &str) -> Result<Vec<PrecondKind>> {
    let list: Vec<PrecondKind> = s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::InvalidParameter("empty preconditioner list".into()));
    }
    Ok(list)
}

/// Extremal eigenvalues of `D̂⁻¹ M̂` on the reference simplex and the
/// resulting damping `ω = 2 / (λ₋ + λ₊)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RichardsonWeight {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub omega: f64,
}

/// A realized preconditioner.
#[derive(Debug, Clone)]
pub struct Precond {
    pub kind: PrecondKind,
    pub matrix: SymMatrix,
    pub omega: Option<f64>,
}

fn multi_indices(d: usize, max: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..=max {
        for mut rest in multi_indices(d - 1, max - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Mass matrix of the degree-`l` Lagrange basis on the equispaced lattice of
/// the unit `d`-simplex, and its row sums.
pub fn reference_simplex_mass(d: usize, l: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(1..=3).contains(&d) || !(1..=4).contains(&l) {
        return Err(Error::Unsupported(format!("reference simplex mass for d = {d}, degree = {l}")));
    }
    let alphas = multi_indices(d, l);
    let n = alphas.len();
    let points: Vec<Vec<f64>> = alphas.iter().map(|a| a.iter().map(|&k| k as f64 / l as f64).collect()).collect();
    // Vandermonde in the monomials x^β, |β| <= l
    let vand = DMatrix::from_fn(n, n, |i, j| {
        points[i].iter().zip(&alphas[j]).map(|(x, &e)| x.powi(e as i32)).product::<f64>()
    });
    let coef = vand.try_inverse().ok_or_else(|| Error::Singular("reference Vandermonde".into()))?;
    // ∫_simplex x^γ = γ! / (|γ| + d)!
    let moment = |a: &[usize], b: &[usize]| {
        let num: f64 = a.iter().zip(b).map(|(x, y)| factorial(x + y)).product();
        let deg: usize = a.iter().chain(b).sum();
        num / factorial(deg + d)
    };
    let mono = DMatrix::from_fn(n, n, |i, j| moment(&alphas[i], &alphas[j]));
    let mass = coef.transpose() * mono * &coef;
    let mass = SymMatrix::from_lower(mass).into_dense();
    let lumped = DVector::from_iterator(n, mass.row_iter().map(|r| r.sum()));
    Ok((mass, lumped))
}

/// Element bounds `λ₋, λ₊` of `(M̂, D̂)` and `ω = 2 / (λ₋ + λ₊)`.
pub fn richardson_weight(d: usize, l: usize) -> Result<RichardsonWeight> {
    let (mass, lumped) = reference_simplex_mass(d, l)?;
    if lumped.iter().any(|&v| v <= 0.0) {
        return Err(Error::Unsupported(format!(
            "lumped reference mass is not positive for d = {d}, degree = {l}"
        )));
    }
    let s = lumped.map(|v| 1.0 / v.sqrt());
    let n = mass.nrows();
    let scaled = SymMatrix::from_lower_fn(n, |i, j| mass[(i, j)] * s[i] * s[j]);
    let ev = crate::spectral::sym_eig(&scaled);
    let (lambda_min, lambda_max) = (ev.min(), ev.max());
    Ok(RichardsonWeight { lambda_min, lambda_max, omega: 2.0 / (lambda_min + lambda_max) })
}

/// `G^D = D⁻¹ B D⁻¹`.
pub fn lumped_precond(b: &SymMatrix, d: &DiagMatrix) -> Result<Precond> {
    check_dims(b, d.dim())?;
    if !d.is_positive() {
        return Err(Error::not_spd("lumped mass matrix"));
    }
    Ok(Precond { kind: PrecondKind::Lumped, matrix: b.congruence_diag(d.inverse().entries()), omega: None })
}

/// `G^J = (diag M)⁻¹ B (diag M)⁻¹`.
pub fn jacobi_precond(b: &SymMatrix, m: &SymMatrix) -> Result<Precond> {
    check_dims(b, m.dim())?;
    let d = m.diagonal();
    if !d.is_positive() {
        return Err(Error::not_spd("mass matrix diagonal"));
    }
    Ok(Precond { kind: PrecondKind::Jacobi, matrix: b.congruence_diag(d.inverse().entries()), omega: None })
}

/// `G^M = M⁻¹ B M⁻¹` through a Cholesky factorization of `M`.
pub fn mass_precond(b: &SymMatrix, m: &SymMatrix) -> Result<Precond> {
    check_dims(b, m.dim())?;
    let chol = Cholesky::new(m.as_dense().clone()).ok_or_else(|| Error::not_spd("mass matrix"))?;
    let x = chol.solve(b.as_dense());
    // M⁻¹ (M⁻¹ B)ᵀ = M⁻¹ B M⁻¹ since B is symmetric
    let g = chol.solve(&x.transpose());
    Ok(Precond { kind: PrecondKind::Mass, matrix: symmetrize(g), omega: None })
}

/// Largest eigenvalue of `D^{-1/2} M D^{-1/2}` by power iteration.
fn largest_scaled_eigenvalue(m: &SparseRows, s: &DVector<f64>) -> f64 {
    let n = s.len();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = m.mul_vec(&v.component_mul(s)).component_mul(s);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `R^(k)` from `R^(k+1) = R^(k) + ω D⁻¹ (I - M R^(k))`, `R^(0) = 0`.
pub fn richardson_inverse(m: &SymMatrix, d: &DiagMatrix, k: usize, omega: f64) -> Result<DMatrix<f64>> {
    let n = m.dim();
    if d.dim() != n {
        return Err(Error::InvalidParameter(format!("dimension mismatch {} vs {}", n, d.dim())));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("Richardson needs at least one iteration".into()));
    }
    if !(omega > 0.0) || !d.is_positive() {
        return Err(Error::InvalidParameter(format!("Richardson needs ω > 0 and positive D, got ω = {omega}")));
    }
    let sparse = SparseRows::from_dense(m.as_dense());
    let lmax = largest_scaled_eigenvalue(&sparse, &d.inv_sqrt());
    // eigenvalues of D⁻¹M lie in (0, λmax]; the iteration contracts iff ωλ < 2
    let radius = (1.0 - omega * lmax).abs();
    if omega * lmax >= 2.0 {
        return Err(Error::Divergence { radius });
    }
    let dinv = d.inverse();
    let di = dinv.entries();
    let mut r = DMatrix::from_diagonal(&(di * omega));
    for _ in 1..k {
        let mr = sparse.mul_dense(&r);
        for j in 0..n {
            for i in 0..n {
                let delta = if i == j { 1.0 } else { 0.0 } - mr[(i, j)];
                r[(i, j)] += omega * di[i] * delta;
            }
        }
    }
    Ok(r)
}

/// `G^(k) = R^(k) B R^(k)`.
pub fn richardson_precond(b: &SymMatrix, m: &SymMatrix, d: &DiagMatrix, k: usize, omega: f64) -> Result<Precond> {
    check_dims(b, m.dim())?;
    let r = symmetrize(richardson_inverse(m, d, k, omega)?);
    let rb = r.as_dense() * b.as_dense();
    let g = rb * r.as_dense();
    Ok(Precond { kind: PrecondKind::Richardson(k), matrix: symmetrize(g), omega: Some(omega) })
}

/// Builds the preconditioner of the requested kind. `omega` is only used by
/// the Richardson variant.
pub fn build_precond(kind: PrecondKind, b: &SymMatrix, m: &SymMatrix, d: &DiagMatrix, omega: f64) -> Result<Precond> {
    match kind {
        PrecondKind::Lumped => lumped_precond(b, d),
        PrecondKind::Mass => mass_precond(b, m),
        PrecondKind::Jacobi => jacobi_precond(b, m),
        PrecondKind::Richardson(k) => richardson_precond(b, m, d, k, omega),
    }
}

fn symmetrize(m: DMatrix<f64>) -> SymMatrix {
    let n = m.nrows();
    SymMatrix::from_lower_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn check_dims(b: &SymMatrix, n: usize) -> Result<()> {
    if b.dim() != n {
        return Err(Error::InvalidParameter(format!("dimension mismatch {} vs {}", b.dim(), n)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::kappa;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tridiag(n: usize, seed: u64) -> SymMatrix {
        // a P1 mass matrix on a random 1-D periodic mesh
        let h: Vec<f64> = (0..n).map(|i| 0.1 + ((i as u64 * 2654435761 + seed) % 97) as f64 / 50.0).collect();
        let mut m = DMatrix::zeros(n, n);
        for e in 0..n {
            let (a, b) = (e, (e + 1) % n);
            m[(a, a)] += h[e] / 3.0;
            m[(b, b)] += h[e] / 3.0;
            m[(a, b)] += h[e] / 6.0;
            m[(b, a)] += h[e] / 6.0;
        }
        SymMatrix::from_lower(m)
    }

    fn spd(n: usize, seed: u64) -> SymMatrix {
        let q = DMatrix::from_fn(n, n, |i, j| (((i * 31 + j * 17) as u64 + seed) % 23) as f64 / 23.0 - 0.5);
        SymMatrix::from_lower(&q * q.transpose() + DMatrix::identity(n, n) * 0.5)
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("richardson:4".parse::<PrecondKind>().unwrap(), PrecondKind::Richardson(4));
        assert_eq!(
            parse_precond_list("lumped,mass,richardson:2,jacobi").unwrap(),
            vec![PrecondKind::Lumped, PrecondKind::Mass, PrecondKind::Richardson(2), PrecondKind::Jacobi]
        );
        assert!("richardson:0".parse::<PrecondKind>().is_err());
        assert!("foo".parse::<PrecondKind>().is_err());
        for k in [PrecondKind::Lumped, PrecondKind::Richardson(6)] {
            assert_eq!(k.to_string().parse::<PrecondKind>().unwrap(), k);
        }
    }

    #[test]
    fn linear_weights_match_rational_values() {
        for d in 1..=3 {
            let w = richardson_weight(d, 1).unwrap();
            let exact = 2.0 * (d as f64 + 2.0) / (d as f64 + 3.0);
            assert!((w.omega - exact).abs() <= 1e-12 * exact, "d={d}: {}", w.omega);
            // (I + 11ᵀ)/(d+2) scaled by (d+1)/(d+2)... extreme values 1/(d+2) and 1
            assert_relative_eq!(w.lambda_min, 1.0 / (d as f64 + 2.0), max_relative = 1e-12);
            assert_relative_eq!(w.lambda_max, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn cubic_triangle_weight() {
        let w = richardson_weight(2, 3).unwrap();
        assert!((w.omega - 0.836).abs() <= 1e-3, "{}", w.omega);
    }

    #[test]
    fn reference_mass_sums_to_volume() {
        for d in 1..=3 {
            for l in 1..=3 {
                let (m, dd) = reference_simplex_mass(d, l).unwrap();
                assert_relative_eq!(m.sum(), 1.0 / factorial(d), max_relative = 1e-12);
                assert_relative_eq!(dd.sum(), 1.0 / factorial(d), max_relative = 1e-12);
            }
        }
        assert!(richardson_weight(4, 1).is_err());
    }

    #[test]
    fn lumped_examples() {
        let d = DiagMatrix::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DiagMatrix::new(d.entries().map(|v| v * v)).to_sym();
        let g = lumped_precond(&b, &d).unwrap();
        assert!((g.matrix.as_dense() - DMatrix::identity(3, 3)).amax() < 1e-15);
        let g = lumped_precond(&SymMatrix::identity(2), &DiagMatrix::from_vec(vec![2.0, 2.0])).unwrap();
        assert_eq!(g.matrix.get(0, 0), 0.25);
        assert_eq!(g.matrix.get(0, 1), 0.0);
    }

    #[test]
    fn mass_examples() {
        let m = tridiag(7, 1);
        let g = mass_precond(&m, &m).unwrap();
        let minv = m.as_dense().clone().try_inverse().unwrap();
        assert!((g.matrix.as_dense() - &minv).amax() < 1e-10 * minv.amax());
        let b = spd(7, 3);
        let g = mass_precond(&b, &SymMatrix::identity(7)).unwrap();
        assert!((g.matrix.as_dense() - b.as_dense()).amax() < 1e-14);
        let g = mass_precond(&b, &m).unwrap();
        let res = g.matrix.as_dense() * m.as_dense() * b.as_dense().clone().try_inverse().unwrap() * m.as_dense();
        assert!((res - DMatrix::identity(7, 7)).amax() < 1e-10);
    }

    #[test]
    fn jacobi_equals_mass_for_diagonal_m() {
        let b = spd(5, 2);
        let m = DiagMatrix::from_vec(vec![1.0, 2.0, 0.5, 3.0, 1.5]).to_sym();
        let gj = jacobi_precond(&b, &m).unwrap();
        let gm = mass_precond(&b, &m).unwrap();
        assert!((gj.matrix.as_dense() - gm.matrix.as_dense()).amax() < 1e-12 * gm.matrix.max_abs());
    }

    #[test]
    fn richardson_one_step_and_exact_case() {
        let m = tridiag(9, 4);
        let d = crate::gram::lumped_from_mass(&m);
        let r = richardson_inverse(&m, &d, 1, 1.5).unwrap();
        assert!((r - DMatrix::from_diagonal(&(d.inverse().entries() * 1.5))).amax() == 0.0);
        let md = DiagMatrix::from_vec(vec![1.0, 2.0, 4.0]);
        for k in 1..5 {
            let r = richardson_inverse(&md.to_sym(), &md, k, 1.0).unwrap();
            assert!((r - md.inverse().to_dense()).amax() < 1e-15);
        }
    }

    #[test]
    fn richardson_divergence_detected() {
        let m = tridiag(9, 4);
        let d = crate::gram::lumped_from_mass(&m);
        assert!(matches!(richardson_inverse(&m, &d, 3, 2.5), Err(Error::Divergence { .. })));
    }

    #[test]
    fn richardson_residual_contracts() {
        let m = tridiag(40, 11);
        let d = crate::gram::lumped_from_mass(&m);
        let w = richardson_weight(1, 1).unwrap();
        // contraction factor from the actual spectrum of D⁻¹M
        let s = d.inv_sqrt();
        let ev = crate::spectral::sym_eig(&m.congruence_diag(&s));
        let q = ev.eigenvalues.iter().map(|l| (1.0 - w.omega * l).abs()).fold(0.0, f64::max);
        assert!(q < 1.0);
        let id = DMatrix::<f64>::identity(40, 40);
        // in the D-weighted norm, E_k = I - D^{1/2} M R D^{1/2}... use the similar form
        let sd = DMatrix::from_diagonal(&s);
        let sdi = DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let r = richardson_inverse(&m, &d, k, w.omega).unwrap();
            let e = &sd * (&id - m.as_dense() * &r) * &sdi;
            let norm = e.norm();
            if k > 1 {
                assert!(norm <= q * prev * (1.0 + 1e-10), "k={k}");
            }
            prev = norm;
        }
    }

    #[test]
    fn richardson_converges_to_mass_precond() {
        let m = tridiag(12, 5);
        let d = crate::gram::lumped_from_mass(&m);
        let b = spd(12, 9);
        let a = spd(12, 4);
        let w = richardson_weight(1, 1).unwrap();
        let gd = lumped_precond(&b, &d).unwrap();
        let g1 = richardson_precond(&b, &m, &d, 1, w.omega).unwrap();
        let scaled = gd.matrix.scaled(w.omega * w.omega);
        assert!((g1.matrix.as_dense() - scaled.as_dense()).amax() <= 1e-13 * scaled.max_abs());
        let k1 = kappa(&g1.matrix, &a).unwrap();
        assert_relative_eq!(k1, kappa(&gd.matrix, &a).unwrap(), max_relative = 1e-8);
        let gm = mass_precond(&b, &m).unwrap();
        let g64 = richardson_precond(&b, &m, &d, 64, w.omega).unwrap();
        let km = kappa(&gm.matrix, &a).unwrap();
        assert_relative_eq!(kappa(&g64.matrix, &a).unwrap(), km, max_relative = 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn richardson_inverse_is_symmetric(seed in 0u64..500, k in 1usize..=64) {
            let m = tridiag(10, seed);
            let d = crate::gram::lumped_from_mass(&m);
            let r = richardson_inverse(&m, &d, k, 1.5).unwrap();
            let asym = (&r - r.transpose()).amax();
            prop_assert!(asym <= 1e-12 * r.amax().max(1.0));
        }

        #[test]
        fn scalar_invariance(seed in 0u64..500) {
            let b = spd(6, seed);
            let a = spd(6, seed + 1);
            let d = DiagMatrix::from_vec((0..6).map(|i| 1.0 + i as f64).collect());
            let g = lumped_precond(&b, &d).unwrap();
            let k = kappa(&g.matrix, &a).unwrap();
            let k10 = kappa(&g.matrix.scaled(10.0), &a).unwrap();
            prop_assert!((k - k10).abs() <= 1e-10 * k);
        }
    }
}
