//! Mass matrix, lumped mass matrix and the scaled nodal basis.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fespace::FeSpace;
use crate::matrix::{DiagMatrix, SymMatrix};
use crate::quadrature::{gauss_rule, QuadRule};

/// Which `L2`-type product the Gram matrices use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerProductKind {
    /// `∫_Γ u v ds` with the true Jacobian.
    #[default]
    Exact,
    /// Jacobian replaced on each panel by its average `|T| / |χ^{-1}(T)|`.
    MeshAveraged,
}

impl FromStr for InnerProductKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(InnerProductKind::Exact),
            "averaged" | "mesh-averaged" | "mesh_averaged" => Ok(InnerProductKind::MeshAveraged),
            other => Err(Error::InvalidParameter(format!("unknown inner product '{other}'"))),
        }
    }
}

impl fmt::Display for InnerProductKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerProductKind::Exact => "exact",
            InnerProductKind::MeshAveraged => "averaged",
        })
    }
}

/// Gauss rule for panel integrals of basis products against the speed.
pub(crate) fn panel_rule(degree: usize) -> QuadRule {
    gauss_rule((degree + 12).min(64)).expect("valid rule size")
}

/// Jacobian weights `hp * speed` (or `|T|` for the averaged product) at the
/// rule's nodes on `panel`.
pub(crate) fn panel_jacobians(s: &FeSpace, panel: usize, rule: &QuadRule, kind: InnerProductKind) -> Vec<f64> {
    let p = s.mesh().panel(panel);
    match kind {
        InnerProductKind::MeshAveraged => vec![p.length; rule.len()],
        InnerProductKind::Exact => {
            let g = s.mesh().geometry();
            let hp = p.param_length();
            rule.nodes.iter().map(|&x| hp * g.speed_unchecked(p.chart, p.t0 + hp * x)).collect()
        }
    }
}

/// Local mass matrix `⟨φ_i, φ_j⟩_T` of one panel.
pub fn local_mass(s: &FeSpace, panel: usize, kind: InnerProductKind) -> DMatrix<f64> {
    let n = s.degree() + 1;
    let rule = panel_rule(s.degree());
    let jac = panel_jacobians(s, panel, &rule, kind);
    let mut v = vec![0.0; n];
    let mut m = DMatrix::zeros(n, n);
    for (q, (x, w)) in rule.iter().enumerate() {
        s.basis().values(x, &mut v);
        let wj = w * jac[q];
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += wj * v[i] * v[j];
            }
        }
    }
    m
}

/// `M[ν, ν'] = ⟨φ_ν, φ_ν'⟩` in the chosen product.
pub fn mass_matrix(s: &FeSpace, kind: InnerProductKind) -> SymMatrix {
    let n = s.ndofs();
    let mut m = DMatrix::zeros(n, n);
    for panel in 0..s.num_panels() {
        let local = local_mass(s, panel, kind);
        let ids = s.panel_dofs(panel);
        for (a, &i) in ids.iter().enumerate() {
            for (b, &j) in ids.iter().enumerate() {
                m[(i, j)] += local[(a, b)];
            }
        }
    }
    SymMatrix::from_lower(m)
}

/// `D[ν] = ⟨1, φ_ν⟩`, taken as the row sums of the mass matrix.
pub fn lumped_matrix(s: &FeSpace, kind: InnerProductKind) -> DiagMatrix {
    lumped_from_mass(&mass_matrix(s, kind))
}

pub fn lumped_from_mass(m: &SymMatrix) -> DiagMatrix {
    DiagMatrix::new(m.row_sums())
}

/// `D^{-1/2} A D^{-1/2}`, the matrix of the bilinear form of `A` in the
/// scaled nodal basis `D^{-1/2} Φ`.
pub fn scaled_basis(a: &SymMatrix, d: &DiagMatrix) -> Result<SymMatrix> {
    if a.dim() != d.dim() {
        return Err(Error::InvalidParameter(format!("dimension mismatch {} vs {}", a.dim(), d.dim())));
    }
    if !d.is_positive() {
        return Err(Error::InvalidParameter("diagonal scaling needs positive entries".into()));
    }
    Ok(a.congruence_diag(&d.inv_sqrt()))
}

/// `⟨f, φ_ν⟩` for `f(chart, t)`.
pub fn load_vector(s: &FeSpace, f: impl Fn(usize, f64) -> f64, kind: InnerProductKind) -> Vec<f64> {
    let n = s.degree() + 1;
    let rule = panel_rule(s.degree());
    let mut out = vec![0.0; s.ndofs()];
    let mut v = vec![0.0; n];
    for panel in 0..s.num_panels() {
        let p = *s.mesh().panel(panel);
        let jac = panel_jacobians(s, panel, &rule, kind);
        let ids = s.panel_dofs(panel);
        for (q, (x, w)) in rule.iter().enumerate() {
            s.basis().values(x, &mut v);
            let fx = f(p.chart, p.t0 + p.param_length() * x) * w * jac[q];
            for (a, &i) in ids.iter().enumerate() {
                out[i] += fx * v[a];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Geometry, GeometryKind};
    use crate::mesh::{corner_schedule, Mesh};
    use crate::quadrature::adaptive_integrate;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn square_space(degree: usize) -> FeSpace {
        let g = Arc::new(Geometry::square(0.5).unwrap());
        FeSpace::new(&Mesh::initial(g, 4).unwrap(), degree).unwrap()
    }

    #[test]
    fn hat_mass_pattern() {
        let s = square_space(1);
        let h = 0.125;
        let m = mass_matrix(&s, InnerProductKind::Exact);
        for i in 0..s.ndofs() {
            assert_relative_eq!(m.get(i, i), 4.0 * h / 6.0, max_relative = 1e-14);
            assert_relative_eq!(m.get(i, (i + 1) % s.ndofs()), h / 6.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn lumped_entries_on_uniform_square() {
        let h = 0.125;
        let d1 = lumped_matrix(&square_space(1), InnerProductKind::Exact);
        for v in d1.entries().iter() {
            assert_relative_eq!(*v, h, max_relative = 1e-14);
        }
        let s3 = square_space(3);
        let d3 = lumped_matrix(&s3, InnerProductKind::Exact);
        for (id, v) in d3.entries().iter().enumerate() {
            let expect = if id % 3 == 0 { h / 4.0 } else { 3.0 * h / 8.0 };
            assert_relative_eq!(*v, expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn cubic_weights_match_quadrature_oracle() {
        // ∫ of each cubic Lagrange function on [0, 1] by adaptive quadrature
        let nodes = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let lag = |j: usize, x: f64| {
            (0..4).filter(|&m| m != j).map(|m| (x - nodes[m]) / (nodes[j] - nodes[m])).product::<f64>()
        };
        let w: Vec<f64> = (0..4).map(|j| adaptive_integrate(|x| lag(j, x), 0.0, 1.0, 1e-14)).collect();
        let d = lumped_matrix(&square_space(3), InnerProductKind::Exact);
        let h = 0.125;
        assert_relative_eq!(d.entries()[0], h * (w[0] + w[3]), max_relative = 1e-13);
        assert_relative_eq!(d.entries()[1], h * w[1], max_relative = 1e-13);
    }

    #[test]
    fn polygon_products_agree() {
        let s = square_space(3);
        let a = mass_matrix(&s, InnerProductKind::Exact);
        let b = mass_matrix(&s, InnerProductKind::MeshAveraged);
        for i in 0..s.ndofs() {
            for j in 0..s.ndofs() {
                assert!((a.get(i, j) - b.get(i, j)).abs() <= 1e-14 * a.max_abs());
            }
        }
    }

    #[test]
    fn ellipse_mass_matches_adaptive_oracle() {
        let g = Arc::new(Geometry::ellipse(0.5, 2.0).unwrap());
        let s = FeSpace::new(&Mesh::initial(g.clone(), 8).unwrap(), 3).unwrap();
        let m = mass_matrix(&s, InnerProductKind::Exact);
        let panel = *s.mesh().panel(2);
        let basis = s.basis().clone();
        let ids = s.panel_dofs(2);
        for a in 0..4 {
            for b in 0..4 {
                let f = |x: f64| {
                    let mut v = vec![0.0; 4];
                    basis.values(x, &mut v);
                    v[a] * v[b] * panel.param_length() * g.chart_speed(0, panel.t0 + panel.param_length() * x).unwrap()
                };
                let oracle = adaptive_integrate(f, 0.0, 1.0, 1e-14);
                // interior pairs only get contributions from this panel
                if a > 0 && a < 3 || b > 0 && b < 3 {
                    assert_relative_eq!(m.get(ids[a], ids[b]), oracle, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn lumping_identity_and_total_length() {
        for kind in [GeometryKind::Square, GeometryKind::Circle, GeometryKind::Ellipse] {
            let g = Arc::new(Geometry::new(kind, 0.5, 2.0).unwrap());
            let mesh = corner_schedule(g.clone(), 2).unwrap();
            for degree in [1, 3] {
                let s = FeSpace::new(&mesh, degree).unwrap();
                for ip in [InnerProductKind::Exact, InnerProductKind::MeshAveraged] {
                    let m = mass_matrix(&s, ip);
                    let d = lumped_matrix(&s, ip);
                    assert!(d.is_positive());
                    let total: f64 = d.entries().iter().sum();
                    assert_relative_eq!(total, g.length(), max_relative = 1e-12);
                    let rs = m.row_sums();
                    for i in 0..s.ndofs() {
                        assert_relative_eq!(d.entries()[i], rs[i], max_relative = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn averaged_lumping_ratio_within_speed_range() {
        let g = Arc::new(Geometry::ellipse(0.5, 2.0).unwrap());
        let s = FeSpace::new(&Mesh::initial(g.clone(), 8).unwrap().uniform_refine(), 1).unwrap();
        let exact = lumped_matrix(&s, InnerProductKind::Exact);
        let avg = lumped_matrix(&s, InnerProductKind::MeshAveraged);
        let mut differs = false;
        for id in 0..s.ndofs() {
            let panels = s.support(id);
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for p in panels {
                let pan = s.mesh().panel(p);
                for k in 0..=200 {
                    let sp = g.chart_speed(0, pan.t0 + pan.param_length() * k as f64 / 200.0).unwrap();
                    lo = lo.min(sp / pan.mean_speed());
                    hi = hi.max(sp / pan.mean_speed());
                }
            }
            let r = exact.entries()[id] / avg.entries()[id];
            assert!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12));
            differs |= (r - 1.0).abs() > 1e-6;
        }
        assert!(differs);
    }

    #[test]
    fn scaled_basis_identities() {
        let d = DiagMatrix::from_vec(vec![0.5, 2.0, 3.0]);
        let i = scaled_basis(&d.to_sym(), &d).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((i.get(r, c) - if r == c { 1.0 } else { 0.0 }).abs() <= 1e-14);
            }
        }
        let id = SymMatrix::identity(3);
        assert_eq!(scaled_basis(&id, &DiagMatrix::from_vec(vec![1.0; 3])).unwrap(), id);
        assert!(scaled_basis(&id, &DiagMatrix::from_vec(vec![1.0; 2])).is_err());
    }
}
