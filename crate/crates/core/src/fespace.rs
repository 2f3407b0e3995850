//! Continuous piecewise polynomials of degree `ℓ` on a mesh with the nodal
//! (Lagrange) basis.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Lagrange polynomials on equispaced nodes `j / degree` of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis {
    degree: usize,
    nodes: Vec<f64>,
    denominators: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "Lagrange basis needs degree >= 1");
        let nodes: Vec<f64> = (0..=degree).map(|j| j as f64 / degree as f64).collect();
        let denominators = (0..=degree)
            .map(|j| (0..=degree).filter(|&m| m != j).map(|m| nodes[j] - nodes[m]).product())
            .collect();
        Self { degree, nodes, denominators }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values of all basis functions at `x`.
    pub fn values(&self, x: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.len()) {
            let mut p = 1.0;
            for m in 0..=self.degree {
                if m != j {
                    p *= x - self.nodes[m];
                }
            }
            *o = p / self.denominators[j];
        }
    }

    /// Derivatives `d/dx` of all basis functions at `x`.
    pub fn derivatives(&self, x: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.len()) {
            let mut sum = 0.0;
            for k in 0..=self.degree {
                if k == j {
                    continue;
                }
                let mut p = 1.0;
                for m in 0..=self.degree {
                    if m != j && m != k {
                        p *= x - self.nodes[m];
                    }
                }
                sum += p;
            }
            *o = sum / self.denominators[j];
        }
    }
}

/// Where a degree of freedom sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Panel endpoint shared by two panels.
    Vertex,
    /// Interior Lagrange node of a single panel.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub chart: usize,
    pub t: f64,
    /// The panel whose local node list starts with (vertex) or contains
    /// (interior) this node.
    pub panel: usize,
}

/// The space `S_τ` of continuous piecewise degree-`ℓ` functions.
///
/// Global numbering: panel `p` owns its start vertex and its `ℓ - 1` interior
/// nodes, numbered consecutively as `ℓ p, ..., ℓ p + ℓ - 1`; its end vertex
/// is the start vertex of panel `p + 1`.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Mesh,
    basis: LagrangeBasis,
}

impl FeSpace {
    pub fn new(mesh: &Mesh, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter("degree must be at least 1".into()));
        }
        Ok(Self { mesh: mesh.clone(), basis: LagrangeBasis::new(degree) })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn num_panels(&self) -> usize {
        self.mesh.len()
    }

    pub fn ndofs(&self) -> usize {
        self.degree() * self.mesh.len()
    }

    /// Global ids of the `ℓ + 1` local nodes of `panel`, in local order.
    pub fn panel_dofs(&self, panel: usize) -> Vec<usize> {
        let l = self.degree();
        let mut ids: Vec<usize> = (0..l).map(|j| l * panel + j).collect();
        ids.push(l * self.mesh.next(panel));
        ids
    }

    pub fn local_dof(&self, panel: usize, j: usize) -> usize {
        let l = self.degree();
        if j < l {
            l * panel + j
        } else {
            l * self.mesh.next(panel)
        }
    }

    pub fn node(&self, id: usize) -> Node {
        let l = self.degree();
        let panel = id / l;
        let j = id % l;
        let p = self.mesh.panel(panel);
        Node {
            kind: if j == 0 { NodeKind::Vertex } else { NodeKind::Interior },
            chart: p.chart,
            t: p.t0 + self.basis.nodes[j] * p.param_length(),
            panel,
        }
    }

    /// Panels on which `φ_id` is non-zero.
    pub fn support(&self, id: usize) -> Vec<usize> {
        let l = self.degree();
        let panel = id / l;
        if id % l == 0 {
            vec![self.mesh.prev(panel), panel]
        } else {
            vec![panel]
        }
    }

    /// Basis functions alive on `panel` at local coordinate `x`: global ids,
    /// values, and derivatives with respect to `x`.
    pub fn eval_basis(&self, panel: usize, x: f64) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        if panel >= self.num_panels() {
            return Err(Error::InvalidParameter(format!("panel {panel} out of range")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter(format!("local coordinate {x} outside [0, 1]")));
        }
        let n = self.basis.len();
        let mut v = vec![0.0; n];
        let mut d = vec![0.0; n];
        self.basis.values(x, &mut v);
        self.basis.derivatives(x, &mut d);
        Ok((self.panel_dofs(panel), v, d))
    }

    /// Evaluates the function with coefficient vector `coeffs` on `panel`.
    pub fn eval_function(&self, coeffs: &[f64], panel: usize, x: f64) -> f64 {
        let mut v = vec![0.0; self.basis.len()];
        self.basis.values(x, &mut v);
        (0..self.basis.len()).map(|j| coeffs[self.local_dof(panel, j)] * v[j]).sum()
    }

    /// Coefficients of the nodal interpolant of `f(chart, t)`.
    pub fn interpolate(&self, f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        (0..self.ndofs())
            .map(|id| {
                let n = self.node(id);
                f(n.chart, n.t)
            })
            .collect()
    }
}

/// Reference mass matrix `∫_0^1 L_i L_j` of the degree-`ℓ` Lagrange basis.
pub fn reference_mass(degree: usize) -> Vec<Vec<f64>> {
    let basis = LagrangeBasis::new(degree);
    let rule = crate::quadrature::gauss_rule(degree + 1).expect("small rule");
    let n = basis.len();
    let mut m = vec![vec![0.0; n]; n];
    let mut v = vec![0.0; n];
    for (x, w) in rule.iter() {
        basis.values(x, &mut v);
        for i in 0..n {
            for j in 0..n {
                m[i][j] += w * v[i] * v[j];
            }
        }
    }
    m
}

/// Reference lumped weights `∫_0^1 L_j`.
pub fn reference_weights(degree: usize) -> Vec<f64> {
    reference_mass(degree).iter().map(|row| row.iter().sum()).collect()
}

/// Bracket `[c1, c2]` containing `⟨1, φ_ν⟩ / ‖φ_ν‖²` for every node of every
/// mesh on a constant-speed chart. Both quantities add up per panel from the
/// same reference values, so the ratio only depends on the local node type.
pub fn lumping_bracket(degree: usize) -> (f64, f64) {
    let m = reference_mass(degree);
    let w = reference_weights(degree);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for j in 0..=degree {
        let r = if j == 0 || j == degree {
            // vertex: both adjacent panels contribute their end-node values
            (w[0] + w[degree]) / (m[0][0] + m[degree][degree])
        } else {
            w[j] / m[j][j]
        };
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn space(ppc: usize, degree: usize) -> FeSpace {
        let g = Arc::new(Geometry::square(0.5).unwrap());
        FeSpace::new(&Mesh::initial(g, ppc).unwrap(), degree).unwrap()
    }

    #[test]
    fn dof_counts() {
        assert_eq!(space(2, 1).ndofs(), 8);
        assert_eq!(space(2, 3).ndofs(), 24);
        assert!(FeSpace::new(space(2, 1).mesh(), 0).is_err());
    }

    #[test]
    fn vertex_nodes_belong_to_two_panels() {
        for degree in [1, 3] {
            let s = space(2, degree);
            let mut count = vec![0usize; s.ndofs()];
            for p in 0..s.num_panels() {
                for id in s.panel_dofs(p) {
                    count[id] += 1;
                }
            }
            for id in 0..s.ndofs() {
                let expect = if s.node(id).kind == NodeKind::Vertex { 2 } else { 1 };
                assert_eq!(count[id], expect);
                assert_eq!(s.support(id).len(), expect);
            }
        }
    }

    #[test]
    fn linear_midpoint_values() {
        let s = space(2, 1);
        let (_, v, d) = s.eval_basis(0, 0.5).unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
        assert_relative_eq!(d[0] + d[1], 0.0);
    }

    #[test]
    fn cubic_lagrange_property() {
        let s = space(2, 3);
        for j in 0..4 {
            let (_, v, _) = s.eval_basis(1, j as f64 / 3.0).unwrap();
            for (i, vi) in v.iter().enumerate() {
                assert!((vi - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eval_basis_errors() {
        let s = space(2, 3);
        assert!(s.eval_basis(0, 1.5).is_err());
        assert!(s.eval_basis(99, 0.5).is_err());
    }

    #[test]
    fn global_nodal_property() {
        let s = space(2, 3);
        for id in 0..s.ndofs() {
            let n = s.node(id);
            let mut e = vec![0.0; s.ndofs()];
            e[id] = 1.0;
            for other in 0..s.ndofs() {
                let m = s.node(other);
                // evaluate on the owning panel at the local coordinate of `other`
                let x = (m.t - s.mesh().panel(m.panel).t0) / s.mesh().panel(m.panel).param_length();
                let v = s.eval_function(&e, m.panel, x);
                assert!((v - if other == id { 1.0 } else { 0.0 }).abs() < 1e-13, "{id} {other} {n:?}");
            }
        }
    }

    #[test]
    fn reference_weights_are_newton_cotes() {
        let w1 = reference_weights(1);
        assert_relative_eq!(w1[0], 0.5, max_relative = 1e-15);
        let w3 = reference_weights(3);
        for (a, b) in w3.iter().zip([1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn linear_lumping_bracket() {
        let (lo, hi) = lumping_bracket(1);
        assert_relative_eq!(lo, 1.5, max_relative = 1e-14);
        assert_relative_eq!(hi, 1.5, max_relative = 1e-14);
        let (lo, hi) = lumping_bracket(3);
        assert!(lo > 0.0 && hi < 10.0 && lo <= hi);
    }

    proptest::proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..=1.0, degree in 1usize..6) {
            let b = LagrangeBasis::new(degree);
            let mut v = vec![0.0; degree + 1];
            let mut d = vec![0.0; degree + 1];
            b.values(x, &mut v);
            b.derivatives(x, &mut d);
            proptest::prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            proptest::prop_assert!(d.iter().sum::<f64>().abs() < 1e-11);
        }

        #[test]
        fn derivative_matches_finite_difference(x in 0.05f64..0.95, degree in 1usize..5) {
            let b = LagrangeBasis::new(degree);
            let n = degree + 1;
            let (mut vp, mut vm, mut d) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let h = 1e-6;
            b.values(x + h, &mut vp);
            b.values(x - h, &mut vm);
            b.derivatives(x, &mut d);
            for j in 0..n {
                proptest::prop_assert!(((vp[j] - vm[j]) / (2.0 * h) - d[j]).abs() < 1e-6);
            }
        }
    }
}
