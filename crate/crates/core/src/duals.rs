//! Bubbles, the biorthogonal dual collection `Φ̃`, the Fortin projector and
//! the bijection `φ_ν ↦ φ̃_ν`, realized numerically on a holding space.
//!
//! None of this enters the preconditioners; it exists to check the
//! properties that make the lumped coupling stable.
//!
//! Everything lives in the holding space `H`: continuous piecewise
//! polynomials of degree `2ℓ + 2` on the same mesh. `S_τ ⊂ H`, bubbles are
//! elements of `H`, and so are the duals.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::FeSpace;
use crate::gram::{load_vector, mass_matrix, panel_jacobians, panel_rule, InnerProductKind};
use crate::matrix::{DiagMatrix, SparseRows, SymMatrix};
use crate::spectral::sym_eig;

/// Sparse column: `(holding dof, coefficient)` pairs, sorted by dof.
pub type SparseColumn = Vec<(usize, f64)>;

/// Per-panel matrices coupling `S_τ` and `H`.
struct PanelMatrices {
    /// `∫ ψ_i ψ_j` (holding basis)
    mass_h: DMatrix<f64>,
    /// `∫ ψ_i' ψ_j'` in arc length
    stiff_h: DMatrix<f64>,
    /// `∫ φ_a ψ_i`
    mixed: DMatrix<f64>,
}

fn panel_matrices(s: &FeSpace, h: &FeSpace, panel: usize) -> PanelMatrices {
    let (ns, nh) = (s.degree() + 1, h.degree() + 1);
    let rule = panel_rule(h.degree() + s.degree());
    let jac = panel_jacobians(h, panel, &rule, InnerProductKind::Exact);
    let mut mass_h = DMatrix::zeros(nh, nh);
    let mut stiff_h = DMatrix::zeros(nh, nh);
    let mut mixed = DMatrix::zeros(ns, nh);
    let (mut vh, mut dh, mut vs) = (vec![0.0; nh], vec![0.0; nh], vec![0.0; ns]);
    for (q, (x, w)) in rule.iter().enumerate() {
        h.basis().values(x, &mut vh);
        h.basis().derivatives(x, &mut dh);
        s.basis().values(x, &mut vs);
        let (wj, wd) = (w * jac[q], w / jac[q]);
        for i in 0..nh {
            for j in 0..nh {
                mass_h[(i, j)] += wj * vh[i] * vh[j];
                stiff_h[(i, j)] += wd * dh[i] * dh[j];
            }
            for a in 0..ns {
                mixed[(a, i)] += wj * vs[a] * vh[i];
            }
        }
    }
    PanelMatrices { mass_h, stiff_h, mixed }
}

/// Bubbles `θ_ν` with `⟨θ_ν, φ_μ⟩ = δ_νμ ‖φ_ν‖²`, supported in `supp φ_ν`.
#[derive(Debug, Clone)]
pub struct BubbleSet {
    pub holding: FeSpace,
    pub bubbles: Vec<SparseColumn>,
    /// `⟨θ_ν, φ_ν⟩` as realized.
    pub diag: Vec<f64>,
}

/// Holding-space degree for primal degree `ℓ`.
pub fn holding_degree(l: usize) -> usize {
    2 * l + 2
}

/// Holding dofs of the support of `φ_ν`, in curve order, boundary vertices
/// included.
fn support_holding_dofs(s: &FeSpace, h: &FeSpace, nu: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = Vec::new();
    for p in s.support(nu) {
        for id in h.panel_dofs(p) {
            if ids.last() != Some(&id) {
                ids.push(id);
            }
        }
    }
    ids
}

fn build_bubble(
    s: &FeSpace,
    h: &FeSpace,
    local: &[PanelMatrices],
    mass_s: &SymMatrix,
    nu: usize,
) -> Result<(SparseColumn, f64)> {
    let panels = s.support(nu);
    let all = support_holding_dofs(s, h, nu);
    // θ vanishes at both ends of the support
    let unknowns = &all[1..all.len() - 1];
    let uidx: BTreeMap<usize, usize> = unknowns.iter().enumerate().map(|(k, &g)| (g, k)).collect();
    let mut mus: Vec<usize> = Vec::new();
    for &p in &panels {
        for id in s.panel_dofs(p) {
            if !mus.contains(&id) {
                mus.push(id);
            }
        }
    }
    let (nu_loc, nc) = (unknowns.len(), mus.len());
    let mut k = DMatrix::zeros(nu_loc, nu_loc);
    let mut c = DMatrix::zeros(nc, nu_loc);
    for &p in &panels {
        let hd = h.panel_dofs(p);
        let sd = s.panel_dofs(p);
        let lm = &local[p];
        for (i, gi) in hd.iter().enumerate() {
            let Some(&li) = uidx.get(gi) else { continue };
            for (j, gj) in hd.iter().enumerate() {
                if let Some(&lj) = uidx.get(gj) {
                    k[(li, lj)] += lm.stiff_h[(i, j)];
                }
            }
            for (a, ga) in sd.iter().enumerate() {
                let r = mus.iter().position(|m| m == ga).expect("constraint listed");
                c[(r, li)] += lm.mixed[(a, i)];
            }
        }
    }
    // KKT system for min |θ|_{H¹} subject to C θ = r
    let n = nu_loc + nc;
    let mut kkt = DMatrix::zeros(n, n);
    kkt.view_mut((0, 0), (nu_loc, nu_loc)).copy_from(&k);
    kkt.view_mut((nu_loc, 0), (nc, nu_loc)).copy_from(&c);
    kkt.view_mut((0, nu_loc), (nu_loc, nc)).copy_from(&c.transpose());
    let mut rhs = DVector::zeros(n);
    let target = mass_s.get(nu, nu);
    let row = mus.iter().position(|&m| m == nu).expect("own node constrained");
    rhs[nu_loc + row] = target;
    let sol = kkt.lu().solve(&rhs).ok_or_else(|| {
        Error::Singular(format!(
            "bubble constraints for node {nu}: {nc} conditions on {nu_loc} unknowns; raise the holding degree"
        ))
    })?;
    let theta = sol.rows(0, nu_loc).into_owned();
    let realized = (&c * &theta)[row];
    let col = unknowns.iter().zip(theta.iter()).map(|(&g, &v)| (g, v)).collect();
    Ok((col, realized))
}

/// Sparse holding-space matrices assembled from panel contributions.
struct HoldingMatrices {
    mass_h: SparseRows,
    stiff_h: SparseRows,
    /// `N[a, i] = ⟨φ_a, ψ_i⟩`, rows indexed by primal dofs.
    mixed: SparseRows,
    /// `E[i, a] = φ_a(x_i)`, the embedding `S_τ → H`, rows by holding dofs.
    embed: SparseRows,
}

fn holding_matrices(s: &FeSpace, h: &FeSpace, local: &[PanelMatrices]) -> HoldingMatrices {
    let (mut tm, mut tk, mut tn, mut te) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut seen = vec![false; h.ndofs()];
    let mut vs = vec![0.0; s.degree() + 1];
    for (p, lm) in local.iter().enumerate() {
        let hd = h.panel_dofs(p);
        let sd = s.panel_dofs(p);
        for (i, &gi) in hd.iter().enumerate() {
            for (j, &gj) in hd.iter().enumerate() {
                tm.push((gi, gj, lm.mass_h[(i, j)]));
                tk.push((gi, gj, lm.stiff_h[(i, j)]));
            }
            for (a, &ga) in sd.iter().enumerate() {
                tn.push((ga, gi, lm.mixed[(a, i)]));
            }
            if !seen[gi] {
                seen[gi] = true;
                s.basis().values(h.basis().nodes()[i], &mut vs);
                for (a, &ga) in sd.iter().enumerate() {
                    if vs[a] != 0.0 {
                        te.push((gi, ga, vs[a]));
                    }
                }
            }
        }
    }
    HoldingMatrices {
        mass_h: SparseRows::from_triplets(h.ndofs(), tm),
        stiff_h: SparseRows::from_triplets(h.ndofs(), tk),
        mixed: SparseRows::from_triplets(s.ndofs(), tn),
        embed: SparseRows::from_triplets(h.ndofs(), te),
    }
}

fn local_matrices(s: &FeSpace, h: &FeSpace) -> Vec<PanelMatrices> {
    (0..s.num_panels()).into_par_iter().map(|p| panel_matrices(s, h, p)).collect()
}

/// Builds all bubbles by local constrained minimization on the actual mesh.
pub fn build_bubbles(s: &FeSpace) -> Result<BubbleSet> {
    let h = FeSpace::new(s.mesh(), holding_degree(s.degree()))?;
    let local = local_matrices(s, &h);
    let mass_s = mass_matrix(s, InnerProductKind::Exact);
    let built: Vec<(SparseColumn, f64)> = (0..s.ndofs())
        .into_par_iter()
        .map(|nu| build_bubble(s, &h, &local, &mass_s, nu))
        .collect::<Result<_>>()?;
    let (bubbles, diag) = built.into_iter().unzip();
    Ok(BubbleSet { holding: h, bubbles, diag })
}

/// The dual collection `Φ̃` and the matrices needed to test it.
pub struct DualBasis {
    primal: FeSpace,
    pub holding: FeSpace,
    /// `φ̃_ν` as holding-space coefficients.
    pub columns: Vec<SparseColumn>,
    pub mass: SymMatrix,
    pub lumped: DiagMatrix,
    mats: HoldingMatrices,
}

/// `φ̃_ν = φ_ν + (D_ν / θ_νν) θ_ν - Σ_ν' (M_νν' / θ_ν'ν') θ_ν'`.
pub fn build_dual_basis(s: &FeSpace, b: &BubbleSet) -> Result<DualBasis> {
    let h = b.holding.clone();
    if h.num_panels() != s.num_panels() || b.bubbles.len() != s.ndofs() {
        return Err(Error::InvalidParameter("bubble set does not belong to this space".into()));
    }
    let local = local_matrices(s, &h);
    let mats = holding_matrices(s, &h, &local);
    let mass = mass_matrix(s, InnerProductKind::Exact);
    let lumped = DiagMatrix::new(mass.row_sums());
    let embed_t = mats.embed.transpose(s.ndofs());
    let columns = (0..s.ndofs())
        .map(|nu| {
            let mut col: BTreeMap<usize, f64> = BTreeMap::new();
            for &(i, v) in embed_t.row(nu) {
                *col.entry(i).or_default() += v;
            }
            let mut add = |bubble: usize, c: f64| {
                for &(i, v) in &b.bubbles[bubble] {
                    *col.entry(i).or_default() += c * v;
                }
            };
            add(nu, lumped.entries()[nu] / b.diag[nu]);
            // neighbours sharing a panel with ν
            let mut nbrs: Vec<usize> = s.support(nu).into_iter().flat_map(|p| s.panel_dofs(p)).collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            for nb in nbrs {
                let m = mass.get(nu, nb);
                if m != 0.0 {
                    add(nb, -m / b.diag[nb]);
                }
            }
            col.into_iter().collect()
        })
        .collect();
    Ok(DualBasis { primal: s.clone(), holding: h, columns, mass, lumped, mats })
}

impl DualBasis {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    fn column_dense(&self, nu: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.holding.ndofs());
        for &(i, c) in &self.columns[nu] {
            v[i] = c;
        }
        v
    }

    /// `⟨φ̃_ν, φ_μ⟩` for all pairs, `[ν, μ]`.
    pub fn biorthogonality(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        for nu in 0..n {
            for mu in 0..n {
                let row = self.mats.mixed.row(mu);
                let (mut a, mut b) = (0, 0);
                let col = &self.columns[nu];
                let mut acc = 0.0;
                while a < row.len() && b < col.len() {
                    match row[a].0.cmp(&col[b].0) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => b += 1,
                        std::cmp::Ordering::Equal => {
                            acc += row[a].1 * col[b].1;
                            a += 1;
                            b += 1;
                        }
                    }
                }
                out[(nu, mu)] = acc;
            }
        }
        out
    }

    /// Holding coefficients of `Σ_ν φ̃_ν`.
    pub fn sum(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.holding.ndofs());
        for col in &self.columns {
            for &(i, c) in col {
                v[i] += c;
            }
        }
        v
    }

    /// Panels on which `φ̃_ν` has non-zero coefficients.
    pub fn support(&self, nu: usize) -> Vec<usize> {
        let p = self.holding.degree();
        let mut panels: Vec<usize> = Vec::new();
        for &(i, c) in &self.columns[nu] {
            if c == 0.0 {
                continue;
            }
            panels.push(i / p);
            if i % p == 0 {
                panels.push(self.holding.mesh().prev(i / p));
            }
        }
        panels.sort_unstable();
        panels.dedup();
        panels
    }

    /// Union of the supports of `φ_ν` and of the `φ_ν'` coupled to it by the
    /// mass matrix.
    pub fn patch(&self, nu: usize) -> Vec<usize> {
        let s = &self.primal;
        let mut nbrs: Vec<usize> = s.support(nu).into_iter().flat_map(|p| s.panel_dofs(p)).collect();
        nbrs.push(nu);
        let mut panels: Vec<usize> = nbrs.into_iter().flat_map(|n| s.support(n)).collect();
        panels.sort_unstable();
        panels.dedup();
        panels
    }

    /// `M̃[ν, μ] = ⟨φ̃_ν, φ̃_μ⟩`.
    pub fn dual_gram(&self) -> SymMatrix {
        let n = self.len();
        let dense: Vec<DVector<f64>> = (0..n).map(|nu| self.column_dense(nu)).collect();
        let mut out = DMatrix::zeros(n, n);
        for nu in 0..n {
            let mv = self.mats.mass_h.mul_vec(&dense[nu]);
            for mu in 0..=nu {
                out[(nu, mu)] = self.columns[mu].iter().map(|&(i, c)| c * mv[i]).sum();
            }
        }
        SymMatrix::from_lower(out)
    }

    /// Ratios `‖φ̃_ν‖ / ‖φ_ν‖` in `L2` and in the `H¹` seminorm, maximized
    /// over nodes.
    pub fn norm_ratios(&self) -> (f64, f64) {
        let embed_t = self.mats.embed.transpose(self.len());
        let mut worst = (0.0f64, 0.0f64);
        for nu in 0..self.len() {
            let dual = self.column_dense(nu);
            let mut primal = DVector::zeros(self.holding.ndofs());
            for &(i, v) in embed_t.row(nu) {
                primal[i] = v;
            }
            let l2 = self.mats.mass_h.bilinear(&self.columns[nu], &dual) / self.mass.get(nu, nu);
            let pcol: SparseColumn = embed_t.row(nu).to_vec();
            let h1 = self.mats.stiff_h.bilinear(&self.columns[nu], &dual) / self.mats.stiff_h.bilinear(&pcol, &primal);
            worst = (worst.0.max(l2.sqrt()), worst.1.max(h1.sqrt()));
        }
        worst
    }

    /// `P_τ u = Σ_ν (⟨u, φ_ν⟩ / ⟨φ̃_ν, φ_ν⟩) φ̃_ν` for holding coefficients `u`.
    pub fn fortin_apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let g = self.mats.mixed.mul_vec(u);
        let mut out = DVector::zeros(self.holding.ndofs());
        for (nu, col) in self.columns.iter().enumerate() {
            let c = g[nu] / self.lumped.entries()[nu];
            for &(i, v) in col {
                out[i] += c * v;
            }
        }
        out
    }

    /// `I_τ`: primal coefficients `c` to the holding coefficients of `Σ c_ν φ̃_ν`.
    pub fn bijection_apply(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.holding.ndofs());
        for (nu, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                out[i] += c[nu] * v;
            }
        }
        out
    }

    /// `I_τ⁻¹` on `span Φ̃`: `c = D⁻¹ ⟨u, Φ⟩`.
    pub fn bijection_inverse_apply(&self, u: &DVector<f64>) -> DVector<f64> {
        self.mats.mixed.mul_vec(u).component_div(self.lumped.entries())
    }

    /// Embedding of primal coefficients into the holding space.
    pub fn embed(&self, c: &DVector<f64>) -> DVector<f64> {
        self.mats.embed.mul_vec(c)
    }

    /// `⟨u, v⟩` for holding coefficient vectors.
    pub fn holding_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.mats.mass_h.mul_vec(v))
    }

    /// `‖P_τ‖` as an operator on `L2`: `λ_max(D⁻¹ M̃ D⁻¹, M⁻¹)^{1/2}`.
    pub fn fortin_l2_norm(&self) -> Result<f64> {
        let mt = self.dual_gram();
        let dinv = self.lumped.inverse();
        let x = mt.congruence_diag(dinv.entries());
        let chol = Cholesky::new(self.mass.as_dense().clone()).ok_or_else(|| Error::not_spd("mass matrix"))?;
        let l = chol.l();
        let y = SymMatrix::from_lower(l.transpose() * x.as_dense() * &l);
        Ok(sym_eig(&y).max().sqrt())
    }

    /// `‖I_τ‖` in the discrete `L2` norms: `λ_max(M̃, M)^{1/2}`.
    pub fn bijection_l2_norm(&self) -> Result<f64> {
        let mt = self.dual_gram();
        let chol = Cholesky::new(self.mass.as_dense().clone()).ok_or_else(|| Error::not_spd("mass matrix"))?;
        let linv = chol.l().try_inverse().ok_or_else(|| Error::Singular("mass factor".into()))?;
        let y = SymMatrix::from_lower(&linv * mt.as_dense() * linv.transpose());
        Ok(sym_eig(&y).max().sqrt())
    }
}

/// Coefficients of `Q_τ u`, the `L2` projection of `u(chart, t)` onto `S_τ`.
pub fn l2_project(s: &FeSpace, u: impl Fn(usize, f64) -> f64) -> Result<Vec<f64>> {
    let m = mass_matrix(s, InnerProductKind::Exact);
    let rhs = DVector::from_vec(load_vector(s, u, InnerProductKind::Exact));
    let chol = Cholesky::new(m.into_dense()).ok_or_else(|| Error::not_spd("mass matrix"))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use crate::mesh::{corner_schedule, Mesh};
    use std::sync::Arc;

    fn uniform_circle(panels: usize, l: usize) -> FeSpace {
        let g = Arc::new(Geometry::circle(0.5).unwrap());
        FeSpace::new(&Mesh::initial(g, panels).unwrap(), l).unwrap()
    }

    fn square_level(k: usize, l: usize) -> FeSpace {
        let g = Arc::new(Geometry::square(0.5).unwrap());
        FeSpace::new(&corner_schedule(g, k).unwrap(), l).unwrap()
    }

    #[test]
    fn bubbles_satisfy_constraints() {
        let s = square_level(2, 1);
        let b = build_bubbles(&s).unwrap();
        let d = build_dual_basis(&s, &b).unwrap();
        let local = local_matrices(&s, &b.holding);
        let mats = holding_matrices(&s, &b.holding, &local);
        for nu in 0..s.ndofs() {
            let mut th = DVector::zeros(b.holding.ndofs());
            for &(i, v) in &b.bubbles[nu] {
                th[i] = v;
            }
            let g = mats.mixed.mul_vec(&th);
            let norm = d.mass.get(nu, nu);
            for mu in 0..s.ndofs() {
                let expect = if mu == nu { norm } else { 0.0 };
                assert!((g[mu] - expect).abs() <= 1e-12 * norm, "{nu} {mu}");
            }
        }
    }

    #[test]
    fn linear_bubble_on_uniform_mesh() {
        let g = Arc::new(Geometry::square(0.5).unwrap());
        let s = FeSpace::new(&Mesh::initial(g, 2).unwrap(), 1).unwrap();
        let b = build_bubbles(&s).unwrap();
        // 8 panels of length 1/4 on the square of side 1/2
        let h = 0.25;
        for nu in 0..s.ndofs() {
            assert!((b.diag[nu] - 2.0 * h / 3.0).abs() < 1e-12, "{}", b.diag[nu]);
        }
    }

    #[test]
    fn duals_biorthogonal_and_partition_of_unity() {
        for (s, _) in [(uniform_circle(12, 1), 0), (square_level(3, 3), 1)] {
            let b = build_bubbles(&s).unwrap();
            let d = build_dual_basis(&s, &b).unwrap();
            let g = d.biorthogonality();
            let dl = d.lumped.entries();
            for nu in 0..s.ndofs() {
                for mu in 0..s.ndofs() {
                    let expect = if nu == mu { dl[nu] } else { 0.0 };
                    assert!((g[(nu, mu)] - expect).abs() <= 1e-10 * dl[nu]);
                }
            }
            let sum = d.sum();
            assert!(sum.iter().all(|v| (v - 1.0).abs() < 1e-10));
            for nu in 0..s.ndofs() {
                let patch = d.patch(nu);
                assert!(d.support(nu).iter().all(|p| patch.contains(p)));
            }
        }
    }

    #[test]
    fn fortin_identities() {
        let s = square_level(2, 3);
        let b = build_bubbles(&s).unwrap();
        let d = build_dual_basis(&s, &b).unwrap();
        let n = d.holding.ndofs();
        let u = DVector::from_fn(n, |i, _| ((i * 37) % 11) as f64 - 5.0);
        let pu = d.fortin_apply(&u);
        let ppu = d.fortin_apply(&pu);
        assert!((&ppu - &pu).amax() <= 1e-10 * pu.amax());
        let one = DVector::from_element(n, 1.0);
        assert!((d.fortin_apply(&one) - &one).amax() < 1e-10);
        // (1 - P) u is orthogonal to S
        let r = &u - &pu;
        for nu in 0..s.ndofs() {
            let mut e = DVector::zeros(s.ndofs());
            e[nu] = 1.0;
            let phi = d.embed(&e);
            assert!(d.holding_inner(&r, &phi).abs() <= 1e-10 * u.amax());
        }
        // I 1 = 1 and I⁻¹ I = id
        let ones = DVector::from_element(s.ndofs(), 1.0);
        assert!((d.bijection_apply(&ones) - &one).amax() < 1e-10);
        let c = DVector::from_fn(s.ndofs(), |i, _| (i as f64).sin());
        assert!((d.bijection_inverse_apply(&d.bijection_apply(&c)) - &c).amax() < 1e-10);
    }

    #[test]
    fn projection_examples() {
        let s = uniform_circle(10, 3);
        let ones = l2_project(&s, |_, _| 1.0).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let f = |_: usize, t: f64| t.sin() + 0.3 * t.cos();
        let c = s.interpolate(f);
        let u = |chart: usize, t: f64| {
            // the interpolant itself, evaluated pointwise
            let p = s.mesh().panels().iter().position(|p| p.chart == chart && p.t0 <= t && t <= p.t1).unwrap();
            let pn = s.mesh().panel(p);
            s.eval_function(&c, p, (t - pn.t0) / pn.param_length())
        };
        let q = l2_project(&s, u).unwrap();
        for (a, b) in q.iter().zip(&c) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
