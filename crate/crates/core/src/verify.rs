//! Invariant suite behind `calderon-bench verify`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::duals::{build_bubbles, build_dual_basis};
use crate::error::Result;
use crate::experiment::LevelSystem;
use crate::fespace::FeSpace;
use crate::geometry::{Geometry, GeometryKind};
use crate::gram::{load_vector, lumped_matrix, mass_matrix, scaled_basis, InnerProductKind};
use crate::mesh::corner_schedule;
use crate::operators::QuadConfig;
use crate::precond::{build_precond, richardson_inverse, richardson_weight, PrecondKind};
use crate::spectral::kappa;

/// Outcome of one property check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((ok, d)) => Self::new(name, ok, d),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

const GEOMETRIES: [GeometryKind; 3] = [GeometryKind::Square, GeometryKind::Circle, GeometryKind::Ellipse];

fn geometry(kind: GeometryKind) -> Result<Arc<Geometry>> {
    Ok(Arc::new(Geometry::new(kind, 0.5, 2.0)?))
}

fn check_weights() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let exact = 2.0 * (d as f64 + 2.0) / (d as f64 + 3.0);
        worst = worst.max(rel(richardson_weight(d, 1)?.omega, exact));
    }
    let w23 = richardson_weight(2, 3)?.omega;
    Ok((worst <= 1e-12 && (w23 - 0.836).abs() <= 1e-3, format!("linear rel err {worst:.1e}, ω(2,3) = {w23:.4}")))
}

fn check_lumping(max_level: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for kind in GEOMETRIES {
        let g = geometry(kind)?;
        for level in 1..=max_level {
            let mesh = corner_schedule(g.clone(), level)?;
            mesh.check_invariants()?;
            for l in [1, 3] {
                let s = FeSpace::new(&mesh, l)?;
                for ip in [InnerProductKind::Exact, InnerProductKind::MeshAveraged] {
                    let rows = mass_matrix(&s, ip).row_sums();
                    let d = lumped_matrix(&s, ip);
                    // ⟨1, φ_ν⟩ integrated directly
                    let ones = load_vector(&s, |_, _| 1.0, ip);
                    for (i, &v) in ones.iter().enumerate() {
                        worst = worst.max(rel(rows[i], v)).max(rel(d.entries()[i], v));
                    }
                    worst = worst.max(rel(d.entries().sum(), g.length()));
                }
            }
        }
    }
    Ok((worst <= 1e-12, format!("max rel error of D against ⟨1, φ⟩ and of ΣD against |Γ|: {worst:.1e}")))
}

fn check_systems(max_level: usize) -> Result<Vec<Check>> {
    let g = geometry(GeometryKind::Square)?;
    let (mut coincide, mut scaled, mut jacobi, mut consts) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut rich_conv = 0.0f64;
    for level in 1..=max_level {
        let mesh = corner_schedule(g.clone(), level)?;
        for l in [1, 3] {
            let sys = LevelSystem::build(&mesh, l, QuadConfig::default(), 0.05, InnerProductKind::Exact)?;
            let w = richardson_weight(1, l)?.omega;
            let a = &sys.single_layer;
            for kind in [PrecondKind::Lumped, PrecondKind::Mass, PrecondKind::Jacobi, PrecondKind::Richardson(2)] {
                let gm = build_precond(kind, &sys.hypersingular, &sys.mass, &sys.lumped, w)?;
                coincide = coincide.max(rel(kappa(&gm.matrix, a)?, kappa(a, &gm.matrix)?));
            }
            let kd = sys.kappa(PrecondKind::Lumped, w)?;
            let bs = scaled_basis(&sys.hypersingular, &sys.lumped)?;
            let as_ = scaled_basis(a, &sys.lumped)?;
            scaled = scaled.max(rel(kappa(&bs, &as_)?, kd));
            if l == 1 {
                jacobi = jacobi.max(rel(sys.kappa(PrecondKind::Jacobi, w)?, kd));
            }
            let km = sys.kappa(PrecondKind::Mass, w)?;
            // R^(k) M 1 = (1 - (1 - ω)^k) 1 since D^{-1} M 1 = 1
            let m1 = sys.mass.as_dense() * DVector::from_element(sys.mass.dim(), 1.0);
            for k in [1, 2, 4, 6] {
                let r = richardson_inverse(&sys.mass, &sys.lumped, k, w)?;
                let c = 1.0 - (1.0 - w).powi(k as i32);
                consts = consts.max((&r * &m1).iter().fold(0.0f64, |e, v| e.max((v - c).abs())));
            }
            rich_conv = rich_conv.max(rel(sys.kappa(PrecondKind::Richardson(64), w)?, km));
        }
    }
    Ok(vec![
        Check::new("kappa(GA) = kappa(AG)", coincide <= 1e-8, format!("max rel diff {coincide:.1e}")),
        Check::new("scaled-basis equivalence", scaled <= 1e-8, format!("max rel diff {scaled:.1e}")),
        Check::new("jacobi = lumped for linears", jacobi <= 1e-10, format!("max rel diff {jacobi:.1e}")),
        Check::new("richardson keeps constants", consts <= 1e-10, format!("max |R M 1 - c_k 1| {consts:.1e}")),
        Check::new("richardson(64) = mass", rich_conv <= 1e-4, format!("max rel diff {rich_conv:.1e}")),
    ])
}

fn check_duals(max_level: usize) -> Result<(bool, String)> {
    let g = geometry(GeometryKind::Square)?;
    let (mut bio, mut pou, mut idem) = (0.0f64, 0.0f64, 0.0f64);
    for level in 1..=max_level {
        let mesh = corner_schedule(g.clone(), level)?;
        for l in [1, 3] {
            let s = FeSpace::new(&mesh, l)?;
            let d = build_dual_basis(&s, &build_bubbles(&s)?)?;
            let b = d.biorthogonality();
            let dl = d.lumped.entries();
            for i in 0..s.ndofs() {
                for j in 0..s.ndofs() {
                    let e = if i == j { dl[i] } else { 0.0 };
                    bio = bio.max((b[(i, j)] - e).abs() / dl[i]);
                }
            }
            pou = pou.max(d.sum().iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs())));
            let u = DVector::from_fn(d.holding.ndofs(), |i, _| ((i * 7) % 5) as f64 - 2.0);
            let pu = d.fortin_apply(&u);
            idem = idem.max((d.fortin_apply(&pu) - &pu).amax() / pu.amax());
        }
    }
    let ok = bio <= 1e-10 && pou <= 1e-10 && idem <= 1e-10;
    Ok((ok, format!("biorthogonality {bio:.1e}, partition of unity {pou:.1e}, P² - P {idem:.1e}")))
}

/// Runs the invariant suite on corner-refined meshes up to `max_level`.
pub fn run_invariants(max_level: usize) -> Vec<Check> {
    let mut out = vec![
        Check::from_result("richardson weights", check_weights()),
        Check::from_result("lumping identity", check_lumping(max_level)),
    ];
    match check_systems(max_level) {
        Ok(c) => out.extend(c),
        Err(e) => out.push(Check::new("operator systems", false, format!("error: {e}"))),
    }
    out.push(Check::from_result("dual basis", check_duals(max_level)));
    out
}
