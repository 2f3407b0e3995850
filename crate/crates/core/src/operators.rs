//! Galerkin matrices of the 2-D Laplace single layer operator and of the
//! stabilized hypersingular operator on `S_τ`.
//!
//! The hypersingular form is evaluated through the integration-by-parts
//! identity `⟨W u, v⟩ = ⟨V ∂_s u, ∂_s v⟩` on closed curves, so both operators
//! only need the log kernel `-(1/2π) log|x - y|`.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::FeSpace;
use crate::geometry::{CurvePoint, Geometry, Point};
use crate::gram::{lumped_matrix, InnerProductKind};
use crate::matrix::SymMatrix;
use crate::quadrature::{gauss_rule, pair_rule, PairRelation, PairRule, QuadRule};

/// Default Gauss order of the panel-pair rules.
pub const DEFAULT_QUAD_N: usize = 12;

/// Default weight of the rank-one stabilization.
pub const DEFAULT_ALPHA: f64 = 0.05;

const INV_2PI: f64 = 1.0 / (2.0 * std::f64::consts::PI);

/// Quadrature settings for operator assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadConfig {
    pub base_n: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { base_n: DEFAULT_QUAD_N }
    }
}

/// Weight `α > 0` of the term `α ⟨u, 1⟩ ⟨v, 1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationWeight(f64);

impl StabilizationWeight {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "stabilization weight must be positive (the hypersingular form alone is only semi-definite), got {alpha}"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for StabilizationWeight {
    fn default() -> Self {
        Self(DEFAULT_ALPHA)
    }
}

#[inline]
fn log_kernel(d: Point) -> f64 {
    -INV_2PI * d[0].hypot(d[1]).ln()
}

struct Rules {
    adjacent: PairRule,
    identical: PairRule,
    /// Gauss rule on [0, 1] for well separated panels.
    far: QuadRule,
    /// Two-piece composite Gauss rule for close panels.
    near: QuadRule,
}

impl Rules {
    fn new(q: QuadConfig) -> Result<Self> {
        let far = gauss_rule(q.base_n)?;
        let mut near = QuadRule { nodes: Vec::new(), weights: Vec::new(), degree: far.degree };
        for a in 0..2 {
            for (x, w) in far.iter() {
                near.nodes.push(0.5 * (a as f64 + x));
                near.weights.push(0.5 * w);
            }
        }
        Ok(Self {
            adjacent: pair_rule(PairRelation::Adjacent, q.base_n)?,
            identical: pair_rule(PairRelation::Identical, q.base_n)?,
            far,
            near,
        })
    }
}

/// Quadrature data of one panel for the tensor rules: offsets of the nodes
/// from the panel start and weights times Jacobian.
struct PanelNodes {
    offsets: Vec<Point>,
    wjac: Vec<f64>,
}

struct PanelCache {
    far: PanelNodes,
    near: PanelNodes,
    samples: [Point; 5],
}

/// Basis values and derivatives at the nodes of a 1-D rule, `[i * n + a]`.
struct BasisTable {
    weights: Vec<f64>,
    vals: Vec<f64>,
    ders: Vec<f64>,
}

impl BasisTable {
    fn new(s: &FeSpace, rule: &QuadRule) -> Self {
        let n = s.degree() + 1;
        let mut vals = vec![0.0; rule.len() * n];
        let mut ders = vec![0.0; rule.len() * n];
        for (i, &x) in rule.nodes.iter().enumerate() {
            s.basis().values(x, &mut vals[i * n..(i + 1) * n]);
            s.basis().derivatives(x, &mut ders[i * n..(i + 1) * n]);
        }
        Self { weights: rule.weights.clone(), vals, ders }
    }
}

fn panel_cache(s: &FeSpace, rules: &Rules, i: usize) -> PanelCache {
    let mesh = s.mesh();
    let g = mesh.geometry();
    let p = mesh.panel(i);
    let h = p.param_length();
    let nodes = |rule: &QuadRule| PanelNodes {
        offsets: rule.nodes.iter().map(|&x| g.displacement(p.chart, p.t0, h * x)).collect(),
        wjac: rule.iter().map(|(x, w)| w * h * g.speed_unchecked(p.chart, p.t0 + h * x)).collect(),
    };
    PanelCache {
        far: nodes(&rules.far),
        near: nodes(&rules.near),
        samples: [0.0, 0.25, 0.5, 0.75, 1.0].map(|f| g.eval_unchecked(p.chart, p.t0 + f * h)),
    }
}

fn panels_close(cache: &[PanelCache], s: &FeSpace, x: usize, y: usize) -> bool {
    let mut dist = f64::INFINITY;
    for a in &cache[x].samples {
        for b in &cache[y].samples {
            dist = dist.min((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    let mesh = s.mesh();
    dist < mesh.panel(x).length.max(mesh.panel(y).length)
}

/// Tensor-rule block of two disjoint panels. The chord is split as
/// `(start_y - start_x) + off_y - off_x` so that tiny panels far from the
/// origin keep their relative accuracy.
#[allow(clippy::too_many_arguments)]
fn separated_block(
    s: &FeSpace,
    cache: &[PanelCache],
    tables: (&BasisTable, &BasisTable),
    x: usize,
    y: usize,
    near: bool,
    kbuf: &mut Vec<f64>,
) -> PairBlock {
    let mesh = s.mesh();
    let g = mesh.geometry();
    let (px, py) = (mesh.panel(x), mesh.panel(y));
    let base = g.chord(&CurvePoint::new(px.chart, px.t0, 0.0), &CurvePoint::new(py.chart, py.t0, 0.0));
    let (nx, ny, table) = if near {
        (&cache[x].near, &cache[y].near, tables.1)
    } else {
        (&cache[x].far, &cache[y].far, tables.0)
    };
    let m = nx.offsets.len();
    let n = s.degree() + 1;
    kbuf.clear();
    kbuf.resize(m * m, 0.0);
    for i in 0..m {
        let ox = nx.offsets[i];
        let d0 = [base[0] - ox[0], base[1] - ox[1]];
        for j in 0..m {
            let oy = ny.offsets[j];
            kbuf[i * m + j] = log_kernel([d0[0] + oy[0], d0[1] + oy[1]]);
        }
    }
    let w = |i: usize| table.weights[i];
    let mut single = vec![0.0; n * n];
    let mut hyper = vec![0.0; n * n];
    // contract over y first: ty[i][b] = Σ_j K_ij w_y φ_b(t_j)
    let mut ty = vec![0.0; n];
    let mut hy = vec![0.0; n];
    for i in 0..m {
        ty.iter_mut().for_each(|v| *v = 0.0);
        hy.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let k = kbuf[i * m + j];
            let kj = k * ny.wjac[j];
            let kw = k * w(j);
            let (vj, dj) = (&table.vals[j * n..(j + 1) * n], &table.ders[j * n..(j + 1) * n]);
            for b in 0..n {
                ty[b] += kj * vj[b];
                hy[b] += kw * dj[b];
            }
        }
        let (vi, di) = (&table.vals[i * n..(i + 1) * n], &table.ders[i * n..(i + 1) * n]);
        let (wx, wi) = (nx.wjac[i], w(i));
        for a in 0..n {
            let (sa, ha) = (wx * vi[a], wi * di[a]);
            for b in 0..n {
                single[a * n + b] += sa * ty[b];
                hyper[a * n + b] += ha * hy[b];
            }
        }
    }
    PairBlock { x, y, single, hyper }
}

/// Local blocks of one panel pair: single layer and derivative (hypersingular)
/// forms, indexed `[a * n + b]` for local functions `a` on the first and `b`
/// on the second panel.
struct PairBlock {
    x: usize,
    y: usize,
    single: Vec<f64>,
    hyper: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Layout {
    Identical,
    /// `y` follows `x`: shared vertex at the end of `x` and the start of `y`.
    Adjacent,
    Separated,
}

/// Block of a pair sharing at least one point, with the singular pair rules.
fn touching_block(s: &FeSpace, rules: &Rules, x: usize, y: usize, layout: Layout) -> PairBlock {
    let mesh = s.mesh();
    let g: &Geometry = mesh.geometry();
    let px = *mesh.panel(x);
    let py = *mesh.panel(y);
    let (hx, hy) = (px.param_length(), py.param_length());
    let n = s.degree() + 1;
    let basis = s.basis();
    let mut single = vec![0.0; n * n];
    let mut hyper = vec![0.0; n * n];
    let (mut vx, mut vy, mut dx, mut dy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let rule = match layout {
        Layout::Identical => &rules.identical,
        _ => &rules.adjacent,
    };
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        // local coordinates on each panel and the chord y - x
        let (xi, eta, chord) = match layout {
            Layout::Identical => {
                let t = px.t0 + hx * p.s;
                (p.s, p.t, g.displacement(px.chart, t, hx * p.diff))
            }
            _ => {
                let a = CurvePoint::new(px.chart, px.t1, -hx * p.s);
                let b = CurvePoint::new(py.chart, py.t0, hy * p.t);
                (1.0 - p.s, p.t, g.chord(&a, &b))
            }
        };
        let k = w * log_kernel(chord);
        let jx = hx * g.speed_unchecked(px.chart, px.t0 + hx * xi);
        let jy = hy * g.speed_unchecked(py.chart, py.t0 + hy * eta);
        basis.values(xi, &mut vx);
        basis.values(eta, &mut vy);
        basis.derivatives(xi, &mut dx);
        basis.derivatives(eta, &mut dy);
        let kj = k * jx * jy;
        for a in 0..n {
            let sa = kj * vx[a];
            let ha = k * dx[a];
            let row = a * n;
            for b in 0..n {
                single[row + b] += sa * vy[b];
                hyper[row + b] += ha * dy[b];
            }
        }
    }
    PairBlock { x, y, single, hyper }
}

/// Unordered panel pairs with their layouts, in a fixed order.
fn pair_list(s: &FeSpace) -> Vec<(usize, usize, Layout)> {
    let mesh = s.mesh();
    let np = mesh.len();
    let mut pairs = Vec::with_capacity(np * (np + 1) / 2);
    for i in 0..np {
        pairs.push((i, i, Layout::Identical));
        pairs.push((i, mesh.next(i), Layout::Adjacent));
        for j in (i + 1)..np {
            if j == mesh.next(i) || i == mesh.next(j) {
                continue;
            }
            pairs.push((i, j, Layout::Separated));
        }
    }
    pairs
}

/// Dense single layer and unstabilized hypersingular matrices.
fn assemble_raw(s: &FeSpace, q: QuadConfig) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let rules = Rules::new(q)?;
    let tables = (BasisTable::new(s, &rules.far), BasisTable::new(s, &rules.near));
    let cache: Vec<PanelCache> = (0..s.num_panels()).into_par_iter().map(|i| panel_cache(s, &rules, i)).collect();
    let nd = s.ndofs();
    let nl = s.degree() + 1;
    let mut a = DMatrix::zeros(nd, nd);
    let mut b = DMatrix::zeros(nd, nd);
    let pairs = pair_list(s);
    // blocks are computed in parallel chunks and scattered in list order, so
    // the summation order does not depend on the thread count
    for chunk in pairs.chunks(1 << 14) {
        let blocks: Vec<PairBlock> = chunk
            .par_iter()
            .map_init(Vec::new, |kbuf, &(x, y, layout)| match layout {
                Layout::Separated => {
                    let near = panels_close(&cache, s, x, y);
                    separated_block(s, &cache, (&tables.0, &tables.1), x, y, near, kbuf)
                }
                _ => touching_block(s, &rules, x, y, layout),
            })
            .collect();
        for blk in blocks {
            let ix = s.panel_dofs(blk.x);
            let iy = s.panel_dofs(blk.y);
            for ai in 0..nl {
                for bi in 0..nl {
                    let (sv, hv) = (blk.single[ai * nl + bi], blk.hyper[ai * nl + bi]);
                    a[(ix[ai], iy[bi])] += sv;
                    b[(ix[ai], iy[bi])] += hv;
                    if blk.x != blk.y {
                        a[(iy[bi], ix[ai])] += sv;
                        b[(iy[bi], ix[ai])] += hv;
                    }
                }
            }
        }
    }
    // identical-pair blocks are symmetric only up to rounding
    let a = SymMatrix::from_lower(a).into_dense();
    let b = SymMatrix::from_lower(b).into_dense();
    Ok((a, b))
}

fn check_spd(m: &DMatrix<f64>, what: &str, hint: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NotPositiveDefinite { what: what.into(), hint: " (non-finite entries)".into() });
    }
    // equilibrate first so the test is not fooled by scaling
    let d = m.diagonal();
    if d.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite { what: what.into(), hint: hint.into() });
    }
    let s = d.map(|v| 1.0 / v.sqrt());
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i] * s[j]);
    match Cholesky::new(scaled) {
        Some(_) => Ok(()),
        None => Err(Error::NotPositiveDefinite { what: what.into(), hint: hint.into() }),
    }
}

const COERCIVITY_HINT: &str =
    " (the log-kernel single layer operator needs a curve of logarithmic capacity below 1; keep the diameter <= 1)";

/// Single layer matrix `A[ν, ν'] = ∫∫ -(1/2π) log|x - y| φ_ν(y) φ_ν'(x)`.
pub fn assemble_single_layer(s: &FeSpace, q: QuadConfig) -> Result<SymMatrix> {
    Ok(assemble_operators(s, q, StabilizationWeight::default())?.0)
}

/// Stabilized hypersingular matrix `B = B̃ + α m mᵀ` with `m[ν] = ⟨φ_ν, 1⟩`.
pub fn assemble_hypersingular(s: &FeSpace, q: QuadConfig, alpha: StabilizationWeight) -> Result<SymMatrix> {
    Ok(assemble_operators(s, q, alpha)?.1)
}

/// Both operator matrices from one sweep over the panel pairs.
pub fn assemble_operators(
    s: &FeSpace,
    q: QuadConfig,
    alpha: StabilizationWeight,
) -> Result<(SymMatrix, SymMatrix)> {
    let (a, mut b) = assemble_raw(s, q)?;
    check_spd(&a, "single layer matrix", COERCIVITY_HINT)?;
    let m = lumped_matrix(s, InnerProductKind::Exact);
    let m = m.entries();
    let al = alpha.value();
    let n = s.ndofs();
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] += al * m[i] * m[j];
        }
    }
    check_spd(&b, "stabilized hypersingular matrix", "")?;
    Ok((SymMatrix::from_lower(a), SymMatrix::from_lower(b)))
}

/// Stabilization weight `1 / (4 ⟨A 1, 1⟩)`, which puts the constant mode of
/// `M⁻¹ B M⁻¹ A` at the same height `1/4` as the rest of its spectrum.
pub fn balanced_alpha(single_layer: &SymMatrix) -> Result<StabilizationWeight> {
    let a = single_layer.as_dense();
    StabilizationWeight::new(0.25 / a.sum())
}

/// The unstabilized hypersingular matrix `B̃` (semi-definite, kernel = constants).
pub fn assemble_hypersingular_unstabilized(s: &FeSpace, q: QuadConfig) -> Result<SymMatrix> {
    Ok(SymMatrix::from_lower(assemble_raw(s, q)?.1))
}
