//! Conforming partitions of a closed curve into panels, with bisection
//! refinement and K-mesh closure.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Geometry;

/// Largest admissible ratio between the lengths of neighbouring panels.
pub const K_MESH_RATIO: f64 = 2.0;

/// Slack on the K-mesh check. Bisection midpoints on the angle-parametrized
/// charts are rounded to the float grid near 2π, which perturbs the lengths
/// of the smallest panels in the seventh digit.
const RATIO_SLACK: f64 = 1e-5;

/// Corner-marking rounds per level in [`corner_schedule`].
pub const DEFAULT_CORNER_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub chart: usize,
    pub t0: f64,
    pub t1: f64,
    /// Arc length `|T|` (= `h_T` on a curve).
    pub length: f64,
    /// Number of bisections separating this panel from the initial mesh.
    pub generation: u32,
}

impl Panel {
    pub fn param_length(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Mean of the speed over the panel: `|T| / |χ^{-1}(T)|`.
    pub fn mean_speed(&self) -> f64 {
        self.length / self.param_length()
    }
}

/// Panels in cyclic order along the curve; panel `i` ends where panel
/// `i + 1` starts.
#[derive(Debug, Clone)]
pub struct Mesh {
    geometry: Arc<Geometry>,
    panels: Vec<Panel>,
}

fn make_panel(g: &Geometry, chart: usize, t0: f64, t1: f64, generation: u32) -> Panel {
    Panel { chart, t0, t1, length: g.arc_length(chart, t0, t1), generation }
}

fn bisect(g: &Geometry, p: &Panel) -> [Panel; 2] {
    let mid = 0.5 * (p.t0 + p.t1);
    [
        make_panel(g, p.chart, p.t0, mid, p.generation + 1),
        make_panel(g, p.chart, mid, p.t1, p.generation + 1),
    ]
}

impl Mesh {
    /// Splits every chart into `panels_per_chart` equal parameter intervals.
    ///
    /// Meshes with fewer than three panels are rejected: two panels of a
    /// closed curve would touch at both ends.
    pub fn initial(geometry: Arc<Geometry>, panels_per_chart: usize) -> Result<Self> {
        if panels_per_chart == 0 {
            return Err(Error::InvalidParameter("panels_per_chart must be at least 1".into()));
        }
        if panels_per_chart * geometry.num_charts() < 3 {
            return Err(Error::InvalidParameter(format!(
                "a closed curve needs at least 3 panels, got {}",
                panels_per_chart * geometry.num_charts()
            )));
        }
        let mut panels = Vec::with_capacity(panels_per_chart * geometry.num_charts());
        for (i, c) in geometry.charts().iter().enumerate() {
            let h = c.param_length() / panels_per_chart as f64;
            for j in 0..panels_per_chart {
                let t0 = c.lo + h * j as f64;
                let t1 = if j + 1 == panels_per_chart { c.hi } else { c.lo + h * (j + 1) as f64 };
                panels.push(make_panel(&geometry, i, t0, t1, 0));
            }
        }
        let mesh = Mesh { geometry, panels };
        Ok(mesh.closed())
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn geometry_arc(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn panel(&self, i: usize) -> &Panel {
        &self.panels[i]
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn next(&self, i: usize) -> usize {
        (i + 1) % self.panels.len()
    }

    pub fn prev(&self, i: usize) -> usize {
        (i + self.panels.len() - 1) % self.panels.len()
    }

    pub fn h_min(&self) -> f64 {
        self.panels.iter().map(|p| p.length).fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.panels.iter().map(|p| p.length).fold(0.0, f64::max)
    }

    pub fn total_length(&self) -> f64 {
        self.panels.iter().map(|p| p.length).sum()
    }

    /// Largest length ratio over all pairs of neighbouring panels.
    pub fn max_neighbor_ratio(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let a = self.panels[i].length;
                let b = self.panels[self.next(i)].length;
                a.max(b) / a.min(b)
            })
            .fold(1.0, f64::max)
    }

    /// Bisects the marked panels, then restores the K-mesh property.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        if marked.is_empty() {
            return Err(Error::InvalidParameter("no panels marked for refinement".into()));
        }
        let mut flags = vec![false; self.len()];
        for &i in marked {
            *flags.get_mut(i).ok_or_else(|| {
                Error::InvalidParameter(format!("panel id {i} out of range ({} panels)", self.len()))
            })? = true;
        }
        Ok(self.bisect_flagged(&flags).closed())
    }

    /// Bisects every panel.
    pub fn uniform_refine(&self) -> Mesh {
        self.bisect_flagged(&vec![true; self.len()])
    }

    fn bisect_flagged(&self, flags: &[bool]) -> Mesh {
        let g = &self.geometry;
        let mut panels = Vec::with_capacity(self.len() + flags.iter().filter(|&&f| f).count());
        for (p, &f) in self.panels.iter().zip(flags) {
            if f {
                panels.extend(bisect(g, p));
            } else {
                panels.push(*p);
            }
        }
        Mesh { geometry: Arc::clone(g), panels }
    }

    /// Repeatedly bisects the coarser panel of every neighbour pair whose
    /// bisection generations differ by more than one.
    ///
    /// Initial panels are equal parameter splits of every chart, so this bounds
    /// the parameter-length ratio of neighbours by [`K_MESH_RATIO`]. On charts
    /// with constant speed that is the arc-length ratio; on the ellipse the
    /// arc-length ratio picks up the ratio of the two panels' mean speeds.
    /// Closing on arc length directly would cascade around the whole curve,
    /// since speed variation keeps every freshly bisected neighbour slightly
    /// above the threshold.
    fn closed(mut self) -> Mesh {
        loop {
            let n = self.len();
            let mut flags = vec![false; n];
            let mut any = false;
            for i in 0..n {
                let j = self.next(i);
                let (a, b) = (self.panels[i].generation, self.panels[j].generation);
                if b > a + 1 {
                    flags[i] = true;
                    any = true;
                } else if a > b + 1 {
                    flags[j] = true;
                    any = true;
                }
            }
            if !any {
                return self;
            }
            self = self.bisect_flagged(&flags);
        }
    }

    /// Admissible arc-length ratio for the neighbours `i`, `i + 1`:
    /// [`K_MESH_RATIO`] times the ratio of their mean speeds.
    pub fn k_mesh_bound(&self, i: usize) -> f64 {
        let p = &self.panels[i];
        let q = &self.panels[self.next(i)];
        let (sp, sq) = (p.mean_speed(), q.mean_speed());
        let speed_ratio = if p.length >= q.length { sp / sq } else { sq / sp };
        K_MESH_RATIO * speed_ratio.max(1.0)
    }

    /// Ids of panels touching one of the geometry's corner points.
    pub fn corner_panels(&self) -> Vec<usize> {
        let g = &self.geometry;
        let corners = g.corner_points();
        let mut flags = vec![false; self.len()];
        // vertex i is the start point of panel i
        for (i, p) in self.panels.iter().enumerate() {
            let tol = 1e-12 * g.charts()[p.chart].param_length();
            if corners.iter().any(|&(cc, ct)| cc == p.chart && (p.t0 - ct).abs() <= tol) {
                flags[i] = true;
                flags[self.prev(i)] = true;
            }
        }
        flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
    }

    /// Checks tiling, conformity and the K-mesh ratio.
    pub fn check_invariants(&self) -> Result<()> {
        let g = &self.geometry;
        let n = self.len();
        if n < 3 {
            return Err(Error::InvalidParameter("mesh has fewer than 3 panels".into()));
        }
        for i in 0..n {
            let p = &self.panels[i];
            let q = &self.panels[self.next(i)];
            if !(p.t1 > p.t0) || !(p.length > 0.0) {
                return Err(Error::InvalidParameter(format!("panel {i} is degenerate")));
            }
            let c = &g.charts()[p.chart];
            let d = &g.charts()[q.chart];
            let conforming = (p.chart == q.chart && p.t1 == q.t0)
                || (p.t1 == c.hi && q.t0 == d.lo && q.chart == (p.chart + 1) % g.num_charts());
            if !conforming {
                return Err(Error::InvalidParameter(format!("panels {i} and {} do not share an endpoint", self.next(i))));
            }
        }
        let total = self.total_length();
        if (total - g.length()).abs() > 1e-12 * g.length() {
            return Err(Error::InvalidParameter(format!("panels cover {total}, curve length {}", g.length())));
        }
        for i in 0..n {
            let a = self.panels[i].length;
            let b = self.panels[self.next(i)].length;
            let ratio = a.max(b) / a.min(b);
            let bound = self.k_mesh_bound(i);
            if ratio > bound * (1.0 + RATIO_SLACK) {
                return Err(Error::InvalidParameter(format!(
                    "K-mesh ratio {ratio} between panels {i} and {} exceeds {bound}",
                    self.next(i)
                )));
            }
        }
        Ok(())
    }

    /// Text dump, one line `panel_id chart t0 t1 length` per panel.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.panels.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {:.17e} {:.17e} {:.17e}", p.chart, p.t0, p.t1, p.length);
        }
        out
    }
}

/// `k` uniform bisections of the initial mesh followed by `factor * k`
/// rounds of bisecting every panel that touches a corner point.
pub fn corner_schedule_from(initial: &Mesh, k: usize, factor: usize) -> Result<Mesh> {
    if k == 0 {
        return Err(Error::InvalidParameter("corner schedule level must be at least 1".into()));
    }
    let mut mesh = initial.clone();
    for _ in 0..k {
        mesh = mesh.uniform_refine();
    }
    for _ in 0..factor * k {
        let marked = mesh.corner_panels();
        mesh = mesh.refine(&marked)?;
    }
    Ok(mesh)
}

/// Level-`k` mesh of the corner family with the default initial mesh and
/// `4k` marking rounds.
pub fn corner_schedule(geometry: Arc<Geometry>, k: usize) -> Result<Mesh> {
    let ppc = geometry.default_panels_per_chart();
    let initial = Mesh::initial(geometry, ppc)?;
    corner_schedule_from(&initial, k, DEFAULT_CORNER_FACTOR)
}

/// Level-`k` mesh of the uniform family: `k` bisections of the initial mesh.
pub fn uniform_schedule_from(initial: &Mesh, k: usize) -> Mesh {
    let mut mesh = initial.clone();
    for _ in 0..k {
        mesh = mesh.uniform_refine();
    }
    mesh
}
