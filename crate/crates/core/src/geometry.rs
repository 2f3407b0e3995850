//! Closed curves in the plane given as a cyclic chain of parametrized charts.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_integrate;

pub type Point = [f64; 2];

/// The shipped curve families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Square,
    Circle,
    Ellipse,
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "square" => Ok(GeometryKind::Square),
            "circle" => Ok(GeometryKind::Circle),
            "ellipse" => Ok(GeometryKind::Ellipse),
            other => Err(Error::InvalidParameter(format!("unknown geometry '{other}'"))),
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeometryKind::Square => "square",
            GeometryKind::Circle => "circle",
            GeometryKind::Ellipse => "ellipse",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ChartMap {
    /// `start + (t - lo) / (hi - lo) * (end - start)`
    Segment { start: Point, end: Point },
    /// `(a cos t, b sin t)`
    Conic { a: f64, b: f64 },
}

/// One parametrized piece of the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub lo: f64,
    pub hi: f64,
    map: ChartMap,
}

impl Chart {
    pub fn param_length(&self) -> f64 {
        self.hi - self.lo
    }

    fn eval(&self, t: f64) -> Point {
        match self.map {
            ChartMap::Segment { start, end } => {
                let s = (t - self.lo) / (self.hi - self.lo);
                [start[0] + s * (end[0] - start[0]), start[1] + s * (end[1] - start[1])]
            }
            ChartMap::Conic { a, b } => [a * t.cos(), b * t.sin()],
        }
    }

    fn speed(&self, t: f64) -> f64 {
        match self.map {
            ChartMap::Segment { start, end } => {
                (end[0] - start[0]).hypot(end[1] - start[1]) / (self.hi - self.lo)
            }
            ChartMap::Conic { a, b } => (a * t.sin()).hypot(b * t.cos()),
        }
    }

    /// `eval(t + delta) - eval(t)` without cancellation for small `delta`.
    fn displacement(&self, t: f64, delta: f64) -> Point {
        match self.map {
            ChartMap::Segment { start, end } => {
                let s = delta / (self.hi - self.lo);
                [s * (end[0] - start[0]), s * (end[1] - start[1])]
            }
            ChartMap::Conic { a, b } => {
                let half = 0.5 * delta;
                let sh = half.sin();
                let mid = t + half;
                [-2.0 * a * mid.sin() * sh, 2.0 * b * mid.cos() * sh]
            }
        }
    }

    fn is_affine(&self) -> bool {
        matches!(self.map, ChartMap::Segment { .. })
    }
}

/// A point on the curve addressed as `anchor + offset` on a chart.
///
/// Keeping the (exactly representable) panel endpoint apart from the small
/// offset lets [`Geometry::chord`] resolve tiny distances on strongly refined
/// meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub chart: usize,
    pub anchor: f64,
    pub offset: f64,
}

impl CurvePoint {
    pub fn new(chart: usize, anchor: f64, offset: f64) -> Self {
        Self { chart, anchor, offset }
    }

    pub fn t(&self) -> f64 {
        self.anchor + self.offset
    }
}

/// A closed curve glued from charts in cyclic order: the end of chart `i`
/// is the start of chart `i + 1` (and the end of the last chart is the start
/// of the first).
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    scale: f64,
    charts: Vec<Chart>,
    chart_lengths: Vec<f64>,
}

impl Geometry {
    /// Builds one of the shipped curves.
    ///
    /// * square: boundary of a square with side `scale`, four affine charts;
    /// * circle: radius `scale / 2`, angle parametrization;
    /// * ellipse: `(a cos t, b sin t)` with `2a = scale` and `a / b = ellipse_ratio`.
    ///
    /// Curves with diameter above one are rejected.
    pub fn new(kind: GeometryKind, scale: f64, ellipse_ratio: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        let charts = match kind {
            GeometryKind::Square => {
                let h = 0.5 * scale;
                let corners = [[-h, -h], [h, -h], [h, h], [-h, h]];
                (0..4)
                    .map(|i| Chart {
                        lo: 2.0 * i as f64,
                        hi: 2.0 * i as f64 + 1.0,
                        map: ChartMap::Segment { start: corners[i], end: corners[(i + 1) % 4] },
                    })
                    .collect::<Vec<_>>()
            }
            GeometryKind::Circle => {
                let r = 0.5 * scale;
                vec![Chart { lo: 0.0, hi: 2.0 * PI, map: ChartMap::Conic { a: r, b: r } }]
            }
            GeometryKind::Ellipse => {
                if !(ellipse_ratio > 0.0 && ellipse_ratio.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "ellipse ratio must be positive, got {ellipse_ratio}"
                    )));
                }
                let a = 0.5 * scale;
                let b = a / ellipse_ratio;
                vec![Chart { lo: 0.0, hi: 2.0 * PI, map: ChartMap::Conic { a, b } }]
            }
        };
        let mut g = Geometry { kind, scale, charts, chart_lengths: Vec::new() };
        let diameter = g.diameter();
        if diameter > 1.0 + 1e-12 {
            return Err(Error::CoercivityRisk { diameter });
        }
        g.chart_lengths = (0..g.charts.len()).map(|i| g.arc_length(i, g.charts[i].lo, g.charts[i].hi)).collect();
        Ok(g)
    }

    pub fn square(side: f64) -> Result<Self> {
        Self::new(GeometryKind::Square, side, 1.0)
    }

    pub fn circle(diameter: f64) -> Result<Self> {
        Self::new(GeometryKind::Circle, diameter, 1.0)
    }

    pub fn ellipse(major_axis: f64, ratio: f64) -> Result<Self> {
        Self::new(GeometryKind::Ellipse, major_axis, ratio)
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn num_charts(&self) -> usize {
        self.charts.len()
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            GeometryKind::Square => self.scale * 2f64.sqrt(),
            GeometryKind::Circle | GeometryKind::Ellipse => {
                // major axis; ratio < 1 makes b the semi-major axis
                match self.charts[0].map {
                    ChartMap::Conic { a, b } => 2.0 * a.max(b),
                    ChartMap::Segment { .. } => unreachable!(),
                }
            }
        }
    }

    /// Total arc length `|Γ|`.
    pub fn length(&self) -> f64 {
        self.chart_lengths.iter().sum()
    }

    pub fn chart_length(&self, chart: usize) -> f64 {
        self.chart_lengths[chart]
    }

    pub fn is_affine(&self, chart: usize) -> bool {
        self.charts[chart].is_affine()
    }

    fn check(&self, chart: usize, t: f64) -> Result<&Chart> {
        let c = self.charts.get(chart).ok_or_else(|| {
            Error::InvalidParameter(format!("chart {chart} out of range ({} charts)", self.charts.len()))
        })?;
        let slack = 1e-12 * c.param_length();
        if !(t >= c.lo - slack && t <= c.hi + slack) {
            return Err(Error::Domain { chart, t, lo: c.lo, hi: c.hi });
        }
        Ok(c)
    }

    /// Evaluates chart `chart` at parameter `t`.
    pub fn chart_eval(&self, chart: usize, t: f64) -> Result<Point> {
        Ok(self.check(chart, t)?.eval(t))
    }

    /// `|χ'(t)|`, the one-dimensional Jacobian.
    pub fn chart_speed(&self, chart: usize, t: f64) -> Result<f64> {
        Ok(self.check(chart, t)?.speed(t))
    }

    pub(crate) fn eval_unchecked(&self, chart: usize, t: f64) -> Point {
        self.charts[chart].eval(t)
    }

    pub(crate) fn speed_unchecked(&self, chart: usize, t: f64) -> f64 {
        self.charts[chart].speed(t)
    }

    /// `χ(t + delta) - χ(t)` on one chart, accurate for small `delta`.
    pub fn displacement(&self, chart: usize, t: f64, delta: f64) -> Point {
        self.charts[chart].displacement(t, delta)
    }

    /// Arc length of chart `chart` between parameters `t0 < t1`.
    pub fn arc_length(&self, chart: usize, t0: f64, t1: f64) -> f64 {
        let c = &self.charts[chart];
        if c.is_affine() {
            return c.speed(t0) * (t1 - t0);
        }
        crate::quadrature::gauss_composite(|t| c.speed(t), t0, t1, 24, 2)
    }

    /// Arc length by adaptive quadrature of the speed, independent of the
    /// fixed rules used for panels.
    pub fn arc_length_adaptive(&self, chart: usize, t0: f64, t1: f64, tol: f64) -> f64 {
        let c = &self.charts[chart];
        adaptive_integrate(|t| c.speed(t), t0, t1, tol)
    }

    fn next_chart(&self, chart: usize) -> usize {
        (chart + 1) % self.charts.len()
    }

    /// The difference `q - p` between two points on the curve.
    ///
    /// Points on the same chart are differenced in parameter space first.
    /// Points on consecutive charts are both measured from the shared junction.
    pub fn chord(&self, p: &CurvePoint, q: &CurvePoint) -> Point {
        let n = self.charts.len();
        if p.chart == q.chart {
            let c = &self.charts[p.chart];
            let mut base = q.anchor - p.anchor;
            if n == 1 {
                // periodic chart: pick the representative of the difference
                // closest to zero so points across the seam stay close
                let period = c.param_length();
                if base > 0.5 * period {
                    base = (q.anchor - period) - p.anchor;
                } else if base < -0.5 * period {
                    base = (q.anchor + period) - p.anchor;
                }
            }
            let delta = base + (q.offset - p.offset);
            return c.displacement(p.t(), delta);
        }
        if self.next_chart(p.chart) == q.chart {
            let cp = &self.charts[p.chart];
            let cq = &self.charts[q.chart];
            let from_p = cp.displacement(cp.hi, (p.anchor - cp.hi) + p.offset);
            let from_q = cq.displacement(cq.lo, (q.anchor - cq.lo) + q.offset);
            return [from_q[0] - from_p[0], from_q[1] - from_p[1]];
        }
        if self.next_chart(q.chart) == p.chart {
            let r = self.chord(q, p);
            return [-r[0], -r[1]];
        }
        let x = self.eval_unchecked(p.chart, p.t());
        let y = self.eval_unchecked(q.chart, q.t());
        [y[0] - x[0], y[1] - x[1]]
    }

    /// Designated corner vertices as `(chart, parameter)`: chart junctions for
    /// polygons, four equispaced parameters for smooth curves.
    pub fn corner_points(&self) -> Vec<(usize, f64)> {
        match self.kind {
            GeometryKind::Square => self.charts.iter().enumerate().map(|(i, c)| (i, c.lo)).collect(),
            GeometryKind::Circle | GeometryKind::Ellipse => {
                let c = &self.charts[0];
                (0..4).map(|j| (0, c.lo + 0.25 * j as f64 * c.param_length())).collect()
            }
        }
    }

    /// Panels per chart used by default: every corner point is a vertex and
    /// every corner has two panels to itself on each side.
    pub fn default_panels_per_chart(&self) -> usize {
        match self.kind {
            GeometryKind::Square => 2,
            GeometryKind::Circle | GeometryKind::Ellipse => 8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_perimeter_and_charts() {
        let g = Geometry::square(0.5).unwrap();
        assert_eq!(g.num_charts(), 4);
        assert_relative_eq!(g.length(), 2.0, max_relative = 1e-15);
        for i in 0..4 {
            let c = g.charts()[i];
            for t in [c.lo, 0.5 * (c.lo + c.hi), c.hi] {
                assert_relative_eq!(g.chart_speed(i, t).unwrap(), 0.5 / c.param_length(), max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn circle_speed_is_radius() {
        let g = Geometry::circle(0.5).unwrap();
        for k in 0..50 {
            let t = 2.0 * PI * k as f64 / 50.0;
            assert_relative_eq!(g.chart_speed(0, t).unwrap(), 0.25, max_relative = 1e-15);
        }
    }

    #[test]
    fn ellipse_speed_at_zero() {
        let g = Geometry::ellipse(0.5, 2.0).unwrap();
        assert_relative_eq!(g.chart_speed(0, 0.0).unwrap(), 0.125, max_relative = 1e-15);
    }

    #[test]
    fn ellipse_length_matches_adaptive_quadrature() {
        let g = Geometry::ellipse(0.5, 2.0).unwrap();
        let oracle = g.arc_length_adaptive(0, 0.0, 2.0 * PI, 1e-14);
        assert_relative_eq!(g.length(), oracle, max_relative = 1e-10);
    }

    #[test]
    fn diameter_guard() {
        assert!(matches!(Geometry::square(0.8), Err(Error::CoercivityRisk { .. })));
        assert!(Geometry::square(0.7).is_ok());
        assert!(matches!(Geometry::circle(1.2), Err(Error::CoercivityRisk { .. })));
        assert!(matches!(Geometry::ellipse(0.5, 0.4), Err(Error::CoercivityRisk { .. })));
        assert!(Geometry::new(GeometryKind::Circle, -1.0, 1.0).is_err());
    }

    #[test]
    fn domain_errors() {
        let g = Geometry::square(0.5).unwrap();
        assert!(matches!(g.chart_eval(1, 0.5), Err(Error::Domain { .. })));
        assert!(g.chart_speed(0, 1.5).is_err());
        assert!(g.chart_eval(7, 0.0).is_err());
    }

    #[test]
    fn closed_curve_gluing() {
        for g in [Geometry::square(0.5).unwrap(), Geometry::ellipse(0.5, 2.0).unwrap()] {
            let n = g.num_charts();
            for i in 0..n {
                let c = g.charts()[i];
                let d = g.charts()[(i + 1) % n];
                let end = g.chart_eval(i, c.hi).unwrap();
                let start = g.chart_eval((i + 1) % n, d.lo).unwrap();
                assert!((end[0] - start[0]).abs() < 1e-15 && (end[1] - start[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn speed_positive_on_samples() {
        for g in [
            Geometry::square(0.5).unwrap(),
            Geometry::circle(0.5).unwrap(),
            Geometry::ellipse(0.5, 2.0).unwrap(),
        ] {
            for (i, c) in g.charts().iter().enumerate() {
                for k in 0..=1000 {
                    let t = c.lo + c.param_length() * k as f64 / 1000.0;
                    assert!(g.chart_speed(i, t).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn chord_matches_direct_difference() {
        let g = Geometry::square(0.5).unwrap();
        // across the junction between chart 0 and chart 1
        let p = CurvePoint::new(0, 1.0, -0.25);
        let q = CurvePoint::new(1, 2.0, 0.5);
        let d = g.chord(&p, &q);
        let x = g.chart_eval(0, 0.75).unwrap();
        let y = g.chart_eval(1, 2.5).unwrap();
        assert_relative_eq!(d[0], y[0] - x[0], epsilon = 1e-15);
        assert_relative_eq!(d[1], y[1] - x[1], epsilon = 1e-15);
        // reversed order and across the seam of the last chart
        let r = g.chord(&q, &p);
        assert_relative_eq!(r[0], -d[0], epsilon = 1e-15);
        let p = CurvePoint::new(3, 7.0, 1e-9);
        let q = CurvePoint::new(0, 0.0, 1e-9);
        let d = g.chord(&p, &q);
        assert_relative_eq!(d[0].hypot(d[1]), 0.5e-9 * 2f64.sqrt(), max_relative = 1e-12);

        let e = Geometry::ellipse(0.5, 2.0).unwrap();
        let p = CurvePoint::new(0, 2.0 * PI, -1e-10);
        let q = CurvePoint::new(0, 0.0, 1e-10);
        let d = e.chord(&p, &q);
        // near t = 0 the curve moves vertically with speed b
        assert_relative_eq!(d[1], 2e-10 * 0.125, max_relative = 1e-9);
    }
}
