//! Gauss rules on `[0, 1]`, graded product rules for log-singular panel
//! pairs, and an adaptive Gauss–Kronrod integrator used as a test oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Geometric grading ratio of the singular panel-pair rules.
pub const GRADING_RATIO: f64 = 0.15;

/// Number of graded layers: `ceil(log(1e-12) / log(0.15))`.
pub fn grading_depth() -> usize {
    (1e-12f64.ln() / GRADING_RATIO.ln()).ceil() as usize
}

/// A one-dimensional rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Highest monomial degree integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton's method
/// on the three-term recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged node
        let mut p0 = 1.0;
        let mut p1 = 0.0;
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        if n > 0 {
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `n`-point Gauss–Legendre rule on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_rule(n: usize) -> Result<QuadRule> {
    if !(1..=64).contains(&n) {
        return Err(Error::InvalidParameter(format!("Gauss rule needs 1..=64 points, got {n}")));
    }
    let (x, w) = gauss_legendre(n);
    Ok(QuadRule {
        nodes: x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        degree: 2 * n - 1,
    })
}

/// Composite Gauss rule over `[a, b]` with `pieces` equal sub-intervals.
pub fn gauss_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, pieces: usize) -> f64 {
    let rule = gauss_rule(n).expect("valid Gauss size");
    let h = (b - a) / pieces as f64;
    let mut sum = 0.0;
    for k in 0..pieces {
        let lo = a + h * k as f64;
        sum += h * rule.integrate(|x| f(lo + h * x));
    }
    sum
}

/// Composite Gauss rule on `[0, 1]` refined geometrically toward 0.
pub fn graded_rule(n: usize, ratio: f64, depth: usize) -> Result<QuadRule> {
    let base = gauss_rule(n)?;
    let mut nodes = Vec::with_capacity(n * (depth + 1));
    let mut weights = Vec::with_capacity(n * (depth + 1));
    let mut hi = 1.0;
    for _ in 0..depth {
        let lo = hi * ratio;
        for (x, w) in base.iter() {
            nodes.push(lo + (hi - lo) * x);
            weights.push((hi - lo) * w);
        }
        hi = lo;
    }
    for (x, w) in base.iter() {
        nodes.push(hi * x);
        weights.push(hi * w);
    }
    Ok(QuadRule { nodes, weights, degree: base.degree })
}

/// Geometrically graded rule whose layers lose points towards the singular
/// end: layer `j` carries weight `~ratio^j`, so `n - j` points keep the
/// absolute error per layer below that of the outermost one.
pub fn tapered_graded_rule(n: usize, ratio: f64, depth: usize) -> Result<QuadRule> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut hi = 1.0;
    for j in 0..=depth {
        let m = n.saturating_sub(j).max(3);
        let base = gauss_rule(m)?;
        let lo = if j == depth { 0.0 } else { hi * ratio };
        for (x, w) in base.iter() {
            nodes.push(lo + (hi - lo) * x);
            weights.push((hi - lo) * w);
        }
        hi = lo;
    }
    Ok(QuadRule { nodes, weights, degree: 2 * n - 1 })
}

/// Gauss points per graded layer. Each layer sees the log singularity at
/// relative distance `ratio / (1 - ratio)`, which needs a few more points than
/// the smooth tensor part for 1e-10 accuracy.
fn graded_points(base_n: usize) -> usize {
    (base_n + 4).min(64)
}

/// How two panels meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairRelation {
    Separated,
    /// Panels share exactly one vertex, placed at local coordinate 0 of both.
    Adjacent,
    Identical,
}

/// A product-domain point `(s, t)` together with `t - s` computed without
/// cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPoint {
    pub s: f64,
    pub t: f64,
    pub diff: f64,
}

/// A rule on the unit square `[0, 1]^2` in the local coordinates of two panels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRule {
    pub relation: PairRelation,
    pub points: Vec<PairPoint>,
    pub weights: Vec<f64>,
}

impl PairRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&PairPoint) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, &w)| w * f(p)).sum()
    }
}

/// Builds the product rule for a panel pair.
///
/// Identical panels are split along the diagonal and each triangle is mapped
/// to the square by a Duffy transform, which turns `log|s - t|` into
/// `log u + log w`; both variables are then graded toward 0. Adjacent panels
/// (common vertex at the origin) use the same split with grading in the
/// radial variable only.
pub fn pair_rule(relation: PairRelation, base_n: usize) -> Result<PairRule> {
    if base_n < 4 {
        return Err(Error::InvalidParameter(format!("pair rules need base_n >= 4, got {base_n}")));
    }
    let gauss = gauss_rule(base_n)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match relation {
        PairRelation::Separated => {
            for (s, ws) in gauss.iter() {
                for (t, wt) in gauss.iter() {
                    points.push(PairPoint { s, t, diff: t - s });
                    weights.push(ws * wt);
                }
            }
        }
        PairRelation::Identical => {
            let graded = tapered_graded_rule(graded_points(base_n), GRADING_RATIO, grading_depth())?;
            for (u, wu) in graded.iter() {
                for (w, ww) in graded.iter() {
                    let inner = u * (1.0 - w);
                    let d = u * w;
                    // t < s
                    points.push(PairPoint { s: u, t: inner, diff: -d });
                    weights.push(wu * ww * u);
                    // s < t
                    points.push(PairPoint { s: inner, t: u, diff: d });
                    weights.push(wu * ww * u);
                }
            }
        }
        PairRelation::Adjacent => {
            let graded = tapered_graded_rule(graded_points(base_n), GRADING_RATIO, grading_depth())?;
            for (u, wu) in graded.iter() {
                for (w, ww) in gauss.iter() {
                    let v = u * w;
                    points.push(PairPoint { s: u, t: v, diff: v - u });
                    weights.push(wu * ww * u);
                    points.push(PairPoint { s: v, t: u, diff: u - v });
                    weights.push(wu * ww * u);
                }
            }
        }
    }
    Ok(PairRule { relation, points, weights })
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let fsum = f(c - dx) + f(c + dx);
        kron += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest embedded error estimate until the
/// total estimate drops below `tol * |I|` (or `abs_tol`).
pub fn adaptive_integrate_with(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    const MAX_PIECES: usize = 20_000;
    let (value, error) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut count = 1;
    while total_err > rel_tol * total.abs() && total_err > abs_tol && count < MAX_PIECES {
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        let scale = worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if worst.b - worst.a <= 1.0e4 * f64::EPSILON * scale {
            // interval exhausted at machine precision
            heap.push(Piece { error: 0.0, ..worst });
            total_err = heap.iter().map(|p| p.error).sum();
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, m);
        let (v2, e2) = gk15(&f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: worst.b, value: v2, error: e2 });
        count += 1;
        if count % 512 == 0 {
            // refresh running sums against drift
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    heap.iter().map(|p| p.value).sum()
}

/// [`adaptive_integrate_with`] with a relative tolerance only.
pub fn adaptive_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_integrate_with(f, a, b, tol, 0.0)
}

/// Iterated adaptive integration over the box `[x0, x1] x [y0, y1]`.
///
/// `breaks` lists `y` positions (as functions of `x`) where the inner
/// integrand is singular; the inner interval is split there so each piece
/// sees the singularity at an endpoint.
pub fn adaptive_integrate_box(
    f: impl Fn(f64, f64) -> f64,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    tol: f64,
    breaks: &dyn Fn(f64) -> Vec<f64>,
) -> f64 {
    let inner = |x: f64| {
        let mut cuts: Vec<f64> = breaks(x).into_iter().filter(|&c| c > y0 && c < y1).collect();
        cuts.sort_by(f64::total_cmp);
        let mut pts = vec![y0];
        pts.extend(cuts);
        pts.push(y1);
        pts.windows(2)
            .filter(|w| w[1] - w[0] > 1.0e4 * f64::EPSILON * w[0].abs().max(w[1].abs()))
            .map(|w| adaptive_integrate_with(|y| f(x, y), w[0], w[1], 0.1 * tol, 1e-300))
            .sum::<f64>()
    };
    adaptive_integrate_with(inner, x0, x1, tol, 1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_point_rule() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.nodes, vec![0.5]);
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn gauss_exactness() {
        for n in [2usize, 5, 16, 33, 64] {
            let r = gauss_rule(n).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
            for k in 0..=(2 * n - 1).min(40) {
                let exact = 1.0 / (k as f64 + 1.0);
                assert_relative_eq!(r.integrate(|x| x.powi(k as i32)), exact, max_relative = 1e-13);
            }
        }
        let r = gauss_rule(16).unwrap();
        assert!((r.integrate(|x| x.powi(15)) - 1.0 / 16.0).abs() < 1e-14);
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(65).is_err());
    }

    #[test]
    fn two_point_rule_integrates_cubics() {
        let r = gauss_rule(2).unwrap();
        assert_relative_eq!(r.integrate(|x| 3.0 * x * x * x - x + 2.0), 0.75 - 0.5 + 2.0, max_relative = 1e-15);
    }

    #[test]
    fn grading_depth_value() {
        assert_eq!(grading_depth(), 15);
    }

    #[test]
    fn separated_rule_size() {
        assert_eq!(pair_rule(PairRelation::Separated, 8).unwrap().len(), 64);
        assert!(pair_rule(PairRelation::Separated, 3).is_err());
    }

    #[test]
    fn rules_have_positive_weights_and_unit_area() {
        for rel in [PairRelation::Separated, PairRelation::Adjacent, PairRelation::Identical] {
            let r = pair_rule(rel, 8).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn identical_log_kernel() {
        let r = pair_rule(PairRelation::Identical, 12).unwrap();
        let v = r.integrate(|p| p.diff.abs().ln());
        assert_relative_eq!(v, -1.5, max_relative = 1e-10);
    }

    #[test]
    fn adjacent_log_kernel_matches_oracle() {
        // two collinear unit panels meeting at the origin: distance s + t
        let r = pair_rule(PairRelation::Adjacent, 12).unwrap();
        let v = r.integrate(|p| (p.s + p.t).ln());
        let oracle = adaptive_integrate_box(|s, t| (s + t).ln(), (0.0, 1.0), (0.0, 1.0), 1e-13, &|_| vec![]);
        assert_relative_eq!(v, oracle, max_relative = 1e-9);
        // closed form: 2 ln 2 - 3/2
        assert_relative_eq!(oracle, 2.0 * 2f64.ln() - 1.5, max_relative = 1e-11);
    }

    #[test]
    fn adaptive_basics() {
        assert_relative_eq!(adaptive_integrate(|_| 1.0, 0.0, 1.0, 1e-12), 1.0, max_relative = 1e-15);
        assert!((adaptive_integrate(|t| t.ln(), 0.0, 1.0, 1e-12) + 1.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_ellipse_perimeter_matches_series() {
        let (a, b) = (0.25f64, 0.125f64);
        let len = adaptive_integrate(|t| (a * t.sin()).hypot(b * t.cos()), 0.0, 2.0 * PI, 1e-14);
        // Gauss–Kummer series in h = ((a - b) / (a + b))^2
        let h = ((a - b) / (a + b)).powi(2);
        let mut coef = 1.0f64; // binom(1/2, n)
        let mut series = 0.0;
        let mut hn = 1.0;
        for n in 0..60 {
            series += coef * coef * hn;
            coef *= (0.5 - n as f64) / (n as f64 + 1.0);
            hn *= h;
        }
        assert_relative_eq!(len, PI * (a + b) * series, max_relative = 1e-12);
    }

    #[test]
    fn box_oracle_identical_log() {
        let v = adaptive_integrate_box(|s, t| (s - t).abs().ln(), (0.0, 1.0), (0.0, 1.0), 1e-12, &|s| vec![s]);
        assert_relative_eq!(v, -1.5, max_relative = 1e-10);
    }
}
