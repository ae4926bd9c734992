//! Minkowski space `R^{1,n}` and the hyperboloid model of `H^n`.
//!
//! Interior points are unit future timelike vectors, boundary points are
//! isotropic rays stored with time coordinate 1.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};

/// Relative tolerance on `<v,v> = 1` (interior) or `<v,v> = 0` (boundary).
pub const POINT_TOL: f64 = 1e-10;
/// Above this the inner product is handled as `arccosh u ~ log 2u`.
pub const LOG_DOMAIN_THRESHOLD: f64 = 1e15;
/// Rays closer than this angle are the same boundary point.
pub const RAY_ANGLE_TOL: f64 = 1e-12;
/// Arclength tolerance of the golden-section segment search.
pub const GOLDEN_TOL: f64 = 1e-9;

/// `log(1 + sqrt 2) = asinh 1`, the hull-to-skeleton bound.
pub fn hull_bound() -> f64 {
    1f64.asinh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinkVector {
    coords: DVector<f64>,
}

impl MinkVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(coords))
    }

    pub fn from_dvector(coords: DVector<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(GeoError::InvalidInput(format!(
                "Minkowski vector needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeoError::InvalidInput("non-finite coordinate".into()));
        }
        Ok(MinkVector { coords })
    }

    /// Spatial dimension `n` of `R^{1,n}`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }
}

/// `x0 y0 - sum x_i y_i` on raw coordinate vectors of equal length.
#[inline]
pub fn inner(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut s = u[0] * v[0];
    for i in 1..u.len() {
        s -= u[i] * v[i];
    }
    s
}

pub fn mink_inner(u: &MinkVector, v: &MinkVector) -> Result<f64> {
    if u.coords.len() != v.coords.len() {
        return Err(GeoError::DimensionMismatch {
            expected: u.coords.len(),
            got: v.coords.len(),
        });
    }
    Ok(inner(&u.coords, &v.coords))
}

/// Point of the upper sheet of the hyperboloid `<v,v> = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPoint {
    v: DVector<f64>,
}

impl HPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let m = MinkVector::new(coords)?;
        let v = m.coords;
        let q = inner(&v, &v);
        if v[0] <= 0.0 {
            return Err(GeoError::InvalidPoint("interior point must have c0 > 0".into()));
        }
        if (q - 1.0).abs() > POINT_TOL * v[0] * v[0] {
            return Err(GeoError::InvalidPoint(format!("<v,v> = {q}, expected 1")));
        }
        // recompute c0 from the spatial part; dividing by sqrt(q) would inherit
        // the cancellation in q for far-away points
        let spatial: Vec<f64> = v.iter().skip(1).copied().collect();
        Ok(Self::from_spatial(&spatial))
    }

    /// Basepoint `e_0` of `H^n`.
    pub fn origin(n: usize) -> Self {
        let mut v = DVector::zeros(n + 1);
        v[0] = 1.0;
        HPoint { v }
    }

    /// Lift of a spatial vector to the hyperboloid, `(sqrt(1+|s|^2), s)`.
    pub fn from_spatial(s: &[f64]) -> Self {
        let mut v = DVector::zeros(s.len() + 1);
        v[0] = (1.0 + s.iter().map(|x| x * x).sum::<f64>()).sqrt();
        for (i, x) in s.iter().enumerate() {
            v[i + 1] = *x;
        }
        HPoint { v }
    }

    /// Normalize a timelike vector onto the upper sheet.
    pub fn from_timelike(v: DVector<f64>) -> Result<Self> {
        let q = inner(&v, &v);
        let e = v.norm_squared();
        if !(q > 1e-14 * e) || !q.is_finite() {
            return Err(GeoError::InvalidPoint("vector is not timelike".into()));
        }
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        Ok(HPoint { v: v * (sign / q.sqrt()) })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.v.len() - 1
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.v.iter().copied().collect()
    }
}

/// Isotropic ray of the upper light cone, stored with `c0 = 1` and unit spatial part.
#[derive(Debug, Clone, PartialEq)]
pub struct BPoint {
    v: DVector<f64>,
}

impl BPoint {
    /// Accepts any positive representative of the ray.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let m = MinkVector::new(coords)?;
        let v = m.coords;
        if v[0] <= 0.0 {
            return Err(GeoError::InvalidPoint("boundary ray must have c0 > 0".into()));
        }
        let q = inner(&v, &v);
        if q.abs() > POINT_TOL * v.norm_squared() {
            return Err(GeoError::InvalidPoint(format!("<v,v> = {q}, expected 0")));
        }
        let spatial = v.rows(1, v.len() - 1).into_owned();
        Ok(Self::from_unit(spatial.normalize()))
    }

    /// Ray `(1, u/|u|)` through a nonzero spatial direction.
    pub fn from_direction(u: &[f64]) -> Result<Self> {
        let s = DVector::from_column_slice(u);
        let n = s.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(GeoError::InvalidPoint("zero or non-finite direction".into()));
        }
        Ok(Self::from_unit(s / n))
    }

    fn from_unit(u: DVector<f64>) -> Self {
        let mut v = DVector::zeros(u.len() + 1);
        v[0] = 1.0;
        v.rows_mut(1, u.len()).copy_from(&u);
        BPoint { v }
    }

    /// Ray through an arbitrary nonzero isotropic (or nearly isotropic) vector,
    /// used for eigenvectors and images under isometries.
    pub fn from_isotropic(v: &DVector<f64>) -> Result<Self> {
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        let w = v * sign;
        if !(w[0] > 0.0) {
            return Err(GeoError::InvalidPoint("null vector has no time component".into()));
        }
        let spatial = w.rows(1, w.len() - 1).into_owned();
        let n = spatial.norm();
        if (n - w[0]).abs() > 1e-6 * w[0] {
            return Err(GeoError::InvalidPoint("vector is not isotropic".into()));
        }
        Ok(Self::from_unit(spatial / n))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.v.len() - 1
    }

    pub fn direction(&self) -> DVector<f64> {
        self.v.rows(1, self.v.len() - 1).into_owned()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.v.iter().copied().collect()
    }
}

/// `<xi, eta>` for two normalized rays, computed as `|u - w|^2 / 2` to avoid
/// cancellation when the rays are close.
pub fn ray_pairing(a: &BPoint, b: &BPoint) -> f64 {
    let n = a.v.len();
    let mut s = 0.0;
    for i in 1..n {
        let d = a.v[i] - b.v[i];
        s += d * d;
    }
    0.5 * s
}

/// Angle between the spatial directions of two rays.
pub fn ray_angle(a: &BPoint, b: &BPoint) -> f64 {
    let chord = (2.0 * ray_pairing(a, b)).sqrt();
    2.0 * (0.5 * chord).min(1.0).asin()
}

pub fn same_ray(a: &BPoint, b: &BPoint) -> bool {
    ray_angle(a, b) < RAY_ANGLE_TOL
}

/// Interior or ideal point. JSON form is `{"kind": "interior"|"boundary", "coords": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PointJson", try_from = "PointJson")]
pub enum Point {
    Interior(HPoint),
    Boundary(BPoint),
}

impl Point {
    pub fn coords(&self) -> &DVector<f64> {
        match self {
            Point::Interior(p) => p.coords(),
            Point::Boundary(b) => b.coords(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords().len() - 1
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Point::Boundary(_))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PointKind {
    Interior,
    Boundary,
}

#[derive(Serialize, Deserialize)]
struct PointJson {
    kind: PointKind,
    coords: Vec<f64>,
}

impl From<Point> for PointJson {
    fn from(p: Point) -> Self {
        let kind = if p.is_boundary() { PointKind::Boundary } else { PointKind::Interior };
        PointJson { kind, coords: p.coords().iter().copied().collect() }
    }
}

impl TryFrom<PointJson> for Point {
    type Error = GeoError;

    fn try_from(j: PointJson) -> Result<Self> {
        Ok(match j.kind {
            PointKind::Interior => Point::Interior(HPoint::new(j.coords)?),
            PointKind::Boundary => Point::Boundary(BPoint::new(j.coords)?),
        })
    }
}

impl Serialize for HPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Point::Interior(self.clone()).serialize(s)
    }
}

impl Serialize for BPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Point::Boundary(self.clone()).serialize(s)
    }
}

impl From<HPoint> for Point {
    fn from(p: HPoint) -> Self {
        Point::Interior(p)
    }
}

impl From<BPoint> for Point {
    fn from(b: BPoint) -> Self {
        Point::Boundary(b)
    }
}

/// `arccosh u` for `u >= 1`, switching to `log 2u` above the log-domain threshold.
pub fn arccosh_stable(u: f64) -> f64 {
    if u <= 1.0 {
        0.0
    } else if u > LOG_DOMAIN_THRESHOLD {
        u.ln() + std::f64::consts::LN_2
    } else {
        u.acosh()
    }
}

/// `arccosh(exp(log_u))`, never forming `exp(log_u)` when it is large.
pub fn arccosh_of_log(log_u: f64) -> f64 {
    if log_u <= 0.0 {
        0.0
    } else if log_u > LOG_DOMAIN_THRESHOLD.ln() {
        log_u + std::f64::consts::LN_2
    } else {
        log_u.exp().acosh()
    }
}

/// `log cosh d`, stable for large `d`.
pub fn log_cosh(d: f64) -> f64 {
    let a = d.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Distance on raw unit timelike vectors; no validation.
pub fn dist_raw(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let u = inner(x, y);
    if u > 2.0 {
        return arccosh_stable(u);
    }
    // chord form: -<x-y, x-y> = 4 sinh^2(d/2), accurate for nearby points
    let mut q = -(x[0] - y[0]).powi(2);
    for i in 1..x.len() {
        q += (x[i] - y[i]).powi(2);
    }
    2.0 * (0.5 * q.max(0.0).sqrt()).asinh()
}

pub fn hdist(x: &HPoint, y: &HPoint) -> Result<f64> {
    if x.v.len() != y.v.len() {
        return Err(GeoError::DimensionMismatch {
            expected: x.v.len(),
            got: y.v.len(),
        });
    }
    let u = inner(&x.v, &y.v);
    if u < 1.0 - 1e-9 {
        return Err(GeoError::InvalidPoint(format!(
            "<x,y> = {u} < 1: not points of the same sheet"
        )));
    }
    Ok(dist_raw(&x.v, &y.v))
}

fn check_dims(pts: &[&DVector<f64>]) -> Result<()> {
    let n = pts[0].len();
    for p in pts {
        if p.len() != n {
            return Err(GeoError::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Gromov product `(x|y)_o` with interior basepoint; ideal arguments use the
/// Minkowski-lift extension. Equal ideal arguments give `+inf`.
pub fn gromov_product(x: &Point, y: &Point, o: &Point) -> Result<f64> {
    check_dims(&[x.coords(), y.coords(), o.coords()])?;
    let o = match o {
        Point::Interior(o) => o,
        Point::Boundary(_) => {
            return Err(GeoError::InvalidInput(
                "Gromov product needs an interior basepoint".into(),
            ))
        }
    };
    match (x, y) {
        (Point::Interior(x), Point::Interior(y)) => {
            Ok(0.5 * (dist_raw(&o.v, &x.v) + dist_raw(&o.v, &y.v) - dist_raw(&x.v, &y.v)))
        }
        (Point::Boundary(b), Point::Interior(p)) | (Point::Interior(p), Point::Boundary(b)) => {
            let ratio = inner(&b.v, &p.v) / inner(&b.v, &o.v);
            Ok(0.5 * (dist_raw(&o.v, &p.v) - ratio.ln()))
        }
        (Point::Boundary(a), Point::Boundary(b)) => {
            if same_ray(a, b) {
                return Ok(f64::INFINITY);
            }
            let num = 2.0 * inner(&a.v, &o.v) * inner(&b.v, &o.v);
            Ok(0.5 * (num / ray_pairing(a, b)).ln())
        }
    }
}

/// Visual (meta)metric `exp(-eps (x|y)_o)`.
pub fn visual_metric(x: &Point, y: &Point, o: &Point, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(GeoError::InvalidInput("visual parameter must be positive".into()));
    }
    let g = gromov_product(x, y, o)?;
    Ok(if g == f64::INFINITY { 0.0 } else { (-eps * g).exp() })
}

/// Busemann cocycle `Bus_xi(y, z) = log(<xi,y>/<xi,z>)`.
pub fn busemann(xi: &BPoint, y: &HPoint, z: &HPoint) -> Result<f64> {
    check_dims(&[&xi.v, &y.v, &z.v])?;
    Ok((inner(&xi.v, &y.v) / inner(&xi.v, &z.v)).ln())
}

/// Hamenstädt metric on `∂H \ {inf}` seen from `o`.
pub fn hamenstadt_metric(x: &BPoint, y: &BPoint, o: &HPoint, inf: &BPoint, eps: f64) -> Result<f64> {
    check_dims(&[&x.v, &y.v, &o.v, &inf.v])?;
    if same_ray(x, inf) || same_ray(y, inf) {
        return Err(GeoError::InvalidInput(
            "Hamenstadt metric is undefined at the point at infinity".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(GeoError::InvalidInput("visual parameter must be positive".into()));
    }
    if same_ray(x, y) {
        return Ok(0.0);
    }
    let oi = inner(&o.v, &inf.v);
    let q = 2.0 * ray_pairing(x, y) * oi * oi / (ray_pairing(x, inf) * ray_pairing(y, inf));
    Ok(q.powf(0.5 * eps))
}

/// Endpoints of a geodesic together with an arclength parameter.
#[derive(Debug, Clone)]
pub struct GeodesicParam {
    pub start: Point,
    pub end: Point,
    pub s: f64,
}

/// Parametrized geodesic between two points of `H^n ∪ ∂H^n`.
///
/// Interior-interior: `s ∈ [0, d]` from `start`. With one ideal endpoint the
/// parameter is the distance from the interior endpoint, `s ∈ [0, ∞)`. With two
/// ideal endpoints `s ∈ R` is signed, `s = 0` at the foot of the perpendicular
/// from `e_0`, increasing toward `end`.
#[derive(Debug, Clone)]
pub struct Geodesic {
    kind: GeoKind,
}

#[derive(Debug, Clone)]
enum GeoKind {
    Segment { x: DVector<f64>, y: DVector<f64>, len: f64 },
    Ray { x: DVector<f64>, dir: DVector<f64> },
    Line { a: DVector<f64>, b: DVector<f64>, norm: f64 },
}

impl Geodesic {
    pub fn new(start: &Point, end: &Point) -> Result<Self> {
        check_dims(&[start.coords(), end.coords()])?;
        let kind = match (start, end) {
            (Point::Interior(x), Point::Interior(y)) => {
                let len = dist_raw(&x.v, &y.v);
                if len <= 1e-12 {
                    return Err(GeoError::Degenerate("geodesic endpoints coincide".into()));
                }
                GeoKind::Segment { x: x.v.clone(), y: y.v.clone(), len }
            }
            (Point::Interior(x), Point::Boundary(b)) | (Point::Boundary(b), Point::Interior(x)) => {
                // x e^{-s} + sinh(s) xi/<x,xi> runs from x toward xi at unit speed
                let dir = &b.v / inner(&x.v, &b.v);
                GeoKind::Ray { x: x.v.clone(), dir }
            }
            (Point::Boundary(a), Point::Boundary(b)) => {
                if same_ray(a, b) {
                    return Err(GeoError::Degenerate("geodesic endpoints coincide".into()));
                }
                let norm = (2.0 * ray_pairing(a, b)).sqrt();
                GeoKind::Line { a: a.v.clone(), b: b.v.clone(), norm }
            }
        };
        Ok(Geodesic { kind })
    }

    /// Parameter interval; infinite ends are reported as infinities.
    pub fn range(&self) -> (f64, f64) {
        match &self.kind {
            GeoKind::Segment { len, .. } => (0.0, *len),
            GeoKind::Ray { .. } => (0.0, f64::INFINITY),
            GeoKind::Line { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn point_at(&self, s: f64) -> DVector<f64> {
        let v = match &self.kind {
            GeoKind::Segment { x, y, len } => {
                let sh = len.sinh();
                x * ((len - s).sinh() / sh) + y * (s.sinh() / sh)
            }
            GeoKind::Ray { x, dir } => x * (-s).exp() + dir * s.sinh(),
            GeoKind::Line { a, b, norm } => (a * (-s).exp() + b * s.exp()) / *norm,
        };
        let q = inner(&v, &v);
        v / q.sqrt()
    }

    pub fn point(&self, s: f64) -> Result<HPoint> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (1.0 + s.abs());
        if !s.is_finite() || s < lo - slack || s > hi + slack {
            return Err(GeoError::InvalidInput(format!(
                "parameter {s} outside [{lo}, {hi}]"
            )));
        }
        Ok(HPoint { v: self.point_at(s.clamp(lo, hi)) })
    }

    /// Distance from `p` to the geodesic, by golden-section search.
    pub fn distance_to(&self, p: &DVector<f64>) -> f64 {
        let (lo, hi) = match &self.kind {
            GeoKind::Segment { len, .. } => (0.0, *len),
            GeoKind::Ray { x, .. } => {
                // the minimizer lies within 2 d(p, x) of x
                (0.0, 2.0 * dist_raw(p, x) + 1.0)
            }
            GeoKind::Line { .. } => {
                let r = 2.0 * dist_raw(p, &self.point_at(0.0)) + 1.0;
                (-r, r)
            }
        };
        let (_, fmin) = golden_section(|s| dist_raw(p, &self.point_at(s)), lo, hi, GOLDEN_TOL);
        fmin
    }
}

pub fn geodesic_point(g: &GeodesicParam) -> Result<HPoint> {
    Geodesic::new(&g.start, &g.end)?.point(g.s)
}

/// Minimize a unimodal function on `[lo, hi]`; returns `(argmin, min)`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = (c, fc);
    for s in [a, b, d] {
        let v = f(s);
        if v < best.1 {
            best = (s, v);
        }
    }
    let (fa, fb) = (f(lo), f(hi));
    if fa < best.1 {
        best = (lo, fa);
    }
    if fb < best.1 {
        best = (hi, fb);
    }
    best
}

/// Largest sampled distance from the convex hull to its 1-skeleton.
///
/// Samples are Minkowski convex combinations with Dirichlet(1,...,1) weights,
/// normalized back to the hyperboloid.
pub fn hull_skeleton_gap(points: &[Point], sample_count: usize, seed: u64) -> Result<f64> {
    if points.len() < 2 {
        return Err(GeoError::InvalidInput(
            "hull check needs at least 2 points".into(),
        ));
    }
    let dims: Vec<&DVector<f64>> = points.iter().map(|p| p.coords()).collect();
    check_dims(&dims)?;
    if points.len() == 2 {
        return Ok(0.0);
    }
    let mut edges = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            match Geodesic::new(&points[i], &points[j]) {
                Ok(g) => edges.push(g),
                Err(GeoError::Degenerate(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if edges.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points[0].coords().len();
    let mut worst = 0.0_f64;
    for _ in 0..sample_count {
        let w: Vec<f64> = (0..points.len()).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        let mut v = DVector::zeros(n);
        for (wi, p) in w.iter().zip(points) {
            v += p.coords() * (wi / total);
        }
        let p = HPoint::from_timelike(v)?;
        let gap = edges
            .iter()
            .map(|e| e.distance_to(&p.v))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_json_round_trip() {
        let p = Point::Interior(HPoint::from_spatial(&[0.5, -2.0]));
        let b = Point::Boundary(BPoint::from_direction(&[3.0, 4.0]).unwrap());
        for q in [p, b] {
            let s = serde_json::to_string(&q).unwrap();
            let back: Point = serde_json::from_str(&s).unwrap();
            assert!((back.coords() - q.coords()).amax() < 1e-15);
            assert_eq!(back.is_boundary(), q.is_boundary());
        }
        let bad = r#"{"kind":"interior","coords":[1.0,1.0]}"#;
        assert!(serde_json::from_str::<Point>(bad).is_err());
    }

    fn boosted(t: f64) -> HPoint {
        HPoint::new(vec![t.cosh(), t.sinh(), 0.0]).unwrap()
    }

    #[test]
    fn inner_basics() {
        let e0 = MinkVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(mink_inner(&e0, &e0).unwrap(), 1.0);
        let t = 0.8_f64;
        let b = MinkVector::new(vec![t.cosh(), t.sinh(), 0.0]).unwrap();
        assert!((mink_inner(&b, &e0).unwrap() - t.cosh()).abs() < 1e-15);
        let short = MinkVector::new(vec![1.0, 0.0]).unwrap();
        assert!(mink_inner(&e0, &short).is_err());
    }

    #[test]
    fn paraboloid_lift_pairing() {
        let lift = |v: &[f64]| {
            let q: f64 = v.iter().map(|x| x * x).sum();
            let mut c = vec![(1.0 + q) / 2.0, (1.0 - q) / 2.0];
            c.extend_from_slice(v);
            DVector::from_vec(c)
        };
        let (u, w): ([f64; 2], [f64; 2]) = ([0.3, -1.2], [2.0, 0.5]);
        let expect = ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2)) / 2.0;
        assert!((inner(&lift(&u), &lift(&w)) - expect).abs() < 1e-14);
    }

    #[test]
    fn distance_along_axis() {
        let o = HPoint::origin(2);
        assert_eq!(hdist(&o, &o).unwrap(), 0.0);
        for t in [1e-7, 0.3, 5.0, 40.0] {
            assert!((hdist(&o, &boosted(t)).unwrap() - t).abs() < 1e-12 * (1.0 + t));
        }
    }

    #[test]
    fn distance_log_domain() {
        let t = 40.0_f64;
        let far = HPoint::new(vec![t.cosh(), t.sinh(), 0.0]).unwrap();
        let back = HPoint::new(vec![t.cosh(), -t.sinh(), 0.0]).unwrap();
        assert!((hdist(&far, &back).unwrap() - 2.0 * t).abs() < 1e-12 * t);
        assert!((arccosh_of_log(100.0) - (100.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_cosh(3.0) - 3f64.cosh().ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(HPoint::new(vec![-1.0, 0.0]).is_err());
        assert!(HPoint::new(vec![2.0, 0.0]).is_err());
        assert!(BPoint::new(vec![1.0, 0.5, 0.0]).is_err());
        let b = BPoint::new(vec![3.0, 0.0, 3.0]).unwrap();
        assert_eq!(b.to_vec(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn gromov_product_cases() {
        let o = Point::from(HPoint::origin(2));
        let x = Point::from(boosted(1.0));
        let y = Point::from(boosted(-2.0));
        assert!(gromov_product(&x, &y, &o).unwrap().abs() < 1e-12);
        let g = gromov_product(&x, &x, &o).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let xi = Point::from(BPoint::from_direction(&[1.0, 0.0]).unwrap());
        assert_eq!(gromov_product(&xi, &xi, &o).unwrap(), f64::INFINITY);
        assert!(gromov_product(&x, &y, &xi).is_err());
    }

    #[test]
    fn boundary_gromov_product_is_a_limit() {
        let o = HPoint::origin(2);
        let a = BPoint::from_direction(&[1.0, 0.3]).unwrap();
        let b = BPoint::from_direction(&[-0.2, 1.0]).unwrap();
        let exact = gromov_product(&a.clone().into(), &b.clone().into(), &o.clone().into()).unwrap();
        let march = |xi: &BPoint, s: f64| {
            let g = Geodesic::new(&o.clone().into(), &xi.clone().into()).unwrap();
            Point::from(g.point(s).unwrap())
        };
        let mut prev = f64::INFINITY;
        for s in [4.0, 8.0, 12.0] {
            let approx = gromov_product(&march(&a, s), &march(&b, s), &o.clone().into()).unwrap();
            let err = (approx - exact).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn visual_metric_cases() {
        let o = Point::from(HPoint::origin(2));
        let xi = Point::from(BPoint::from_direction(&[1.0, 0.0]).unwrap());
        assert_eq!(visual_metric(&xi, &xi, &o, 1.0).unwrap(), 0.0);
        let x = Point::from(boosted(1.0));
        let y = Point::from(boosted(-2.0));
        assert!((visual_metric(&x, &y, &o, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let z = Point::from(HPoint::from_spatial(&[0.4, 0.9]));
        let d1 = visual_metric(&x, &z, &o, 1.0).unwrap();
        let d2 = visual_metric(&x, &z, &o, 2.0).unwrap();
        assert!((d2 - d1 * d1).abs() < 1e-14);
    }

    #[test]
    fn busemann_along_ray() {
        let xi = BPoint::from_direction(&[1.0, 0.0]).unwrap();
        let y = boosted(0.5);
        let z = boosted(2.0);
        assert_eq!(busemann(&xi, &y, &y).unwrap(), 0.0);
        assert!((busemann(&xi, &y, &z).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn hamenstadt_scales_like_euclidean_distance() {
        // upper half-plane boundary points embedded by the paraboloid lift
        let lift = |t: f64| BPoint::new(vec![(1.0 + t * t) / 2.0, (1.0 - t * t) / 2.0, t]).unwrap();
        let inf = BPoint::new(vec![0.5, -0.5, 0.0]).unwrap();
        let o = HPoint::origin(2);
        let pairs = [(0.0, 1.0), (-2.0, 3.0), (0.5, 0.7)];
        let ratios: Vec<f64> = pairs
            .iter()
            .map(|&(a, b)| hamenstadt_metric(&lift(a), &lift(b), &o, &inf, 1.0).unwrap() / (b - a))
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-12 * ratios[0]);
        }
        assert_eq!(hamenstadt_metric(&lift(1.0), &lift(1.0), &o, &inf, 1.0).unwrap(), 0.0);
        assert!(hamenstadt_metric(&inf, &lift(1.0), &o, &inf, 1.0).is_err());
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let x = HPoint::from_spatial(&[0.3, -0.4, 1.0]);
        let y = HPoint::from_spatial(&[-1.0, 0.2, 0.5]);
        let d = hdist(&x, &y).unwrap();
        let param = |s| GeodesicParam { start: x.clone().into(), end: y.clone().into(), s };
        let p0 = geodesic_point(&param(0.0)).unwrap();
        let p1 = geodesic_point(&param(d)).unwrap();
        assert!(hdist(&p0, &x).unwrap() < 1e-12);
        assert!(hdist(&p1, &y).unwrap() < 1e-12);
        let m = geodesic_point(&param(d / 2.0)).unwrap();
        assert!((hdist(&m, &x).unwrap() - hdist(&m, &y).unwrap()).abs() < 1e-12);
        assert!(geodesic_point(&param(d + 1.0)).is_err());
    }

    #[test]
    fn ideal_geodesics_have_unit_speed() {
        let o = HPoint::origin(2);
        let a = BPoint::from_direction(&[1.0, 0.0]).unwrap();
        let b = BPoint::from_direction(&[0.0, 1.0]).unwrap();
        let ray = Geodesic::new(&o.clone().into(), &a.clone().into()).unwrap();
        let p = ray.point(2.5).unwrap();
        assert!((hdist(&o, &p).unwrap() - 2.5).abs() < 1e-12);
        let line = Geodesic::new(&a.into(), &b.into()).unwrap();
        let (p, q) = (line.point(-1.0).unwrap(), line.point(1.5).unwrap());
        assert!((hdist(&p, &q).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn hull_of_two_points_is_its_edge() {
        let pts = vec![Point::from(HPoint::origin(2)), Point::from(boosted(1.0))];
        assert_eq!(hull_skeleton_gap(&pts, 10, 0).unwrap(), 0.0);
        assert!(hull_skeleton_gap(&pts[..1], 10, 0).is_err());
    }

    #[test]
    fn hull_of_equilateral_triangle() {
        // three points at mutual distance 1 around the origin of H^2
        let c = 1f64.cosh();
        // circumradius r with cosh 1 = cosh^2 r - sinh^2 r cos(2pi/3)
        let r = ((c - 1.0) / 1.5 + 1.0).sqrt().acosh();
        let pts: Vec<Point> = (0..3)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                HPoint::new(vec![r.cosh(), r.sinh() * a.cos(), r.sinh() * a.sin()])
                    .unwrap()
                    .into()
            })
            .collect();
        let gap = hull_skeleton_gap(&pts, 300, 7).unwrap();
        assert!(gap > 0.0 && gap <= hull_bound() + 1e-9);
    }
}
