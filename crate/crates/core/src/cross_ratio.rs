//! Cross-ratios of interior and ideal quadruples, the identity suite, abstract
//! cross-ratio tables and the `H^3` argument / complex-distance formulas.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::kernel_check::CheckReport;
use crate::mink_core::{dist_raw, ray_pairing, same_ray, BPoint, HPoint};

/// Multiplicative tolerance of the identity checks.
pub const IDENTITY_TOL: f64 = 1e-9;
/// `|cos| <= 1 + ARG_CLAMP_TOL` is clamped silently.
pub const ARG_CLAMP_TOL: f64 = 1e-9;
/// Beyond `1 + ARG_ERROR_TOL` the pair is rejected.
pub const ARG_ERROR_TOL: f64 = 1e-6;
/// Entries within this of 1 carry no exponent information.
pub const UNIT_ENTRY_TOL: f64 = 1e-12;

/// Value in `[0, inf]`, with infinity kept explicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XRValue {
    Finite(f64),
    Infinite,
}

impl XRValue {
    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            XRValue::Infinite
        } else {
            XRValue::Finite(v)
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            XRValue::Finite(v) => v,
            XRValue::Infinite => f64::INFINITY,
        }
    }

    pub fn ln(&self) -> f64 {
        self.value().ln()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, XRValue::Finite(v) if *v == 0.0)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, XRValue::Infinite)
    }

    /// Finite and strictly positive.
    pub fn is_regular(&self) -> bool {
        matches!(self, XRValue::Finite(v) if *v > 0.0)
    }

    pub fn recip(&self) -> XRValue {
        match *self {
            XRValue::Infinite => XRValue::Finite(0.0),
            XRValue::Finite(v) if v == 0.0 => XRValue::Infinite,
            XRValue::Finite(v) => XRValue::Finite(1.0 / v),
        }
    }

    pub fn powf(&self, t: f64) -> XRValue {
        match *self {
            XRValue::Infinite => XRValue::Infinite,
            XRValue::Finite(v) => XRValue::Finite(v.powf(t)),
        }
    }

    /// Product, or `None` for `0 * inf`.
    pub fn mul(&self, other: &XRValue) -> Option<XRValue> {
        match (*self, *other) {
            (XRValue::Infinite, o) | (o, XRValue::Infinite) => {
                if o.is_zero() {
                    None
                } else {
                    Some(XRValue::Infinite)
                }
            }
            (XRValue::Finite(a), XRValue::Finite(b)) => Some(XRValue::Finite(a * b)),
        }
    }
}

/// `|log a - log b|`, 0 when both are the same degenerate value, `inf` when
/// exactly one of them is degenerate.
pub fn log_deviation(a: &XRValue, b: &XRValue) -> f64 {
    match (a.is_regular(), b.is_regular()) {
        (true, true) => (a.ln() - b.ln()).abs(),
        (false, false) if a.is_zero() == b.is_zero() => 0.0,
        _ => f64::INFINITY,
    }
}

impl Serialize for XRValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            XRValue::Finite(v) => s.serialize_f64(*v),
            XRValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for XRValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v >= 0.0 => Ok(XRValue::from_f64(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("negative cross-ratio {v}"))),
            Raw::Word(w) => match w.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(XRValue::Infinite),
                other => Err(serde::de::Error::custom(format!("bad cross-ratio value {other:?}"))),
            },
        }
    }
}

pub type Quad = [usize; 4];

pub fn distinct_count(q: &[usize]) -> usize {
    let mut v = q.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Finite cross-ratio table on labelled points, indexed by label positions.
#[derive(Debug, Clone, PartialEq)]
pub struct XRTable {
    labels: Vec<String>,
    entries: BTreeMap<Quad, XRValue>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    quad: Quad,
    value: XRValue,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    #[serde(default)]
    labels: Option<Vec<String>>,
    entries: Vec<EntryJson>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TableInput {
    Full(TableJson),
    Bare(Vec<EntryJson>),
}

impl XRTable {
    pub fn new(labels: Vec<String>) -> Self {
        XRTable { labels, entries: BTreeMap::new() }
    }

    pub fn with_size(n: usize) -> Self {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, q: Quad, v: XRValue) -> Result<()> {
        if q.iter().any(|&i| i >= self.labels.len()) {
            return Err(GeoError::InvalidInput(format!("quadruple {q:?} out of range")));
        }
        if distinct_count(&q) < 3 {
            return Err(GeoError::InvalidInput(format!(
                "quadruple {q:?} has fewer than 3 distinct entries"
            )));
        }
        if let XRValue::Finite(x) = v {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(GeoError::InvalidInput(format!("bad value {x} at {q:?}")));
            }
        }
        self.entries.insert(q, v);
        Ok(())
    }

    pub fn get(&self, q: &Quad) -> Option<XRValue> {
        self.entries.get(q).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Quad, &XRValue)> {
        self.entries.iter()
    }

    /// Entry at `q`, falling back on the symmetries, inversion and the fibre
    /// rules when `q` itself is not stored.
    pub fn lookup(&self, q: &Quad) -> Option<XRValue> {
        let [a, b, c, d] = *q;
        for p in [[a, b, c, d], [c, d, a, b], [b, a, d, c], [d, c, b, a]] {
            if let Some(v) = self.get(&p) {
                return Some(v);
            }
        }
        for p in [[c, b, a, d], [a, d, c, b]] {
            if let Some(v) = self.get(&p) {
                return Some(v.recip());
            }
        }
        fibre_value(q)
    }

    /// Every quadruple with at least 3 distinct rays.
    pub fn from_rays(rays: &[BPoint]) -> Result<Self> {
        let n = rays.len();
        let mut t = XRTable::with_size(n);
        for q in all_quads(n) {
            let v = cr_boundary(&rays[q[0]], &rays[q[1]], &rays[q[2]], &rays[q[3]])?;
            t.entries.insert(q, v);
        }
        Ok(t)
    }

    /// Entrywise power `T^t`.
    pub fn power(&self, t: f64) -> XRTable {
        XRTable {
            labels: self.labels.clone(),
            entries: self.entries.iter().map(|(q, v)| (*q, v.powf(t))).collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let input: TableInput = serde_json::from_str(s)?;
        let (labels, entries) = match input {
            TableInput::Full(t) => (t.labels, t.entries),
            TableInput::Bare(e) => (None, e),
        };
        let labels = match labels {
            Some(l) => l,
            None => {
                let n = entries.iter().flat_map(|e| e.quad).max().map_or(0, |m| m + 1);
                (0..n).map(|i| i.to_string()).collect()
            }
        };
        let mut t = XRTable::new(labels);
        for e in entries {
            t.insert(e.quad, e.value)?;
        }
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = TableJson {
            labels: Some(self.labels.clone()),
            entries: self.entries.iter().map(|(q, v)| EntryJson { quad: *q, value: *v }).collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }
}

/// All quadruples over `0..n` with at least 3 distinct entries.
pub fn all_quads(n: usize) -> Vec<Quad> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let q = [a, b, c, d];
                    if distinct_count(&q) >= 3 {
                        out.push(q);
                    }
                }
            }
        }
    }
    out
}

/// Value forced by coincidences among the indices, if any.
pub fn fibre_value(q: &Quad) -> Option<XRValue> {
    let [a, b, c, d] = *q;
    if a == b || c == d {
        Some(XRValue::Finite(0.0))
    } else if a == d || c == b {
        Some(XRValue::Infinite)
    } else if a == c || b == d {
        Some(XRValue::Finite(1.0))
    } else {
        None
    }
}

/// `exp ½(d(x,x') + d(y,y') - d(x,y') - d(y,x'))`.
pub fn cr_interior(x: &HPoint, xp: &HPoint, y: &HPoint, yp: &HPoint) -> Result<XRValue> {
    let n = x.dim();
    for p in [xp, y, yp] {
        if p.dim() != n {
            return Err(GeoError::DimensionMismatch { expected: n, got: p.dim() });
        }
    }
    let d = |a: &HPoint, b: &HPoint| dist_raw(a.coords(), b.coords());
    let e = 0.5 * (d(x, xp) + d(y, yp) - d(x, yp) - d(y, xp));
    Ok(XRValue::Finite(e.exp()))
}

/// Number of distinct rays among the arguments.
fn distinct_rays(rays: &[&BPoint]) -> usize {
    (0..rays.len())
        .filter(|&i| (0..i).all(|j| !same_ray(rays[i], rays[j])))
        .count()
}

/// `sqrt(<a-,a+><b-,b+> / (<a-,b+><b-,a+>))`, with 0 and `inf` decided by ray
/// coincidence.
pub fn cr_boundary(am: &BPoint, ap: &BPoint, bm: &BPoint, bp: &BPoint) -> Result<XRValue> {
    let n = am.dim();
    for p in [ap, bm, bp] {
        if p.dim() != n {
            return Err(GeoError::DimensionMismatch { expected: n, got: p.dim() });
        }
    }
    if distinct_rays(&[am, ap, bm, bp]) < 3 {
        return Err(GeoError::Degenerate("cross-ratio needs at least 3 distinct rays".into()));
    }
    if same_ray(am, ap) || same_ray(bm, bp) {
        return Ok(XRValue::Finite(0.0));
    }
    if same_ray(am, bp) || same_ray(bm, ap) {
        return Ok(XRValue::Infinite);
    }
    let l = ray_pairing(am, ap).ln() + ray_pairing(bm, bp).ln()
        - ray_pairing(am, bp).ln()
        - ray_pairing(bm, ap).ln();
    Ok(XRValue::Finite((0.5 * l).exp()))
}

/// Largest identity violation found among the given quintuple `(x, x', y, y', x'')`,
/// as `(deviation, identity name)`.
fn identity_defects<F>(cr: &F, q: [usize; 5]) -> Result<(f64, &'static str)>
where
    F: Fn(Quad) -> Result<Option<XRValue>>,
{
    let [x, xp, y, yp, xpp] = q;
    let mut worst = (0.0_f64, "none");
    let mut bump = |v: f64, name: &'static str| {
        if v > worst.0 {
            worst = (v, name);
        }
    };
    if let Some(base) = cr([x, xp, y, yp])? {
        for (p, name) in [([y, yp, x, xp], "invariance"), ([xp, x, yp, y], "invariance")] {
            if let Some(v) = cr(p)? {
                bump(log_deviation(&base, &v), name);
            }
        }
        for p in [[y, xp, x, yp], [x, yp, y, xp]] {
            if let Some(v) = cr(p)? {
                bump(log_deviation(&base, &v.recip()), "inversion");
            }
        }
    }
    // cocycle: [x, y; x', y'] = [x, y; x'', y'] [x'', y; x', y']
    if let (Some(lhs), Some(r1), Some(r2)) = (cr([x, y, xp, yp])?, cr([x, y, xpp, yp])?, cr([xpp, y, xp, yp])?) {
        if let Some(rhs) = r1.mul(&r2) {
            bump(log_deviation(&lhs, &rhs), "cocycle");
        }
    }
    Ok(worst)
}

/// Samples random quintuples of rays and checks invariance, inversion and cocycle.
pub fn cr_identities_check(rays: &[BPoint], samples: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    if rays.len() < 3 {
        return Err(GeoError::InvalidInput("need at least 3 rays".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cr = |q: Quad| -> Result<Option<XRValue>> {
        let r: Vec<&BPoint> = q.iter().map(|&i| &rays[i]).collect();
        if distinct_rays(&r) < 3 {
            return Ok(None);
        }
        cr_boundary(r[0], r[1], r[2], r[3]).map(Some)
    };
    let mut worst = (0.0_f64, "none", [0usize; 5]);
    for _ in 0..samples {
        let q: [usize; 5] = std::array::from_fn(|_| rng.gen_range(0..rays.len()));
        let (v, name) = identity_defects(&cr, q)?;
        if v > worst.0 {
            worst = (v, name, q);
        }
    }
    let witness = (worst.0 > 0.0).then(|| worst.2.to_vec());
    Ok(CheckReport::new(
        -worst.0,
        tol,
        witness,
        format!("worst {} defect {:e} over {samples} samples", worst.1, worst.0),
    ))
}

/// `cos` of the argument of the projective cross-ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H3Argument {
    pub cos_theta: f64,
    pub clamped: bool,
}

/// `½ X+ (1 + 1/X+^2 - 1/X-^2)` with `X+ = [a-,a+;b-,b+]`, `X- = [a-,a+;b+,b-]`.
pub fn h3_argument(xp: f64, xm: f64) -> Result<H3Argument> {
    if !(xp > 0.0 && xm > 0.0) || !xp.is_finite() || !xm.is_finite() {
        return Err(GeoError::InvalidInput("cross-ratios must be positive and finite".into()));
    }
    let c = 0.5 * xp * (1.0 + 1.0 / (xp * xp) - 1.0 / (xm * xm));
    clamp_cos(c)
}

fn clamp_cos(c: f64) -> Result<H3Argument> {
    if c.abs() <= 1.0 {
        return Ok(H3Argument { cos_theta: c, clamped: false });
    }
    if c.abs() > 1.0 + ARG_ERROR_TOL {
        return Err(GeoError::InvalidInput(format!("cosine {c} out of range")));
    }
    Ok(H3Argument {
        cos_theta: c.signum(),
        clamped: c.abs() > 1.0 + ARG_CLAMP_TOL,
    })
}

/// Verdict `|1/X+ + 1/X- - 1| <= tol` with `X+ = [a+,a-;b+,b-]`, `X- = [a+,a-;b-,b+]`.
///
/// The identity holds exactly when the four rays lie on a circle on which the
/// pairs `{a+, a-}` and `{b+, b-}` separate each other.
pub fn cocyclic_test(ap: &BPoint, am: &BPoint, bp: &BPoint, bm: &BPoint, tol: f64) -> Result<CheckReport> {
    if distinct_rays(&[ap, am, bp, bm]) < 4 {
        return Err(GeoError::Degenerate("cocyclicity needs 4 distinct rays".into()));
    }
    let xp = cr_boundary(ap, am, bp, bm)?.value();
    let xm = cr_boundary(ap, am, bm, bp)?.value();
    let s = 1.0 / xp + 1.0 / xm;
    Ok(CheckReport::new(
        -(s - 1.0).abs(),
        tol,
        None,
        format!("1/X+ + 1/X- = {s}"),
    ))
}

/// Complex distance `lambda + i theta` between two geodesics of `H^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexDistance {
    pub lambda: f64,
    pub cos_theta: f64,
}

/// From `X+ = [a+,a-;b+,b-]` and `X- = [a+,a-;b-,b+]`:
/// `1/X+ = (cosh lambda + cos theta)/2` and `1/X- = (cosh lambda - cos theta)/2`,
/// so that `X+/X- = |tanh ½(lambda + i theta)|^2`.
pub fn complex_distance(xp: f64, xm: f64) -> Result<ComplexDistance> {
    if !(xp > 0.0 && xm > 0.0) || !xp.is_finite() || !xm.is_finite() {
        return Err(GeoError::InvalidInput("cross-ratios must be positive and finite".into()));
    }
    let cosh_l = 1.0 / xp + 1.0 / xm;
    if cosh_l < 1.0 - ARG_ERROR_TOL {
        return Err(GeoError::InvalidInput(format!(
            "1/X+ + 1/X- = {cosh_l} < 1: no real complex distance"
        )));
    }
    let cos = clamp_cos(1.0 / xp - 1.0 / xm)?;
    Ok(ComplexDistance {
        lambda: crate::mink_core::arccosh_stable(cosh_l.max(1.0)),
        cos_theta: cos.cos_theta,
    })
}

/// Checks the fibre rules, invariance, inversion and cocycle identities on a
/// full table. Missing entries are an error.
pub fn abstract_cr_validate(t: &XRTable, tol: f64) -> Result<CheckReport> {
    let n = t.size();
    if n < 3 {
        return Err(GeoError::InvalidInput("table needs at least 3 labels".into()));
    }
    let need = |q: Quad| -> Result<XRValue> {
        t.get(&q)
            .ok_or_else(|| GeoError::Precondition(format!("missing entry {q:?}")))
    };
    let mut worst = (0.0_f64, String::from("none"), Vec::new());
    let mut bump = |v: f64, what: &str, w: &[usize]| {
        if v > worst.0 {
            worst = (v, what.to_string(), w.to_vec());
        }
    };
    for (q, v) in t.entries() {
        if let Some(f) = fibre_value(q) {
            bump(log_deviation(v, &f), "fibre rule", q);
        } else if !v.is_regular() {
            bump(f64::INFINITY, "degenerate value at distinct labels", q);
        }
    }
    let cr = |q: Quad| -> Result<Option<XRValue>> {
        if distinct_count(&q) < 3 {
            Ok(None)
        } else {
            need(q).map(Some)
        }
    };
    let mut quint = [0usize; 5];
    for x in 0..n {
        for xp in 0..n {
            for y in 0..n {
                for yp in 0..n {
                    for xpp in 0..n {
                        quint = [x, xp, y, yp, xpp];
                        let (v, name) = identity_defects(&cr, quint)?;
                        bump(v, name, &quint);
                    }
                }
            }
        }
    }
    let _ = quint;
    let witness = (worst.0 > tol).then(|| worst.2.clone());
    Ok(CheckReport::new(
        -worst.0,
        tol,
        witness,
        format!("worst {} defect {:e}", worst.1, worst.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub t: f64,
    pub residual: f64,
    pub used: usize,
}

/// Least-squares `t` with `log T2 = t log T1` over shared regular non-unit entries.
pub fn fit_power_exponent(t1: &XRTable, t2: &XRTable) -> Result<PowerFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (q, v1) in t1.entries() {
        let Some(v2) = t2.get(q) else { continue };
        if !v1.is_regular() || !v2.is_regular() {
            continue;
        }
        if (v1.value() - 1.0).abs() <= UNIT_ENTRY_TOL {
            continue;
        }
        xs.push(v1.ln());
        ys.push(v2.ln());
    }
    let t = crate::linalg::slope_through_origin(&xs, &ys)
        .ok_or_else(|| GeoError::Precondition("no usable shared entries".into()))?;
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - t * x).abs()).fold(0.0, f64::max);
    Ok(PowerFit { t, residual, used: xs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mink_core::{gromov_product, Point};
    use rand_distr::StandardNormal;

    pub(crate) fn random_rays(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<BPoint> {
        (0..n)
            .map(|_| {
                let u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                BPoint::from_direction(&u).unwrap()
            })
            .collect()
    }

    /// Boundary point of the upper half-plane chart: `x` on the real line, or infinity.
    fn half_plane(x: Option<f64>) -> BPoint {
        match x {
            None => BPoint::new(vec![1.0, -1.0, 0.0]).unwrap(),
            Some(x) => {
                let s = x * x;
                BPoint::new(vec![(1.0 + s) / 2.0, (1.0 - s) / 2.0, x]).unwrap()
            }
        }
    }

    /// Boundary point of the upper half-space chart of `H^3`.
    fn half_space(z: (f64, f64)) -> BPoint {
        let s = z.0 * z.0 + z.1 * z.1;
        BPoint::new(vec![(1.0 + s) / 2.0, (1.0 - s) / 2.0, z.0, z.1]).unwrap()
    }

    fn projective_modulus(p: [(f64, f64); 4]) -> f64 {
        // |(a+ - a-)(b+ - b-)| / |(a+ - b-)(b+ - a-)| for (a-, a+, b-, b+)
        let d = |u: (f64, f64), v: (f64, f64)| ((u.0 - v.0).powi(2) + (u.1 - v.1).powi(2)).sqrt();
        let [am, ap, bm, bp] = p;
        d(ap, am) * d(bp, bm) / (d(ap, bm) * d(bp, am))
    }

    #[test]
    fn boundary_examples() {
        let v = cr_boundary(&half_plane(Some(-1.0)), &half_plane(Some(1.0)), &half_plane(Some(0.0)), &half_plane(None))
            .unwrap();
        assert!((v.value() - 2.0).abs() < 1e-12);
        let a = half_plane(Some(0.3));
        let b = half_plane(Some(2.0));
        let c = half_plane(None);
        assert!(cr_boundary(&a, &a, &b, &c).unwrap().is_zero());
        assert!(cr_boundary(&a, &b, &c, &a).unwrap().is_infinite());
        assert!((cr_boundary(&a, &b, &a, &c).unwrap().value() - 1.0).abs() < 1e-15);
        assert!(cr_boundary(&a, &a, &b, &b).is_err());
    }

    #[test]
    fn boundary_matches_projective_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p: [(f64, f64); 4] = std::array::from_fn(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
            let v = cr_boundary(&half_space(p[0]), &half_space(p[1]), &half_space(p[2]), &half_space(p[3])).unwrap();
            let want = projective_modulus(p);
            assert!((v.value() / want - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn interior_examples() {
        let x = HPoint::from_spatial(&[0.1, 0.2, 0.3]);
        let y = HPoint::from_spatial(&[-1.0, 0.4, 0.0]);
        let z = HPoint::from_spatial(&[0.5, -0.5, 2.0]);
        assert!((cr_interior(&x, &y, &x, &z).unwrap().value() - 1.0).abs() < 1e-14);
        assert!((cr_interior(&x, &x, &x, &x).unwrap().value() - 1.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o: Point = HPoint::origin(3).into();
        for _ in 0..20 {
            let p: Vec<HPoint> = (0..4)
                .map(|_| HPoint::from_spatial(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]))
                .collect();
            let g = |a: &HPoint, b: &HPoint| gromov_product(&a.clone().into(), &b.clone().into(), &o).unwrap();
            let visual = (-g(&p[0], &p[1]) - g(&p[2], &p[3]) + g(&p[0], &p[3]) + g(&p[2], &p[1])).exp();
            let v = cr_interior(&p[0], &p[1], &p[2], &p[3]).unwrap().value();
            assert!((v / visual - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identities_on_random_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rays = random_rays(&mut rng, 12, 4);
        let r = cr_identities_check(&rays, 1000, 5, IDENTITY_TOL).unwrap();
        assert!(r.verdict, "{r:?}");
        let a = cr_boundary(&rays[0], &rays[1], &rays[2], &rays[3]).unwrap();
        let b = cr_boundary(&rays[2], &rays[1], &rays[0], &rays[3]).unwrap();
        assert!((a.value() * b.value() - 1.0).abs() < 1e-12);
    }

    /// `(±1, ±e^(lambda + i theta))` in the half-space chart.
    fn screw_configuration(lambda: f64, theta: f64) -> [BPoint; 4] {
        let r = lambda.exp();
        let b = (r * theta.cos(), r * theta.sin());
        [half_space((1.0, 0.0)), half_space((-1.0, 0.0)), half_space(b), half_space((-b.0, -b.1))]
    }

    #[test]
    fn complex_distance_forward_inverse() {
        for &(lambda, theta) in &[(0.7, 0.0), (0.0, std::f64::consts::FRAC_PI_2), (1.3, 0.4), (2.5, 2.9)] {
            let [ap, am, bp, bm] = screw_configuration(lambda, theta);
            let xp = cr_boundary(&ap, &am, &bp, &bm).unwrap().value();
            let xm = cr_boundary(&ap, &am, &bm, &bp).unwrap().value();
            let cd = complex_distance(xp, xm).unwrap();
            assert!((cd.lambda - lambda).abs() < 1e-8, "{cd:?}");
            assert!((cd.cos_theta - theta.cos()).abs() < 1e-10);
            let tanh2 = {
                let (s, c) = (lambda.sinh(), theta.cos());
                let ch = lambda.cosh();
                let _ = s;
                (ch - c) / (ch + c)
            };
            assert!((xp / xm - tanh2).abs() < 1e-10);
        }
        let cd = complex_distance(2.0, 2.0).unwrap();
        assert!(cd.cos_theta.abs() < 1e-15 && cd.lambda.abs() < 1e-7);
        assert!(complex_distance(10.0, 10.0).is_err());
    }

    #[test]
    fn argument_recovery() {
        for &(lambda, theta) in &[(0.3, 0.8), (1.1, 2.0), (0.05, 3.0)] {
            let [ap, am, bp, bm] = screw_configuration(lambda, theta);
            let xp = cr_boundary(&am, &ap, &bm, &bp).unwrap().value();
            let xm = cr_boundary(&am, &ap, &bp, &bm).unwrap().value();
            let pts = [(-1.0, 0.0), (1.0, 0.0), {
                let r = lambda.exp();
                (-r * theta.cos(), -r * theta.sin())
            }, {
                let r = lambda.exp();
                (r * theta.cos(), r * theta.sin())
            }];
            // argument of (a+ - a-)(b+ - b-) / ((a+ - b-)(b+ - a-))
            let z = |p: (f64, f64), q: (f64, f64)| num_complex(p.0 - q.0, p.1 - q.1);
            let [am_, ap_, bm_, bp_] = pts;
            let w = cdiv(cmul(z(ap_, am_), z(bp_, bm_)), cmul(z(ap_, bm_), z(bp_, am_)));
            let cos_want = w.0 / (w.0 * w.0 + w.1 * w.1).sqrt();
            let got = h3_argument(xp, xm).unwrap();
            assert!((got.cos_theta - cos_want).abs() < 1e-10, "{got:?} vs {cos_want}");
        }
        // cocyclic relation 1/X+ + 1/X- = 1 forces cos = 1
        let xp = 3.0;
        let xm = xp / (xp - 1.0);
        let got = h3_argument(xp, xm).unwrap();
        assert!((got.cos_theta - 1.0).abs() < 1e-12);
        assert!(h3_argument(1.0, 0.3).is_err());
    }

    fn num_complex(a: f64, b: f64) -> (f64, f64) {
        (a, b)
    }
    fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
    }
    fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let n = b.0 * b.0 + b.1 * b.1;
        cmul(a, (b.0 / n, -b.1 / n))
    }

    #[test]
    fn cocyclicity() {
        // four points of the unit circle of C, in circular order
        let ang = [0.3_f64, 1.4, 2.9, 4.4];
        let p: Vec<BPoint> = ang.iter().map(|a| half_space((a.cos(), a.sin()))).collect();
        assert!(cocyclic_test(&p[0], &p[2], &p[1], &p[3], 1e-9).unwrap().verdict);
        let bad = cocyclic_test(&p[0], &p[1], &p[2], &p[3], 1e-9).unwrap();
        assert!(!bad.verdict && bad.margin < 0.0);
        let q = [half_space((0.0, 0.0)), half_space((1.0, 0.2)), half_space((-0.4, 1.0)), half_space((0.3, -2.0))];
        assert!(!cocyclic_test(&q[0], &q[2], &q[1], &q[3], 1e-9).unwrap().verdict);
        assert!(cocyclic_test(&q[0], &q[0], &q[1], &q[3], 1e-9).is_err());
    }

    #[test]
    fn validation_of_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rays = random_rays(&mut rng, 6, 3);
        let t = XRTable::from_rays(&rays).unwrap();
        assert!(abstract_cr_validate(&t, IDENTITY_TOL).unwrap().verdict);
        let mut bad = t.clone();
        let q = [0, 1, 2, 3];
        let v = bad.get(&q).unwrap().value();
        bad.insert(q, XRValue::Finite(v * 1.1)).unwrap();
        let r = abstract_cr_validate(&bad, IDENTITY_TOL).unwrap();
        assert!(!r.verdict);
        assert!(r.witness.is_some());
        let mut missing = XRTable::with_size(4);
        missing.insert([0, 1, 2, 3], XRValue::Finite(2.0)).unwrap();
        assert!(abstract_cr_validate(&missing, IDENTITY_TOL).is_err());
    }

    #[test]
    fn pairing_based_table_is_abstract() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let mut it = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.gen_range(0.2..3.0);
                it[i][j] = v;
                it[j][i] = v;
            }
        }
        let mut t = XRTable::with_size(n);
        for q in all_quads(n) {
            let [u, v, x, y] = q;
            let num = it[u][v] * it[x][y];
            let den = it[u][y] * it[x][v];
            let val = if den == 0.0 { XRValue::Infinite } else { XRValue::Finite(num / den) };
            t.insert(q, val).unwrap();
        }
        assert!(abstract_cr_validate(&t, IDENTITY_TOL).unwrap().verdict);
    }

    #[test]
    fn power_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rays = random_rays(&mut rng, 6, 3);
        let t1 = XRTable::from_rays(&rays).unwrap();
        let fit = fit_power_exponent(&t1, &t1.power(0.5)).unwrap();
        assert!((fit.t - 0.5).abs() < 1e-12 && fit.residual < 1e-12);
        let other = XRTable::from_rays(&random_rays(&mut rng, 6, 3)).unwrap();
        assert!(fit_power_exponent(&t1, &other).unwrap().residual > 0.1);
        assert!(fit_power_exponent(&t1, &XRTable::with_size(6)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut t = XRTable::with_size(4);
        t.insert([0, 1, 2, 3], XRValue::Finite(1.5)).unwrap();
        t.insert([0, 1, 3, 0], XRValue::Infinite).unwrap();
        let back = XRTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let bare = XRTable::from_json(r#"[{"quad":[0,1,2,3],"value":"inf"}]"#).unwrap();
        assert!(bare.get(&[0, 1, 2, 3]).unwrap().is_infinite());
    }
}
