//! Families of free-group representations whose minimal displacement grows
//! without bound, rescaled by `t_m = 1/d_m` so that their orbits converge to
//! an action on a real tree.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::isometry_dyn::{min_displacement, word_ball, DisplacementParams, Isometry, Representation, Word};
use crate::kernel_check::{coarse_strong_hyp_check, four_point_defect, FiniteMetric};
use crate::linalg::slope_through_origin;
use crate::mink_core::{arccosh_of_log, dist_raw, HPoint};

/// Largest word ball used for rescaled orbit metrics.
pub const MAX_BALL_RADIUS: usize = 5;
/// Longest word accepted by [`limit_length_spectrum`].
pub const MAX_SPECTRUM_WORD: usize = 4;
/// Relative increase of the defect tolerated between consecutive scales.
pub const MONOTONE_SLACK: f64 = 0.1;
/// Multiplicative constant of the coarse hyperbolicity check on rescaled metrics.
pub const COARSE_C: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Two translations of length `L` whose axes cross at `e_0` at angle `phi`.
    CrossedAxes,
    /// Two translations of length `L` whose axes are at distance `D`, twisted by
    /// `phi` around their common perpendicular.
    Schottky,
}

impl FromStr for Family {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crossed_axes" | "crossed-axes" => Ok(Family::CrossedAxes),
            "schottky" => Ok(Family::Schottky),
            _ => Err(GeoError::InvalidInput(format!("unknown family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFamilySpec {
    pub family: Family,
    pub phi: f64,
    /// Translation lengths `L`, increasing.
    pub scales: Vec<f64>,
    pub dimension: usize,
    /// Distance between the axes; only used by [`Family::Schottky`].
    pub distance: f64,
    /// Seeds the starting point of the displacement minimization.
    pub seed: u64,
}

impl RepFamilySpec {
    pub fn crossed_axes(phi: f64, scales: Vec<f64>) -> Self {
        RepFamilySpec { family: Family::CrossedAxes, phi, scales, dimension: 2, distance: 0.0, seed: 0 }
    }

    pub fn schottky(phi: f64, distance: f64, scales: Vec<f64>) -> Self {
        RepFamilySpec { family: Family::Schottky, phi, scales, dimension: 2, distance, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeoError::InvalidInput(m));
        if !(self.phi > 0.0 && self.phi <= std::f64::consts::PI) {
            return bad(format!("phi = {} outside (0, pi]", self.phi));
        }
        if self.dimension < 2 {
            return bad(format!("dimension {} < 2", self.dimension));
        }
        if self.scales.is_empty() {
            return bad("no scales".into());
        }
        if self.scales.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return bad("scales must be positive and finite".into());
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return bad("scales must be increasing".into());
        }
        if self.family == Family::Schottky {
            if !(self.distance > 0.0) || !self.distance.is_finite() {
                return bad(format!("axis distance {} must be positive", self.distance));
            }
            // in the plane the only twist keeping the axes disjoint and
            // orientation-preserving is a half turn
            if self.dimension == 2 && (self.phi - std::f64::consts::PI).abs() > 1e-12 {
                return bad("schottky in dimension 2 needs phi = pi; use dimension >= 3 for other twists".into());
            }
        }
        Ok(())
    }
}

/// Generators `a, b` of the family at translation length `scale`.
pub fn family_member(spec: &RepFamilySpec, scale: f64) -> Result<Representation> {
    spec.validate()?;
    let n = spec.dimension;
    let a = Isometry::boost(n, 1, scale);
    let b = match spec.family {
        Family::CrossedAxes => a.conjugate_by(&Isometry::rotation(n, 1, 2, spec.phi)),
        Family::Schottky => {
            let twisted = if n == 2 { a.inverse() } else { a.conjugate_by(&Isometry::rotation(n, 1, 3, spec.phi)) };
            twisted.conjugate_by(&Isometry::boost(n, 2, spec.distance))
        }
    };
    Representation::new(vec![a, b])
}

pub fn build_family(spec: &RepFamilySpec) -> Result<Vec<Representation>> {
    spec.validate()?;
    spec.scales.iter().map(|&l| family_member(spec, l)).collect()
}

/// Point minimizing the displacement by symmetry: the crossing point of the
/// axes, or the midpoint of their common perpendicular.
pub fn analytic_center(spec: &RepFamilySpec) -> HPoint {
    let n = spec.dimension;
    match spec.family {
        Family::CrossedAxes => HPoint::origin(n),
        Family::Schottky => Isometry::boost(n, 2, 0.5 * spec.distance).apply_point(&HPoint::origin(n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasepointSource {
    MinDisplacement,
    Analytic,
}

fn max_displacement(rho: &Representation, x: &HPoint) -> f64 {
    rho.generators
        .iter()
        .map(|g| dist_raw(&g.apply(x.coords()), x.coords()))
        .fold(0.0, f64::max)
}

/// Minimal-displacement basepoint, started from a seeded point within
/// distance 1 of the analytic center. The analytic center is used instead
/// when the solver fails or ends with a larger displacement.
pub fn choose_basepoint(rho: &Representation, spec: &RepFamilySpec) -> Result<(HPoint, BasepointSource)> {
    let center = analytic_center(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.dimension;
    let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let r: f64 = rng.gen_range(0.2..1.0);
    let shift: Vec<f64> = dir.iter().map(|x| x / norm * r.sinh()).collect();
    let start = to_point(&center).apply_point(&HPoint::from_spatial(&shift));
    let center_value = max_displacement(rho, &center);
    match min_displacement(&rho.generators, &start, &DisplacementParams::default()) {
        Ok(d) if d.value <= center_value => Ok((d.argmin, BasepointSource::MinDisplacement)),
        _ => Ok((center, BasepointSource::Analytic)),
    }
}

/// Pure translation taking `e_0` to `x`.
pub fn to_point(x: &HPoint) -> Isometry {
    let v = x.coords();
    let n = v.len();
    let x0 = v[0];
    let s: DVector<f64> = v.rows(1, n - 1).into_owned();
    let mut m = DMatrix::identity(n, n);
    m[(0, 0)] = x0;
    for i in 1..n {
        m[(0, i)] = s[i - 1];
        m[(i, 0)] = s[i - 1];
        for j in 1..n {
            m[(i, j)] += s[i - 1] * s[j - 1] / (1.0 + x0);
        }
    }
    Isometry::from_matrix_unchecked(m)
}

#[derive(Debug, Clone)]
pub struct RescaledOrbit {
    pub words: Vec<Word>,
    /// `t_m log cosh d(rho(u) o, rho(w) o)`.
    pub metric: FiniteMetric,
    /// Largest generator displacement at the basepoint.
    pub d_m: f64,
    pub t_m: f64,
    /// `t_m d(rho(s) o, o)` for each generator `s`.
    pub generator_displacements: Vec<f64>,
}

/// Rescaled orbit metric on the word ball. Every pairing is evaluated as
/// `log <o, rho(u^-1 w) o>` on a renormalized product after moving `o` to
/// `e_0`, so no entry overflows.
pub fn rescaled_orbit_metric(rho: &Representation, ball_radius: usize, o: &HPoint) -> Result<RescaledOrbit> {
    if ball_radius > MAX_BALL_RADIUS {
        return Err(GeoError::InvalidInput(format!("ball radius {ball_radius} exceeds {MAX_BALL_RADIUS}")));
    }
    if o.dim() != rho.dimension {
        return Err(GeoError::DimensionMismatch { expected: rho.dimension, got: o.dim() });
    }
    let local = rho.conjugate_by(&to_point(o).inverse());
    let e0 = HPoint::origin(rho.dimension);
    let log_pair = |w: &Word| -> Result<f64> { Ok(local.eval_scaled(w)?.log_pairing(e0.coords()).max(0.0)) };

    let gen_logs: Vec<f64> = (0..rho.generators.len())
        .map(|i| log_pair(&Word::generator(i)))
        .collect::<Result<_>>()?;
    let gen_dists: Vec<f64> = gen_logs.iter().map(|&l| arccosh_of_log(l)).collect();
    let d_m = gen_dists.iter().copied().fold(0.0, f64::max);
    if !(d_m > 0.0) {
        return Err(GeoError::Degenerate("basepoint is fixed by every generator".into()));
    }
    let t_m = 1.0 / d_m;

    let words = word_ball(rho.generators.len(), ball_radius);
    let m = words.len();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        let inv = words[i].inverse();
        for j in (i + 1)..m {
            let v = t_m * log_pair(&inv.concat(&words[j]))?;
            if !v.is_finite() {
                return Err(GeoError::Certification(format!("non-finite orbit pairing at ({i}, {j})")));
            }
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    let labels = words.iter().map(|w| w.to_string()).collect();
    Ok(RescaledOrbit {
        words,
        metric: FiniteMetric::from_matrix_unchecked(d, Some(labels))?,
        d_m,
        t_m,
        generator_displacements: gen_dists.iter().map(|x| t_m * x).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectSeries {
    /// `(L, delta_4)` in increasing `L`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares `c` in `delta_4 ≈ c / L`.
    pub fit_constant: f64,
    /// Slope of `log delta_4` against `log L`; `None` if some defect vanishes.
    pub fit_exponent: Option<f64>,
    /// No defect exceeds its predecessor by more than [`MONOTONE_SLACK`].
    pub monotone: bool,
}

pub fn defect_series(points: &[(f64, f64)]) -> Result<DefectSeries> {
    if points.len() < 2 {
        return Err(GeoError::InvalidInput("defect series needs at least 2 scales".into()));
    }
    let inv_l: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let defects: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit_constant = slope_through_origin(&inv_l, &defects).unwrap_or(0.0);
    let fit_exponent = if defects.iter().all(|&d| d > 0.0) {
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = defects.iter().map(|d| d.ln()).collect();
        let k = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let monotone = defects.windows(2).all(|w| w[1] <= (1.0 + MONOTONE_SLACK) * w[0]);
    Ok(DefectSeries { points: points.to_vec(), fit_constant, fit_exponent, monotone })
}

#[derive(Debug, Clone, Serialize)]
pub struct LengthRow {
    pub word: String,
    /// `ℓ_L(w) / L` for each scale.
    pub ratios: Vec<f64>,
    /// Two-point Richardson extrapolation in `1/L` from the last two scales.
    pub extrapolated: Option<f64>,
    /// Cyclically reduced length, the translation length in the limit tree.
    pub predicted: usize,
    /// `max_L L |ℓ_L(w)/L - predicted|`.
    pub c_w: f64,
}

/// Rescaled spectral translation lengths of `words` along the family.
///
/// Each word is evaluated in cyclically reduced form: conjugating by a long
/// prefix makes the matrix entries grow like `e^{2L}` while the eigenvalue
/// stays at `e^L`, and the cancellation would swamp it.
pub fn limit_length_spectrum(spec: &RepFamilySpec, words: &[Word]) -> Result<Vec<LengthRow>> {
    let reps = build_family(spec)?;
    words
        .iter()
        .map(|w| {
            if w.is_empty() || w.len() > MAX_SPECTRUM_WORD {
                return Err(GeoError::InvalidInput(format!(
                    "word {w} must have length 1..={MAX_SPECTRUM_WORD}"
                )));
            }
            if w.max_generator() > 2 {
                return Err(GeoError::InvalidInput(format!("word {w} uses a generator beyond b")));
            }
            let core = w.cyclically_reduced();
            let predicted = core.len();
            let mut ratios = Vec::with_capacity(reps.len());
            let mut c_w = 0.0_f64;
            for (rho, &l) in reps.iter().zip(&spec.scales) {
                let ell = rho.eval_scaled(&core)?.log_spectral_radius().max(0.0);
                let r = ell / l;
                c_w = c_w.max(l * (r - predicted as f64).abs());
                ratios.push(r);
            }
            let k = ratios.len();
            let extrapolated = (k >= 2).then(|| {
                let (l1, l2) = (spec.scales[k - 2], spec.scales[k - 1]);
                (l2 * ratios[k - 1] - l1 * ratios[k - 2]) / (l2 - l1)
            });
            Ok(LengthRow { word: w.to_string(), ratios, extrapolated, predicted, c_w })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleRecord {
    #[serde(rename = "L")]
    pub scale: f64,
    pub d_m: f64,
    pub t_m: f64,
    pub basepoint: HPoint,
    pub basepoint_source: BasepointSource,
    pub rescaled_generator_displacements: Vec<f64>,
    pub delta4: f64,
    /// Margin of the `C = 3` coarse check with `eps = L`.
    pub coarse_margin: f64,
    pub words: Vec<String>,
    #[serde(serialize_with = "serialize_matrix")]
    pub metric: DMatrix<f64>,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerationReport {
    pub spec: RepFamilySpec,
    pub ball_radius: usize,
    pub records: Vec<ScaleRecord>,
    pub defects: Option<DefectSeries>,
    pub lengths: Vec<LengthRow>,
}

/// Full pipeline: basepoints, rescaled orbit metrics, defects and rescaled
/// length spectrum for every scale of the family.
pub fn run_degeneration(spec: &RepFamilySpec, ball_radius: usize, words: &[Word]) -> Result<DegenerationReport> {
    let reps = build_family(spec)?;
    let mut records = Vec::with_capacity(reps.len());
    for (rho, &scale) in reps.iter().zip(&spec.scales) {
        let (o, source) = choose_basepoint(rho, spec)?;
        let orbit = rescaled_orbit_metric(rho, ball_radius, &o)?;
        let delta4 = four_point_defect(&orbit.metric);
        let coarse_margin = if orbit.metric.len() >= 4 {
            coarse_strong_hyp_check(&orbit.metric, scale, COARSE_C)?.margin
        } else {
            f64::INFINITY
        };
        records.push(ScaleRecord {
            scale,
            d_m: orbit.d_m,
            t_m: orbit.t_m,
            basepoint: o,
            basepoint_source: source,
            rescaled_generator_displacements: orbit.generator_displacements,
            delta4,
            coarse_margin,
            words: orbit.words.iter().map(|w| w.to_string()).collect(),
            metric: orbit.metric.entries,
        });
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.scale, r.delta4)).collect();
    let defects = if points.len() >= 2 { Some(defect_series(&points)?) } else { None };
    let lengths = limit_length_spectrum(spec, words)?;
    Ok(DegenerationReport { spec: spec.clone(), ball_radius, records, defects, lengths })
}
