//! Lorentz isometries of `H^n`: validation, classification, translation
//! lengths, minimal displacement and length functions of free-group
//! representations.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use rand::Rng;
use serde::Serialize;

use crate::cross_ratio::{cr_boundary, XRValue};
use crate::error::{GeoError, Result};
use crate::kernel_check::CheckReport;
use crate::mink_core::{arccosh_of_log, busemann, dist_raw, inner, same_ray, BPoint, HPoint};

/// Tolerance on `MᵀJM = J`, relative to the squared entry scale.
pub const ORTHO_TOL: f64 = 1e-9;
/// `log rho(g)` above this is loxodromic.
pub const LOXODROMIC_TOL: f64 = 1e-8;
/// `<v,v>` above this on a fixed unit vector means a fixed interior point.
pub const TIMELIKE_TOL: f64 = 1e-8;
/// Above this `log rho` an element is loxodromic without consulting its fixed
/// subspace, whose relative-tolerance rank estimate degrades like `exp(-ℓ)`.
pub const CLEAR_LOXODROMIC: f64 = 1.0;
/// Default number of squarings in the stable-length method.
pub const STABLE_SQUARINGS: u32 = 16;
pub const MAX_SQUARINGS: u32 = 20;

/// `J = diag(1, -1, ..., -1)` of size `n + 1`.
pub fn minkowski_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(n + 1, n + 1);
    for i in 1..=n {
        j[(i, i)] = -1.0;
    }
    j
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Lorentz matrix standing for an element of `PO(1,n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    matrix: DMatrix<f64>,
    ortho_residual: f64,
}

/// `max |MᵀJM - J| / max(1, max|M|)^2`.
pub fn ortho_residual(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows() - 1;
    let j = minkowski_form(n);
    let r = m.transpose() * &j * m - &j;
    max_abs(&r) / max_abs(m).max(1.0).powi(2)
}

/// Checks `MᵀJM = J`. Matrices reversing the time direction are negated,
/// since `M` and `-M` act identically on `H^n`.
pub fn validate_isometry(m: DMatrix<f64>) -> Result<Isometry> {
    if m.nrows() != m.ncols() || m.nrows() < 2 {
        return Err(GeoError::InvalidInput(format!(
            "isometry must be a square matrix of size >= 2, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::InvalidInput("isometry has non-finite entries".into()));
    }
    let res = ortho_residual(&m);
    if res > ORTHO_TOL {
        return Err(GeoError::Precondition(format!(
            "matrix is not Lorentzian: residual {res:e}"
        )));
    }
    let matrix = if m[(0, 0)] < 0.0 { -m } else { m };
    Ok(Isometry { matrix, ortho_residual: res })
}

impl Isometry {
    pub fn identity(n: usize) -> Self {
        Isometry { matrix: DMatrix::identity(n + 1, n + 1), ortho_residual: 0.0 }
    }

    /// Translation by `t` along the geodesic through `e_0` in direction `e_axis`.
    pub fn boost(n: usize, axis: usize, t: f64) -> Self {
        assert!(axis >= 1 && axis <= n, "boost axis must be a spatial index");
        let mut m = DMatrix::identity(n + 1, n + 1);
        m[(0, 0)] = t.cosh();
        m[(axis, axis)] = t.cosh();
        m[(0, axis)] = t.sinh();
        m[(axis, 0)] = t.sinh();
        Isometry { matrix: m, ortho_residual: 0.0 }
    }

    /// Rotation by `theta` in the spatial plane `(i, j)`, fixing `e_0`.
    pub fn rotation(n: usize, i: usize, j: usize, theta: f64) -> Self {
        assert!(i >= 1 && j >= 1 && i <= n && j <= n && i != j);
        let mut m = DMatrix::identity(n + 1, n + 1);
        let (s, c) = theta.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        Isometry { matrix: m, ortho_residual: 0.0 }
    }

    /// Random spatial rotation fixing `e_0`.
    pub fn random_rotation<R: Rng>(rng: &mut R, n: usize) -> Self {
        let mut g = Isometry::identity(n);
        for i in 1..=n {
            for j in (i + 1)..=n {
                g = g.compose(&Isometry::rotation(n, i, j, rng.gen_range(-3.2..3.2)));
            }
        }
        g
    }

    /// `R_1 B(t) R_2` with random rotations and `t` uniform in `[0, spread)`.
    pub fn random<R: Rng>(rng: &mut R, n: usize, spread: f64) -> Self {
        let r1 = Isometry::random_rotation(rng, n);
        let r2 = Isometry::random_rotation(rng, n);
        let t = rng.gen_range(0.0..spread);
        r1.compose(&Isometry::boost(n, 1, t)).compose(&r2)
    }

    /// Wraps a matrix already known to be Lorentzian.
    pub fn from_matrix_unchecked(matrix: DMatrix<f64>) -> Self {
        let ortho_residual = ortho_residual(&matrix);
        Isometry { matrix, ortho_residual }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ortho_residual(&self) -> f64 {
        self.ortho_residual
    }

    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn compose(&self, other: &Isometry) -> Isometry {
        Isometry::from_matrix_unchecked(&self.matrix * &other.matrix)
    }

    /// `J Mᵀ J`, exact for Lorentz matrices.
    pub fn inverse(&self) -> Isometry {
        let j = minkowski_form(self.dim());
        Isometry {
            matrix: &j * self.matrix.transpose() * &j,
            ortho_residual: self.ortho_residual,
        }
    }

    pub fn conjugate_by(&self, h: &Isometry) -> Isometry {
        h.compose(self).compose(&h.inverse())
    }

    pub fn pow(&self, k: i64) -> Isometry {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut acc = Isometry::identity(self.dim());
        for _ in 0..k.unsigned_abs() {
            acc = acc.compose(&base);
        }
        acc
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn apply_point(&self, p: &HPoint) -> HPoint {
        HPoint::from_timelike(self.apply(p.coords())).expect("isometries preserve the hyperboloid")
    }

    pub fn apply_ray(&self, b: &BPoint) -> BPoint {
        BPoint::from_isotropic(&self.apply(b.coords())).expect("isometries preserve the light cone")
    }
}

/// Matrix stored as `exp(log_scale) * m` with `max|m| = 1`.
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    pub log_scale: f64,
    pub m: DMatrix<f64>,
}

impl ScaledMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        Self { log_scale: 0.0, m }.renormalized()
    }

    fn renormalized(mut self) -> Self {
        let s = max_abs(&self.m);
        if s > 0.0 && s.is_finite() {
            self.m /= s;
            self.log_scale += s.ln();
        }
        self
    }

    pub fn mul(&self, other: &ScaledMatrix) -> ScaledMatrix {
        ScaledMatrix {
            log_scale: self.log_scale + other.log_scale,
            m: &self.m * &other.m,
        }
        .renormalized()
    }

    /// `log <o, M o>` for a unit timelike `o`.
    pub fn log_pairing(&self, o: &DVector<f64>) -> f64 {
        self.log_scale + inner(o, &(&self.m * o)).ln()
    }

    /// `log` of the spectral radius.
    pub fn log_spectral_radius(&self) -> f64 {
        self.log_scale + spectral_radius(&self.m).ln()
    }
}

/// Spectral radius from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let schur = Schur::try_new(m.clone(), 1e-15, 10_000)
        .unwrap_or_else(|| Schur::new(m.clone()));
    schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |a, z| a.max(z.norm()))
}

/// `log rho(g)`, insensitive to the overall size of the entries.
pub fn log_spectral_radius(m: &DMatrix<f64>) -> f64 {
    ScaledMatrix::new(m.clone()).log_spectral_radius()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IsomKind {
    Identity,
    Elliptic,
    Parabolic,
    Loxodromic,
}

impl fmt::Display for IsomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IsomKind::Identity => "identity",
            IsomKind::Elliptic => "elliptic",
            IsomKind::Parabolic => "parabolic",
            IsomKind::Loxodromic => "loxodromic",
        };
        f.write_str(s)
    }
}

/// Classification result. For loxodromics `fixed_rays = [repelling, attracting]`.
#[derive(Debug, Clone)]
pub struct IsomClass {
    pub kind: IsomKind,
    pub length: f64,
    pub fixed_rays: Vec<BPoint>,
    /// `log rho(g)` as computed, to show where the element sits relative to the band.
    pub log_spectral_radius: f64,
}

/// Orthonormal basis (columns) of the numerical kernel of `a`.
fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0_f64, |x, &y| x.max(y));
    let cut = rel_tol * smax.max(1.0);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cut)
        .collect();
    let mut basis = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Unit right singular vector of the smallest singular value of `a`.
fn smallest_singular_vector(a: &DMatrix<f64>) -> DVector<f64> {
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (i, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    v_t.row(i).transpose()
}

/// Eigenvector of `g` for the real eigenvalue `lambda`, refined by inverse iteration.
fn eigenvector(g: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let n = g.nrows();
    let shifted = g - DMatrix::identity(n, n) * lambda;
    let mut v = smallest_singular_vector(&shifted);
    // one shifted solve sharpens the direction when lambda is slightly off
    let perturbed = g - DMatrix::identity(n, n) * (lambda * (1.0 + 1e-13));
    if let Some(w) = perturbed.lu().solve(&v) {
        let nrm = w.norm();
        if nrm.is_finite() && nrm > 0.0 {
            v = w / nrm;
        }
    }
    v
}

/// Fixed vectors of `g` split by causal type: (timelike found, isotropic candidate).
fn fixed_cone_vectors(g: &DMatrix<f64>) -> (bool, Option<DVector<f64>>) {
    let n = g.nrows();
    let basis = null_space(&(g - DMatrix::identity(n, n)), 1e-9);
    if basis.ncols() == 0 {
        return (false, None);
    }
    let j = minkowski_form(n - 1);
    let gram = basis.transpose() * &j * &basis;
    let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
    let (imax, lmax) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    if lmax > TIMELIKE_TOL {
        return (true, None);
    }
    if lmax >= -TIMELIKE_TOL {
        let v = &basis * eig.eigenvectors.column(imax);
        return (false, Some(v));
    }
    (false, None)
}

pub fn classify(g: &Isometry, tol: f64) -> Result<IsomClass> {
    let m = &g.matrix;
    let n = m.nrows();
    let log_rho = log_spectral_radius(m);
    if max_abs(&(m - DMatrix::identity(n, n))) <= 1e-12 {
        return Ok(IsomClass {
            kind: IsomKind::Identity,
            length: 0.0,
            fixed_rays: vec![],
            log_spectral_radius: log_rho,
        });
    }
    let (timelike, isotropic) = if log_rho > CLEAR_LOXODROMIC {
        (false, None)
    } else {
        fixed_cone_vectors(m)
    };
    if timelike {
        return Ok(IsomClass {
            kind: IsomKind::Elliptic,
            length: 0.0,
            fixed_rays: vec![],
            log_spectral_radius: log_rho,
        });
    }
    if log_rho > tol && isotropic.is_none() {
        let rho = log_rho.exp();
        let plus = eigenvector(m, rho);
        let minus = eigenvector(&g.inverse().matrix, rho);
        let plus = BPoint::from_isotropic(&plus).map_err(|_| {
            GeoError::NoConvergence("attracting eigenvector is not isotropic".into())
        })?;
        let minus = BPoint::from_isotropic(&minus).map_err(|_| {
            GeoError::NoConvergence("repelling eigenvector is not isotropic".into())
        })?;
        return Ok(IsomClass {
            kind: IsomKind::Loxodromic,
            length: log_rho,
            fixed_rays: vec![minus, plus],
            log_spectral_radius: log_rho,
        });
    }
    let v = match isotropic {
        Some(v) => v,
        None => smallest_singular_vector(&(m - DMatrix::identity(n, n))),
    };
    let ray = BPoint::from_isotropic(&v)
        .map_err(|_| GeoError::NoConvergence("parabolic fixed vector is not isotropic".into()))?;
    Ok(IsomClass {
        kind: IsomKind::Parabolic,
        length: 0.0,
        fixed_rays: vec![ray],
        log_spectral_radius: log_rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthMethod {
    /// `log` of the spectral radius (0 for elliptic and parabolic elements).
    Spectral,
    /// Orbit growth `arccosh <g^n o, o>` at `n = 2^k`, log-corrected.
    Stable { squarings: u32 },
    /// `log Cr(g xi, g-, xi, g+)` for an auxiliary boundary point `xi`.
    CrossRatio,
}

/// Powers `g^(2^j)`, `j = 0..=k`, by repeated squaring with renormalization.
pub fn squared_powers(g: &DMatrix<f64>, k: u32) -> Vec<ScaledMatrix> {
    let mut out = Vec::with_capacity(k as usize + 1);
    let mut cur = ScaledMatrix::new(g.clone());
    out.push(cur.clone());
    for _ in 0..k {
        cur = cur.mul(&cur);
        out.push(cur.clone());
    }
    out
}

/// Levels of repeated squaring are trusted while the scaled power stays this
/// close to the Lorentz group.
pub const POWER_DEFECT_TOL: f64 = 1e-9;

impl ScaledMatrix {
    /// `max |M̂ᵀJM̂ - e^{-2 log_scale} J|`, the distance of the scaled matrix from
    /// a scaled Lorentz matrix.
    pub fn lorentz_defect(&self) -> f64 {
        let j = minkowski_form(self.m.nrows() - 1);
        let r = self.m.transpose() * &j * &self.m - &j * (-2.0 * self.log_scale).exp();
        max_abs(&r)
    }
}

/// `log <g^(2^j) o, o>` for `j = 0..=k`, cut at the first level whose power
/// has drifted from the Lorentz group. Near-parabolic powers lose accuracy
/// under squaring much faster than loxodromic or elliptic ones.
pub fn reliable_log_pairings(g: &DMatrix<f64>, o: &DVector<f64>, k: u32) -> Vec<f64> {
    reliable_powers_scaled(ScaledMatrix::new(g.clone()), o, k)
}

/// Least-squares fit of `d_n = a n + b + c log n + e / n^2` through the last
/// four levels; returns `a`.
fn fitted_rate(d: &[f64]) -> Option<f64> {
    let k = d.len() - 1;
    if k < 5 {
        return None;
    }
    let mut a = DMatrix::zeros(4, 4);
    let mut rhs = DVector::zeros(4);
    for (row, j) in ((k - 3)..=k).enumerate() {
        let n = (1u64 << j) as f64;
        // columns scaled to comparable size
        a[(row, 0)] = n / (1u64 << k) as f64;
        a[(row, 1)] = 1.0;
        a[(row, 2)] = n.ln();
        a[(row, 3)] = 1.0 / (n * n);
        rhs[row] = d[j];
    }
    let sol = a.lu().solve(&rhs)?;
    Some(sol[0] / (1u64 << k) as f64)
}

/// Stable length from the log orbit pairings `log <g^(2^j) o, o>`, `j = 0..=k`,
/// after raising the orbit kernel to the power `t`.
///
/// With `d_n = arccosh <g^n o, o>^t` this returns the smaller of `d_N / N` and
/// the rate `a` of a fit `d_n = a n + b + c log n + e/n^2` over the last four
/// levels (second difference if fewer levels are available), clamped at 0.
/// The fit is exact for loxodromic orbits and cancels the logarithmic growth
/// of parabolic ones; the plain quotient is the better bound for bounded orbits.
pub fn stable_length_from_logs(log_pairings: &[f64], t: f64) -> f64 {
    if log_pairings.is_empty() {
        return 0.0;
    }
    let k = log_pairings.len() - 1;
    let d: Vec<f64> = log_pairings.iter().map(|&l| arccosh_of_log(t * l)).collect();
    let big_n = (1u64 << k) as f64;
    let plain = d[k] / big_n;
    let refined = fitted_rate(&d).or_else(|| {
        (k >= 2).then(|| (d[k] - 2.0 * d[k - 1] + d[k - 2]) / (big_n / 4.0))
    });
    match refined {
        Some(r) => plain.min(r).max(0.0),
        None => plain.max(0.0),
    }
}

/// Stable length measured from the basepoint `o`.
pub fn stable_length_at(g: &DMatrix<f64>, o: &DVector<f64>, squarings: u32) -> Result<f64> {
    if squarings > MAX_SQUARINGS {
        return Err(GeoError::InvalidInput(format!(
            "at most {MAX_SQUARINGS} squarings are supported"
        )));
    }
    Ok(stable_length_from_logs(&reliable_log_pairings(g, o, squarings), 1.0))
}

pub fn translation_length(g: &Isometry, method: LengthMethod) -> Result<f64> {
    match method {
        LengthMethod::Spectral => Ok(classify(g, LOXODROMIC_TOL)?.length),
        LengthMethod::Stable { squarings } => {
            stable_length_at(&g.matrix, HPoint::origin(g.dim()).coords(), squarings)
        }
        LengthMethod::CrossRatio => {
            let class = classify(g, LOXODROMIC_TOL)?;
            if class.kind != IsomKind::Loxodromic {
                return Ok(0.0);
            }
            let xi = auxiliary_ray(&class.fixed_rays)?;
            length_from_cross_ratio(g, &xi)
        }
    }
}

/// A coordinate ray `±e_i` far from all the given rays.
fn auxiliary_ray(avoid: &[BPoint]) -> Result<BPoint> {
    let n = avoid[0].dim();
    let mut best: Option<(f64, BPoint)> = None;
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut u = vec![0.0; n];
            u[i] = s;
            let b = BPoint::from_direction(&u)?;
            let sep = avoid
                .iter()
                .map(|a| crate::mink_core::ray_angle(a, &b))
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(v, _)| sep > *v) {
                best = Some((sep, b));
            }
        }
    }
    Ok(best.expect("dimension >= 1").1)
}

/// `log Cr(g xi, g-, xi, g+)`.
pub fn length_from_cross_ratio(g: &Isometry, xi: &BPoint) -> Result<f64> {
    let class = classify(g, LOXODROMIC_TOL)?;
    if class.kind != IsomKind::Loxodromic {
        return Err(GeoError::Precondition(format!(
            "cross-ratio length needs a loxodromic element, got {}",
            class.kind
        )));
    }
    let (minus, plus) = (&class.fixed_rays[0], &class.fixed_rays[1]);
    if same_ray(xi, minus) || same_ray(xi, plus) {
        return Err(GeoError::Degenerate("auxiliary ray is a fixed ray".into()));
    }
    let gxi = g.apply_ray(xi);
    match cr_boundary(&gxi, minus, xi, plus)? {
        XRValue::Finite(v) if v > 0.0 => Ok(v.ln()),
        other => Err(GeoError::Degenerate(format!("unexpected cross-ratio {other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrFromLengths {
    pub estimate: f64,
    pub direct: f64,
    pub gap: f64,
}

/// `exp ½(l(a^m) + l(b^m) - l(a^m b^m))` against the boundary cross-ratio of the fixed rays.
pub fn cr_from_lengths(alpha: &Isometry, beta: &Isometry, m: u32) -> Result<CrFromLengths> {
    let ca = classify(alpha, LOXODROMIC_TOL)?;
    let cb = classify(beta, LOXODROMIC_TOL)?;
    if ca.kind != IsomKind::Loxodromic || cb.kind != IsomKind::Loxodromic {
        return Err(GeoError::Precondition("both elements must be loxodromic".into()));
    }
    for a in &ca.fixed_rays {
        for b in &cb.fixed_rays {
            if same_ray(a, b) {
                return Err(GeoError::Degenerate("elements share a fixed ray".into()));
            }
        }
    }
    let power = |g: &Isometry| {
        let mut acc = ScaledMatrix::new(DMatrix::identity(g.dim() + 1, g.dim() + 1));
        let step = ScaledMatrix::new(g.matrix.clone());
        for _ in 0..m {
            acc = acc.mul(&step);
        }
        acc
    };
    let am = power(alpha);
    let bm = power(beta);
    let abm = am.mul(&bm);
    let expo = 0.5 * (am.log_spectral_radius() + bm.log_spectral_radius() - abm.log_spectral_radius());
    let estimate = expo.exp();
    let direct = match cr_boundary(&ca.fixed_rays[0], &ca.fixed_rays[1], &cb.fixed_rays[0], &cb.fixed_rays[1])? {
        XRValue::Finite(v) => v,
        XRValue::Infinite => f64::INFINITY,
    };
    Ok(CrFromLengths { estimate, direct, gap: (estimate - direct).abs() })
}

/// `Bus_{g+}(o, g o)`, equal to the translation length for every `o`.
pub fn busemann_length_check(g: &Isometry, o: &HPoint) -> Result<f64> {
    let class = classify(g, LOXODROMIC_TOL)?;
    if class.kind != IsomKind::Loxodromic {
        return Err(GeoError::Precondition("Busemann length needs a loxodromic element".into()));
    }
    busemann(&class.fixed_rays[1], o, &g.apply_point(o))
}

/// `Bus_{g-}(g o, o)`, the repelling-side counterpart.
pub fn busemann_length_repelling(g: &Isometry, o: &HPoint) -> Result<f64> {
    let class = classify(g, LOXODROMIC_TOL)?;
    if class.kind != IsomKind::Loxodromic {
        return Err(GeoError::Precondition("Busemann length needs a loxodromic element".into()));
    }
    busemann(&class.fixed_rays[0], &g.apply_point(o), o)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementParams {
    pub armijo_c: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub min_step: f64,
    pub max_iter: usize,
    /// Bound on `<x, o0> = cosh d(x, o0)` before the iterate counts as escaped.
    pub escape_radius: f64,
}

impl Default for DisplacementParams {
    fn default() -> Self {
        DisplacementParams {
            armijo_c: 0.5,
            initial_step: 1.0,
            shrink: 0.5,
            min_step: 1e-8,
            max_iter: 10_000,
            escape_radius: 1e3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Displacement {
    pub value: f64,
    pub argmin: HPoint,
    pub iterations: usize,
}

/// Riemannian gradient of `x -> d(g x, x)` as a tangent vector at `x`.
fn displacement_gradient(g: &DMatrix<f64>, g_inv: &DMatrix<f64>, x: &DVector<f64>, d: f64) -> DVector<f64> {
    if d <= 1e-300 {
        return DVector::zeros(x.len());
    }
    let w = g * x + g_inv * x;
    let wt = &w - x * inner(&w, x);
    -wt / d.sinh()
}

/// `exp_x(v)` on the hyperboloid.
fn exp_map(x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let nv = (-inner(v, v)).max(0.0).sqrt();
    let y = if nv < 1e-300 { x.clone() } else { x * nv.cosh() + v * (nv.sinh() / nv) };
    let q = inner(&y, &y);
    y / q.sqrt()
}

/// Minimum-norm point of the convex hull of tangent vectors, in the metric `-<,>`.
fn min_norm_combination(vs: &[DVector<f64>]) -> DVector<f64> {
    let k = vs.len();
    let gram = DMatrix::from_fn(k, k, |i, j| -inner(&vs[i], &vs[j]));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        let mut a = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in idx.iter().enumerate() {
                a[(p, q)] = gram[(i, j)];
            }
            a[(p, s)] = 1.0;
            a[(s, p)] = 1.0;
        }
        rhs[s] = 1.0;
        let sol = match a.clone().svd(true, true).solve(&rhs, 1e-14) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if (0..s).any(|p| sol[p] < -1e-12) {
            continue;
        }
        let mut v = DVector::zeros(vs[0].len());
        for (p, &i) in idx.iter().enumerate() {
            v += &vs[i] * sol[p].max(0.0);
        }
        let nv = -inner(&v, &v);
        if best.as_ref().is_none_or(|(b, _)| nv < *b) {
            best = Some((nv, v));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| vs[0].clone())
}

/// Minimizes `x -> max_i d(g_i x, x)` by geodesic descent along minimum-norm
/// subgradients of the top-`k` constraints, keeping the best of the `k` candidate
/// steps, with Armijo backtracking.
pub fn min_displacement(s: &[Isometry], o0: &HPoint, params: &DisplacementParams) -> Result<Displacement> {
    if s.is_empty() {
        return Err(GeoError::InvalidInput("need at least one isometry".into()));
    }
    let n = o0.dim();
    if s.iter().any(|g| g.dim() != n) {
        return Err(GeoError::DimensionMismatch { expected: n, got: s[0].dim() });
    }
    let mats: Vec<DMatrix<f64>> = s.iter().map(|g| g.matrix.clone()).collect();
    let invs: Vec<DMatrix<f64>> = s.iter().map(|g| g.inverse().matrix).collect();
    let values = |x: &DVector<f64>| -> Vec<f64> { mats.iter().map(|g| dist_raw(&(g * x), x)).collect() };
    let fmax = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut x = o0.coords().clone();
    let mut vals = values(&x);
    let mut f = fmax(&vals);
    let mut step0 = params.initial_step;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let grads: Vec<DVector<f64>> = (0..mats.len())
            .map(|i| displacement_gradient(&mats[i], &invs[i], &x, vals[i]))
            .collect();
        let mut order: Vec<usize> = (0..mats.len()).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));

        let mut best: Option<(f64, DVector<f64>, Vec<f64>, f64)> = None;
        let mut stationary = false;
        for k in 1..=order.len() {
            let active: Vec<DVector<f64>> = order[..k].iter().map(|&i| grads[i].clone()).collect();
            let dir = -min_norm_combination(&active);
            let dn2 = (-inner(&dir, &dir)).max(0.0);
            if dn2.sqrt() < 1e-14 {
                if k == order.len() {
                    stationary = true;
                }
                continue;
            }
            let mut t = step0;
            while t >= params.min_step {
                let y = exp_map(&x, &(&dir * t));
                let vy = values(&y);
                let fy = fmax(&vy);
                if fy <= f - params.armijo_c * t * dn2 {
                    if best.as_ref().is_none_or(|b| fy < b.0) {
                        best = Some((fy, y, vy, t));
                    }
                    break;
                }
                t *= params.shrink;
            }
        }
        match best {
            Some((fy, y, vy, t)) => {
                x = y;
                vals = vy;
                f = fy;
                step0 = (t / params.shrink).min(params.initial_step);
                if inner(&x, o0.coords()) > params.escape_radius {
                    return Err(GeoError::NoConvergence(
                        "iterate escaped: fixed point at infinity suspected".into(),
                    ));
                }
            }
            None => break,
        }
        if stationary {
            break;
        }
    }
    Ok(Displacement {
        value: f,
        argmin: HPoint::from_timelike(x)?,
        iterations,
    })
}

/// Norm of the Riemannian gradient of `x -> d(g x, x)` at `x`.
pub fn displacement_gradient_norm(g: &Isometry, x: &HPoint) -> f64 {
    let d = dist_raw(&g.apply(x.coords()), x.coords());
    let v = displacement_gradient(&g.matrix, &g.inverse().matrix, x.coords(), d);
    (-inner(&v, &v)).max(0.0).sqrt()
}

/// Freely reduced word over generators `0, 1, ...`; letter `+(i+1)` is
/// generator `i`, `-(i+1)` its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    letters: Vec<i32>,
}

impl Word {
    pub fn identity() -> Self {
        Word { letters: vec![] }
    }

    /// Freely reduces the letters; zero letters are rejected.
    pub fn new(letters: Vec<i32>) -> Result<Self> {
        let mut out: Vec<i32> = Vec::with_capacity(letters.len());
        for l in letters {
            if l == 0 {
                return Err(GeoError::InvalidInput("letter 0 is not a generator".into()));
            }
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Ok(Word { letters: out })
    }

    pub fn generator(i: usize) -> Self {
        Word { letters: vec![i as i32 + 1] }
    }

    /// Parses `a`, `b`, ... for generators and `A`, `B`, ... for inverses; `1` or
    /// the empty string is the identity.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "1" || s == "e" {
            return Ok(Word::identity());
        }
        let mut letters = Vec::new();
        for ch in s.chars() {
            let l = if ch.is_ascii_lowercase() {
                (ch as i32 - 'a' as i32) + 1
            } else if ch.is_ascii_uppercase() {
                -((ch as i32 - 'A' as i32) + 1)
            } else {
                return Err(GeoError::Parse(format!("bad letter {ch:?} in word {s:?}")));
            };
            letters.push(l);
        }
        Word::new(letters)
    }

    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word { letters: self.letters.iter().rev().map(|l| -l).collect() }
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut l = self.letters.clone();
        l.extend_from_slice(&other.letters);
        Word::new(l).expect("letters are nonzero")
    }

    pub fn pow(&self, k: i32) -> Word {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut l = Vec::new();
        for _ in 0..k.unsigned_abs() {
            l.extend_from_slice(&base.letters);
        }
        Word::new(l).expect("letters are nonzero")
    }

    /// Strips matching inverse letters from the two ends.
    pub fn cyclically_reduced(&self) -> Word {
        let l = &self.letters;
        let (mut i, mut j) = (0usize, l.len());
        while j > i + 1 && l[i] == -l[j - 1] {
            i += 1;
            j -= 1;
        }
        Word { letters: l[i..j].to_vec() }
    }

    pub fn max_generator(&self) -> usize {
        self.letters.iter().map(|l| l.unsigned_abs() as usize).max().unwrap_or(0)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return f.write_str("1");
        }
        for &l in &self.letters {
            let base = (l.unsigned_abs() - 1) as u8;
            let c = if l > 0 { b'a' + base } else { b'A' + base };
            write!(f, "{}", c as char)?;
        }
        Ok(())
    }
}

/// All freely reduced words of length `<= radius` over `gens` generators,
/// shortest first.
pub fn word_ball(gens: usize, radius: usize) -> Vec<Word> {
    let mut out = vec![Word::identity()];
    let mut frontier = vec![Word::identity()];
    let alphabet: Vec<i32> = (1..=gens as i32).flat_map(|g| [g, -g]).collect();
    for _ in 0..radius {
        let mut next = Vec::new();
        for w in &frontier {
            for &l in &alphabet {
                if w.letters.last() == Some(&-l) {
                    continue;
                }
                let mut letters = w.letters.clone();
                letters.push(l);
                next.push(Word { letters });
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Representation {
    pub generators: Vec<Isometry>,
    pub dimension: usize,
}

impl Representation {
    pub fn new(generators: Vec<Isometry>) -> Result<Self> {
        let dimension = generators
            .first()
            .ok_or_else(|| GeoError::InvalidInput("representation needs generators".into()))?
            .dim();
        if generators.iter().any(|g| g.dim() != dimension) {
            return Err(GeoError::InvalidInput("generators of different dimensions".into()));
        }
        Ok(Representation { generators, dimension })
    }

    fn letter_matrix(&self, l: i32) -> Result<DMatrix<f64>> {
        let i = l.unsigned_abs() as usize - 1;
        let g = self.generators.get(i).ok_or_else(|| {
            GeoError::InvalidInput(format!("word uses generator {i} of {}", self.generators.len()))
        })?;
        Ok(if l > 0 { g.matrix.clone() } else { g.inverse().matrix })
    }

    /// Image of a word as a renormalized product.
    pub fn eval_scaled(&self, w: &Word) -> Result<ScaledMatrix> {
        let n = self.dimension + 1;
        let mut acc = ScaledMatrix::new(DMatrix::identity(n, n));
        for &l in w.letters() {
            acc = acc.mul(&ScaledMatrix::new(self.letter_matrix(l)?));
        }
        Ok(acc)
    }

    pub fn eval(&self, w: &Word) -> Result<Isometry> {
        let n = self.dimension + 1;
        let mut acc = DMatrix::identity(n, n);
        for &l in w.letters() {
            acc *= self.letter_matrix(l)?;
        }
        Ok(Isometry::from_matrix_unchecked(acc))
    }

    pub fn conjugate_by(&self, h: &Isometry) -> Representation {
        Representation {
            generators: self.generators.iter().map(|g| g.conjugate_by(h)).collect(),
            dimension: self.dimension,
        }
    }
}

/// Translation lengths over a word ball, together with the orbit data they came from.
#[derive(Debug, Clone)]
pub struct LengthFunction {
    pub words: Vec<Word>,
    pub lengths: Vec<f64>,
    /// `log F(w) = log <rho(w) o, o>`.
    pub log_orbit: Vec<f64>,
    /// `log F(w^(2^j))` for `j = 0..=squarings`.
    pub log_orbit_powers: Vec<Vec<f64>>,
    /// Exponent applied to the orbit kernel (1 for the representation itself).
    pub exponent: f64,
}

impl LengthFunction {
    pub fn get(&self, w: &Word) -> Option<f64> {
        self.words.iter().position(|v| v == w).map(|i| self.lengths[i])
    }

    pub fn as_map(&self) -> HashMap<Word, f64> {
        self.words.iter().cloned().zip(self.lengths.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// `l_F(w)` over the ball from the orbit kernel `F(w) = cosh d(rho(w) o, o)`.
pub fn length_function_from_orbit(rho: &Representation, o: &HPoint, ball_radius: usize) -> Result<LengthFunction> {
    length_function_of_power(rho, o, ball_radius, 1.0)
}

fn reliable_powers_scaled(m: ScaledMatrix, o: &DVector<f64>, k: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(k as usize + 1);
    let mut cur = m;
    for j in 0..=k {
        if j > 0 {
            cur = cur.mul(&cur);
        }
        let l = cur.log_pairing(o);
        if !l.is_finite() || (j > 0 && cur.lorentz_defect() > POWER_DEFECT_TOL) {
            break;
        }
        out.push(l.max(0.0));
    }
    out
}

/// Length function of the orbit kernel `F^t`, the exotic deformation of the
/// representation's orbit kernel. `t = 1` is the representation itself.
pub fn length_function_of_power(rho: &Representation, o: &HPoint, ball_radius: usize, t: f64) -> Result<LengthFunction> {
    if ball_radius > 8 {
        return Err(GeoError::InvalidInput("word balls are limited to radius 8".into()));
    }
    if !(t > 0.0) {
        return Err(GeoError::InvalidInput("exponent must be positive".into()));
    }
    if o.dim() != rho.dimension {
        return Err(GeoError::DimensionMismatch { expected: rho.dimension, got: o.dim() });
    }
    let words = word_ball(rho.generators.len(), ball_radius);
    let mut lengths = Vec::with_capacity(words.len());
    let mut log_orbit = Vec::with_capacity(words.len());
    let mut log_orbit_powers = Vec::with_capacity(words.len());
    for w in &words {
        let m = rho.eval_scaled(w)?;
        let logs = reliable_powers_scaled(m, o.coords(), STABLE_SQUARINGS);
        lengths.push(stable_length_from_logs(&logs, t));
        log_orbit.push(t * logs[0]);
        log_orbit_powers.push(logs.iter().map(|l| t * l).collect());
    }
    Ok(LengthFunction { words, lengths, log_orbit, log_orbit_powers, exponent: t })
}

/// Checks whether the ball data is consistent with `l = |h|` for an additive
/// character `h` with `|h(s_i)| = l(s_i)` on generators.
pub fn elementarity_probe(l: &LengthFunction, tol: f64) -> Result<CheckReport> {
    let gens = l.words.iter().map(|w| w.max_generator()).max().unwrap_or(0);
    if l.words.iter().map(|w| w.len()).max().unwrap_or(0) < 2 {
        return Err(GeoError::InvalidInput("probe needs a ball of radius >= 2".into()));
    }
    let c: Vec<f64> = (0..gens)
        .map(|i| {
            l.get(&Word::generator(i))
                .ok_or_else(|| GeoError::InvalidInput(format!("generator {i} missing from the ball")))
        })
        .collect::<Result<_>>()?;
    let mut best = (f64::INFINITY, 0u32, Word::identity());
    for signs in 0u32..(1 << gens) {
        let mut worst = (0.0_f64, Word::identity());
        for (w, &lw) in l.words.iter().zip(&l.lengths) {
            let h: f64 = w
                .letters()
                .iter()
                .map(|&x| {
                    let i = x.unsigned_abs() as usize - 1;
                    let s = if signs & (1 << i) != 0 { -1.0 } else { 1.0 };
                    s * c[i] * x.signum() as f64
                })
                .sum();
            let dev = (lw - h.abs()).abs();
            if dev > worst.0 {
                worst = (dev, w.clone());
            }
        }
        if worst.0 < best.0 {
            best = (worst.0, signs, worst.1);
        }
    }
    let verdict = best.0 <= tol;
    Ok(CheckReport {
        verdict,
        margin: -best.0,
        tolerance: tol,
        witness: None,
        detail: if verdict {
            format!("elementary-consistent (sign pattern {:b})", best.1)
        } else {
            format!("non-elementary: best character misses word {} by {:e}", best.2, best.0)
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupType {
    Elliptic,
    ParabolicLike,
    Loxodromic,
}

/// Finite-ball heuristic: positive lengths mean loxodromic; otherwise orbits
/// of powers that keep growing over the second half of the squarings mean
/// parabolic-like, and bounded ones elliptic.
pub fn type_from_f(l: &LengthFunction, tol: f64) -> GroupType {
    if l.lengths.iter().any(|&x| x > tol) {
        return GroupType::Loxodromic;
    }
    for powers in &l.log_orbit_powers {
        let half = powers.len() / 2;
        let early = powers[..half].iter().copied().fold(0.0_f64, f64::max);
        let late = powers[half..].iter().copied().fold(0.0_f64, f64::max);
        if late > early + 1.0 {
            return GroupType::ParabolicLike;
        }
    }
    GroupType::Elliptic
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomothetyFit {
    pub t: f64,
    pub sup_gap: f64,
}

/// Least-squares `t` with `l1 ~ t l2` over words where `l2 > tol`.
pub fn homothety_fit(l1: &LengthFunction, l2: &LengthFunction, tol: f64) -> Result<HomothetyFit> {
    let m1 = l1.as_map();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut pairs = Vec::new();
    for (w, &y) in l2.words.iter().zip(&l2.lengths) {
        if let Some(&x1) = m1.get(w) {
            pairs.push((x1, y));
            if y > tol {
                xs.push(y);
                ys.push(x1);
            }
        }
    }
    if xs.is_empty() {
        return Err(GeoError::Precondition(
            "second length function vanishes on the common ball".into(),
        ));
    }
    let t = crate::linalg::slope_through_origin(&xs, &ys).expect("nonzero lengths");
    let sup_gap = pairs.iter().map(|(a, b)| (a - t * b).abs()).fold(0.0, f64::max);
    Ok(HomothetyFit { t, sup_gap })
}
