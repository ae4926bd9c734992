//! Certification of kernel classes: positive type, conditionally negative
//! type, hyperbolic type, strictness, Ptolemy and coarse strong hyperbolicity,
//! and the four-point condition.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{GeoError, Result};
use crate::linalg::{asymmetry, centering, hadamard_bound, log_sum_exp, sym_eigen, SortedEigen};
use crate::mink_core::{inner, HPoint};

/// Default relative tolerance for PSD tests.
pub const PSD_TOL: f64 = 1e-9;
/// Relative threshold above which the smallest eigenvalue counts as strictly positive.
pub const STRICT_TOL: f64 = 1e-8;
/// Relative threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;
/// Default slack for the Ptolemy and coarse inequalities (log-ratio units).
pub const PTOLEMY_TOL: f64 = 1e-12;
/// Largest point count for which all Cayley-Menger subsets are enumerated by default.
pub const HCM_DEFAULT_MAX: usize = 12;
pub const HCM_HARD_CAP: usize = 16;

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(GeoError::InvalidInput(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn check_labels(labels: &[String], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(GeoError::InvalidInput(format!(
            "{} labels for a {n}x{n} matrix",
            labels.len()
        )));
    }
    Ok(())
}

/// Symmetric real matrix on a labeled finite set.
#[derive(Debug, Clone, PartialEq)]
pub struct SymKernel {
    pub labels: Vec<String>,
    pub entries: DMatrix<f64>,
}

impl SymKernel {
    pub fn new(entries: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        check_square(&entries)?;
        let n = entries.nrows();
        let labels = labels.unwrap_or_else(|| default_labels(n));
        check_labels(&labels, n)?;
        if asymmetry(&entries) > 1e-12 {
            return Err(GeoError::InvalidInput("kernel is not symmetric".into()));
        }
        Ok(SymKernel { labels, entries })
    }

    /// `cosh d` of a point configuration, i.e. the Minkowski Gram matrix.
    pub fn from_points(points: &[HPoint]) -> Self {
        let n = points.len();
        let mut k = DMatrix::from_element(n, n, 1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = inner(points[i].coords(), points[j].coords()).max(1.0);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        SymKernel { labels: default_labels(n), entries: k }
    }

    /// `exp(scale * d)` of a finite metric.
    pub fn exp_of_metric(d: &FiniteMetric, scale: f64) -> Self {
        SymKernel {
            labels: d.labels.clone(),
            entries: d.entries.map(|v| (scale * v).exp()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entrywise power `K^t`.
    pub fn power(&self, t: f64) -> Self {
        SymKernel {
            labels: self.labels.clone(),
            entries: self.entries.map(|v| v.powf(t)),
        }
    }

    /// Entrywise `log K`.
    pub fn log_entries(&self) -> DMatrix<f64> {
        self.entries.map(|v| v.ln())
    }

    /// Checks unit diagonal and entries `>= 1`, the shape of a hyperbolic-type candidate.
    pub fn check_hyperbolic_candidate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            if (self.entries[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(GeoError::Precondition(format!(
                    "diagonal entry {i} is {}, expected 1",
                    self.entries[(i, i)]
                )));
            }
            for j in 0..n {
                if self.entries[(i, j)] < 1.0 - 1e-12 {
                    return Err(GeoError::Precondition(format!(
                        "entry ({i},{j}) = {} < 1 cannot come from a hyperbolic configuration",
                        self.entries[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn restrict(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let entries = DMatrix::from_fn(m, m, |a, b| self.entries[(idx[a], idx[b])]);
        let labels = idx.iter().map(|&i| self.labels[i].clone()).collect();
        SymKernel { labels, entries }
    }
}

/// Symmetric nonnegative matrix with zero diagonal.
///
/// The triangle inequality is checked by [`FiniteMetric::new`]; derived
/// quantities such as `log K` or rescaled orbit metrics are built with
/// [`FiniteMetric::from_matrix_unchecked`] since they need not satisfy it.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetric {
    pub labels: Vec<String>,
    pub entries: DMatrix<f64>,
}

impl FiniteMetric {
    pub fn new(entries: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let m = Self::from_matrix_checked_shape(entries, labels)?;
        let slack = m.triangle_slack();
        let scale = m.entries.iter().fold(1.0_f64, |a, v| a.max(*v));
        if slack.0 < -1e-10 * scale {
            let (i, j, k) = slack.1;
            return Err(GeoError::InvalidInput(format!(
                "triangle inequality fails at ({i},{j},{k}) by {}",
                -slack.0
            )));
        }
        Ok(m)
    }

    fn from_matrix_checked_shape(entries: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        check_square(&entries)?;
        let n = entries.nrows();
        let labels = labels.unwrap_or_else(|| default_labels(n));
        check_labels(&labels, n)?;
        if asymmetry(&entries) > 1e-12 {
            return Err(GeoError::InvalidInput("metric is not symmetric".into()));
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(GeoError::InvalidInput("metric diagonal must be zero".into()));
            }
        }
        if entries.iter().any(|v| *v < 0.0) {
            return Err(GeoError::InvalidInput("metric has negative entries".into()));
        }
        Ok(FiniteMetric { labels, entries })
    }

    /// Symmetric, zero-diagonal, nonnegative data without the triangle check.
    pub fn from_matrix_unchecked(entries: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        Self::from_matrix_checked_shape(entries, labels)
    }

    pub fn from_points(points: &[HPoint]) -> Self {
        let n = points.len();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                crate::mink_core::dist_raw(points[i].coords(), points[j].coords())
            }
        });
        FiniteMetric { labels: default_labels(n), entries: d }
    }

    /// `log K` of a kernel with entries `>= 1`.
    pub fn log_of_kernel(k: &SymKernel) -> Result<Self> {
        k.check_hyperbolic_candidate()?;
        let mut m = k.log_entries().map(|v| v.max(0.0));
        for i in 0..m.nrows() {
            m[(i, i)] = 0.0;
        }
        Self::from_matrix_unchecked(m, Some(k.labels.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Worst `d(i,k) + d(k,j) - d(i,j)` and the triple attaining it.
    pub fn triangle_slack(&self) -> (f64, (usize, usize, usize)) {
        let n = self.len();
        let d = &self.entries;
        let mut worst = (f64::INFINITY, (0, 0, 0));
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let s = d[(i, k)] + d[(k, j)] - d[(i, j)];
                    if s < worst.0 {
                        worst = (s, (i, j, k));
                    }
                }
            }
        }
        if worst.0 == f64::INFINITY {
            worst.0 = 0.0;
        }
        worst
    }
}

/// Outcome of a certification.
///
/// `verdict` holds exactly when `margin >= -tolerance`, where `tolerance` is
/// the absolute tolerance actually applied.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckReport {
    pub verdict: bool,
    pub margin: f64,
    pub tolerance: f64,
    pub witness: Option<Vec<usize>>,
    pub detail: String,
}

impl CheckReport {
    pub fn new(margin: f64, tolerance: f64, witness: Option<Vec<usize>>, detail: String) -> Self {
        CheckReport {
            verdict: margin >= -tolerance,
            margin,
            tolerance,
            witness,
            detail,
        }
    }
}

pub fn is_positive_type(k: &SymKernel, tol: f64) -> Result<CheckReport> {
    if k.is_empty() {
        return Ok(CheckReport::new(0.0, 0.0, None, "empty kernel".into()));
    }
    let eig = sym_eigen(&k.entries);
    let atol = tol * eig.scale();
    let lmin = eig.min();
    let witness = (lmin < -atol).then(|| vec![0]);
    Ok(CheckReport::new(
        lmin,
        atol,
        witness,
        format!("lambda_min = {lmin:e}, lambda_max(|K|) = {:e}", eig.scale()),
    ))
}

pub fn is_cond_negative_type(n: &SymKernel, tol: f64) -> Result<CheckReport> {
    let size = n.len();
    let scale_entries = n.entries.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for i in 0..size {
        if n.entries[(i, i)].abs() > 1e-12 * scale_entries.max(1.0) {
            return Err(GeoError::Precondition(
                "conditionally negative kernel needs zero diagonal".into(),
            ));
        }
    }
    if size == 0 {
        return Ok(CheckReport::new(0.0, 0.0, None, "empty kernel".into()));
    }
    let p = centering(size);
    let m = -(&p * &n.entries * &p);
    let eig = sym_eigen(&m);
    let scale = sym_eigen(&n.entries).scale();
    let atol = tol * scale;
    let lmin = eig.min();
    Ok(CheckReport::new(
        lmin,
        atol,
        (lmin < -atol).then(|| vec![0]),
        format!("centered lambda_min = {lmin:e}"),
    ))
}

fn check_base(n: usize, base: usize) -> Result<()> {
    if base >= n {
        return Err(GeoError::InvalidInput(format!(
            "base index {base} out of range for {n} points"
        )));
    }
    Ok(())
}

/// Visual kernel `K0(i,j) = K(b,i) K(b,j) - K(i,j)` over the indices other than `base`.
pub fn visual_kernel(k: &SymKernel, base: usize) -> Result<SymKernel> {
    let n = k.len();
    check_base(n, base)?;
    let idx: Vec<usize> = (0..n).filter(|&i| i != base).collect();
    let e = &k.entries;
    let m = idx.len();
    let entries = DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (idx[a], idx[b]);
        e[(base, i)] * e[(base, j)] - e[(i, j)]
    });
    let labels = idx.iter().map(|&i| k.labels[i].clone()).collect();
    Ok(SymKernel { labels, entries })
}

/// Visual kernel of `K^t` conjugated by `diag(K(b,i)^{-t})`, built from `log K`.
///
/// Entries are `1 - exp(t (l_ij - l_bi - l_bj))`, evaluated with `expm1`, so the
/// matrix stays well scaled for large `t`. Congruence preserves inertia and
/// rank, hence PSD-ness and the embedding dimension.
pub fn normalized_visual_kernel(log_k: &DMatrix<f64>, t: f64, base: usize) -> DMatrix<f64> {
    let n = log_k.nrows();
    let idx: Vec<usize> = (0..n).filter(|&i| i != base).collect();
    let m = idx.len();
    DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (idx[a], idx[b]);
        let lij = if i == j { 0.0 } else { log_k[(i, j)] };
        -(t * (lij - log_k[(base, i)] - log_k[(base, j)])).exp_m1()
    })
}

/// Spectrum of the normalized visual kernel of `K^t` at `base`.
pub fn visual_spectrum(log_k: &DMatrix<f64>, t: f64, base: usize) -> SortedEigen {
    sym_eigen(&normalized_visual_kernel(log_k, t, base))
}

/// Hyperbolic-type test of `K^t` given `log K`; `bases` lists the base points to check.
/// The report describes the base whose margin is worst relative to its tolerance.
pub fn hyperbolic_check_log(log_k: &DMatrix<f64>, t: f64, tol: f64, bases: &[usize]) -> CheckReport {
    if log_k.nrows() <= 1 || bases.is_empty() {
        return CheckReport::new(0.0, 0.0, None, "at most one point".into());
    }
    // (relative margin, lambda_min, absolute tolerance, base, rank)
    let mut worst: Option<(f64, f64, f64, usize, usize)> = None;
    for &b in bases {
        let eig = visual_spectrum(log_k, t, b);
        let atol = tol * eig.scale();
        let lmin = eig.min();
        let rel = if atol > 0.0 {
            lmin / atol
        } else if lmin < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        if worst.is_none_or(|w| rel < w.0) {
            worst = Some((rel, lmin, atol, b, eig.rank(RANK_TOL)));
        }
    }
    let (_, lmin, atol, b, rank) = worst.expect("bases is nonempty");
    let failing = lmin < -atol;
    CheckReport::new(
        lmin,
        atol,
        failing.then(|| vec![b]),
        format!("visual kernel at base {b}: lambda_min = {lmin:e}, rank {rank}"),
    )
}

pub fn is_hyperbolic_type(k: &SymKernel, tol: f64, all_bases: bool) -> Result<CheckReport> {
    k.check_hyperbolic_candidate()?;
    let bases: Vec<usize> = if all_bases { (0..k.len()).collect() } else { vec![0] };
    if k.is_empty() {
        return Ok(CheckReport::new(0.0, 0.0, None, "empty kernel".into()));
    }
    Ok(hyperbolic_check_log(&k.log_entries(), 1.0, tol, &bases))
}

/// Rank of the visual kernel at `base`, the dimension of the minimal hyperbolic embedding.
pub fn visual_rank(k: &SymKernel, base: usize) -> Result<usize> {
    k.check_hyperbolic_candidate()?;
    check_base(k.len(), base)?;
    Ok(visual_spectrum(&k.log_entries(), 1.0, base).rank(RANK_TOL))
}

/// `det(-K_S)` for every subset `S` of size `1..=max_subset`, in lexicographic
/// order of size then indices.
pub fn hcm_determinants(
    k: &SymKernel,
    max_subset: Option<usize>,
    override_cap: bool,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = k.len();
    for i in 0..n {
        if (k.entries[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(GeoError::Precondition("kernel needs unit diagonal".into()));
        }
    }
    if n > HCM_HARD_CAP && !override_cap {
        return Err(GeoError::InvalidInput(format!(
            "{n} points exceed the Cayley-Menger cap of {HCM_HARD_CAP}"
        )));
    }
    let max = max_subset.unwrap_or(n).min(n);
    let mut out = Vec::new();
    for size in 1..=max {
        for subset in combinations(n, size) {
            let m = DMatrix::from_fn(size, size, |a, b| -k.entries[(subset[a], subset[b])]);
            out.push((subset, m.determinant()));
        }
    }
    Ok(out)
}

/// Hyperbolic-type verdict through Cayley-Menger determinants.
///
/// Each determinant is compared against `tol` times its Hadamard bound.
pub fn hcm_check(k: &SymKernel, tol: f64) -> Result<CheckReport> {
    let dets = hcm_determinants(k, Some(k.len().min(HCM_DEFAULT_MAX)), false)?;
    let mut worst = (f64::INFINITY, Vec::new());
    for (s, det) in dets {
        let m = DMatrix::from_fn(s.len(), s.len(), |a, b| k.entries[(s[a], s[b])]);
        let rel = -det / hadamard_bound(&m);
        if rel < worst.0 {
            worst = (rel, s);
        }
    }
    let witness = (worst.0 < -tol).then(|| worst.1.clone());
    Ok(CheckReport::new(
        worst.0,
        tol,
        witness,
        format!("largest normalized determinant {:e} on subset {:?}", -worst.0, worst.1),
    ))
}

pub fn is_strict_hyperbolic_type(k: &SymKernel, tol: f64) -> Result<CheckReport> {
    k.check_hyperbolic_candidate()?;
    if k.len() <= 1 {
        return Ok(CheckReport::new(0.0, 0.0, None, "at most one point".into()));
    }
    let eig = visual_spectrum(&k.log_entries(), 1.0, 0);
    let scale = eig.scale();
    let lmin = eig.min();
    let detail = if lmin > tol * scale {
        "strictly of hyperbolic type".to_string()
    } else if lmin >= -PSD_TOL * scale {
        format!("indeterminate: lambda_min = {lmin:e} within the near-singular band")
    } else {
        format!("not of hyperbolic type: lambda_min = {lmin:e}")
    };
    // verdict <=> margin >= 0 with the strictness threshold folded into the margin
    let margin = lmin - tol * scale;
    let witness = (margin < 0.0).then(|| vec![0]);
    let r = CheckReport::new(margin, 0.0, witness, detail);
    Ok(r)
}

/// `log sinh(x/2)`, `-inf` at 0.
fn log_sinh_half(x: f64) -> f64 {
    let h = 0.5 * x;
    if h <= 0.0 {
        f64::NEG_INFINITY
    } else if h > 20.0 {
        h - std::f64::consts::LN_2 + (-2.0 * h).exp().ln_1p()
    } else {
        h.sinh().ln()
    }
}

/// The three pairings of a quadruple `(p,q,r,s)`: `pq|rs`, `pr|qs`, `ps|qr`.
fn pairings(q: &[usize; 4]) -> [[(usize, usize); 2]; 3] {
    let [p, a, b, c] = *q;
    [[(p, a), (b, c)], [(p, b), (a, c)], [(p, c), (a, b)]]
}

fn require_four(d: &FiniteMetric) -> Result<()> {
    if d.len() < 4 {
        return Err(GeoError::InvalidInput("need at least 4 points".into()));
    }
    Ok(())
}

/// `log(rhs) - log(lhs)` with the convention that two empty sides tie.
fn log_margin(lhs: f64, rhs: f64) -> f64 {
    if lhs == f64::NEG_INFINITY {
        if rhs == f64::NEG_INFINITY {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        rhs - lhs
    }
}

/// Ptolemy inequality for `sinh(d/2)` on every quadruple and every pairing.
/// Margins are log ratios `log(rhs/lhs)`.
pub fn ptolemy_check(d: &FiniteMetric, tol: f64) -> Result<CheckReport> {
    require_four(d)?;
    let ls = d.entries.map(log_sinh_half);
    let mut worst = (f64::INFINITY, vec![]);
    for q in quadruples(d.len()) {
        let logs: Vec<f64> = pairings(&q)
            .iter()
            .map(|pr| ls[pr[0]] + ls[pr[1]])
            .collect();
        for l in 0..3 {
            let others = [logs[(l + 1) % 3], logs[(l + 2) % 3]];
            let m = log_margin(logs[l], log_sum_exp(&others));
            if m < worst.0 {
                worst = (m, q.to_vec());
            }
        }
    }
    let witness = (worst.0 < -tol).then(|| worst.1.clone());
    Ok(CheckReport::new(worst.0, tol, witness, format!("worst log-slack {:e}", worst.0)))
}

/// `C`-coarse strong `eps`-hyperbolicity, evaluated in log-sum-exp form.
pub fn coarse_strong_hyp_check(d: &FiniteMetric, eps: f64, c: f64) -> Result<CheckReport> {
    require_four(d)?;
    if !(eps > 0.0) || c < 0.0 {
        return Err(GeoError::InvalidInput("need eps > 0 and C >= 0".into()));
    }
    let e = &d.entries;
    let mut worst = (f64::INFINITY, vec![]);
    for q in quadruples(d.len()) {
        let sums: Vec<f64> = pairings(&q)
            .iter()
            .map(|pr| 0.5 * eps * (e[pr[0]] + e[pr[1]]))
            .collect();
        let mut big = 0.0_f64;
        for a in 0..4 {
            for b in (a + 1)..4 {
                big = big.max(e[(q[a], q[b])]);
            }
        }
        for l in 0..3 {
            let mut rhs = vec![sums[(l + 1) % 3], sums[(l + 2) % 3]];
            if c > 0.0 {
                rhs.push(c.ln() + 0.5 * eps * big);
            }
            let m = log_sum_exp(&rhs) - sums[l];
            if m < worst.0 {
                worst = (m, q.to_vec());
            }
        }
    }
    let witness = (worst.0 < -PTOLEMY_TOL).then(|| worst.1.clone());
    Ok(CheckReport::new(
        worst.0,
        PTOLEMY_TOL,
        witness,
        format!("worst log-slack {:e} (eps = {eps}, C = {c})", worst.0),
    ))
}

/// Four-point defect and the quadruple attaining it (`None` below 4 points).
pub fn four_point_defect_witness(d: &FiniteMetric) -> (f64, Option<[usize; 4]>) {
    let e = &d.entries;
    let mut worst = (0.0_f64, None);
    for q in quadruples(d.len()) {
        let mut s: Vec<f64> = pairings(&q).iter().map(|pr| e[pr[0]] + e[pr[1]]).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let defect = 0.5 * (s[0] - s[1]);
        if defect > worst.0 || worst.1.is_none() {
            worst = (defect.max(worst.0), Some(q));
        }
    }
    worst
}

/// `max over quadruples of (largest pairing sum - second largest) / 2`.
pub fn four_point_defect(d: &FiniteMetric) -> f64 {
    four_point_defect_witness(d).0
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            extend(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        extend(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

fn quadruples(n: usize) -> impl Iterator<Item = [usize; 4]> {
    (0..n).flat_map(move |a| {
        ((a + 1)..n).flat_map(move |b| {
            ((b + 1)..n).flat_map(move |c| ((c + 1)..n).map(move |d| [a, b, c, d]))
        })
    })
}
