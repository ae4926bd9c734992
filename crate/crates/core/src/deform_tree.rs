//! Power deformations `K ↦ K^t`, the critical exponent and dimension of a
//! kernel, detection of tree-like kernels, and embeddings of tree metrics
//! through `λ^d = cosh d_H`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{GeoError, Result};
use crate::gns_embed::{embed_hyperbolic, HypEmbedding};
use crate::kernel_check::{
    four_point_defect, hyperbolic_check_log, is_hyperbolic_type, visual_spectrum, CheckReport, FiniteMetric,
    SymKernel, PSD_TOL, RANK_TOL,
};
use crate::mink_core::HPoint;

/// Relative four-point tolerance: a metric is a tree metric when its defect is
/// at most this times its largest entry.
pub const TREE_TOL_REL: f64 = 1e-9;
pub const DEFAULT_T_MAX: f64 = 64.0;
pub const DEFAULT_ITERS: usize = 60;
/// Points of the monotonicity scan that precedes bisection.
pub const SCAN_POINTS: usize = 64;
/// `t_K - BACKOFF` is where the critical dimension is read off.
pub const BACKOFF: f64 = 1e-6;
/// A false verdict followed by a true one is an interval violation only when
/// its margin is below this many tolerances.
const VIOLATION_FACTOR: f64 = 10.0;
/// `exp` overflows above this exponent.
const MAX_EXPONENT: f64 = 700.0;

pub fn tree_tolerance(d: &FiniteMetric) -> f64 {
    TREE_TOL_REL * d.entries.iter().fold(0.0_f64, |a, v| a.max(*v))
}

/// Finite metric satisfying the four-point condition within [`tree_tolerance`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMetric(FiniteMetric);

impl TreeMetric {
    pub fn new(d: FiniteMetric) -> Result<Self> {
        let defect = four_point_defect(&d);
        let tol = tree_tolerance(&d);
        if defect > tol {
            return Err(GeoError::Precondition(format!(
                "four-point defect {defect:e} exceeds tree tolerance {tol:e}"
            )));
        }
        Ok(TreeMetric(d))
    }

    pub fn metric(&self) -> &FiniteMetric {
        &self.0
    }
}

/// Distances between the leaves of a random binary tree. Leaves are attached
/// one at a time at a uniform point of a uniform edge, with pendant edges of
/// length uniform in `[0.2, 2]`.
pub fn random_tree_metric(seed: u64, leaves: usize) -> Result<TreeMetric> {
    if leaves < 2 {
        return Err(GeoError::InvalidInput("a tree needs at least 2 leaves".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // edges (u, v, length); node k < leaves is leaf k
    let mut edges: Vec<(usize, usize, f64)> = vec![(0, 1, rng.gen_range(0.2..2.0))];
    let mut next = leaves;
    for leaf in 2..leaves {
        let e = rng.gen_range(0..edges.len());
        let (u, v, len) = edges[e];
        let cut = rng.gen_range(0.05..0.95) * len;
        let mid = next;
        next += 1;
        edges[e] = (u, mid, cut);
        edges.push((mid, v, len - cut));
        edges.push((mid, leaf, rng.gen_range(0.2..2.0)));
    }
    let nodes = next;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
    for &(u, v, w) in &edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut d = DMatrix::zeros(leaves, leaves);
    for s in 0..leaves {
        let mut dist = vec![f64::NAN; nodes];
        dist[s] = 0.0;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &(v, w) in &adj[u] {
                if dist[v].is_nan() {
                    dist[v] = dist[u] + w;
                    stack.push(v);
                }
            }
        }
        for t in 0..leaves {
            d[(s, t)] = dist[t];
        }
    }
    let d = (&d + d.transpose()) * 0.5;
    TreeMetric::new(FiniteMetric::from_matrix_unchecked(d, None)?)
}

fn check_exponent(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(GeoError::InvalidInput(format!("exponent {t} outside (0, 1]")));
    }
    Ok(())
}

fn require_hyperbolic(k: &SymKernel) -> Result<()> {
    let report = is_hyperbolic_type(k, PSD_TOL, false)?;
    if !report.verdict {
        return Err(GeoError::Precondition(format!("kernel is not of hyperbolic type: {}", report.detail)));
    }
    Ok(())
}

/// Entrywise `K^t` for `t ∈ (0, 1]`, certified to stay of hyperbolic type.
pub fn exotic_power(k: &SymKernel, t: f64) -> Result<SymKernel> {
    check_exponent(t)?;
    require_hyperbolic(k)?;
    let out = k.power(t);
    let report = is_hyperbolic_type(&out, PSD_TOL, false)?;
    if !report.verdict {
        return Err(GeoError::Certification(format!(
            "power {t} of a hyperbolic-type kernel failed certification: {}",
            report.detail
        )));
    }
    Ok(out)
}

/// Embedding of the configuration with `cosh d' = (cosh d)^t`.
pub fn deform_points(points: &[HPoint], t: f64) -> Result<HypEmbedding> {
    check_exponent(t)?;
    if points.is_empty() {
        return Err(GeoError::InvalidInput("no points".into()));
    }
    let k = SymKernel::from_points(points);
    embed_hyperbolic(&exotic_power(&k, t)?, 0, RANK_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalExponent {
    Finite(f64),
    Infinite,
}

impl CriticalExponent {
    pub fn finite(&self) -> Option<f64> {
        match self {
            CriticalExponent::Finite(t) => Some(*t),
            CriticalExponent::Infinite => None,
        }
    }
}

impl Serialize for CriticalExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CriticalExponent::Finite(t) => s.serialize_f64(*t),
            CriticalExponent::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: f64,
    pub verdict: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelAnalysis {
    #[serde(rename = "t_K")]
    pub t_k: CriticalExponent,
    /// Visual rank of `K^{t_K - BACKOFF}`; `None` for arboreal kernels.
    #[serde(rename = "kappa_K")]
    pub kappa_k: Option<usize>,
    /// Visual rank at `t_K` itself, which may drop below `kappa_K`.
    pub rank_at_critical: Option<usize>,
    pub backoff: f64,
    pub arboreal: bool,
    pub four_point_defect: f64,
    /// Smallest triangle slack of `log K`; negative when `log K` is not a metric.
    pub triangle_slack: f64,
    pub tree_tolerance: f64,
    /// `t_K` only reached the upper end of the search range.
    pub saturated: bool,
    /// Scan points first, then bisection steps, each group in evaluation order.
    pub trace: Vec<TraceStep>,
}

/// Rank of the visual kernel of `K^t` at base 0.
pub fn rank_at(k: &SymKernel, t: f64) -> Result<usize> {
    k.check_hyperbolic_candidate()?;
    if k.len() <= 1 {
        return Ok(0);
    }
    Ok(visual_spectrum(&k.log_entries(), t, 0).rank(RANK_TOL))
}

/// Largest `t` with `K^t` of hyperbolic type, searched on `[1, t_max]`.
///
/// A uniform scan checks that verdicts switch from true to false at most once
/// and brackets the switch, which bisection then narrows. A kernel whose
/// powers pass up to `t_max` is arboreal when `log K` also passes
/// [`arboreal_test`]; otherwise `t_K = t_max` is reported as saturated.
pub fn critical_exponent(k: &SymKernel, t_max: f64, iters: usize) -> Result<KernelAnalysis> {
    if !(t_max > 1.0) || !t_max.is_finite() {
        return Err(GeoError::InvalidInput(format!("t_max = {t_max} must be finite and > 1")));
    }
    require_hyperbolic(k)?;
    let n = k.len();
    let log_k = k.log_entries();
    let log_metric = FiniteMetric::log_of_kernel(k)?;
    let defect = four_point_defect(&log_metric);
    let tree_tol = tree_tolerance(&log_metric);
    let triangle_slack = log_metric.triangle_slack().0;
    let tree_like = arboreal_test(k)?.verdict;
    let bases: Vec<usize> = (0..n).collect();
    let eval = |t: f64| {
        let r = hyperbolic_check_log(&log_k, t, PSD_TOL, &bases);
        (
            TraceStep { t, verdict: r.verdict, margin: r.margin },
            r.tolerance,
        )
    };

    let mut trace = Vec::with_capacity(SCAN_POINTS + iters);
    let mut first_false: Option<usize> = None;
    for i in 0..SCAN_POINTS {
        let t = 1.0 + (t_max - 1.0) * i as f64 / (SCAN_POINTS - 1) as f64;
        let (step, tol) = eval(t);
        if step.verdict {
            if let Some(f) = first_false {
                let bad: &TraceStep = &trace[f];
                if bad.margin < -VIOLATION_FACTOR * tol.max(f64::MIN_POSITIVE) {
                    return Err(GeoError::Certification(format!(
                        "hyperbolic-type verdicts are not an interval: false at t = {} (margin {:e}) but true at t = {t}",
                        bad.t, bad.margin
                    )));
                }
            }
        } else if first_false.is_none() {
            first_false = Some(i);
        }
        trace.push(step);
    }

    let Some(f) = first_false else {
        if tree_like {
            return Ok(KernelAnalysis {
                t_k: CriticalExponent::Infinite,
                kappa_k: None,
                rank_at_critical: None,
                backoff: BACKOFF,
                arboreal: true,
                four_point_defect: defect,
                triangle_slack,
                tree_tolerance: tree_tol,
                saturated: false,
                trace,
            });
        }
        let kappa = rank_at(k, t_max - BACKOFF)?;
        return Ok(KernelAnalysis {
            t_k: CriticalExponent::Finite(t_max),
            kappa_k: Some(kappa),
            rank_at_critical: Some(rank_at(k, t_max)?),
            backoff: BACKOFF,
            arboreal: false,
            four_point_defect: defect,
            triangle_slack,
            tree_tolerance: tree_tol,
            saturated: true,
            trace,
        });
    };
    if tree_like {
        return Err(GeoError::Certification(format!(
            "log K is a tree metric (defect {defect:e}, triangle slack {triangle_slack:e}) but K^t fails at t = {}",
            trace[f].t
        )));
    }
    if f == 0 {
        return Err(GeoError::Certification("K^1 failed the scan after passing the precondition".into()));
    }
    let (mut lo, mut hi) = (trace[f - 1].t, trace[f].t);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (step, _) = eval(mid);
        if step.verdict {
            lo = mid;
        } else {
            hi = mid;
        }
        trace.push(step);
    }
    Ok(KernelAnalysis {
        t_k: CriticalExponent::Finite(lo),
        kappa_k: Some(rank_at(k, (lo - BACKOFF).max(f64::MIN_POSITIVE))?),
        rank_at_critical: Some(rank_at(k, lo)?),
        backoff: BACKOFF,
        arboreal: false,
        four_point_defect: defect,
        triangle_slack,
        tree_tolerance: tree_tol,
        saturated: false,
        trace,
    })
}

/// Visual rank of `K^{t_K - BACKOFF}`. Kernels on at most two points have
/// `t`-independent rank and are accepted even though they are arboreal.
pub fn critical_dimension(k: &SymKernel, analysis: &KernelAnalysis) -> Result<usize> {
    match analysis.t_k {
        CriticalExponent::Finite(t) => rank_at(k, (t - BACKOFF).max(f64::MIN_POSITIVE)),
        CriticalExponent::Infinite if k.len() <= 2 => rank_at(k, 1.0),
        CriticalExponent::Infinite => Err(GeoError::Precondition(
            "arboreal kernel has no critical dimension".into(),
        )),
    }
}

/// `log K` is a metric and a tree metric, both within [`tree_tolerance`].
pub fn arboreal_test(k: &SymKernel) -> Result<CheckReport> {
    let d = FiniteMetric::log_of_kernel(k)?;
    let tol = tree_tolerance(&d);
    let (slack, (i, j, m)) = d.triangle_slack();
    let defect = four_point_defect(&d);
    let margin = slack.min(-defect);
    let witness = (margin < -tol).then(|| if slack < -defect { vec![i, j, m] } else { Vec::new() });
    Ok(CheckReport::new(
        margin,
        tol,
        witness,
        format!("triangle slack {slack:e}, four-point defect {defect:e}"),
    ))
}

/// Embeds a tree metric through the kernel `λ^d`.
pub fn tree_embed(t: &TreeMetric, lambda: f64) -> Result<HypEmbedding> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(GeoError::InvalidInput(format!("lambda = {lambda} must be finite and > 1")));
    }
    let d = t.metric();
    let scale = lambda.ln();
    let top = d.entries.iter().fold(0.0_f64, |a, v| a.max(*v)) * scale;
    if top > MAX_EXPONENT {
        return Err(GeoError::InvalidInput(format!(
            "largest exponent d log(lambda) = {top} overflows the kernel"
        )));
    }
    embed_hyperbolic(&SymKernel::exp_of_metric(d, scale), 0, RANK_TOL)
}
