//! Embeddings realizing kernels: Gram kernels and squared distances in
//! Euclidean space, hyperbolic-type kernels as `cosh` of distances in `H^r`,
//! and cross-ratio tables as configurations of boundary rays.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::cross_ratio::{abstract_cr_validate, cr_boundary, log_deviation, Quad, XRTable, IDENTITY_TOL};
use crate::error::{GeoError, Result};
use crate::kernel_check::{
    hyperbolic_check_log, is_cond_negative_type, is_positive_type, normalized_visual_kernel, SymKernel, PSD_TOL,
};
use crate::linalg::{centering, sym_eigen};
use crate::mink_core::{dist_raw, log_cosh, BPoint, HPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HilbertKind {
    /// Realizes `K(i,j) = <f_i, f_j>`.
    Linear,
    /// Realizes `N(i,j) = |f_i - f_j|^2`.
    Affine,
}

#[derive(Debug, Clone, Serialize)]
pub struct HilbertEmbedding {
    pub labels: Vec<String>,
    pub kind: HilbertKind,
    /// Row `i` is the image of point `i`.
    #[serde(serialize_with = "serialize_rows")]
    pub vectors: DMatrix<f64>,
    pub rank: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypEmbedding {
    pub labels: Vec<String>,
    /// Points of `H^rank`; `H^1` when every point coincides.
    pub points: Vec<HPoint>,
    pub base_index: usize,
    pub rank: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryEmbedding {
    pub labels: Vec<String>,
    /// Rays in `∂H^rank`.
    pub rays: Vec<BPoint>,
    /// Label indices sent to `∞`, `0` and `1`.
    pub anchors: [usize; 3],
    pub rank: usize,
    pub residual: f64,
}

fn serialize_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

/// Rows of `U Λ^{1/2}` over the eigenvalues above `tol * λ_max`.
fn factor_psd(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    let eig = sym_eigen(m);
    let cut = tol * eig.max().max(0.0);
    let keep: Vec<usize> = (0..n).filter(|&k| eig.values[k] > cut && eig.values[k] > 0.0).collect();
    // largest eigenvalue first, so coordinate 1 carries the most spread
    let mut out = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().rev().enumerate() {
        let s = eig.values[k].sqrt();
        out.set_column(c, &(eig.vectors.column(k) * s));
    }
    (out, keep.len())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(GeoError::InvalidInput(format!("rank tolerance {tol} outside (0, 1)")));
    }
    Ok(())
}

pub fn embed_hilbert_linear(k: &SymKernel, tol: f64) -> Result<HilbertEmbedding> {
    check_tol(tol)?;
    let report = is_positive_type(k, PSD_TOL)?;
    if !report.verdict {
        return Err(GeoError::Precondition(format!("kernel is not of positive type: {}", report.detail)));
    }
    let (vectors, rank) = factor_psd(&k.entries, tol);
    let mut emb = HilbertEmbedding {
        labels: k.labels.clone(),
        kind: HilbertKind::Linear,
        vectors,
        rank,
        residual: 0.0,
    };
    emb.residual = verify_embedding(EmbeddingRef::Hilbert(&emb), SourceRef::Kernel(k))?;
    Ok(emb)
}

/// Double centering `G = -P N P / 2` followed by the linear factorization.
pub fn embed_hilbert_affine(n: &SymKernel, tol: f64) -> Result<HilbertEmbedding> {
    check_tol(tol)?;
    let report = is_cond_negative_type(n, PSD_TOL)?;
    if !report.verdict {
        return Err(GeoError::Precondition(format!(
            "kernel is not conditionally of negative type: {}",
            report.detail
        )));
    }
    let p = centering(n.len());
    let g = -(&p * &n.entries * &p) * 0.5;
    let (vectors, rank) = factor_psd(&g, tol);
    let mut emb = HilbertEmbedding {
        labels: n.labels.clone(),
        kind: HilbertKind::Affine,
        vectors,
        rank,
        residual: 0.0,
    };
    emb.residual = verify_embedding(EmbeddingRef::Hilbert(&emb), SourceRef::Kernel(n))?;
    Ok(emb)
}

/// Minimal embedding of a hyperbolic-type kernel, with `base` sent to `e_0`.
///
/// The normalized visual kernel `1 - K_ij / (K_bi K_bj)` is factored as
/// `W Wᵀ`; point `i` gets spatial part `K_bi w_i`, so `<x_i, x_j> = K_ij`.
pub fn embed_hyperbolic(k: &SymKernel, base: usize, tol: f64) -> Result<HypEmbedding> {
    check_tol(tol)?;
    k.check_hyperbolic_candidate()?;
    let n = k.len();
    if base >= n {
        return Err(GeoError::InvalidInput(format!("base index {base} out of range for {n} points")));
    }
    let log_k = k.log_entries();
    let report = hyperbolic_check_log(&log_k, 1.0, PSD_TOL, &[base]);
    if !report.verdict {
        return Err(GeoError::Precondition(format!("kernel is not of hyperbolic type: {}", report.detail)));
    }
    let m = normalized_visual_kernel(&log_k, 1.0, base);
    let (w, rank) = factor_psd(&m, tol);
    let dim = rank.max(1);
    let mut points = Vec::with_capacity(n);
    let mut row = 0;
    for i in 0..n {
        if i == base {
            points.push(HPoint::origin(dim));
            continue;
        }
        let mut spatial = vec![0.0; dim];
        let kb = k.entries[(base, i)];
        for c in 0..rank {
            spatial[c] = kb * w[(row, c)];
        }
        points.push(HPoint::from_spatial(&spatial));
        row += 1;
    }
    let mut emb = HypEmbedding {
        labels: k.labels.clone(),
        points,
        base_index: base,
        rank,
        residual: 0.0,
    };
    emb.residual = verify_embedding(EmbeddingRef::Hyperbolic(&emb), SourceRef::Kernel(k))?;
    Ok(emb)
}

/// Paraboloid lift `v ↦ ((1+|v|²)/2, (1-|v|²)/2, v)`.
fn paraboloid_ray(v: &[f64]) -> Result<BPoint> {
    let s: f64 = v.iter().map(|x| x * x).sum();
    let mut c = Vec::with_capacity(v.len() + 2);
    c.push(0.5 * (1.0 + s));
    c.push(0.5 * (1.0 - s));
    c.extend_from_slice(v);
    BPoint::new(c)
}

fn infinity_ray(dim: usize) -> Result<BPoint> {
    let mut c = vec![0.0; dim + 1];
    c[0] = 0.5;
    c[1] = -0.5;
    BPoint::new(c)
}

fn regular_entry(t: &XRTable, q: Quad) -> Result<f64> {
    match t.lookup(&q) {
        Some(v) if v.is_regular() => Ok(v.value()),
        Some(_) => Err(GeoError::Precondition(format!("degenerate value at {q:?}"))),
        None => Err(GeoError::Precondition(format!("missing entry {q:?}"))),
    }
}

/// Reconstructs rays in `∂H^rank` from a cross-ratio table.
///
/// With anchors `(∞, 0, 1)` the kernel `N(x,y) = (R(x,y,0,∞) R(y,0,1,∞))²` on the
/// remaining labels is the squared distance of a Euclidean configuration,
/// which the paraboloid lift places on the boundary. At `y = 0` the product
/// is indeterminate and `R(x,0,1,∞)²` is used instead. The configuration is
/// translated so that `0` sits at the origin.
pub fn embed_from_cross_ratios(r: &XRTable, anchors: [usize; 3], tol: f64) -> Result<BoundaryEmbedding> {
    check_tol(tol)?;
    let n = r.size();
    if n < 4 {
        return Err(GeoError::InvalidInput(format!("need at least 4 labels, got {n}")));
    }
    let [inf, zero, one] = anchors;
    if anchors.iter().any(|&a| a >= n) || inf == zero || inf == one || zero == one {
        return Err(GeoError::InvalidInput(format!("anchors {anchors:?} must be distinct labels")));
    }
    let report = abstract_cr_validate(r, IDENTITY_TOL)?;
    if !report.verdict {
        return Err(GeoError::Precondition(format!(
            "table fails the cross-ratio identities: {}",
            report.detail
        )));
    }
    let finite: Vec<usize> = (0..n).filter(|&i| i != inf).collect();
    let m = finite.len();
    let mut nk = DMatrix::zeros(m, m);
    for (a, &x) in finite.iter().enumerate() {
        for (b, &y) in finite.iter().enumerate() {
            if x == y {
                continue;
            }
            let root = if y == zero {
                regular_entry(r, [x, zero, one, inf])?
            } else {
                regular_entry(r, [x, y, zero, inf])? * regular_entry(r, [y, zero, one, inf])?
            };
            nk[(a, b)] = root * root;
        }
    }
    let nk = (&nk + nk.transpose()) * 0.5;
    let labels: Vec<String> = finite.iter().map(|&i| r.labels()[i].clone()).collect();
    let affine = embed_hilbert_affine(&SymKernel::new(nk, Some(labels))?, tol).map_err(|e| match e {
        GeoError::Precondition(msg) => GeoError::Precondition(format!("not an algebraic cross-ratio: {msg}")),
        other => other,
    })?;
    let r_aff = affine.rank;
    let zero_row = finite.iter().position(|&i| i == zero).expect("zero anchor is finite");
    let origin: DVector<f64> = affine.vectors.row(zero_row).transpose();
    let dim = r_aff + 1;
    let mut rays = Vec::with_capacity(n);
    let mut row = 0;
    for i in 0..n {
        if i == inf {
            rays.push(infinity_ray(dim)?);
            continue;
        }
        let v: Vec<f64> = (0..r_aff).map(|c| affine.vectors[(row, c)] - origin[c]).collect();
        rays.push(paraboloid_ray(&v)?);
        row += 1;
    }
    let mut emb = BoundaryEmbedding {
        labels: r.labels().to_vec(),
        rays,
        anchors,
        rank: dim,
        residual: 0.0,
    };
    emb.residual = verify_embedding(EmbeddingRef::Boundary(&emb), SourceRef::Table(r))?;
    Ok(emb)
}

#[derive(Debug, Clone, Copy)]
pub enum EmbeddingRef<'a> {
    Hilbert(&'a HilbertEmbedding),
    Hyperbolic(&'a HypEmbedding),
    Boundary(&'a BoundaryEmbedding),
}

#[derive(Debug, Clone, Copy)]
pub enum SourceRef<'a> {
    Kernel(&'a SymKernel),
    Table(&'a XRTable),
}

/// Pairs `(source index, embedding index)` of the shared labels.
fn overlap(emb_labels: &[String], src_labels: &[String]) -> Result<Vec<(usize, usize)>> {
    let pos: HashMap<&str, usize> = emb_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let common: Vec<(usize, usize)> = src_labels
        .iter()
        .enumerate()
        .filter_map(|(s, l)| pos.get(l.as_str()).map(|&e| (s, e)))
        .collect();
    if common.is_empty() {
        return Err(GeoError::InvalidInput("embedding and source share no labels".into()));
    }
    Ok(common)
}

/// Largest relative error between what the embedding realizes and the
/// source, over the labels both share: Gram entries or squared distances
/// relative to the largest source entry, `cosh` of distances relative to the
/// kernel entry, and `|log|` of cross-ratio quotients.
pub fn verify_embedding(emb: EmbeddingRef<'_>, src: SourceRef<'_>) -> Result<f64> {
    match (emb, src) {
        (EmbeddingRef::Hilbert(h), SourceRef::Kernel(k)) => {
            let common = overlap(&h.labels, &k.labels)?;
            let f = &h.vectors;
            let mut worst = 0.0_f64;
            let mut scale = 0.0_f64;
            for &(si, ei) in &common {
                for &(sj, ej) in &common {
                    let target = k.entries[(si, sj)];
                    let realized = match h.kind {
                        HilbertKind::Linear => f.row(ei).dot(&f.row(ej)),
                        HilbertKind::Affine => (f.row(ei) - f.row(ej)).norm_squared(),
                    };
                    worst = worst.max((realized - target).abs());
                    scale = scale.max(target.abs());
                }
            }
            Ok(if scale > 0.0 { worst / scale } else { worst })
        }
        (EmbeddingRef::Hyperbolic(h), SourceRef::Kernel(k)) => {
            let common = overlap(&h.labels, &k.labels)?;
            let mut worst = 0.0_f64;
            for &(si, ei) in &common {
                for &(sj, ej) in &common {
                    let target = k.entries[(si, sj)];
                    if !(target > 0.0) {
                        return Err(GeoError::InvalidInput(format!("kernel entry {target} is not positive")));
                    }
                    let d = dist_raw(h.points[ei].coords(), h.points[ej].coords());
                    worst = worst.max((log_cosh(d) - target.ln()).abs().exp_m1());
                }
            }
            Ok(worst)
        }
        (EmbeddingRef::Boundary(b), SourceRef::Table(t)) => {
            let common = overlap(&b.labels, t.labels())?;
            let map: HashMap<usize, usize> = common.into_iter().collect();
            let mut worst = 0.0_f64;
            let mut used = 0usize;
            for (q, v) in t.entries() {
                let idx: Option<Vec<usize>> = q.iter().map(|s| map.get(s).copied()).collect();
                let Some(e) = idx else { continue };
                let realized = cr_boundary(&b.rays[e[0]], &b.rays[e[1]], &b.rays[e[2]], &b.rays[e[3]])?;
                worst = worst.max(log_deviation(&realized, v));
                used += 1;
            }
            if used == 0 {
                return Err(GeoError::InvalidInput("no table entry lies on the shared labels".into()));
            }
            Ok(worst)
        }
        _ => Err(GeoError::InvalidInput("embedding and source are of different kinds".into())),
    }
}
