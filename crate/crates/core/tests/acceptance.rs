//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if any
//! criterion failed. Run with `cargo test --test acceptance -- --nocapture`.

use std::f64::consts::{E, FRAC_PI_2, PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hypgeo::cross_ratio::{cocyclic_test, cr_boundary, cr_identities_check, log_deviation, XRTable, XRValue};
use hypgeo::deform_tree::{critical_exponent, deform_points, random_tree_metric, tree_embed, CriticalExponent};
use hypgeo::degeneration::{run_degeneration, RepFamilySpec};
use hypgeo::gns_embed::{embed_from_cross_ratios, embed_hyperbolic, verify_embedding, EmbeddingRef, SourceRef};
use hypgeo::isometry_dyn::{
    busemann_length_check, cr_from_lengths, homothety_fit, length_function_from_orbit, length_function_of_power,
    length_from_cross_ratio, translation_length, word_ball, Isometry, LengthMethod, Representation,
};
use hypgeo::kernel_check::{
    coarse_strong_hyp_check, hcm_determinants, hyperbolic_check_log, is_hyperbolic_type, ptolemy_check,
    FiniteMetric, SymKernel, PSD_TOL, RANK_TOL,
};
use hypgeo::mink_core::{hdist, hull_skeleton_gap, BPoint, HPoint, Point};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Verdict = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_points(rng: &mut ChaCha8Rng, count: usize, dim: usize, spread: f64) -> Vec<HPoint> {
    (0..count)
        .map(|_| {
            let s: Vec<f64> = (0..dim).map(|_| rng.gen_range(-spread..spread)).collect();
            HPoint::from_spatial(&s)
        })
        .collect()
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn random_rays(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<BPoint> {
    (0..count).map(|_| BPoint::from_direction(&random_direction(rng, dim)).unwrap()).collect()
}

/// `|u_a - u_b| |u_c - u_d| / (|u_a - u_d| |u_c - u_b|)` on unit directions.
fn chordal_cr(u: [&[f64]; 4]) -> f64 {
    let chord = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    chord(u[0], u[1]) * chord(u[2], u[3]) / (chord(u[0], u[3]) * chord(u[2], u[1]))
}

fn finite(v: XRValue) -> f64 {
    match v {
        XRValue::Finite(x) => x,
        XRValue::Infinite => f64::INFINITY,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Every Cayley-Menger determinant of `K^t` is at most `1e-9` times its Hadamard bound.
fn hcm_verdict(k: &SymKernel) -> bool {
    hcm_determinants(k, None, false).unwrap().iter().all(|(s, det)| {
        let m = DMatrix::from_fn(s.len(), s.len(), |a, b| k.entries[(s[a], s[b])]);
        let bound: f64 = m.row_iter().map(|r| r.norm()).product();
        *det <= 1e-9 * bound
    })
}

/// Last passing `t` of two nested 1024-point scans on `[1, t_max]`.
fn grid_critical(k: &SymKernel, t_max: f64) -> f64 {
    let scan = |lo: f64, hi: f64| -> (f64, f64) {
        let mut last = lo;
        for i in 0..1024 {
            let t = lo + (hi - lo) * i as f64 / 1023.0;
            if !hcm_verdict(&k.power(t)) {
                return (last, t);
            }
            last = t;
        }
        (hi, hi)
    };
    let (a, b) = scan(1.0, t_max);
    scan(a, b).0
}

fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|s| **s > rel * top).count()
}

fn perturbed(k: &SymKernel, rng: &mut ChaCha8Rng, amount: f64) -> SymKernel {
    let n = k.len();
    let mut m = k.entries.clone();
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] * rng.gen_range(-amount..amount).exp()).max(1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymKernel::new(m, None).unwrap()
}

fn c01_gns_round_trip() -> Verdict {
    let mut r = rng(101);
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let n = r.gen_range(2..=8);
        let d = r.gen_range(1..=6);
        let pts = random_points(&mut r, n, d, 1.5);
        let k = SymKernel::from_points(&pts);
        let e = ok(embed_hyperbolic(&k, r.gen_range(0..n), RANK_TOL))?;
        let coords = DMatrix::from_fn(n, d + 1, |i, j| pts[i].coords()[j]);
        let span = numerical_rank(&coords, 1e-9) - 1;
        ensure!(e.rank == span, "case {case}: rank {} but points span H^{span}", e.rank);
        for i in 0..n {
            for j in 0..n {
                let c = hdist(&e.points[i], &e.points[j]).unwrap().cosh();
                worst = worst.max(rel_err(c, k.entries[(i, j)]));
            }
        }
    }
    ensure!(worst <= 1e-8, "worst relative kernel error {worst:e} > 1e-8");
    Ok(format!("50 configurations, worst relative error {worst:.2e}, ranks match spans"))
}

fn c02_base_independence() -> Verdict {
    let mut r = rng(202);
    let (mut yes, mut no) = (0, 0);
    for case in 0..200 {
        let d = r.gen_range(2..=5);
        let pts = random_points(&mut r, 6, d, 1.5);
        let mut k = SymKernel::from_points(&pts);
        if case % 2 == 1 {
            k = perturbed(&k, &mut r, 0.4);
        }
        let log_k = k.log_entries();
        let verdicts: Vec<bool> = (0..6).map(|b| hyperbolic_check_log(&log_k, 1.0, PSD_TOL, &[b]).verdict).collect();
        ensure!(verdicts.iter().all(|v| *v == verdicts[0]), "case {case}: verdicts differ by base {verdicts:?}");
        if verdicts[0] {
            yes += 1;
        } else {
            no += 1;
        }
    }
    ensure!(yes > 0 && no > 0, "degenerate sample: {yes} hyperbolic, {no} not");
    Ok(format!("200 kernels ({yes} hyperbolic type, {no} not), verdict identical at all 6 bases"))
}

fn c03_hcm_equivalence() -> Verdict {
    let mut r = rng(303);
    let (mut yes, mut no) = (0, 0);
    for case in 0..200 {
        let d = [2, 3, 4][case % 3];
        let pts = random_points(&mut r, 5, d, 1.5);
        let mut k = SymKernel::from_points(&pts);
        if case % 2 == 1 {
            k = perturbed(&k, &mut r, 0.4);
        }
        let a = hcm_verdict(&k);
        let b = ok(is_hyperbolic_type(&k, PSD_TOL, true))?.verdict;
        ensure!(a == b, "case {case}: HCM {a}, visual kernel {b}");
        if a {
            yes += 1;
        } else {
            no += 1;
        }
    }
    ensure!(yes > 0 && no > 0, "degenerate sample: {yes} hyperbolic, {no} not");
    Ok(format!("200 kernels ({yes} hyperbolic type, {no} not), determinant and spectral verdicts agree"))
}

fn c04_power_stability() -> Verdict {
    let mut r = rng(404);
    let mut kernels = 0;
    while kernels < 50 {
        let n = r.gen_range(3..=7);
        let d = r.gen_range(1..=4);
        let pts = random_points(&mut r, n, d, 2.0);
        let separated = (0..n).all(|i| (0..i).all(|j| hdist(&pts[i], &pts[j]).unwrap() > 0.3));
        if !separated {
            continue;
        }
        kernels += 1;
        let k = SymKernel::from_points(&pts);
        for step in 1..=10 {
            let t = step as f64 / 10.0;
            let v = ok(is_hyperbolic_type(&k.power(t), PSD_TOL, true))?;
            ensure!(v.verdict, "kernel {kernels}: K^{t} fails ({})", v.detail);
        }
        let e = ok(deform_points(&pts, 0.5))?;
        ensure!(e.rank == n - 1, "kernel {kernels}: rank {} at t = 0.5, expected {}", e.rank, n - 1);
    }
    Ok("50 kernels certified at t = 0.1..1.0; K^0.5 has rank n-1 in every case".into())
}

fn c05_critical_exponent() -> Verdict {
    let mut r = rng(505);
    // a 3-point kernel is arboreal exactly when log K obeys the triangle
    // inequality; cosh of near-collinear distances does not, since log cosh
    // is not subadditive, and then t_K is finite
    let (mut metric_cases, mut other_cases, mut worst) = (0, 0, 0.0_f64);
    for case in 0..60 {
        let k = if case % 2 == 0 {
            let d = r.gen_range(1..=4);
            SymKernel::from_points(&random_points(&mut r, 3, d, 2.0))
        } else {
            let (a, b): (f64, f64) = (r.gen_range(0.1..3.0), r.gen_range(0.1..3.0));
            let c = r.gen_range((a - b).abs()..a + b);
            let d = DMatrix::from_row_slice(3, 3, &[0.0, a, b, a, 0.0, c, b, c, 0.0]);
            SymKernel::exp_of_metric(&ok(FiniteMetric::new(d, None))?, 1.0)
        };
        let l = k.log_entries();
        let is_metric = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
            .iter()
            .all(|&(i, j, m)| l[(i, j)] <= l[(i, m)] + l[(m, j)] + 1e-12 * l.max());
        let a = ok(critical_exponent(&k, 64.0, 60))?;
        if is_metric {
            metric_cases += 1;
            ensure!(a.arboreal && a.t_k == CriticalExponent::Infinite, "3-point case {case}: metric log K not arboreal");
        } else {
            other_cases += 1;
            let t = a.t_k.finite().ok_or(format!("3-point case {case}: non-metric log K flagged arboreal"))?;
            let grid = grid_critical(&k, 64.0);
            worst = worst.max((t - grid).abs());
            ensure!((t - grid).abs() <= 1e-3, "3-point case {case}: t_K = {t}, grid scan {grid}");
        }
    }
    ensure!(metric_cases >= 30, "only {metric_cases} metric 3-point cases");
    for seed in 0..20 {
        let t = ok(random_tree_metric(seed, r.gen_range(4..=8)))?;
        let k = SymKernel::exp_of_metric(t.metric(), r.gen_range(0.5..2.0));
        let a = ok(critical_exponent(&k, 64.0, 60))?;
        ensure!(a.arboreal && a.t_k == CriticalExponent::Infinite, "tree {seed} not arboreal");
    }
    for case in 0..20 {
        let k = SymKernel::from_points(&random_points(&mut r, 4, 2, 1.5));
        let a = ok(critical_exponent(&k, 64.0, 60))?;
        let t = a.t_k.finite().ok_or(format!("generic case {case} has infinite exponent"))?;
        let grid = grid_critical(&k, 64.0);
        worst = worst.max((t - grid).abs());
        ensure!((t - grid).abs() <= 1e-3, "case {case}: t_K = {t}, grid scan {grid}");
    }
    Ok(format!(
        "{metric_cases} metric 3-point and 20 tree kernels arboreal; {other_cases} non-metric 3-point kernels and 20 generic H^2 quadruples within {worst:.1e} of the grid scan"
    ))
}

fn c06_tree_embedding() -> Verdict {
    let (mut worst_k, mut worst_gap) = (0.0_f64, f64::INFINITY);
    for seed in 0..20 {
        let t = ok(random_tree_metric(600 + seed, 6))?;
        let e = ok(tree_embed(&t, E))?;
        let d = &t.metric().entries;
        for i in 0..6 {
            for j in 0..i {
                let dh = hdist(&e.points[i], &e.points[j]).unwrap();
                worst_k = worst_k.max(rel_err(dh.cosh(), d[(i, j)].exp()));
                if d[(i, j)] >= 1.0 {
                    let gap = (dh - d[(i, j)] - 2f64.ln()).abs();
                    let bound = 2.0 * (-2.0 * d[(i, j)]).exp();
                    worst_gap = worst_gap.min(bound - gap);
                    ensure!(gap <= bound, "tree {seed}: gap {gap:e} > {bound:e} at d = {}", d[(i, j)]);
                }
            }
        }
    }
    ensure!(worst_k <= 1e-9, "cosh d_H vs e^d relative error {worst_k:e} > 1e-9");
    Ok(format!("20 six-leaf trees: cosh relative error {worst_k:.1e}, smallest gap slack {worst_gap:.1e}"))
}

fn c07_cross_ratio_suite() -> Verdict {
    let mut r = rng(707);
    // identities on 1000 random quadruples of the boundary of H^4
    let rays = random_rays(&mut r, 40, 4);
    let id = ok(cr_identities_check(&rays, 1000, 7, 1e-9))?;
    ensure!(id.verdict, "identity check: {}", id.detail);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let u: Vec<Vec<f64>> = (0..5).map(|_| random_direction(&mut r, 4)).collect();
        let b: Vec<BPoint> = u.iter().map(|x| BPoint::from_direction(x).unwrap()).collect();
        let cr = |i: usize, j: usize, k: usize, l: usize| finite(cr_boundary(&b[i], &b[j], &b[k], &b[l]).unwrap());
        let direct = cr(0, 1, 2, 3);
        worst = worst.max(rel_err(direct, chordal_cr([&u[0], &u[1], &u[2], &u[3]])));
        worst = worst.max(rel_err(cr(2, 3, 0, 1), direct));
        worst = worst.max(rel_err(cr(1, 0, 3, 2), direct));
        worst = worst.max((cr(0, 3, 2, 1) * direct - 1.0).abs());
        worst = worst.max(rel_err(cr(0, 1, 2, 3) * cr(0, 3, 2, 4), cr(0, 1, 2, 4)));
    }
    ensure!(worst <= 1e-9, "symmetry/inversion/cocycle error {worst:e} > 1e-9");

    let b = random_rays(&mut r, 3, 4);
    let degenerate = [
        (cr_boundary(&b[0], &b[0], &b[1], &b[2]), 0.0),
        (cr_boundary(&b[0], &b[1], &b[2], &b[2]), 0.0),
        (cr_boundary(&b[0], &b[1], &b[2], &b[0]), f64::INFINITY),
        (cr_boundary(&b[0], &b[1], &b[1], &b[2]), f64::INFINITY),
    ];
    for (v, want) in degenerate {
        let v = finite(ok(v)?);
        ensure!(v == want, "degenerate fibre gave {v}, expected {want}");
    }

    for case in 0..100 {
        // four points on a random circle, alternating so the pairs separate
        let mut angles: Vec<f64> = (0..4).map(|_| r.gen_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let (e1, e2) = (random_direction(&mut r, 4), random_direction(&mut r, 4));
        let dot: f64 = e1.iter().zip(&e2).map(|(a, b)| a * b).sum();
        let e2: Vec<f64> = e2.iter().zip(&e1).map(|(b, a)| b - dot * a).collect();
        let n2 = e2.iter().map(|x| x * x).sum::<f64>().sqrt();
        let on_circle = |t: f64| {
            let v: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a * t.cos() + b / n2 * t.sin()).collect();
            BPoint::from_direction(&v).unwrap()
        };
        let c: Vec<BPoint> = angles.iter().map(|t| on_circle(*t)).collect();
        let rep = ok(cocyclic_test(&c[0], &c[2], &c[1], &c[3], 1e-9))?;
        ensure!(rep.verdict, "circle case {case}: {}", rep.detail);
        let g = random_rays(&mut r, 4, 4);
        let rep = ok(cocyclic_test(&g[0], &g[1], &g[2], &g[3], 1e-9))?;
        ensure!(!rep.verdict, "generic case {case} passed the cocyclic test");
    }

    let mut worst_inv = 0.0_f64;
    for _ in 0..200 {
        let b = random_rays(&mut r, 4, 4);
        let g = Isometry::random(&mut r, 4, 2.0);
        let base = cr_boundary(&b[0], &b[1], &b[2], &b[3]).unwrap();
        let moved: Vec<BPoint> = b.iter().map(|x| g.apply_ray(x)).collect();
        let m = cr_boundary(&moved[0], &moved[1], &moved[2], &moved[3]).unwrap();
        worst_inv = worst_inv.max(log_deviation(&base, &m));
        let scaled: Vec<BPoint> = b
            .iter()
            .map(|x| {
                let s = r.gen_range(0.1..10.0);
                BPoint::new(x.coords().iter().map(|c| c * s).collect()).unwrap()
            })
            .collect();
        let sc = cr_boundary(&scaled[0], &scaled[1], &scaled[2], &scaled[3]).unwrap();
        worst_inv = worst_inv.max(log_deviation(&base, &sc));
    }
    ensure!(worst_inv <= 1e-10, "isometry/representative deviation {worst_inv:e} > 1e-10");
    Ok(format!(
        "identities to {worst:.1e}, exact fibres, cocyclicity separates 100/100, invariance to {worst_inv:.1e}"
    ))
}

fn c08_length_trichotomy() -> Verdict {
    let mut r = rng(808);
    let (mut agree, mut power) = (0.0_f64, 0.0_f64);
    for case in 0..100 {
        let n = r.gen_range(2..=4);
        let l = r.gen_range(0.1..5.0);
        let twist = if n >= 3 { Isometry::rotation(n, 2, 3, r.gen_range(0.0..PI)) } else { Isometry::identity(n) };
        let h = Isometry::random(&mut r, n, 2.0);
        let g = Isometry::boost(n, 1, l).compose(&twist).conjugate_by(&h);
        let o = HPoint::from_spatial(&(0..n).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let xi = BPoint::from_direction(&random_direction(&mut r, n)).unwrap();
        let values = [
            ok(translation_length(&g, LengthMethod::Spectral))?,
            ok(translation_length(&g, LengthMethod::Stable { squarings: 16 }))?,
            ok(length_from_cross_ratio(&g, &xi))?,
            ok(busemann_length_check(&g, &o))?,
        ];
        for v in values {
            agree = agree.max((v - l).abs());
        }
        ensure!(agree <= 1e-6, "case {case}: methods {values:?} vs {l}");
        let k = Isometry::random(&mut r, n, 2.0);
        let spectral = |x: &Isometry| translation_length(x, LengthMethod::Spectral).unwrap();
        power = power.max((spectral(&g.conjugate_by(&k)) - l).abs());
        for m in [-3i64, -1, 2, 5] {
            power = power.max((spectral(&g.pow(m)) - m.unsigned_abs() as f64 * l).abs());
        }
        ensure!(power <= 1e-8, "case {case}: conjugation/power error {power:e}");
    }
    Ok(format!("100 loxodromics: four methods within {agree:.1e}, conjugation and powers within {power:.1e}"))
}

fn c09_cross_ratio_from_lengths() -> Verdict {
    // axes (0, inf) and (-1, 1) of the upper half-plane are perpendicular
    // diameters of the disc; their boundary cross-ratio is 2
    let a = Isometry::boost(2, 1, 1.0);
    let b = Isometry::boost(2, 2, 1.0);
    let c = ok(cr_from_lengths(&a, &b, 40))?;
    ensure!((c.direct - 2.0).abs() <= 1e-12, "direct boundary value {}", c.direct);
    ensure!((c.estimate - 2.0).abs() <= 1e-3, "estimate {} at m = n = 40", c.estimate);
    Ok(format!("estimate {:.9} vs boundary value 2", c.estimate))
}

fn c10_hull_bound() -> Verdict {
    let mut r = rng(1010);
    let bound = (1.0 + 2f64.sqrt()).ln() + 1e-6;
    let mut worst = 0.0_f64;
    for set in 0..20 {
        let pts: Vec<Point> = random_points(&mut r, 5, 5, 2.0).into_iter().map(Point::Interior).collect();
        let gap = ok(hull_skeleton_gap(&pts, 500, 1000 + set))?;
        worst = worst.max(gap);
        ensure!(gap <= bound, "set {set}: hull sample at distance {gap} > {bound}");
    }
    Ok(format!("largest hull-to-skeleton distance {worst:.4} <= log(1+sqrt 2)"))
}

fn c11_ptolemy_and_coarse() -> Verdict {
    let mut r = rng(1111);
    let mut worst = f64::INFINITY;
    for case in 0..1000 {
        let pts = random_points(&mut r, 4, 4, 2.0);
        let d = FiniteMetric::from_points(&pts);
        let p = ok(ptolemy_check(&d, 1e-12))?;
        ensure!(p.margin >= -1e-12, "case {case}: Ptolemy log-slack {}", p.margin);
        let s = |i: usize, j: usize| (0.5 * d.entries[(i, j)]).sinh();
        for (x, y, z) in [((0, 1), (2, 3), [(0, 2), (1, 3), (0, 3), (1, 2)]), ((0, 2), (1, 3), [(0, 1), (2, 3), (0, 3), (1, 2)]), ((0, 3), (1, 2), [(0, 1), (2, 3), (0, 2), (1, 3)])] {
            let lhs = s(x.0, x.1) * s(y.0, y.1);
            let rhs = s(z[0].0, z[0].1) * s(z[1].0, z[1].1) + s(z[2].0, z[2].1) * s(z[3].0, z[3].1);
            worst = worst.min((rhs - lhs) / rhs.max(f64::MIN_POSITIVE));
        }
        ensure!(worst >= -1e-12, "case {case}: direct Ptolemy slack {worst:e}");
        let c = ok(coarse_strong_hyp_check(&d, 1.0, 3.0))?;
        ensure!(c.verdict, "case {case}: coarse inequality fails ({})", c.detail);
    }
    Ok(format!("1000 quadruples: Ptolemy relative slack >= {worst:.1e}, coarse C = 3 inequality holds"))
}

fn c12_boundary_gns() -> Verdict {
    let mut r = rng(1212);
    let (mut res_worst, mut agree_worst) = (0.0_f64, 0.0_f64);
    for case in 0..20 {
        let rays = random_rays(&mut r, 6, 3);
        let table = ok(XRTable::from_rays(&rays))?;
        let e1 = ok(embed_from_cross_ratios(&table, [0, 1, 2], RANK_TOL))?;
        let e2 = ok(embed_from_cross_ratios(&table, [3, 5, 4], RANK_TOL))?;
        for e in [&e1, &e2] {
            ensure!(e.rank == 3, "case {case}: rank {}", e.rank);
            let res = ok(verify_embedding(EmbeddingRef::Boundary(e), SourceRef::Table(&table)))?;
            res_worst = res_worst.max(res);
        }
        let t1 = ok(XRTable::from_rays(&e1.rays))?;
        let t2 = ok(XRTable::from_rays(&e2.rays))?;
        for (q, v) in t1.entries() {
            let w = t2.get(q).ok_or(format!("case {case}: missing quadruple {q:?}"))?;
            agree_worst = agree_worst.max(log_deviation(v, &w));
        }
    }
    ensure!(res_worst <= 1e-7, "cross-ratio residual {res_worst:e} > 1e-7");
    ensure!(agree_worst <= 1e-7, "anchor choices disagree by {agree_worst:e}");
    Ok(format!("20 tables: rank 3, residual {res_worst:.1e}, anchor disagreement {agree_worst:.1e}"))
}

fn c13_degeneration() -> Verdict {
    let spec = RepFamilySpec::crossed_axes(FRAC_PI_2, vec![10.0, 20.0, 40.0]);
    let words: Vec<_> = word_ball(2, 4).into_iter().filter(|w| !w.is_empty()).collect();
    let report = ok(run_degeneration(&spec, 3, &words))?;
    let deltas: Vec<f64> = report.records.iter().map(|x| x.delta4).collect();
    ensure!(deltas.windows(2).all(|p| p[1] < p[0]), "defects not decreasing: {deltas:?}");
    let fit = report.defects.as_ref().ok_or("no defect series")?.fit_constant;
    // delta_4 = log 2 / L exactly on this family, so the bound holds with
    // equality up to rounding in the fit
    ensure!(deltas[2] * 40.0 <= fit * (1.0 + 1e-12), "delta4(40) * 40 = {} > fit {fit}", deltas[2] * 40.0);
    let mut worst = 0.0_f64;
    for row in &report.lengths {
        let w = hypgeo::isometry_dyn::Word::parse(&row.word).unwrap();
        let predicted = w.cyclically_reduced().len() as f64;
        for (ratio, l) in row.ratios.iter().zip(&spec.scales) {
            let e = (ratio - predicted).abs();
            worst = worst.max(e * l);
            ensure!(e <= 5.0 / l, "word {}: |{ratio} - {predicted}| > 5/{l}", row.word);
        }
    }
    let ab = report.lengths.iter().find(|x| x.word == "ab").ok_or("no row for ab")?;
    for (ratio, l) in ab.ratios.iter().zip(&spec.scales) {
        let exact = 2.0 * ((l.cosh() + 1.0) / 2.0).acosh();
        ensure!((ratio * l - exact).abs() <= 1e-8, "l_L(ab) = {} vs {exact} at L = {l}", ratio * l);
    }
    Ok(format!(
        "delta4 {:.4e} > {:.4e} > {:.4e}, fit constant {fit:.6}; {} words within {worst:.3}/L of the limit",
        deltas[0],
        deltas[1],
        deltas[2],
        report.lengths.len()
    ))
}

fn c14_homothety() -> Verdict {
    let mut r = rng(1414);
    let o = HPoint::origin(3);
    let (mut worst_t, mut worst_gap) = (0.0_f64, 0.0_f64);
    for case in 0..5 {
        let gens = vec![Isometry::random(&mut r, 3, 2.5), Isometry::random(&mut r, 3, 2.5)];
        let rho = ok(Representation::new(gens))?;
        let full = ok(length_function_from_orbit(&rho, &o, 3))?;
        let half = ok(length_function_of_power(&rho, &o, 3, 0.5))?;
        let fit = ok(homothety_fit(&half, &full, 1e-6))?;
        ensure!((fit.t - 0.5).abs() <= 1e-3 && fit.sup_gap <= 1e-3, "case {case}: exotic fit {fit:?}");
        worst_t = worst_t.max((fit.t - 0.5).abs());
        let h = Isometry::random(&mut r, 3, 2.0);
        let conj = ok(length_function_from_orbit(&rho.conjugate_by(&h), &o, 3))?;
        let fit = ok(homothety_fit(&conj, &full, 1e-6))?;
        ensure!((fit.t - 1.0).abs() <= 1e-8 && fit.sup_gap <= 1e-8, "case {case}: conjugate fit {fit:?}");
        worst_gap = worst_gap.max(fit.sup_gap);
    }
    Ok(format!("exotic half-deformation t within {worst_t:.1e} of 0.5; conjugates gap {worst_gap:.1e}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 14] = [
        ("GNS round trip", c01_gns_round_trip),
        ("base independence", c02_base_independence),
        ("HCM/HCS equivalence", c03_hcm_equivalence),
        ("power stability and strictness", c04_power_stability),
        ("critical exponent", c05_critical_exponent),
        ("tree embedding", c06_tree_embedding),
        ("cross-ratio suite", c07_cross_ratio_suite),
        ("length trichotomy", c08_length_trichotomy),
        ("cross-ratio from lengths", c09_cross_ratio_from_lengths),
        ("hull bound", c10_hull_bound),
        ("Ptolemy and coarse strong hyperbolicity", c11_ptolemy_and_coarse),
        ("boundary GNS", c12_boundary_gns),
        ("degeneration", c13_degeneration),
        ("homothety rigidity", c14_homothety),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
