//! Verification suites over built-in and randomized families.

use finsler_morse::connection::hh_curvature;
use finsler_morse::curves::{exp_differential, exp_map, geodesic_ivp};
use finsler_morse::indexform::index_lemma_trial;
use finsler_morse::jacobi::{
    conjugate_points, focal_points, p_jacobi_basis, ReducedJacobiSystem, ScanOptions,
};
use finsler_morse::metric::{MetricSpec, TangentVector};
use finsler_morse::ode::Tolerances;
use finsler_morse::submanifold::{
    normal_bundle_basis, normal_exp, normal_exp_differential, normal_exp_rank_drop, normal_lift,
    Submanifold,
};
use finsler_morse::Result;
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::builtin;
use crate::pipeline::{run_scenario, Assertion, Report};
use crate::random::{self, exp_draw, p_draw, pq_draw, Rejection};
use crate::scenario::{GeodesicConfig, Overrides, Scenario};

pub const SUITES: [&str; 8] = [
    "builtin",
    "symmetry",
    "index-random",
    "endpoint-random",
    "normal-restriction",
    "index-lemma",
    "exp-jacobi",
    "kropina",
];

pub const SYMMETRY_DRAWS: u64 = 200;
pub const INDEX_SEEDS: u64 = 50;
pub const ENDPOINT_SEEDS: u64 = 20;
pub const RESTRICTION_SEEDS: u64 = 20;
pub const LEMMA_TRIALS: u64 = 100;
pub const EXP_DRAWS: u64 = 20;
/// Relative agreement of differentials with central differences.
pub const FD_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-3;
pub const LEMMA_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub label: String,
    pub seed: Option<u64>,
    pub pass: bool,
    pub assertions: Vec<Assertion>,
    pub error: Option<String>,
}

impl SuiteEntry {
    fn from_assertions(label: String, seed: Option<u64>, assertions: Vec<Assertion>) -> Self {
        let pass = assertions.iter().all(Assertion::pass);
        SuiteEntry {
            label,
            seed,
            pass,
            assertions,
            error: None,
        }
    }

    fn failed(label: String, seed: Option<u64>, error: String) -> Self {
        SuiteEntry {
            label,
            seed,
            pass: false,
            assertions: vec![],
            error: Some(error),
        }
    }

    fn from_report(
        label: String,
        seed: Option<u64>,
        r: &Report,
        keep: impl Fn(&str) -> bool,
    ) -> Self {
        let a = r
            .assertions
            .iter()
            .filter(|a| keep(a.name()))
            .cloned()
            .collect();
        Self::from_assertions(label, seed, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: usize,
    pub total: usize,
    pub pass: bool,
    /// Labels of failing entries.
    pub failures: Vec<String>,
    pub rejections: Vec<Rejection>,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    fn new(suite: &str, entries: Vec<SuiteEntry>, rejections: Vec<Rejection>) -> Self {
        let passed = entries.iter().filter(|e| e.pass).count();
        let failures = entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.label.clone())
            .collect();
        SuiteReport {
            suite: suite.into(),
            passed,
            total: entries.len(),
            pass: passed == entries.len() && !entries.is_empty(),
            failures,
            rejections,
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite report serializes")
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} passed{}",
            self.suite,
            self.passed,
            self.total,
            if self.failures.is_empty() {
                String::new()
            } else {
                format!(", failing {:?}", self.failures)
            }
        )
    }
}

pub fn run_suite(name: &str, o: &Overrides) -> Option<SuiteReport> {
    let base = o.seed.unwrap_or(0);
    Some(match name {
        "builtin" => builtin_suite(o),
        "symmetry" => symmetry_suite(base),
        "index-random" => random_suite("index-random", base, INDEX_SEEDS, o, p_draw, |_| true),
        "endpoint-random" => {
            random_suite("endpoint-random", base, ENDPOINT_SEEDS, o, pq_draw, |_| {
                true
            })
        }
        "normal-restriction" => random_suite(
            "normal-restriction",
            base + 10_000,
            RESTRICTION_SEEDS,
            o,
            pq_draw,
            |n| n.starts_with("restricted") || n.starts_with("mesh"),
        ),
        "index-lemma" => lemma_suite(base, o),
        "exp-jacobi" => exp_suite(base),
        "kropina" => kropina_suite(o),
        _ => return None,
    })
}

fn run_entry(s: &Scenario, keep: impl Fn(&str) -> bool) -> SuiteEntry {
    match run_scenario(s) {
        Ok(out) => SuiteEntry::from_report(s.name.clone(), s.seed, &out.report, keep),
        Err(e) => SuiteEntry::failed(s.name.clone(), s.seed, e.to_string()),
    }
}

fn builtin_suite(o: &Overrides) -> SuiteReport {
    let entries = builtin::all()
        .into_par_iter()
        .map(|mut s| {
            s.apply(o);
            run_entry(&s, |_| true)
        })
        .collect();
    SuiteReport::new("builtin", entries, vec![])
}

type Draw = fn(u64) -> (Result<Scenario>, Vec<Rejection>);

fn random_suite(
    name: &str,
    base: u64,
    count: u64,
    o: &Overrides,
    draw: Draw,
    keep: fn(&str) -> bool,
) -> SuiteReport {
    let results: Vec<(SuiteEntry, Vec<Rejection>)> = (base..base + count)
        .into_par_iter()
        .map(|seed| {
            let (s, rej) = draw(seed);
            let entry = match s {
                Ok(mut s) => {
                    s.apply(&Overrides {
                        seed: None,
                        ..o.clone()
                    });
                    run_entry(&s, keep)
                }
                Err(e) => SuiteEntry::failed(format!("seed-{seed}"), Some(seed), e.to_string()),
            };
            (entry, rej)
        })
        .collect();
    let mut entries = Vec::new();
    let mut rejections = Vec::new();
    for (e, r) in results {
        entries.push(e);
        rejections.extend(r);
    }
    SuiteReport::new(name, entries, rejections)
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let s = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / s.max(1e-300)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Pointwise identities of `L`, `g`, `C`, `R` at a random vector, and
/// compatibility, Wronskian and frame checks along a random geodesic.
pub fn identity_checks(seed: u64) -> Result<Vec<Assertion>> {
    let mut r = random::rng(seed, 11);
    let n = if r.random_bool(0.5) { 2 } else { 3 };
    let randers = r.random_bool(0.7);
    let m = random::random_metric(&mut r, n, randers).build()?;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut vec = || -> Vec<f64> { (0..n).map(|_| r.random_range(-1.0..1.0)).collect() };
    let (y, u, w) = (vec(), vec(), vec());
    let v = TangentVector::new(&x, &y);
    let mut out = Vec::new();
    let l = m.eval_l(&v)?;
    let g = m.fundamental_tensor(&v)?;
    let gmax = max_abs(g.g.as_slice());
    let (mut hom, mut scale_inv) = (0.0f64, 0.0f64);
    for lam in [0.5, 2.0, 7.3] {
        let lv = m.eval_l(&v.scaled(lam))?;
        hom = hom.max((lv - lam * lam * l).abs() / (lam * lam * l.abs()));
        let gl = m.fundamental_tensor(&v.scaled(lam))?;
        scale_inv = scale_inv.max(max_abs((&gl.g - &g.g).as_slice()) / gmax);
    }
    out.push(Assertion::at_most("homogeneity", hom, 1e-10));
    out.push(Assertion::at_most("g-scale-invariant", scale_inv, 1e-10));
    out.push(Assertion::at_most(
        "g-vv-is-l",
        (g.inner(&y, &y) - l).abs() / l.abs(),
        1e-10,
    ));
    let c = m.cartan_tensor(&v)?;
    let cy = c.contract(&y);
    let cscale = (c.c.max_abs() * max_abs(&y)).max(1.0);
    out.push(Assertion::at_most(
        "cartan-radial",
        max_abs(cy.as_slice()) / cscale,
        1e-10,
    ));

    let curv = hh_curvature(&m, &v)?;
    let gm = &curv.connection.g;
    let gdot = |a: &DVector<f64>, b: &[f64]| a.dot(&(gm * DVector::from_column_slice(b)));
    let ruy = curv.apply(&y, &u, &y);
    let rwy = curv.apply(&y, &w, &y);
    let (a7, b7) = (gdot(&ruy, &w), gdot(&rwy, &u));
    let s7 = (ruy.norm() * DVector::from_column_slice(&w).norm()
        + rwy.norm() * DVector::from_column_slice(&u).norm())
        * gm.norm()
        + 1e-14;
    out.push(Assertion::at_most("rsym-flag", (a7 - b7).abs() / s7, 1e-9));
    let r_uvy = curv.apply(&u, &y, &y);
    let r_uvw = curv.apply(&u, &y, &w);
    let (a8, b8) = (gdot(&r_uvy, &w), gdot(&r_uvw, &y));
    let s8 = (r_uvy.norm() * DVector::from_column_slice(&w).norm()
        + r_uvw.norm() * DVector::from_column_slice(&y).norm())
        * gm.norm()
        + 1e-14;
    out.push(Assertion::at_most("rsym-skew", (a8 + b8).abs() / s8, 1e-9));

    // along a geodesic from (x, y/|y|)
    let ny = max_abs(&y).max(0.3);
    let y1: Vec<f64> = y.iter().map(|c| c / ny).collect();
    let m = std::sync::Arc::new(m);
    let geo = geodesic_ivp(&m, &x, &y1, 1.0, Tolerances::default())?;
    out.push(Assertion::at_most(
        "l-conservation",
        geo.l_drift(200)? / geo.l0().max(1.0),
        1e-8,
    ));
    let sys = ReducedJacobiSystem::reduce(&geo, &Submanifold::point(&x))?;
    out.push(Assertion::at_most(
        "compatibility",
        sys.frame().gram_deviation(100)?,
        1e-8,
    ));
    let basis = p_jacobi_basis(&sys)?;
    let (drift, w0) = basis.wronskian_drift(100);
    out.push(Assertion::at_most(
        "wronskian-constant",
        drift.max(w0),
        1e-8,
    ));
    out.push(Assertion::at_most(
        "r-symmetric",
        sys.symmetry_residual(),
        1e-9,
    ));
    Ok(out)
}

fn symmetry_suite(base: u64) -> SuiteReport {
    let entries = (base..base + SYMMETRY_DRAWS)
        .into_par_iter()
        .map(|seed| match identity_checks(seed) {
            Ok(a) => SuiteEntry::from_assertions(format!("draw-{seed}"), Some(seed), a),
            Err(e) => SuiteEntry::failed(format!("draw-{seed}"), Some(seed), e.to_string()),
        })
        .collect();
    SuiteReport::new("symmetry", entries, vec![])
}

/// Index-lemma trials on the focal-free lemma scenario.
pub fn lemma_checks(s: &Scenario, trials: std::ops::Range<u64>) -> Result<Vec<SuiteEntry>> {
    let m = s.metric_spec()?;
    let p = s.p.build()?;
    let GeodesicConfig::Ivp { p: x, v, tau, .. } = &s.geodesic else {
        return Err(finsler_morse::Error::InvalidInput(
            "lemma scenario must be an IVP".into(),
        ));
    };
    let geo = geodesic_ivp(&m, x, v, *tau, s.numerics.tolerances())?;
    let sys = ReducedJacobiSystem::reduce(&geo, &p)?;
    let basis = p_jacobi_basis(&sys)?;
    let opts = ScanOptions {
        samples: s.numerics.scan_samples,
        rank_tol: s.numerics.rank_tol,
        refine_tol: 1e-8,
    };
    let focal = focal_points(&sys, &basis, opts);
    let n = sys.dim();
    trials
        .map(|seed| {
            let mut r = random::rng(seed, 21);
            let segs = r.random_range(4..12);
            let knots: Vec<DVector<f64>> = (0..=segs)
                .map(|_| DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0)))
                .collect();
            let t = index_lemma_trial(&sys, &basis, &focal, &knots)?;
            let a = if t.distance <= 1e-6 {
                Assertion::near("index-lemma-equal", t.jacobi, t.field, 1e-8)
            } else {
                Assertion::at_most("index-lemma", t.jacobi, t.field - LEMMA_MARGIN)
            };
            Ok(SuiteEntry::from_assertions(
                format!("trial-{seed}"),
                Some(seed),
                vec![a],
            ))
        })
        .collect()
}

fn lemma_suite(base: u64, o: &Overrides) -> SuiteReport {
    let mut s = builtin::lemma_circle();
    s.apply(&Overrides {
        seed: None,
        ..o.clone()
    });
    let entries = match lemma_checks(&s, base..base + LEMMA_TRIALS) {
        Ok(e) => e,
        Err(e) => vec![SuiteEntry::failed(s.name.clone(), None, e.to_string())],
    };
    SuiteReport::new("index-lemma", entries, vec![])
}

fn fd_tol() -> Tolerances {
    Tolerances::uniform(1e-13)
}

/// `D exp_p(v)[w]` against a central difference.
pub fn exp_fd_check(seed: u64) -> Result<Assertion> {
    let (m, p, v, w) = exp_draw(seed)?;
    let tol = fd_tol();
    let d = exp_differential(&m, &p, &v, std::slice::from_ref(&w), tol)?.remove(0);
    let shift = |s: f64| -> Vec<f64> { v.iter().zip(&w).map(|(a, b)| a + s * b).collect() };
    let plus = exp_map(&m, &p, &shift(FD_STEP), tol)?;
    let minus = exp_map(&m, &p, &shift(-FD_STEP), tol)?;
    let fd: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * FD_STEP))
        .collect();
    Ok(Assertion::at_most("exp-differential", rel(&d, &fd), FD_TOL))
}

/// Random normal vector on a circle or sphere for normal-exponential checks.
fn normal_draw(seed: u64) -> Result<(std::sync::Arc<MetricSpec>, Submanifold, TangentVector)> {
    let (m, _, _, _) = exp_draw(seed)?;
    let mut r = random::rng(seed, 31);
    let n = m.dim;
    let radius = r.random_range(0.4..1.0);
    let center = vec![0.0; n];
    let p = if n == 2 {
        Submanifold::planar_circle(2, &center, radius)
    } else {
        Submanifold::sphere(&center, radius)
    };
    let u: Vec<f64> = loop {
        let u: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let s = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if s > 0.1 && s <= 1.0 {
            break u.iter().map(|x| x / s).collect();
        }
    };
    let x: Vec<f64> = u.iter().map(|c| radius * c).collect();
    let x = if n == 2 {
        p.chart_point(&x, &[0.0])?
    } else {
        x
    };
    let lam = r.random_range(0.2..0.8) * radius;
    let y0: Vec<f64> = u.iter().map(|c| -lam * c).collect();
    let y = normal_lift(&m, &p, &x, &y0)?;
    Ok((m, p, TangentVector::new(&x, &y)))
}

/// `D exp^{LN}` on every normal-bundle basis direction against central
/// differences along curves in the normal bundle.
pub fn normal_exp_fd_check(seed: u64) -> Result<Assertion> {
    let (m, p, v) = normal_draw(seed)?;
    let tol = fd_tol();
    let dirs = normal_bundle_basis(&m, &p, &v)?;
    let d = normal_exp_differential(&m, &p, &v, &dirs, tol)?;
    let k = p.dim();
    let mut worst: f64 = 0.0;
    for (i, (_, dy)) in dirs.iter().enumerate() {
        let at = |s: f64| -> Result<Vec<f64>> {
            let (x, y0) = if i < k {
                let mut du = vec![0.0; k];
                du[i] = s;
                (p.chart_point(&v.x, &du)?, v.y.clone())
            } else {
                (
                    v.x.clone(),
                    v.y.iter().zip(dy).map(|(a, b)| a + s * b).collect(),
                )
            };
            let y = normal_lift(&m, &p, &x, &y0)?;
            normal_exp(&m, &p, &TangentVector::new(&x, &y), tol)
        };
        let (plus, minus) = (at(FD_STEP)?, at(-FD_STEP)?);
        let fd: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * FD_STEP))
            .collect();
        worst = worst.max(rel(&d[i], &fd));
    }
    Ok(Assertion::at_most("normal-exp-differential", worst, FD_TOL))
}

/// The instant where `D exp^{LN}(λ γ̇(0))` drops rank, against the first
/// detected focal instant.
pub fn rank_drop_check(s: &Scenario) -> Result<Assertion> {
    let m = s.metric_spec()?;
    let p = s.p.build()?;
    let GeodesicConfig::Ivp { p: x, v, tau, .. } = &s.geodesic else {
        return Err(finsler_morse::Error::InvalidInput(
            "rank-drop scenario must be an IVP".into(),
        ));
    };
    let geo = geodesic_ivp(&m, x, v, *tau, s.numerics.tolerances())?;
    let sys = ReducedJacobiSystem::reduce(&geo, &p)?;
    let basis = p_jacobi_basis(&sys)?;
    let opts = ScanOptions {
        samples: s.numerics.scan_samples,
        rank_tol: s.numerics.rank_tol,
        refine_tol: 1e-8,
    };
    let focal = focal_points(&sys, &basis, opts);
    let t0 = focal
        .first()
        .ok_or(finsler_morse::Error::NoInteriorFocal)?
        .t;
    // keep the bracket clear of the next focal instant
    let half = focal
        .get(1)
        .map_or(0.02, |f| (0.45 * (f.t - t0)).min(0.02))
        .min(0.45 * t0);
    let (lam, _) = normal_exp_rank_drop(
        &m,
        &p,
        &TangentVector::new(x, v),
        t0 - half,
        t0 + half,
        fd_tol(),
    )?;
    Ok(Assertion::near("rank-drop-at-focal", lam, t0, 1e-6))
}

/// Random draws with an interior focal instant, for rank-drop checks.
pub fn rank_drop_scenarios(base: u64, count: usize) -> Vec<Scenario> {
    let mut out = vec![
        builtin::euclid_circle_inward(1.5),
        builtin::euclid_sphere_inward(1.5),
    ];
    let mut seed = base;
    let mut found = 0;
    while found < count && seed < base + 200 {
        if let (Ok(s), _) = p_draw(seed) {
            if !matches!(s.p, crate::scenario::SubmanifoldConfig::Point { .. }) {
                if let Ok(Some(_)) = first_focal(&s) {
                    out.push(s);
                    found += 1;
                }
            }
        }
        seed += 1;
    }
    out
}

fn first_focal(s: &Scenario) -> Result<Option<f64>> {
    let m = s.metric_spec()?;
    let p = s.p.build()?;
    let GeodesicConfig::Ivp { p: x, v, tau, .. } = &s.geodesic else {
        return Ok(None);
    };
    let geo = geodesic_ivp(&m, x, v, *tau, s.numerics.tolerances())?;
    let sys = ReducedJacobiSystem::reduce(&geo, &p)?;
    let basis = p_jacobi_basis(&sys)?;
    let f = focal_points(&sys, &basis, ScanOptions::default());
    Ok(f.iter().find(|f| !f.at_end).map(|f| f.t))
}

fn exp_suite(base: u64) -> SuiteReport {
    let mut entries: Vec<SuiteEntry> = (base..base + EXP_DRAWS)
        .into_par_iter()
        .map(|seed| {
            let label = format!("draw-{seed}");
            match (exp_fd_check(seed), normal_exp_fd_check(seed)) {
                (Ok(a), Ok(b)) => SuiteEntry::from_assertions(label, Some(seed), vec![a, b]),
                (Err(e), _) | (_, Err(e)) => SuiteEntry::failed(label, Some(seed), e.to_string()),
            }
        })
        .collect();
    let drops: Vec<SuiteEntry> = rank_drop_scenarios(base, 3)
        .into_par_iter()
        .map(|s| match rank_drop_check(&s) {
            Ok(a) => SuiteEntry::from_assertions(format!("rank-drop-{}", s.name), s.seed, vec![a]),
            Err(e) => SuiteEntry::failed(format!("rank-drop-{}", s.name), s.seed, e.to_string()),
        })
        .collect();
    entries.extend(drops);
    SuiteReport::new("exp-jacobi", entries, vec![])
}

fn kropina_suite(o: &Overrides) -> SuiteReport {
    let mut s = builtin::kropina();
    s.apply(o);
    let mut entry = run_entry(&s, |_| true);
    let conj = (|| -> Result<usize> {
        let m = s.metric_spec()?;
        let p = s.p.build()?;
        let GeodesicConfig::Bvp { p: a, q, tau, .. } = &s.geodesic else {
            unreachable!()
        };
        let guess: Vec<f64> = a.iter().zip(q).map(|(x, y)| (y - x) / tau).collect();
        let geo =
            finsler_morse::curves::geodesic_bvp(&m, a, q, *tau, &guess, s.numerics.tolerances())?;
        let sys = ReducedJacobiSystem::reduce(&geo, &p)?;
        Ok(conjugate_points(&sys, 0.0, *tau, ScanOptions::default())?.len())
    })();
    match conj {
        Ok(c) => {
            let a = Assertion::equal("no-conjugate-points", &[c, 0]);
            entry.pass &= a.pass();
            entry.assertions.push(a);
        }
        Err(e) => {
            entry.pass = false;
            entry.error = Some(e.to_string());
        }
    }
    SuiteReport::new("kropina", vec![entry], vec![])
}
