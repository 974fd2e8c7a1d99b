//! Seeded random scenarios: `h = I + ε S(x)` with `S` a symmetric
//! polynomial field of degree ≤ 2 and a small constant wind `ω`.

use std::sync::Arc;

use finsler_morse::curves::geodesic_ivp;
use finsler_morse::indexform::endpoint_form;
use finsler_morse::jacobi::{focal_points, p_jacobi_basis, ReducedJacobiSystem, ScanOptions};
use finsler_morse::metric::{MetricSpec, TangentVector};
use finsler_morse::submanifold::{normal_lift, Submanifold};
use finsler_morse::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::scenario::{GeodesicConfig, MetricConfig, Numerics, Scenario, SubmanifoldConfig};

/// Largest perturbation amplitude.
pub const MAX_EPS: f64 = 0.1;
/// Largest wind norm.
pub const MAX_WIND: f64 = 0.3;
/// Draws with a focal instant this close to `τ` are rejected.
pub const END_MARGIN: f64 = 1e-3;
/// Draws whose endpoint form has an eigenvalue this small are rejected.
pub const ENDPOINT_MARGIN: f64 = 1e-3;
const MAX_ATTEMPTS: usize = 32;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn coef(r: &mut impl Rng, scale: f64) -> f64 {
    r.random_range(-1.0..1.0) * scale
}

fn num(c: f64) -> String {
    format!("({c:e})")
}

/// Random polynomial `S_ij(x)` entries of degree ≤ 2, as expression strings.
fn poly_field(r: &mut impl Rng, n: usize, eps: f64) -> Vec<Vec<String>> {
    let scale = eps / (1 + n + n * n) as f64;
    let mut h = vec![vec![String::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            let mut terms = vec![if i == j {
                "1".to_string()
            } else {
                "0".to_string()
            }];
            terms.push(num(coef(r, scale)));
            for a in 0..n {
                terms.push(format!("{}*x{}", num(coef(r, scale)), a + 1));
                for b in a..n {
                    terms.push(format!("{}*x{}*x{}", num(coef(r, scale)), a + 1, b + 1));
                }
            }
            let e = terms.join(" + ");
            h[i][j] = e.clone();
            h[j][i] = e;
        }
    }
    h
}

/// Riemannian or Randers member of the family in dimension `n`.
pub fn random_metric(r: &mut impl Rng, n: usize, randers: bool) -> MetricConfig {
    let eps = r.random_range(0.2..1.0) * MAX_EPS;
    let h = poly_field(r, n, eps);
    if !randers {
        return MetricConfig::Riemannian { h };
    }
    let mut w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let len = r.random_range(0.05..1.0) * MAX_WIND;
    for x in &mut w {
        *x *= len / norm;
    }
    MetricConfig::Randers {
        h,
        omega: w.iter().map(|c| num(*c)).collect(),
    }
}

fn unit(r: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if s > 0.1 && s <= 1.0 {
            return v.iter().map(|x| x / s).collect();
        }
    }
}

fn box_point(r: &mut impl Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-half..half)).collect()
}

/// Why a draw was discarded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub seed: u64,
    pub attempt: usize,
    pub reason: String,
}

/// One candidate draw of a metric, P and geodesic (no rejection test).
pub fn candidate(seed: u64, attempt: usize) -> Result<Scenario> {
    let mut r = rng(seed, attempt as u64);
    let n = if r.random_bool(0.5) { 2 } else { 3 };
    let randers = r.random_bool(0.5);
    let metric = random_metric(&mut r, n, randers);
    let m = metric.build()?;
    let (p, x, y, tau) = if r.random_bool(0.25) {
        let x = box_point(&mut r, n, 0.5);
        let y = unit(&mut r, n);
        (
            SubmanifoldConfig::Point { x: x.clone() },
            x,
            y,
            r.random_range(0.5..2.0),
        )
    } else {
        let center = box_point(&mut r, n, 0.2);
        let radius = r.random_range(0.3..1.0);
        let u = if n == 2 {
            let th = r.random_range(0.0..std::f64::consts::TAU);
            vec![th.cos(), th.sin()]
        } else {
            unit(&mut r, n)
        };
        let x: Vec<f64> = (0..n).map(|i| center[i] + radius * u[i]).collect();
        let cfg = if n == 2 {
            SubmanifoldConfig::Circle {
                center,
                radius,
                a: None,
                b: None,
            }
        } else {
            SubmanifoldConfig::Sphere { center, radius }
        };
        let sub = cfg.build()?;
        let sign = if r.random_bool(0.15) { 1.0 } else { -1.0 };
        let y0: Vec<f64> = u.iter().map(|c| sign * c).collect();
        let y = normal_lift(&m, &sub, &x, &y0)?;
        let tau = radius * r.random_range(0.3..2.5);
        (cfg, x, y, tau)
    };
    Ok(Scenario {
        name: format!("random-{seed}"),
        metric,
        geodesic: GeodesicConfig::Ivp {
            p: x,
            v: y,
            tau,
            lift: false,
        },
        p,
        q: None,
        numerics: Numerics::default(),
        seed: Some(seed),
        expect: None,
    })
}

struct Prepared {
    sys: ReducedJacobiSystem,
    end: TangentVector,
}

fn prepare(s: &Scenario) -> Result<Prepared> {
    let m = s.metric_spec()?;
    let p = s.p.build()?;
    let GeodesicConfig::Ivp { p: x, v, tau, .. } = &s.geodesic else {
        unreachable!("random draws are initial value problems")
    };
    let geo = geodesic_ivp(&m, x, v, *tau, s.numerics.tolerances())?;
    let end = geo.end();
    let sys = ReducedJacobiSystem::reduce(&geo, &p)?;
    Ok(Prepared { sys, end })
}

fn end_focal(sys: &ReducedJacobiSystem, opts: ScanOptions) -> Result<Option<f64>> {
    let basis = p_jacobi_basis(sys)?;
    Ok(focal_points(sys, &basis, opts)
        .iter()
        .find(|f| (f.t - sys.tau()).abs() < END_MARGIN || f.at_end)
        .map(|f| f.t))
}

fn scan(s: &Scenario) -> ScanOptions {
    ScanOptions {
        samples: s.numerics.scan_samples,
        rank_tol: s.numerics.rank_tol,
        refine_tol: 1e-8,
    }
}

/// Draw for `seed`, redrawing while a focal instant sits within
/// [`END_MARGIN`] of `τ`.
pub fn p_draw(seed: u64) -> (Result<Scenario>, Vec<Rejection>) {
    let mut rejected = Vec::new();
    for attempt in 0..MAX_ATTEMPTS {
        let s = match candidate(seed, attempt) {
            Ok(s) => s,
            Err(e) => return (Err(e), rejected),
        };
        let prep = match prepare(&s) {
            Ok(p) => p,
            Err(e) => return (Err(e), rejected),
        };
        match end_focal(&prep.sys, scan(&s)) {
            Ok(None) => return (Ok(s), rejected),
            Ok(Some(t)) => rejected.push(Rejection {
                seed,
                attempt,
                reason: format!("focal instant {t:.6} within {END_MARGIN:e} of tau"),
            }),
            Err(e) => return (Err(e), rejected),
        }
    }
    (
        Err(finsler_morse::Error::InvalidInput(format!(
            "seed {seed}: every attempt rejected"
        ))),
        rejected,
    )
}

fn quadric_through(
    r: &mut impl Rng,
    m: &MetricSpec,
    end: &TangentVector,
) -> Result<SubmanifoldConfig> {
    let n = end.dim();
    let g = m.fundamental_tensor(end)?.g;
    let y = DVector::from_column_slice(&end.y);
    let ny = y.dot(&(&g * &y)).sqrt();
    let normal: Vec<f64> = end.y.iter().map(|c| c / ny).collect();
    // Gram-Schmidt in g_{γ̇(τ)} on the coordinate axes, after the normal
    let mut basis: Vec<DVector<f64>> = vec![&y / ny];
    for i in 0..n {
        let mut e = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
        for b in &basis {
            e -= b * b.dot(&(&g * &e));
        }
        let l = e.dot(&(&g * &e)).sqrt();
        if l > 1e-6 && basis.len() < n {
            basis.push(e / l);
        }
    }
    let tangents: Vec<Vec<f64>> = basis[1..].iter().map(|b| b.as_slice().to_vec()).collect();
    let k = n - 1;
    let mut hess = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a..k {
            let c = r.random_range(-2.0..2.0);
            hess[a][b] = c;
            hess[b][a] = c;
        }
    }
    Ok(SubmanifoldConfig::Quadric {
        origin: end.x.clone(),
        tangents,
        normal,
        hessian: hess,
    })
}

/// A `p_draw` plus a quadric `Q` through `γ(τ)` perpendicular
/// to `γ̇(τ)`, redrawn while the endpoint form is nearly degenerate.
pub fn pq_draw(seed: u64) -> (Result<Scenario>, Vec<Rejection>) {
    let mut rejected = Vec::new();
    for attempt in 0..MAX_ATTEMPTS {
        let sub_seed = seed.wrapping_mul(1_000_003).wrapping_add(attempt as u64);
        let (s, rej) = p_draw(sub_seed);
        rejected.extend(rej);
        let mut s = match s {
            Ok(s) => s,
            Err(e) => return (Err(e), rejected),
        };
        let result = (|| -> Result<Option<f64>> {
            let prep = prepare(&s)?;
            let mut r = rng(seed, 1000 + attempt as u64);
            let qc = quadric_through(&mut r, &*s.metric_spec()?, &prep.end)?;
            let q: Submanifold = qc.build()?;
            s.q = Some(qc);
            let basis = p_jacobi_basis(&prep.sys)?;
            let a = endpoint_form(&prep.sys, &basis, &q)?;
            let sym: DMatrix<f64> = (&a.matrix + a.matrix.transpose()) * 0.5;
            Ok(sym
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .map(|e| e.abs())
                .reduce(f64::min))
        })();
        match result {
            Ok(Some(e)) if e < ENDPOINT_MARGIN => rejected.push(Rejection {
                seed,
                attempt,
                reason: format!("endpoint form eigenvalue {e:.2e} below {ENDPOINT_MARGIN:e}"),
            }),
            Ok(_) => {
                s.name = format!("random-q-{seed}");
                s.seed = Some(seed);
                return (Ok(s), rejected);
            }
            Err(e) => return (Err(e), rejected),
        }
    }
    (
        Err(finsler_morse::Error::InvalidInput(format!(
            "seed {seed}: every attempt rejected"
        ))),
        rejected,
    )
}

/// Metric, base point, velocity and direction.
pub type ExpDraw = (Arc<MetricSpec>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Random base point, velocity and direction for exponential-map checks.
pub fn exp_draw(seed: u64) -> Result<ExpDraw> {
    let mut r = rng(seed, 7);
    let n = if r.random_bool(0.5) { 2 } else { 3 };
    let randers = r.random_bool(0.5);
    let m = random_metric(&mut r, n, randers).build()?;
    let p = box_point(&mut r, n, 0.5);
    let len = r.random_range(0.3..1.5);
    let v = unit(&mut r, n).iter().map(|c| c * len).collect();
    let w = unit(&mut r, n);
    Ok((Arc::new(m), p, v, w))
}
