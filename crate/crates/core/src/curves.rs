//! Geodesics, covariant derivatives along curves, parallel transport and
//! frames, exponential map and its differential.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::connection::{coefficients, hh_curvature};
use crate::error::{Error, Result};
use crate::metric::{MetricSpec, TangentVector};
use crate::ode::{integrate, DenseSolution, Tolerances};

/// Right-hand side of the geodesic equation, `ÿ = -γ(y)(y, y)`.
///
/// The Cartan terms of Γ drop out when both slots hold the reference
/// vector, so only the formal Christoffel symbols are needed.
pub(crate) fn geodesic_accel(m: &MetricSpec, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
    if !m.in_domain_xy(x, y) {
        return Err(Error::ConicDomain);
    }
    let c = coefficients::<f64>(m, x, y, false)?;
    let n = m.dim;
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += c.gamma[(k * n + i) * n + j] * y[i] * y[j];
            }
        }
        out[k] = -acc;
    }
    Ok(())
}

/// Dense solution of the geodesic equation on `[0, τ]`.
#[derive(Debug, Clone)]
pub struct Geodesic {
    metric: Arc<MetricSpec>,
    tau: f64,
    sol: DenseSolution,
    l0: f64,
    tol: Tolerances,
}

impl Geodesic {
    pub fn metric(&self) -> &Arc<MetricSpec> {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `L(γ̇(0))`.
    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn solution(&self) -> &DenseSolution {
        &self.sol
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        let s = self.sol.eval(t);
        s[..self.dim()].to_vec()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let s = self.sol.eval(t);
        s[self.dim()..].to_vec()
    }

    pub fn tangent(&self, t: f64) -> TangentVector {
        let s = self.sol.eval(t);
        let n = self.dim();
        TangentVector::new(&s[..n], &s[n..])
    }

    pub fn start(&self) -> TangentVector {
        self.tangent(0.0)
    }

    pub fn end(&self) -> TangentVector {
        self.tangent(self.tau)
    }

    /// Max of `|L(γ̇(t)) − L₀|` over `samples + 1` uniform instants.
    pub fn l_drift(&self, samples: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..=samples {
            let t = self.tau * i as f64 / samples as f64;
            let l = self.metric.eval_l(&self.tangent(t))?;
            worst = worst.max((l - self.l0).abs());
        }
        Ok(worst)
    }

    /// Smallest eigenvalue of `g_{γ̇(t)}` over the samples; a non-positive
    /// value after a positive start is reported as a signature error.
    pub fn check_positive(&self, samples: usize) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for i in 0..=samples {
            let t = self.tau * i as f64 / samples as f64;
            let g = self.metric.fundamental_tensor(&self.tangent(t))?.g;
            let e = g.symmetric_eigen().eigenvalues.min();
            if e <= 0.0 {
                return Err(Error::Signature { t, min_eig: e });
            }
            worst = worst.min(e);
        }
        Ok(worst)
    }

    /// `½ ∫ L(γ̇)` with Simpson's rule.
    pub fn energy(&self, samples: usize) -> Result<f64> {
        let m = samples.max(2) & !1;
        let h = self.tau / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.metric.eval_l(&self.tangent(i as f64 * h))?;
        }
        Ok(0.5 * acc * h / 3.0)
    }

    /// Rows `t, x(t), y(t), L(γ̇(t))` on a uniform grid.
    pub fn trace_rows(&self, samples: usize) -> Vec<Vec<f64>> {
        (0..=samples)
            .map(|i| {
                let t = self.tau * i as f64 / samples as f64;
                let v = self.tangent(t);
                let mut row = vec![t];
                row.extend(&v.x);
                row.extend(&v.y);
                row.push(self.metric.lagrangian(&v.x, &v.y).unwrap_or(f64::NAN));
                row
            })
            .collect()
    }
}

pub fn geodesic_ivp(
    m: &Arc<MetricSpec>,
    p: &[f64],
    v: &[f64],
    tau: f64,
    tol: Tolerances,
) -> Result<Geodesic> {
    let n = m.dim;
    if p.len() != n || v.len() != n {
        return Err(Error::InvalidInput(
            "initial data has wrong dimension".into(),
        ));
    }
    let start = TangentVector::new(p, v);
    let l0 = m.eval_l(&start)?;
    let mut y0 = p.to_vec();
    y0.extend_from_slice(v);
    let metric = m.clone();
    let sol = integrate(
        |_, s, ds| {
            ds[..n].copy_from_slice(&s[n..]);
            geodesic_accel(&metric, &s[..n], &s[n..], &mut ds[n..])
        },
        |s| metric.in_domain_xy(&s[..n], &s[n..]),
        0.0,
        &y0,
        tau,
        tol,
    )?;
    Ok(Geodesic {
        metric: m.clone(),
        tau,
        sol,
        l0,
        tol,
    })
}

/// `D^ξ_ċ ζ = ζ̇ + Γ(ξ)(ζ, ċ)` at one instant.
pub fn covariant_derivative(
    m: &MetricSpec,
    x: &[f64],
    c_dot: &[f64],
    xi: &[f64],
    zeta: &[f64],
    zeta_dot: &[f64],
) -> Result<Vec<f64>> {
    if !m.in_domain_xy(x, xi) {
        return Err(Error::ConicDomain);
    }
    let n = m.dim;
    let c = coefficients::<f64>(m, x, xi, true)?;
    Ok((0..n)
        .map(|k| {
            let mut acc = zeta_dot[k];
            for i in 0..n {
                for j in 0..n {
                    acc += c.chern[(k * n + i) * n + j] * zeta[i] * c_dot[j];
                }
            }
            acc
        })
        .collect())
}

/// Dense solution `[x, y, X_1, .., X_r]` of the geodesic together with
/// `r` parallel fields `Ẋ = −N(γ̇) X`.
fn transport_system(g: &Geodesic, fields: &[Vec<f64>]) -> Result<DenseSolution> {
    let n = g.dim();
    let r = fields.len();
    let start = g.start();
    let mut y0 = start.x.clone();
    y0.extend(&start.y);
    for f in fields {
        y0.extend(f);
    }
    let m = g.metric.clone();
    integrate(
        |_, s, ds| {
            let (x, y) = (&s[..n], &s[n..2 * n]);
            if !m.in_domain_xy(x, y) {
                return Err(Error::ConicDomain);
            }
            let c = coefficients::<f64>(&m, x, y, true)?;
            ds[..n].copy_from_slice(y);
            for k in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += c.gamma[(k * n + i) * n + j] * y[i] * y[j];
                    }
                }
                ds[n + k] = -acc;
            }
            for f in 0..r {
                let off = 2 * n + f * n;
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += c.nonlinear[i * n + j] * s[off + j];
                    }
                    ds[off + i] = -acc;
                }
            }
            Ok(())
        },
        |s| m.in_domain_xy(&s[..n], &s[n..2 * n]),
        0.0,
        &y0,
        g.tau,
        g.tol,
    )
}

/// A vector field along a geodesic given by a dense solution.
#[derive(Debug, Clone)]
pub struct TransportedField {
    sol: DenseSolution,
    n: usize,
}

impl TransportedField {
    pub fn at(&self, t: f64) -> Vec<f64> {
        let s = self.sol.eval(t);
        s[2 * self.n..3 * self.n].to_vec()
    }
}

pub fn parallel_transport(g: &Geodesic, x0: &[f64]) -> Result<TransportedField> {
    let sol = transport_system(g, &[x0.to_vec()])?;
    Ok(TransportedField { sol, n: g.dim() })
}

/// Parallel g-orthonormal frame along a geodesic, adapted to an initial
/// submanifold: `E_1..E_k` span `T_pP`, `E_n = γ̇/√L₀`.
#[derive(Debug, Clone)]
pub struct ParallelFrame {
    geodesic: Geodesic,
    sol: DenseSolution,
    k: usize,
    aligned: bool,
}

impl ParallelFrame {
    pub fn geodesic(&self) -> &Geodesic {
        &self.geodesic
    }

    pub fn dim(&self) -> usize {
        self.geodesic.dim()
    }

    /// Dimension of the tangent block.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Whether `e_n ∝ γ̇(0)`.
    pub fn aligned(&self) -> bool {
        self.aligned
    }

    /// Tangent vector `γ̇(t)` from the augmented system.
    pub fn tangent(&self, t: f64) -> TangentVector {
        let n = self.dim();
        let s = self.sol.eval(t);
        TangentVector::new(&s[..n], &s[n..2 * n])
    }

    /// Frame matrix with columns `E_i(t)` in chart components.
    pub fn frame(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let s = self.sol.eval(t);
        DMatrix::from_column_slice(n, n, &s[2 * n..])
    }

    /// Both at once.
    pub fn state(&self, t: f64) -> (TangentVector, DMatrix<f64>) {
        let n = self.dim();
        let s = self.sol.eval(t);
        (
            TangentVector::new(&s[..n], &s[n..2 * n]),
            DMatrix::from_column_slice(n, n, &s[2 * n..]),
        )
    }

    /// `max |E^T g E − I|` over the samples.
    pub fn gram_deviation(&self, samples: usize) -> Result<f64> {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..=samples {
            let t = self.geodesic.tau * i as f64 / samples as f64;
            let (v, e) = self.state(t);
            let g = self.geodesic.metric.fundamental_tensor(&v)?.g;
            let gram = e.transpose() * g * &e;
            worst = worst.max((gram - DMatrix::identity(n, n)).abs().max());
        }
        Ok(worst)
    }

    /// Frame coordinates of a chart vector at `t`: `c_i = g(X, E_i)`.
    pub fn coordinates(&self, t: f64, x: &[f64]) -> Result<DVector<f64>> {
        let (v, e) = self.state(t);
        let g = self.geodesic.metric.fundamental_tensor(&v)?.g;
        Ok(e.transpose() * g * DVector::from_column_slice(x))
    }
}

/// Initial frame at `γ̇(0)` for a tangent basis (columns of `tangents`).
pub fn initial_frame(g: &DMatrix<f64>, v: &[f64], tangents: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let k = tangents.ncols();
    let min_eig = g.clone().symmetric_eigen().eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::Signature { t: 0.0, min_eig });
    }
    let vv = DVector::from_column_slice(v);
    let l0 = vv.dot(&(g * &vv));
    if l0 <= 0.0 {
        return Err(Error::Lightlike);
    }
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(g * b));
    for a in 0..k {
        let t = tangents.column(a).into_owned();
        let r = ip(&t, &vv).abs() / (ip(&t, &t).sqrt() * l0.sqrt());
        if r > 1e-8 {
            return Err(Error::NotPerpendicular { residual: r });
        }
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let project = |w: &DVector<f64>, basis: &[DVector<f64>], extra: &DVector<f64>| {
        let mut r = w.clone();
        for b in basis.iter().chain(std::iter::once(extra)) {
            r -= b * ip(b, &r);
        }
        r
    };
    let en = &vv / l0.sqrt();
    for a in 0..k {
        let t = tangents.column(a).into_owned();
        let scale = ip(&t, &t).sqrt();
        let r = project(&t, &basis, &DVector::zeros(n));
        let norm2 = ip(&r, &r);
        if !(norm2 > 1e-20 * scale * scale) {
            return Err(Error::DegenerateSplitting);
        }
        basis.push(r / norm2.sqrt());
    }
    while basis.len() < n - 1 {
        let best = (0..n)
            .map(|i| {
                let r = project(
                    &DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }),
                    &basis,
                    &en,
                );
                let nr = ip(&r, &r);
                (nr, r)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        basis.push(&best.1 / best.0.sqrt());
    }
    basis.push(en);
    Ok(DMatrix::from_columns(&basis))
}

pub fn parallel_frame(g: &Geodesic, tangents: &DMatrix<f64>) -> Result<ParallelFrame> {
    let start = g.start();
    let gm = g.metric.fundamental_tensor(&start)?.g;
    let e0 = initial_frame(&gm, &start.y, tangents)?;
    let fields: Vec<Vec<f64>> = e0
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let sol = transport_system(g, &fields)?;
    Ok(ParallelFrame {
        geodesic: g.clone(),
        sol,
        k: tangents.ncols(),
        aligned: true,
    })
}

/// `(tan_γ X, nor_γ X)` at `γ̇(t)`.
pub fn tangent_normal_split(g: &Geodesic, t: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = g.tangent(t);
    let ft = g.metric.fundamental_tensor(&v)?;
    let l = ft.inner(&v.y, &v.y);
    if l == 0.0 {
        return Err(Error::Lightlike);
    }
    let coef = ft.inner(x, &v.y) / l;
    let tan: Vec<f64> = v.y.iter().map(|c| c * coef).collect();
    let nor: Vec<f64> = x.iter().zip(&tan).map(|(a, b)| a - b).collect();
    Ok((tan, nor))
}

/// Jacobi fields in chart components along `γ_v` on `[0, t1]`:
/// `J̇ = P − N J`, `Ṗ = A J − N P` with `P = DJ` and `A u = R(γ̇, u)γ̇`.
///
/// Returns the dense solution `[x, y, J_1, P_1, ..]`.
pub fn jacobi_chart_fields(
    m: &Arc<MetricSpec>,
    p: &[f64],
    v: &[f64],
    t1: f64,
    inits: &[(Vec<f64>, Vec<f64>)],
    tol: Tolerances,
) -> Result<DenseSolution> {
    let n = m.dim;
    let mut y0 = p.to_vec();
    y0.extend_from_slice(v);
    for (j, pp) in inits {
        y0.extend(j);
        y0.extend(pp);
    }
    let r = inits.len();
    let metric = m.clone();
    integrate(
        |_, s, ds| {
            let tv = TangentVector::new(&s[..n], &s[n..2 * n]);
            if !metric.in_domain(&tv) {
                return Err(Error::ConicDomain);
            }
            let curv = hh_curvature(&metric, &tv)?;
            let nl = &curv.connection.nonlinear;
            let a = curv.jacobi_operator();
            ds[..n].copy_from_slice(&tv.y);
            geodesic_accel(&metric, &tv.x, &tv.y, &mut ds[n..2 * n])?;
            for f in 0..r {
                let off = 2 * n + 2 * n * f;
                let jv = DVector::from_column_slice(&s[off..off + n]);
                let pv = DVector::from_column_slice(&s[off + n..off + 2 * n]);
                let dj = &pv - nl * &jv;
                let dp = &a * &jv - nl * &pv;
                ds[off..off + n].copy_from_slice(dj.as_slice());
                ds[off + n..off + 2 * n].copy_from_slice(dp.as_slice());
            }
            Ok(())
        },
        |s| metric.in_domain_xy(&s[..n], &s[n..2 * n]),
        0.0,
        &y0,
        t1,
        tol,
    )
}

/// `exp_p(v) = γ_v(1)`.
pub fn exp_map(m: &Arc<MetricSpec>, p: &[f64], v: &[f64], tol: Tolerances) -> Result<Vec<f64>> {
    Ok(geodesic_ivp(m, p, v, 1.0, tol)?.position(1.0))
}

/// `D exp_p(v)[w] = J(1)` with `J(0) = 0`, `DJ(0) = w`; one column per `w`.
pub fn exp_differential(
    m: &Arc<MetricSpec>,
    p: &[f64],
    v: &[f64],
    ws: &[Vec<f64>],
    tol: Tolerances,
) -> Result<Vec<Vec<f64>>> {
    let n = m.dim;
    let inits: Vec<(Vec<f64>, Vec<f64>)> = ws.iter().map(|w| (vec![0.0; n], w.clone())).collect();
    let sol = jacobi_chart_fields(m, p, v, 1.0, &inits, tol)?;
    let end = sol.end_state();
    Ok((0..ws.len())
        .map(|f| end[2 * n + 2 * n * f..3 * n + 2 * n * f].to_vec())
        .collect())
}

/// Damped Newton shooting for `γ(0) = p`, `γ(τ) = q`.
pub fn geodesic_bvp(
    m: &Arc<MetricSpec>,
    p: &[f64],
    q: &[f64],
    tau: f64,
    guess: &[f64],
    tol: Tolerances,
) -> Result<Geodesic> {
    let n = m.dim;
    if !m.in_domain_xy(p, guess) {
        return Err(Error::ConicDomain);
    }
    let qv = DVector::from_column_slice(q);
    let residual = |v: &[f64]| -> Result<(Geodesic, DVector<f64>)> {
        let g = geodesic_ivp(m, p, v, tau, tol)?;
        let r = DVector::from_vec(g.position(tau)) - &qv;
        Ok((g, r))
    };
    let mut v = DVector::from_column_slice(guess);
    let (mut geo, mut r) = residual(v.as_slice())?;
    let max_iter = 60;
    for _ in 0..max_iter {
        if r.norm() <= 1e-10 {
            return Ok(geo);
        }
        // ∂γ_v(τ)/∂v = J(τ) with J(0) = 0, J̇(0) = w
        let ws: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let inits: Vec<(Vec<f64>, Vec<f64>)> =
            ws.iter().map(|w| (vec![0.0; n], w.clone())).collect();
        let sol = jacobi_chart_fields(m, p, v.as_slice(), tau, &inits, tol)?;
        let end = sol.end_state();
        let jac = DMatrix::from_fn(n, n, |i, c| end[2 * n + 2 * n * c + i]);
        let step = jac.lu().solve(&(-&r)).ok_or(Error::NoConvergence {
            iterations: 0,
            residual: r.norm(),
        })?;
        let mut lambda = 1.0;
        loop {
            let cand = &v + &step * lambda;
            if m.in_domain_xy(p, cand.as_slice()) {
                if let Ok((g2, r2)) = residual(cand.as_slice()) {
                    if r2.norm() < r.norm() {
                        v = cand;
                        geo = g2;
                        r = r2;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::NoConvergence {
                    iterations: max_iter,
                    residual: r.norm(),
                });
            }
        }
    }
    if r.norm() <= 1e-9 {
        return Ok(geo);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: r.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn euclidean_line() {
        let m = Arc::new(MetricSpec::euclidean(2));
        let g = geodesic_ivp(&m, &[0.0, 0.0], &[1.0, 0.0], 2.0, Tolerances::default()).unwrap();
        for i in 0..=10 {
            let t = 0.2 * i as f64;
            let x = g.position(t);
            assert!((x[0] - t).abs() < 1e-12 && x[1].abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_equator_period() {
        let m = Arc::new(MetricSpec::unit_sphere_chart());
        let g = geodesic_ivp(
            &m,
            &[FRAC_PI_2, 0.0],
            &[0.0, 1.0],
            2.0 * PI,
            Tolerances::default(),
        )
        .unwrap();
        let x = g.position(2.0 * PI);
        assert!((x[0] - FRAC_PI_2).abs() < 1e-10);
        assert!((x[1] - 2.0 * PI).abs() < 1e-9);
        assert!(g.l_drift(64).unwrap() < 1e-8);
    }

    #[test]
    fn euclidean_covariant_derivative() {
        let m = MetricSpec::euclidean(2);
        let t = 0.7;
        let d = covariant_derivative(
            &m,
            &[t, 0.0],
            &[1.0, 0.0],
            &[1.0, 0.0],
            &[t, t * t],
            &[1.0, 2.0 * t],
        )
        .unwrap();
        assert_eq!(d, vec![1.0, 2.0 * t]);
    }

    #[test]
    fn bvp_euclidean() {
        let m = Arc::new(MetricSpec::euclidean(2));
        let g = geodesic_bvp(
            &m,
            &[0.0, 0.0],
            &[2.0, 0.0],
            2.0,
            &[0.7, 0.3],
            Tolerances::default(),
        )
        .unwrap();
        let v = g.velocity(0.0);
        assert!((v[0] - 1.0).abs() < 1e-9 && v[1].abs() < 1e-9);
    }

    #[test]
    fn frame_circle_radial() {
        let m = Arc::new(MetricSpec::euclidean(2));
        let g = geodesic_ivp(&m, &[1.0, 0.0], &[-1.0, 0.0], 1.5, Tolerances::default()).unwrap();
        let f = parallel_frame(&g, &DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let e = f.frame(0.0);
        assert!((e[(1, 0)].abs() - 1.0).abs() < 1e-14 && e[(0, 0)].abs() < 1e-14);
        assert_eq!(e.column(1).as_slice(), &[-1.0, 0.0]);
        assert!(f.gram_deviation(8).unwrap() < 1e-12);
    }

    #[test]
    fn tilted_start_rejected() {
        let g = DMatrix::identity(2, 2);
        let t = DMatrix::from_column_slice(2, 1, &[0.1f64.sin(), 0.1f64.cos()]);
        assert!(matches!(
            initial_frame(&g, &[-1.0, 0.0], &t),
            Err(Error::NotPerpendicular { .. })
        ));
    }
}
