//! Jacobi fields in a parallel frame: the reduced system `v̈ + 𝔯_t v = 0`,
//! P-Jacobi bases, focal and conjugate instants, disconjugate partitions.

use nalgebra::{DMatrix, DVector};

use crate::connection::hh_curvature;
use crate::curves::{parallel_frame, Geodesic, ParallelFrame};
use crate::error::{Error, Result};
use crate::ode::{integrate, DenseSolution, Tolerances};
use crate::submanifold::{normality_residual, shape_operator, ShapeOperator, Submanifold};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-7;
/// Default σ_min scanning grid.
pub const SCAN_SAMPLES: usize = 2048;
/// Focal instants this close to the end of the interval are endpoint ones.
pub const END_TOL: f64 = 1e-6;
/// Node cap for disconjugate partitions.
pub const MAX_NODES: usize = 64;

/// Frame-coordinate Jacobi data along a geodesic with initial submanifold P.
#[derive(Debug, Clone)]
pub struct ReducedJacobiSystem {
    frame: ParallelFrame,
    shape: ShapeOperator,
    k: usize,
    q_form: DMatrix<f64>,
    samples: Vec<DMatrix<f64>>,
    step: f64,
    asymmetry: f64,
    radial: f64,
}

impl ReducedJacobiSystem {
    pub fn reduce(g: &Geodesic, p: &Submanifold) -> Result<Self> {
        let n = g.dim();
        let m = g.metric().clone();
        g.check_positive(64)?;
        let start = g.start();
        let emb = p.local(&start.x)?;
        let g0 = m.fundamental_tensor(&start)?.g;
        let r = normality_residual(&g0, &start.y, &emb.tangents);
        if r > 1e-8 {
            return Err(Error::NotPerpendicular { residual: r });
        }
        let frame = parallel_frame(g, &emb.tangents)?;
        let shape = shape_operator(&m, p, &start)?;
        let k = emb.k();
        // e_i = T c_i for the tangent block
        let e0 = frame.frame(0.0);
        let q_form = if k == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let t = &emb.tangents;
            let c = (t.transpose() * t)
                .lu()
                .solve(&(t.transpose() * e0.columns(0, k)))
                .ok_or(Error::DegenerateSplitting)?;
            -(c.transpose() * &shape.bilinear * &c)
        };
        let q_form = (&q_form + q_form.transpose()) * 0.5;

        let tau = g.tau();
        let count = 1024usize.max((200.0 * tau).ceil() as usize);
        let step = tau / count as f64;
        let mut samples = Vec::with_capacity(count + 1);
        let (mut asymmetry, mut radial) = (0.0f64, 0.0f64);
        for i in 0..=count {
            let t = i as f64 * step;
            let (v, e) = frame.state(t);
            let curv = hh_curvature(&m, &v)?;
            let a = curv.jacobi_operator();
            let rt = -(e.transpose() * &curv.connection.g * a * &e);
            asymmetry = asymmetry.max((&rt - rt.transpose()).abs().max());
            radial = radial
                .max(rt.row(n - 1).abs().max())
                .max(rt.column(n - 1).abs().max());
            samples.push((&rt + rt.transpose()) * 0.5);
        }
        Ok(ReducedJacobiSystem {
            frame,
            shape,
            k,
            q_form,
            samples,
            step,
            asymmetry,
            radial,
        })
    }

    pub fn frame(&self) -> &ParallelFrame {
        &self.frame
    }

    pub fn geodesic(&self) -> &Geodesic {
        self.frame.geodesic()
    }

    pub fn shape_operator(&self) -> &ShapeOperator {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> f64 {
        self.geodesic().tau()
    }

    pub fn l0(&self) -> f64 {
        self.geodesic().l0()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.geodesic().tolerances()
    }

    /// `𝔔` on `ℝ^k`.
    pub fn q_form(&self) -> &DMatrix<f64> {
        &self.q_form
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Largest `|𝔯 − 𝔯ᵀ|` entry seen before symmetrizing.
    pub fn symmetry_residual(&self) -> f64 {
        self.asymmetry
    }

    /// Largest entry in the last row and column of 𝔯.
    pub fn radial_residual(&self) -> f64 {
        self.radial
    }

    /// `𝔯_t` by degree-5 Lagrange interpolation of the samples.
    pub fn r_at(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let last = self.samples.len() - 1;
        let s = (t / self.step).clamp(0.0, last as f64);
        let j0 = (s.floor() as isize - 2).clamp(0, last as isize - 5) as usize;
        let x = s - j0 as f64;
        for a in 0..6 {
            let mut w = 1.0;
            for b in 0..6 {
                if a != b {
                    w *= (x - b as f64) / (a as f64 - b as f64);
                }
            }
            out += &self.samples[j0 + a] * w;
        }
        out
    }

    /// Fields with `v(a) = v0`, `v̇(a) = dv0` (one per column) on `[a, b]`.
    pub fn propagate(
        &self,
        a: f64,
        b: f64,
        v0: &DMatrix<f64>,
        dv0: &DMatrix<f64>,
    ) -> Result<JacobiMatrix> {
        let n = self.dim();
        let cols = v0.ncols();
        if v0.nrows() != n || dv0.nrows() != n || dv0.ncols() != cols {
            return Err(Error::InvalidInput("initial data has wrong shape".into()));
        }
        let mut y0 = v0.as_slice().to_vec();
        y0.extend_from_slice(dv0.as_slice());
        let half = n * cols;
        let sol = integrate(
            |t, s, ds| {
                let r = self.r_at(t);
                ds[..half].copy_from_slice(&s[half..]);
                let v = DMatrix::from_column_slice(n, cols, &s[..half]);
                let acc = -(r * v);
                ds[half..].copy_from_slice(acc.as_slice());
                Ok(())
            },
            |_| true,
            a,
            &y0,
            b,
            self.tolerances(),
        )?;
        Ok(JacobiMatrix {
            n,
            cols,
            start: a,
            sol,
        })
    }
}

/// Dense matrix solution of `V̈ + 𝔯 V = 0` together with `V̇`.
#[derive(Debug, Clone)]
pub struct JacobiMatrix {
    n: usize,
    cols: usize,
    start: f64,
    sol: DenseSolution,
}

impl JacobiMatrix {
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.sol.t_end()
    }

    pub fn value(&self, t: f64) -> DMatrix<f64> {
        let s = self.sol.eval(t);
        DMatrix::from_column_slice(self.n, self.cols, &s[..self.n * self.cols])
    }

    pub fn derivative(&self, t: f64) -> DMatrix<f64> {
        let s = self.sol.eval(t);
        DMatrix::from_column_slice(self.n, self.cols, &s[self.n * self.cols..])
    }

    pub fn both(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = self.sol.eval(t);
        let h = self.n * self.cols;
        (
            DMatrix::from_column_slice(self.n, self.cols, &s[..h]),
            DMatrix::from_column_slice(self.n, self.cols, &s[h..]),
        )
    }

    /// `max_t |W(t) − W(start)|` for `W = VᵀV̇ − V̇ᵀV`, and `|W(start)|`.
    pub fn wronskian_drift(&self, samples: usize) -> (f64, f64) {
        let w = |t: f64| {
            let (v, dv) = self.both(t);
            v.transpose() * &dv - dv.transpose() * &v
        };
        let w0 = w(self.start);
        let span = self.end() - self.start;
        let mut worst: f64 = 0.0;
        for i in 1..=samples {
            let t = self.start + span * i as f64 / samples as f64;
            worst = worst.max((w(t) - &w0).abs().max());
        }
        (worst, w0.abs().max())
    }
}

pub fn jacobi_ivp(sys: &ReducedJacobiSystem, v0: &[f64], dv0: &[f64]) -> Result<JacobiMatrix> {
    let n = sys.dim();
    sys.propagate(
        0.0,
        sys.tau(),
        &DMatrix::from_column_slice(n, 1, v0),
        &DMatrix::from_column_slice(n, 1, dv0),
    )
}

/// Initial data of the P-Jacobi basis.
pub fn p_jacobi_initial(sys: &ReducedJacobiSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sys.dim();
    let k = sys.k();
    let mut v0 = DMatrix::zeros(n, n);
    let mut dv0 = DMatrix::zeros(n, n);
    for i in 0..k {
        v0[(i, i)] = 1.0;
        for j in 0..k {
            dv0[(j, i)] = -sys.q_form()[(j, i)];
        }
    }
    for i in k..n - 1 {
        dv0[(i, i)] = 1.0;
    }
    dv0[(n - 1, n - 1)] = sys.l0().sqrt();
    (v0, dv0)
}

/// Basis `J_1..J_n` of the P-Jacobi fields on `[0, τ]`.
pub fn p_jacobi_basis(sys: &ReducedJacobiSystem) -> Result<JacobiMatrix> {
    let (v0, dv0) = p_jacobi_initial(sys);
    sys.propagate(0.0, sys.tau(), &v0, &dv0)
}

/// `max_t |J_n(t) − t √L₀ e_n|` over the samples.
pub fn radial_column_residual(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    samples: usize,
) -> f64 {
    let n = sys.dim();
    let s = sys.l0().sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..=samples {
        let t = sys.tau() * i as f64 / samples as f64;
        let c = basis.value(t).column(n - 1).into_owned();
        let mut want = DVector::zeros(n);
        want[n - 1] = t * s;
        worst = worst.max((c - want).amax());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalPoint {
    pub t: f64,
    pub multiplicity: usize,
    /// `σ_min / σ_max` of the scaled solution matrix at `t`.
    pub sigma_ratio: f64,
    /// σ_min sits within two decades above the rank tolerance.
    pub uncertain: bool,
    pub at_end: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub samples: usize,
    pub rank_tol: f64,
    pub refine_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            samples: SCAN_SAMPLES,
            rank_tol: RANK_TOL,
            refine_tol: 1e-8,
        }
    }
}

/// Solution matrix with the columns that vanish at `start` divided by
/// `t − start`, so that it is nonsingular near `start`.
fn scaled(basis: &JacobiMatrix, from: usize, t: f64) -> DMatrix<f64> {
    let mut m = basis.value(t);
    let d = t - basis.start();
    for j in from..m.ncols() {
        m.column_mut(j).scale_mut(1.0 / d);
    }
    m
}

fn sigma_ratio(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return (0.0, sv);
    }
    (sv.min() / max, sv / max)
}

/// Instants in `(start, end]` where the scaled matrix drops rank.
pub fn scan_degeneracies(basis: &JacobiMatrix, from: usize, opts: ScanOptions) -> Vec<FocalPoint> {
    let (a, b) = (basis.start(), basis.end());
    let s = opts.samples.max(8);
    let ts: Vec<f64> = (1..=s).map(|i| a + (b - a) * i as f64 / s as f64).collect();
    let mats: Vec<DMatrix<f64>> = ts.iter().map(|&t| scaled(basis, from, t)).collect();
    let ratio: Vec<f64> = mats.iter().map(|m| sigma_ratio(m).0).collect();
    let dets: Vec<f64> = mats.iter().map(|m| m.determinant()).collect();
    let f = |t: f64| sigma_ratio(&scaled(basis, from, t)).0;

    let mut brackets: Vec<(f64, f64)> = Vec::new();
    for i in 0..s {
        let left = if i == 0 { f64::INFINITY } else { ratio[i - 1] };
        let right = if i + 1 == s {
            f64::INFINITY
        } else {
            ratio[i + 1]
        };
        if ratio[i] <= left && ratio[i] <= right && ratio[i] < 0.1 {
            let lo = if i == 0 {
                a + 0.5 * (ts[0] - a)
            } else {
                ts[i - 1]
            };
            let hi = if i + 1 == s { b } else { ts[i + 1] };
            brackets.push((lo, hi));
        }
    }
    let mut found: Vec<FocalPoint> = Vec::new();
    let push = |t: f64, found: &mut Vec<FocalPoint>| {
        let (r, sv) = sigma_ratio(&scaled(basis, from, t));
        if r >= 100.0 * opts.rank_tol {
            return;
        }
        if found.iter().any(|p| (p.t - t).abs() < 1e-7) {
            return;
        }
        let uncertain = r >= opts.rank_tol;
        let cut = if uncertain {
            100.0 * opts.rank_tol
        } else {
            opts.rank_tol
        };
        let multiplicity = sv.iter().filter(|&&x| x < cut).count();
        found.push(FocalPoint {
            t,
            multiplicity,
            sigma_ratio: r,
            uncertain,
            at_end: (b - t).abs() <= END_TOL,
        });
    };
    for (lo, hi) in brackets {
        push(
            golden_min(&f, lo, hi, opts.refine_tol.min(1e-10)),
            &mut found,
        );
    }
    // odd multiplicities also flip the determinant sign
    for i in 0..s - 1 {
        if dets[i] == 0.0 || dets[i].signum() != dets[i + 1].signum() {
            let (mut lo, mut hi) = (ts[i], ts[i + 1]);
            if found
                .iter()
                .any(|p| p.t >= lo - (hi - lo) && p.t <= hi + (hi - lo))
            {
                continue;
            }
            let d = |t: f64| scaled(basis, from, t).determinant();
            let dlo = d(lo);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                if d(mid).signum() == dlo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            push(0.5 * (lo + hi), &mut found);
        }
    }
    found.sort_by(|p, q| p.t.total_cmp(&q.t));
    found
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the bracket may have collapsed onto an end
    [a, mid, b]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap()
}

/// P-focal instants in `(0, τ]` with multiplicities.
pub fn focal_points(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    opts: ScanOptions,
) -> Vec<FocalPoint> {
    scan_degeneracies(basis, sys.k(), opts)
}

/// Instants in `(a, b]` conjugate to `a`.
pub fn conjugate_points(
    sys: &ReducedJacobiSystem,
    a: f64,
    b: f64,
    opts: ScanOptions,
) -> Result<Vec<FocalPoint>> {
    if !(0.0 <= a && a < b && b <= sys.tau() * (1.0 + 1e-14)) {
        return Err(Error::InvalidInput("conjugate scan interval".into()));
    }
    let n = sys.dim();
    let basis = sys.propagate(a, b, &DMatrix::zeros(n, n), &DMatrix::identity(n, n))?;
    Ok(scan_degeneracies(&basis, 0, opts))
}

/// Sum of multiplicities strictly before the end.
pub fn interior_multiplicity(points: &[FocalPoint]) -> usize {
    points
        .iter()
        .filter(|p| !p.at_end)
        .map(|p| p.multiplicity)
        .sum()
}

/// Nodes `0 = t₀ < t₁ < … < t_m = τ` with `(0, t₁]` free of P-focal
/// instants and no conjugate pair inside any `[t_i, t_{i+1}]`, `i ≥ 1`.
pub fn disconjugate_partition(
    sys: &ReducedJacobiSystem,
    focal: &[FocalPoint],
    opts: ScanOptions,
) -> Result<Vec<f64>> {
    let tau = sys.tau();
    let scan = ScanOptions {
        samples: opts.samples / 4,
        ..opts
    };
    let t1 = match focal.first() {
        Some(p) => 0.5 * p.t,
        None => tau,
    };
    let mut nodes = vec![0.0, t1];
    let mut pending = if t1 < tau { vec![(t1, tau)] } else { vec![] };
    while let Some((a, b)) = pending.pop() {
        if nodes.len() > MAX_NODES {
            return Err(Error::Partition(format!("more than {MAX_NODES} nodes")));
        }
        if !conjugate_points(sys, a, b, scan)?.is_empty() {
            let mid = 0.5 * (a + b);
            nodes.push(mid);
            pending.push((mid, b));
            pending.push((a, mid));
        }
    }
    nodes.push(tau);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    Ok(nodes)
}

/// Rows `t, σ_min, det` of the scaled P-Jacobi matrix.
pub fn scan_trace(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    samples: usize,
) -> Vec<[f64; 3]> {
    let tau = sys.tau();
    (1..=samples)
        .map(|i| {
            let t = tau * i as f64 / samples as f64;
            let m = scaled(basis, sys.k(), t);
            let sv = m.clone().singular_values();
            [t, sv.min(), m.determinant()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::geodesic_ivp;
    use crate::metric::MetricSpec;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sphere(tau: f64) -> ReducedJacobiSystem {
        let m = Arc::new(MetricSpec::unit_sphere_chart());
        let g = geodesic_ivp(
            &m,
            &[PI / 2.0, 0.0],
            &[0.0, 1.0],
            tau,
            Tolerances::default(),
        )
        .unwrap();
        ReducedJacobiSystem::reduce(&g, &Submanifold::point(&[PI / 2.0, 0.0])).unwrap()
    }

    fn circle(rho: f64, tau: f64) -> ReducedJacobiSystem {
        let m = Arc::new(MetricSpec::euclidean(2));
        let g = geodesic_ivp(&m, &[rho, 0.0], &[-1.0, 0.0], tau, Tolerances::default()).unwrap();
        ReducedJacobiSystem::reduce(&g, &Submanifold::planar_circle(2, &[0.0, 0.0], rho)).unwrap()
    }

    #[test]
    fn sphere_reduction_and_sine() {
        let s = sphere(4.0);
        let r = s.r_at(1.3);
        assert!((r[(0, 0)] - 1.0).abs() < 1e-9 && r[(1, 1)].abs() < 1e-9 && r[(0, 1)].abs() < 1e-9);
        let j = jacobi_ivp(&s, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        for t in [0.5, 2.0, 3.9] {
            assert!((j.value(t)[(0, 0)] - t.sin()).abs() < 1e-8);
        }
        let basis = p_jacobi_basis(&s).unwrap();
        let f = focal_points(&s, &basis, ScanOptions::default());
        assert_eq!(f.len(), 1);
        assert!((f[0].t - PI).abs() < 1e-6 && f[0].multiplicity == 1 && !f[0].uncertain);
        assert!(radial_column_residual(&s, &basis, 50) < 1e-9);
    }

    #[test]
    fn circle_basis_is_affine() {
        let s = circle(1.0, 1.5);
        assert!((s.q_form()[(0, 0)] - 1.0).abs() < 1e-12);
        let b = p_jacobi_basis(&s).unwrap();
        for t in [0.25, 1.0, 1.4] {
            assert!((b.value(t)[(0, 0)] - (1.0 - t)).abs() < 1e-10);
        }
        let f = focal_points(&s, &b, ScanOptions::default());
        assert_eq!(f.len(), 1);
        assert!((f[0].t - 1.0).abs() < 1e-6);
        let (drift, w0) = b.wronskian_drift(100);
        assert!(drift < 1e-8 && w0 < 1e-14);
        let nodes = disconjugate_partition(&s, &f, ScanOptions::default()).unwrap();
        assert!(nodes[1] < 1.0);
    }

    #[test]
    fn sphere_conjugate_points_and_partition() {
        let s = sphere(7.0);
        let c = conjugate_points(&s, 0.0, 7.0, ScanOptions::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].t - PI).abs() < 1e-6 && (c[1].t - 2.0 * PI).abs() < 1e-6);
        assert!(conjugate_points(&s, 1.0, 1.2, ScanOptions::default())
            .unwrap()
            .is_empty());
        let s4 = sphere(4.0);
        let f = focal_points(&s4, &p_jacobi_basis(&s4).unwrap(), ScanOptions::default());
        let nodes = disconjugate_partition(&s4, &f, ScanOptions::default()).unwrap();
        for w in nodes.windows(2).skip(1) {
            assert!(conjugate_points(&s4, w[0], w[1], ScanOptions::default())
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn euclidean_has_no_focal_points() {
        let m = Arc::new(MetricSpec::euclidean(3));
        let g = geodesic_ivp(&m, &[0.0; 3], &[1.0, 0.0, 0.0], 3.0, Tolerances::default()).unwrap();
        let s = ReducedJacobiSystem::reduce(&g, &Submanifold::point(&[0.0; 3])).unwrap();
        let b = p_jacobi_basis(&s).unwrap();
        assert!(focal_points(&s, &b, ScanOptions::default()).is_empty());
        let v = b.value(2.0);
        assert!((v.clone() - DMatrix::identity(3, 3) * 2.0).abs().max() < 1e-12);
        assert_eq!(
            disconjugate_partition(&s, &[], ScanOptions::default()).unwrap(),
            vec![0.0, 3.0]
        );
    }
}
