//! Endpoint submanifolds: tangent spaces, g_v-orthogonal splitting, shape
//! operator and the normal exponential map.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::connection::connection_data;
use crate::curves::{geodesic_ivp, jacobi_chart_fields};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jets::{Jet, Scalar};
use crate::metric::{reciprocal_condition, MetricSpec, TangentVector, RCOND_MIN};
use crate::ode::Tolerances;

/// Chart-distance tolerance for endpoint membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum Shape {
    Point(Vec<f64>),
    /// `p + u d`
    Line {
        origin: Vec<f64>,
        dir: Vec<f64>,
    },
    /// `c + r (cos θ a + sin θ b)` with `a, b` Euclidean-orthonormal.
    Circle {
        center: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        radius: f64,
    },
    /// Round hypersphere `|x − c| = r`.
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    /// `x_n = f(x1..x_{n−1})`
    Graph {
        f: Expr,
    },
    /// `ψ(u1..uk)` with a starting guess for locating points.
    Parametric {
        map: Vec<Expr>,
        guess: Vec<f64>,
    },
    /// `o + T u + ½ (uᵀ H u) ν`
    Quadric {
        origin: Vec<f64>,
        tangents: Vec<Vec<f64>>,
        normal: Vec<f64>,
        hessian: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub struct Submanifold {
    n: usize,
    shape: Shape,
}

/// Embedding data at one point: tangent basis `∂_a ψ` and second
/// derivatives `∂_a ∂_b ψ`.
#[derive(Debug, Clone)]
pub struct LocalEmbedding {
    pub point: Vec<f64>,
    pub tangents: DMatrix<f64>,
    pub second: Vec<DVector<f64>>,
}

impl LocalEmbedding {
    pub fn k(&self) -> usize {
        self.tangents.ncols()
    }

    pub fn second(&self, a: usize, b: usize) -> &DVector<f64> {
        &self.second[a * self.k() + b]
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
}

impl Submanifold {
    pub fn new(n: usize, shape: Shape) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        match &shape {
            Shape::Point(p) if p.len() != n => return bad("point dimension"),
            Shape::Line { origin, dir }
                if origin.len() != n || dir.len() != n || dir.iter().all(|d| *d == 0.0) =>
            {
                return bad("line data")
            }
            Shape::Circle {
                center,
                a,
                b,
                radius,
            } => {
                if center.len() != n || a.len() != n || b.len() != n || *radius <= 0.0 || n < 2 {
                    return bad("circle data");
                }
                let (a, b) = (DVector::from_column_slice(a), DVector::from_column_slice(b));
                if (a.norm() - 1.0).abs() > 1e-12
                    || (b.norm() - 1.0).abs() > 1e-12
                    || a.dot(&b).abs() > 1e-12
                {
                    return bad("circle axes must be orthonormal");
                }
            }
            Shape::Sphere { center, radius } if center.len() != n || *radius <= 0.0 => {
                return bad("sphere data")
            }
            Shape::Parametric { map, guess } if map.len() != n || guess.len() >= n => {
                return bad("parametric data")
            }
            Shape::Quadric {
                origin,
                tangents,
                normal,
                hessian,
            } => {
                let k = tangents.len();
                if origin.len() != n
                    || normal.len() != n
                    || k >= n
                    || tangents.iter().any(|t| t.len() != n)
                    || hessian.len() != k
                    || hessian.iter().any(|r| r.len() != k)
                {
                    return bad("quadric data");
                }
            }
            _ => {}
        }
        Ok(Submanifold { n, shape })
    }

    pub fn point(p: &[f64]) -> Self {
        Submanifold {
            n: p.len(),
            shape: Shape::Point(p.to_vec()),
        }
    }

    /// Circle in the plane of the first two coordinates.
    pub fn planar_circle(n: usize, center: &[f64], radius: f64) -> Self {
        let a = unit(n, 0).as_slice().to_vec();
        let b = unit(n, 1).as_slice().to_vec();
        Submanifold::new(
            n,
            Shape::Circle {
                center: center.to_vec(),
                a,
                b,
                radius,
            },
        )
        .unwrap()
    }

    pub fn sphere(center: &[f64], radius: f64) -> Self {
        Submanifold {
            n: center.len(),
            shape: Shape::Sphere {
                center: center.to_vec(),
                radius,
            },
        }
    }

    pub fn line(origin: &[f64], dir: &[f64]) -> Self {
        Submanifold {
            n: origin.len(),
            shape: Shape::Line {
                origin: origin.to_vec(),
                dir: dir.to_vec(),
            },
        }
    }

    /// Graph `x_n = f(x1..x_{n−1})`.
    pub fn graph(n: usize, f: &str) -> Result<Self> {
        let names: Vec<String> = (1..n).map(|i| format!("x{i}")).collect();
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        Ok(Submanifold {
            n,
            shape: Shape::Graph {
                f: Expr::parse(f, &vars)?,
            },
        })
    }

    /// Parametric embedding with components in `u1..uk`.
    pub fn parametric(map: &[&str], guess: &[f64]) -> Result<Self> {
        let names: Vec<String> = (1..=guess.len()).map(|i| format!("u{i}")).collect();
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let map = map
            .iter()
            .map(|s| Expr::parse(s, &vars))
            .collect::<Result<Vec<_>>>()?;
        Submanifold::new(
            map.len(),
            Shape::Parametric {
                map,
                guess: guess.to_vec(),
            },
        )
    }

    /// Quadric patch `o + T u + ½ (uᵀ H u) ν` (tangents given as rows).
    pub fn quadric(
        origin: &[f64],
        tangents: &[Vec<f64>],
        normal: &[f64],
        hessian: &[Vec<f64>],
    ) -> Result<Self> {
        Submanifold::new(
            origin.len(),
            Shape::Quadric {
                origin: origin.to_vec(),
                tangents: tangents.to_vec(),
                normal: normal.to_vec(),
                hessian: hessian.to_vec(),
            },
        )
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Point(_) => 0,
            Shape::Line { .. } | Shape::Circle { .. } => 1,
            Shape::Sphere { .. } | Shape::Graph { .. } => self.n - 1,
            Shape::Parametric { guess, .. } => guess.len(),
            Shape::Quadric { tangents, .. } => tangents.len(),
        }
    }

    /// Point on a circle at angle θ.
    pub fn circle_point(&self, theta: f64) -> Option<Vec<f64>> {
        match &self.shape {
            Shape::Circle {
                center,
                a,
                b,
                radius,
            } => Some(
                (0..self.n)
                    .map(|i| center[i] + radius * (theta.cos() * a[i] + theta.sin() * b[i]))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Chart distance from `x` to the submanifold (exact for the closed-form
    /// shapes, a Gauss-Newton residual for parametric ones).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self.locate(x) {
            Ok((_, d)) => d,
            Err(_) => f64::INFINITY,
        }
    }

    pub fn tangent_basis(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.local(x)?.tangents)
    }

    fn locate(&self, x: &[f64]) -> Result<(LocalEmbedding, f64)> {
        let n = self.n;
        let xv = DVector::from_column_slice(x);
        match &self.shape {
            Shape::Point(p) => {
                let d = (&xv - DVector::from_column_slice(p)).norm();
                Ok((
                    LocalEmbedding {
                        point: p.clone(),
                        tangents: DMatrix::zeros(n, 0),
                        second: vec![],
                    },
                    d,
                ))
            }
            Shape::Line { origin, dir } => {
                let (o, d) = (
                    DVector::from_column_slice(origin),
                    DVector::from_column_slice(dir),
                );
                let u = (&xv - &o).dot(&d) / d.norm_squared();
                let p = &o + &d * u;
                let dist = (&xv - &p).norm();
                Ok((
                    LocalEmbedding {
                        point: p.as_slice().to_vec(),
                        tangents: DMatrix::from_column_slice(n, 1, d.as_slice()),
                        second: vec![DVector::zeros(n)],
                    },
                    dist,
                ))
            }
            Shape::Circle {
                center,
                a,
                b,
                radius,
            } => {
                let c = DVector::from_column_slice(center);
                let (av, bv) = (DVector::from_column_slice(a), DVector::from_column_slice(b));
                let rel = &xv - &c;
                let th = rel.dot(&bv).atan2(rel.dot(&av));
                let (s, co) = th.sin_cos();
                let p = &c + (&av * co + &bv * s) * *radius;
                let dist = (&xv - &p).norm();
                let t = (&bv * co - &av * s) * *radius;
                let second = -(&av * co + &bv * s) * *radius;
                Ok((
                    LocalEmbedding {
                        point: p.as_slice().to_vec(),
                        tangents: DMatrix::from_column_slice(n, 1, t.as_slice()),
                        second: vec![second],
                    },
                    dist,
                ))
            }
            Shape::Sphere { center, radius } => {
                let c = DVector::from_column_slice(center);
                let rel = &xv - &c;
                if rel.norm() == 0.0 {
                    return Err(Error::NotOnSubmanifold { distance: *radius });
                }
                let nh = &rel / rel.norm();
                let dist = (rel.norm() - radius).abs();
                let p = &c + &nh * *radius;
                // local graph chart: c + Σ u_a a_a + sqrt(r² − |u|²) n̂
                let mut basis: Vec<DVector<f64>> = Vec::new();
                while basis.len() < n - 1 {
                    let best = (0..n)
                        .map(|i| {
                            let mut r = unit(n, i);
                            for b in basis.iter().chain(std::iter::once(&nh)) {
                                r -= b * b.dot(&r);
                            }
                            r
                        })
                        .max_by(|p, q| p.norm().total_cmp(&q.norm()))
                        .unwrap();
                    let nb = best.norm();
                    basis.push(best / nb);
                }
                let k = n - 1;
                let mut second = Vec::with_capacity(k * k);
                for a in 0..k {
                    for b in 0..k {
                        second.push(if a == b {
                            -&nh / *radius
                        } else {
                            DVector::zeros(n)
                        });
                    }
                }
                Ok((
                    LocalEmbedding {
                        point: p.as_slice().to_vec(),
                        tangents: DMatrix::from_columns(&basis),
                        second,
                    },
                    dist,
                ))
            }
            Shape::Graph { f } => {
                let u = &x[..n - 1];
                let emb = jet_embedding(n, u, |us| {
                    let mut out: Vec<Jet<f64, 4>> = us.to_vec();
                    out.push(f.eval(us)?);
                    Ok(out)
                })?;
                let dist = (xv - DVector::from_column_slice(&emb.point)).norm();
                Ok((emb, dist))
            }
            Shape::Parametric { map, guess } => {
                let eval_map =
                    |us: &[Jet<f64, 4>]| map.iter().map(|e| e.eval(us)).collect::<Result<Vec<_>>>();
                let (emb, dist, _) = gauss_newton_locate(n, x, guess, eval_map)?;
                Ok((emb, dist))
            }
            Shape::Quadric { .. } => {
                let k = self.dim();
                let (emb, dist, _) =
                    gauss_newton_locate(n, x, &vec![0.0; k], |us| Ok(self.quadric_map(us)))?;
                Ok((emb, dist))
            }
        }
    }

    fn quadric_map<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let Shape::Quadric {
            origin,
            tangents,
            normal,
            hessian,
        } = &self.shape
        else {
            unreachable!()
        };
        let k = tangents.len();
        let mut q = S::zero();
        for a in 0..k {
            for b in 0..k {
                q += u[a] * u[b] * S::from_f64(0.5 * hessian[a][b]);
            }
        }
        (0..self.n)
            .map(|i| {
                let mut v = S::from_f64(origin[i]) + q * S::from_f64(normal[i]);
                for a in 0..k {
                    v += u[a] * S::from_f64(tangents[a][i]);
                }
                v
            })
            .collect()
    }

    /// Point with chart parameters displaced by `du` from those of `x`.
    pub fn chart_point(&self, x: &[f64], du: &[f64]) -> Result<Vec<f64>> {
        let emb = self.local(x)?;
        let n = self.n;
        if du.len() != emb.k() {
            return Err(Error::InvalidInput(
                "displacement has wrong dimension".into(),
            ));
        }
        let shifted = |u: &[f64]| -> Vec<f64> { u.iter().zip(du).map(|(a, b)| a + b).collect() };
        match &self.shape {
            Shape::Point(p) => Ok(p.clone()),
            Shape::Line { dir, .. } => Ok((0..n).map(|i| emb.point[i] + du[0] * dir[i]).collect()),
            Shape::Circle { center, a, b, .. } => {
                let rel: Vec<f64> = (0..n).map(|i| emb.point[i] - center[i]).collect();
                let dot = |w: &[f64]| rel.iter().zip(w).map(|(p, q)| p * q).sum::<f64>();
                Ok(self.circle_point(dot(b).atan2(dot(a)) + du[0]).unwrap())
            }
            Shape::Sphere { center, radius } => {
                let r2: f64 = du.iter().map(|d| d * d).sum();
                if r2 >= radius * radius {
                    return Err(Error::InvalidInput("displacement leaves the chart".into()));
                }
                let h = (radius * radius - r2).sqrt();
                let t = &emb.tangents;
                Ok((0..n)
                    .map(|i| {
                        let nh = (emb.point[i] - center[i]) / radius;
                        center[i] + (0..du.len()).map(|a| du[a] * t[(i, a)]).sum::<f64>() + h * nh
                    })
                    .collect())
            }
            Shape::Graph { f } => {
                let mut u = shifted(&x[..n - 1]);
                let last = f.eval(&u)?;
                u.push(last);
                Ok(u)
            }
            Shape::Parametric { map, guess } => {
                let eval_map =
                    |us: &[Jet<f64, 4>]| map.iter().map(|e| e.eval(us)).collect::<Result<Vec<_>>>();
                let (_, _, u) = gauss_newton_locate(n, x, guess, eval_map)?;
                let u = shifted(&u);
                map.iter().map(|e| e.eval(&u)).collect()
            }
            Shape::Quadric { .. } => {
                let k = self.dim();
                let (_, _, u) =
                    gauss_newton_locate(n, x, &vec![0.0; k], |us| Ok(self.quadric_map(us)))?;
                Ok(self.quadric_map(&shifted(&u)))
            }
        }
    }

    /// Embedding data at a point of the submanifold.
    pub fn local(&self, x: &[f64]) -> Result<LocalEmbedding> {
        if x.len() != self.n {
            return Err(Error::InvalidInput("point has wrong dimension".into()));
        }
        let (emb, dist) = self.locate(x)?;
        if !(dist <= MEMBERSHIP_TOL) {
            return Err(Error::NotOnSubmanifold { distance: dist });
        }
        let k = emb.k();
        if k > 0 {
            let sv = emb.tangents.clone().singular_values();
            if sv.min() <= 1e-12 * sv.max().max(1e-300) {
                return Err(Error::RankDeficient);
            }
        }
        Ok(emb)
    }
}

fn gauss_newton_locate<F>(
    n: usize,
    x: &[f64],
    guess: &[f64],
    map: F,
) -> Result<(LocalEmbedding, f64, Vec<f64>)>
where
    F: Fn(&[Jet<f64, 4>]) -> Result<Vec<Jet<f64, 4>>>,
{
    let xv = DVector::from_column_slice(x);
    let mut u = DVector::from_column_slice(guess);
    let mut emb = jet_embedding(n, u.as_slice(), &map)?;
    for _ in 0..100 {
        let r = &xv - DVector::from_column_slice(&emb.point);
        let jt = &emb.tangents;
        let step = (jt.transpose() * jt)
            .lu()
            .solve(&(jt.transpose() * &r))
            .ok_or(Error::RankDeficient)?;
        u += &step;
        emb = jet_embedding(n, u.as_slice(), &map)?;
        if step.norm() < 1e-14 {
            break;
        }
    }
    let dist = (xv - DVector::from_column_slice(&emb.point)).norm();
    Ok((emb, dist, u.as_slice().to_vec()))
}

fn jet_embedding<F>(n: usize, u: &[f64], map: F) -> Result<LocalEmbedding>
where
    F: Fn(&[Jet<f64, 4>]) -> Result<Vec<Jet<f64, 4>>>,
{
    let k = u.len();
    let mut tangents = DMatrix::zeros(n, k);
    let mut second = vec![DVector::zeros(n); k * k];
    let mut point = vec![0.0; n];
    if k == 0 {
        let us: Vec<Jet<f64, 4>> = Vec::new();
        let out = map(&us)?;
        point = out.iter().map(|j| j.c[0]).collect();
    }
    for a in 0..k {
        for b in a..k {
            let us: Vec<Jet<f64, 4>> = (0..k)
                .map(|i| {
                    let mask = if i == a { 0b01 } else { 0 } | if i == b { 0b10 } else { 0 };
                    Jet::seeded(u[i], mask)
                })
                .collect();
            let out = map(&us)?;
            for i in 0..n {
                point[i] = out[i].c[0];
                tangents[(i, a)] = out[i].c[1];
                tangents[(i, b)] = out[i].c[2];
                second[a * k + b][i] = out[i].c[3];
                second[b * k + a][i] = out[i].c[3];
            }
        }
    }
    Ok(LocalEmbedding {
        point,
        tangents,
        second,
    })
}

/// `T_pM = T_pP ⊕ (T_pP)^⊥_v` with projection matrices.
#[derive(Debug, Clone)]
pub struct OrthogonalSplitting {
    pub base: TangentVector,
    pub tangents: DMatrix<f64>,
    pub complement: DMatrix<f64>,
    pub tan_p: DMatrix<f64>,
    pub nor_p: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl OrthogonalSplitting {
    pub fn from_tangents(
        g: &DMatrix<f64>,
        base: &TangentVector,
        tangents: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = g.nrows();
        let k = tangents.ncols();
        let tan_p = if k == 0 {
            DMatrix::zeros(n, n)
        } else {
            let gram = tangents.transpose() * g * tangents;
            if reciprocal_condition(&gram) < RCOND_MIN {
                return Err(Error::DegenerateSplitting);
            }
            let gi = gram.try_inverse().ok_or(Error::DegenerateSplitting)?;
            tangents * gi * tangents.transpose() * g
        };
        let nor_p = DMatrix::identity(n, n) - &tan_p;
        let svd = nor_p.clone().svd(true, false);
        let u = svd.u.unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let cols: Vec<DVector<f64>> = order[..n - k]
            .iter()
            .map(|&i| u.column(i).into_owned())
            .collect();
        let complement = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Ok(OrthogonalSplitting {
            base: base.clone(),
            tangents: tangents.clone(),
            complement,
            tan_p,
            nor_p,
            g: g.clone(),
        })
    }

    /// `max |g_v(nor u, t_a)|` over a set of test vectors.
    pub fn residual(&self, us: &[DVector<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for u in us {
            let nu = &self.nor_p * u;
            for t in self.tangents.column_iter() {
                worst = worst.max(nu.dot(&(&self.g * t)).abs());
            }
        }
        worst
    }
}

pub fn splitting(
    m: &MetricSpec,
    p: &Submanifold,
    v: &TangentVector,
) -> Result<OrthogonalSplitting> {
    let emb = p.local(&v.x)?;
    let g = m.fundamental_tensor(v)?.g;
    OrthogonalSplitting::from_tangents(&g, v, &emb.tangents)
}

/// `max_a |g_v(t_a, v)| / (|t_a|_v |v|_v)`; for a lightlike v the
/// unnormalized value is returned.
pub fn normality_residual(g: &DMatrix<f64>, v: &[f64], tangents: &DMatrix<f64>) -> f64 {
    let vv = DVector::from_column_slice(v);
    let lv = vv.dot(&(g * &vv)).abs().sqrt();
    let mut worst: f64 = 0.0;
    for t in tangents.column_iter() {
        let t = t.into_owned();
        let lt = t.dot(&(g * &t)).abs().sqrt();
        let s = if lv > 0.0 && lt > 0.0 { lv * lt } else { 1.0 };
        worst = worst.max(t.dot(&(g * &vv)).abs() / s);
    }
    worst
}

/// Perpendicularity residuals of a geodesic at both ends.
pub fn orthogonality_check(
    m: &MetricSpec,
    p: &Submanifold,
    q: Option<&Submanifold>,
    start: &TangentVector,
    end: &TangentVector,
) -> Result<(f64, f64)> {
    let r0 = {
        let emb = p.local(&start.x)?;
        normality_residual(&m.fundamental_tensor(start)?.g, &start.y, &emb.tangents)
    };
    let r1 = match q {
        Some(q) => {
            let emb = q.local(&end.x)?;
            normality_residual(&m.fundamental_tensor(end)?.g, &end.y, &emb.tangents)
        }
        None => 0.0,
    };
    Ok((r0, r1))
}

/// Shape operator data at `v ∈ (T_pP)^⊥_v`.
#[derive(Debug, Clone)]
pub struct ShapeOperator {
    pub splitting: OrthogonalSplitting,
    /// `S^P_v(t_a, t_b)` at `a k + b`.
    pub second_fundamental: Vec<DVector<f64>>,
    /// `B_ab = g_v(S̃ t_a, t_b)`.
    pub bilinear: DMatrix<f64>,
    /// Gram matrix `g_v(t_a, t_b)`.
    pub gram: DMatrix<f64>,
    /// S̃ in the tangent basis: column `a` holds the coefficients of `S̃ t_a`.
    pub matrix: DMatrix<f64>,
}

impl ShapeOperator {
    pub fn k(&self) -> usize {
        self.gram.nrows()
    }

    /// Max of `|g_v(S^P(t_a,t_b), v) + g_v(S̃ t_a, t_b)|`.
    pub fn duality_residual(&self) -> f64 {
        let k = self.k();
        let v = DVector::from_column_slice(&self.splitting.base.y);
        let g = &self.splitting.g;
        let t = &self.splitting.tangents;
        let mut worst: f64 = 0.0;
        for a in 0..k {
            let st = t * self.matrix.column(a);
            for b in 0..k {
                let lhs = self.second_fundamental[a * k + b].dot(&(g * &v));
                let rhs = st.dot(&(g * t.column(b)));
                worst = worst.max((lhs + rhs).abs());
            }
        }
        worst
    }

    /// Max of `|g(S̃t_a, t_b) − g(t_a, S̃t_b)|`.
    pub fn self_adjoint_residual(&self) -> f64 {
        let m = &self.gram * &self.matrix;
        (&m - m.transpose()).abs().max()
    }

    /// Principal values of `S̃` (eigenvalues of the matrix).
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.k() == 0 {
            return Vec::new();
        }
        // G^{-1/2} B G^{-1/2} is symmetric with the same spectrum
        let e = self.gram.clone().symmetric_eigen();
        let ih = &e.eigenvectors
            * DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * e.eigenvectors.transpose();
        let s = &ih * &self.bilinear * &ih;
        let mut v: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

pub fn shape_operator(m: &MetricSpec, p: &Submanifold, v: &TangentVector) -> Result<ShapeOperator> {
    let emb = p.local(&v.x)?;
    let conn = connection_data(m, v)?;
    let g = conn.g.clone();
    let k = emb.k();
    let r = normality_residual(&g, &v.y, &emb.tangents);
    if r > 1e-8 {
        return Err(Error::NotPerpendicular { residual: r });
    }
    let split = OrthogonalSplitting::from_tangents(&g, v, &emb.tangents)?;
    let vv = DVector::from_column_slice(&v.y);
    let gv = &g * &vv;
    let mut sf = Vec::with_capacity(k * k);
    let mut bilinear = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let ta: Vec<f64> = emb.tangents.column(a).iter().copied().collect();
            let tb: Vec<f64> = emb.tangents.column(b).iter().copied().collect();
            let w = emb.second(a, b) + conn.chern_apply(&ta, &tb);
            let s = &split.nor_p * w;
            bilinear[(a, b)] = -s.dot(&gv);
            sf.push(s);
        }
    }
    let gram = emb.tangents.transpose() * &g * &emb.tangents;
    let matrix = if k == 0 {
        DMatrix::zeros(0, 0)
    } else {
        gram.clone()
            .lu()
            .solve(&bilinear)
            .ok_or(Error::DegenerateSplitting)?
    };
    Ok(ShapeOperator {
        splitting: split,
        second_fundamental: sf,
        bilinear,
        gram,
        matrix,
    })
}

/// Adjust the tangential part of `y` so that `g_y(y, T_pP) = 0`.
pub fn normal_lift(m: &MetricSpec, p: &Submanifold, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let emb = p.local(x)?;
    let k = emb.k();
    let mut v = DVector::from_column_slice(y);
    if k == 0 {
        return Ok(y.to_vec());
    }
    let t = &emb.tangents;
    for it in 0..60 {
        let tv = TangentVector::new(x, v.as_slice());
        let g = m.fundamental_tensor(&tv)?.g;
        let f = t.transpose() * (&g * &v);
        if f.norm() <= 1e-15 * (1.0 + v.norm()) {
            return Ok(v.as_slice().to_vec());
        }
        let jac = t.transpose() * &g * t;
        let step = jac.lu().solve(&f).ok_or(Error::DegenerateSplitting)?;
        v -= t * step;
        if it == 59 {
            return Err(Error::NoConvergence {
                iterations: 60,
                residual: f.norm(),
            });
        }
    }
    Ok(v.as_slice().to_vec())
}

/// `exp^{LN}(v) = γ_v(1)` for `v` normal to `P`.
pub fn normal_exp(
    m: &Arc<MetricSpec>,
    p: &Submanifold,
    v: &TangentVector,
    tol: Tolerances,
) -> Result<Vec<f64>> {
    let emb = p.local(&v.x)?;
    let g = m.fundamental_tensor(v)?.g;
    let r = normality_residual(&g, &v.y, &emb.tangents);
    if r > 1e-8 {
        return Err(Error::NotPerpendicular { residual: r });
    }
    Ok(geodesic_ivp(m, &v.x, &v.y, 1.0, tol)?.position(1.0))
}

/// A basis of the tangent space of the normal cone bundle at `v`, as
/// `(δx, δy)` pairs: `k` base directions followed by `n − k` fiber ones.
pub fn normal_bundle_basis(
    m: &MetricSpec,
    p: &Submanifold,
    v: &TangentVector,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = m.dim;
    let emb = p.local(&v.x)?;
    let k = emb.k();
    let ft = m.fundamental_tensor(v)?;
    let dg = m.dg_dx(v)?;
    let split = OrthogonalSplitting::from_tangents(&ft.g, v, &emb.tangents)?;
    let t = &emb.tangents;
    let gram = t.transpose() * &ft.g * t;
    let vv = DVector::from_column_slice(&v.y);
    let mut out = Vec::with_capacity(n);
    for a in 0..k {
        let dx = t.column(a).into_owned();
        // linearized constraint g(δy, t_c) = −(∂_δx g)(v, t_c) − g(v, ∂_c∂_a ψ)
        let rhs = DVector::from_fn(k, |c, _| {
            let mut acc = 0.0;
            for mm in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        acc += dg.get(mm, i, j) * dx[mm] * vv[j] * t[(i, c)];
                    }
                }
            }
            acc + emb.second(c, a).dot(&(&ft.g * &vv))
        });
        let beta = gram
            .clone()
            .lu()
            .solve(&(-rhs))
            .ok_or(Error::DegenerateSplitting)?;
        let dy = t * beta;
        out.push((dx.as_slice().to_vec(), dy.as_slice().to_vec()));
    }
    for c in split.complement.column_iter() {
        out.push((vec![0.0; n], c.iter().copied().collect()));
    }
    Ok(out)
}

/// `D exp^{LN}(v)[(δx, δy)] = J(1)` for the P-Jacobi field with `J(0) = δx`
/// and `DJ(0) = δy + Γ(v)(v, δx)`; one output per direction.
pub fn normal_exp_differential(
    m: &Arc<MetricSpec>,
    p: &Submanifold,
    v: &TangentVector,
    dirs: &[(Vec<f64>, Vec<f64>)],
    tol: Tolerances,
) -> Result<Vec<Vec<f64>>> {
    let n = m.dim;
    let emb = p.local(&v.x)?;
    let conn = connection_data(m, v)?;
    let r = normality_residual(&conn.g, &v.y, &emb.tangents);
    if r > 1e-8 {
        return Err(Error::NotPerpendicular { residual: r });
    }
    let inits: Vec<(Vec<f64>, Vec<f64>)> = dirs
        .iter()
        .map(|(dx, dy)| {
            let gam = conn.chern_apply(&v.y, dx);
            (
                dx.clone(),
                dy.iter().zip(gam.iter()).map(|(a, b)| a + b).collect(),
            )
        })
        .collect();
    let sol = jacobi_chart_fields(m, &v.x, &v.y, 1.0, &inits, tol)?;
    let end = sol.end_state();
    Ok((0..dirs.len())
        .map(|f| end[2 * n + 2 * n * f..3 * n + 2 * n * f].to_vec())
        .collect())
}

/// Matrix of `D exp^{LN}(v)` on [`normal_bundle_basis`].
pub fn normal_exp_jacobian(
    m: &Arc<MetricSpec>,
    p: &Submanifold,
    v: &TangentVector,
    tol: Tolerances,
) -> Result<DMatrix<f64>> {
    let basis = normal_bundle_basis(m, p, v)?;
    let cols = normal_exp_differential(m, p, v, &basis, tol)?;
    let n = m.dim;
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

/// `σ_min / σ_max` of `D exp^{LN}` at `λ v`.
pub fn normal_exp_sigma_ratio(
    m: &Arc<MetricSpec>,
    p: &Submanifold,
    v: &TangentVector,
    lambda: f64,
    tol: Tolerances,
) -> Result<f64> {
    let d = normal_exp_jacobian(m, p, &v.scaled(lambda), tol)?;
    let sv = d.singular_values();
    Ok(sv.min() / sv.max())
}

/// Scale `λ ∈ [lo, hi]` minimizing the rank ratio of `D exp^{LN}(λ v)`,
/// by golden section; returns `(λ, ratio)`.
pub fn normal_exp_rank_drop(
    m: &Arc<MetricSpec>,
    p: &Submanifold,
    v: &TangentVector,
    lo: f64,
    hi: f64,
    tol: Tolerances,
) -> Result<(f64, f64)> {
    let f = |l: f64| normal_exp_sigma_ratio(m, p, v, l, tol);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, f(mid)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_bases() {
        let c = Submanifold::planar_circle(2, &[0.0, 0.0], 1.0);
        let t = c.tangent_basis(&c.circle_point(0.0).unwrap()).unwrap();
        assert!(t[(0, 0)].abs() < 1e-15 && (t[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(
            Submanifold::point(&[1.0, 2.0])
                .tangent_basis(&[1.0, 2.0])
                .unwrap()
                .ncols(),
            0
        );
        let s = Submanifold::sphere(&[0.0, 0.0, 0.0], 2.0);
        let t = s.tangent_basis(&[0.0, 0.0, 2.0]).unwrap();
        assert_eq!(t.ncols(), 2);
        for col in t.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-15 && col[2].abs() < 1e-15);
        }
        assert!(matches!(
            s.tangent_basis(&[0.0, 0.0, 2.1]),
            Err(Error::NotOnSubmanifold { .. })
        ));
    }

    #[test]
    fn circle_shape_operator() {
        let m = MetricSpec::euclidean(2);
        for rho in [0.5, 1.0, 3.0] {
            let c = Submanifold::planar_circle(2, &[0.0, 0.0], rho);
            let v = TangentVector::new(&[rho, 0.0], &[-1.0, 0.0]);
            let s = shape_operator(&m, &c, &v).unwrap();
            assert!((s.matrix[(0, 0)] + 1.0 / rho).abs() < 1e-14);
            assert!(s.duality_residual() < 1e-12);
        }
    }

    #[test]
    fn line_and_sphere_shape_operators() {
        let m = MetricSpec::euclidean(2);
        let l = Submanifold::line(&[0.0, 0.0], &[1.0, 0.0]);
        let s = shape_operator(&m, &l, &TangentVector::new(&[0.3, 0.0], &[0.0, 2.0])).unwrap();
        assert_eq!(s.matrix[(0, 0)], 0.0);
        let m3 = MetricSpec::euclidean(3);
        let sp = Submanifold::sphere(&[0.0; 3], 2.0);
        let s = shape_operator(
            &m3,
            &sp,
            &TangentVector::new(&[0.0, 0.0, 2.0], &[0.0, 0.0, -1.0]),
        )
        .unwrap();
        for e in s.eigenvalues() {
            assert!((e + 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn point_shape_is_empty() {
        let m = MetricSpec::euclidean(2);
        let s = shape_operator(
            &m,
            &Submanifold::point(&[0.0, 0.0]),
            &TangentVector::new(&[0.0, 0.0], &[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(s.k(), 0);
        assert!(s.eigenvalues().is_empty());
    }

    #[test]
    fn circle_splitting() {
        let m = MetricSpec::euclidean(2);
        let c = Submanifold::planar_circle(2, &[0.0, 0.0], 1.0);
        let v = TangentVector::new(&[1.0, 0.0], &[-1.0, 0.0]);
        let sp = splitting(&m, &c, &v).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!((&sp.tan_p - expect).abs().max() < 1e-15);
        assert!((&sp.tan_p * DVector::from_column_slice(&v.y)).norm() < 1e-15);
    }

    #[test]
    fn normal_exp_circle() {
        let m = Arc::new(MetricSpec::euclidean(2));
        let c = Submanifold::planar_circle(2, &[0.0, 0.0], 1.0);
        let v = TangentVector::new(&[0.6, 0.8], &[-0.3, -0.4]);
        let q = normal_exp(&m, &c, &v, Tolerances::default()).unwrap();
        assert!((q[0] - 0.3).abs() < 1e-12 && (q[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn quadric_and_chart_points() {
        let q = Submanifold::quadric(&[1.0, 2.0], &[vec![0.0, 1.0]], &[1.0, 0.0], &[vec![-2.0]])
            .unwrap();
        let e = q.local(&[1.0, 2.0]).unwrap();
        assert_eq!(e.second(0, 0).as_slice(), &[-2.0, 0.0]);
        let x = q.chart_point(&[1.0, 2.0], &[0.5]).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-12 && (x[1] - 2.5).abs() < 1e-12);
        assert!(q.distance(&x) < 1e-12);
        let c = Submanifold::planar_circle(2, &[0.0, 0.0], 2.0);
        let y = c.chart_point(&[2.0, 0.0], &[0.5]).unwrap();
        assert!((y[0] - 2.0 * 0.5f64.cos()).abs() < 1e-14);
        let s = Submanifold::sphere(&[0.0; 3], 1.0);
        let z = s.chart_point(&[0.0, 0.0, 1.0], &[0.3, 0.4]).unwrap();
        assert!(s.distance(&z) < 1e-14);
        assert!((z[2] - 0.75f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn parametric_and_graph_locate() {
        let p = Submanifold::parametric(&["cos(u1)", "sin(u1)"], &[0.2]).unwrap();
        let t = p.tangent_basis(&[0.0, 1.0]).unwrap();
        assert!((t[(0, 0)] + 1.0).abs() < 1e-12 && t[(1, 0)].abs() < 1e-12);
        let g = Submanifold::graph(2, "x1^2").unwrap();
        let e = g.local(&[0.5, 0.25]).unwrap();
        assert_eq!(e.tangents.column(0).as_slice(), &[1.0, 1.0]);
        assert_eq!(e.second(0, 0).as_slice(), &[0.0, 2.0]);
    }
}
