//! Formal Christoffel symbols, nonlinear connection, Chern connection
//! coefficients and hh-curvature at a tangent vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jets::{Jet, Scalar};
use crate::metric::{reciprocal_condition, MetricSpec, TangentVector, Tensor3, RCOND_MIN};

/// Full coefficient set at one tangent vector, generic over the scalar so the
/// whole pipeline can be lifted into jets.
#[derive(Debug, Clone)]
pub(crate) struct Coefficients<S> {
    pub n: usize,
    pub g: Vec<S>,
    pub g_inv: Vec<S>,
    /// γ^i_jm at (i, j, m)
    pub gamma: Vec<S>,
    /// C^i_jm at (i, j, m)
    pub cartan_up: Vec<S>,
    /// N^i_j at (i, j)
    pub nonlinear: Vec<S>,
    /// Γ^i_jk at (i, j, k)
    pub chern: Vec<S>,
}

/// Gauss-Jordan inverse with partial pivoting on the real part.
pub(crate) fn invert<S: Scalar>(a: &[S], n: usize) -> Result<Vec<S>> {
    let mut m = a.to_vec();
    let mut inv = vec![S::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = S::one();
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| {
                m[p * n + col]
                    .re()
                    .abs()
                    .total_cmp(&m[q * n + col].re().abs())
            })
            .unwrap();
        if m[piv * n + col].re() == 0.0 {
            return Err(Error::Degenerate { rcond: 0.0 });
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let r = m[col * n + col].try_recip()?;
        for k in 0..n {
            m[col * n + k] *= r;
            inv[col * n + k] *= r;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            for k in 0..n {
                let mk = m[col * n + k];
                let ik = inv[col * n + k];
                m[row * n + k] -= f * mk;
                inv[row * n + k] -= f * ik;
            }
        }
    }
    Ok(inv)
}

pub(crate) fn coefficients<S: Scalar>(
    m: &MetricSpec,
    x: &[S],
    y: &[S],
    with_chern: bool,
) -> Result<Coefficients<S>> {
    let n = m.dim;
    let d = m.derivatives(x, y, true, with_chern && !m.is_riemannian())?;
    let gre = DMatrix::from_fn(n, n, |i, j| d.g[i * n + j].re());
    let rcond = reciprocal_condition(&gre);
    if !(rcond >= RCOND_MIN) {
        return Err(Error::Degenerate { rcond });
    }
    let g_inv = invert(&d.g, n)?;
    let dg = |mm: usize, i: usize, j: usize| d.dg[(mm * n + i) * n + j];

    // lowered Christoffel [s; j m] = ½(∂_m g_sj + ∂_j g_ms − ∂_s g_jm)
    let mut low = vec![S::zero(); n * n * n];
    for s in 0..n {
        for j in 0..n {
            for mm in j..n {
                let v = (dg(mm, s, j) + dg(j, mm, s) - dg(s, j, mm)).scale(0.5);
                low[(s * n + j) * n + mm] = v;
                low[(s * n + mm) * n + j] = v;
            }
        }
    }
    let mut gamma = vec![S::zero(); n * n * n];
    for i in 0..n {
        for jm in 0..n * n {
            let mut acc = S::zero();
            for s in 0..n {
                acc += g_inv[i * n + s] * low[s * n * n + jm];
            }
            gamma[i * n * n + jm] = acc;
        }
    }

    let cartan_zero = d.cartan.is_empty();
    let mut cartan_up = vec![S::zero(); n * n * n];
    if !cartan_zero {
        for i in 0..n {
            for jm in 0..n * n {
                let mut acc = S::zero();
                for l in 0..n {
                    acc += g_inv[i * n + l] * d.cartan[l * n * n + jm];
                }
                cartan_up[i * n * n + jm] = acc;
            }
        }
    }

    // γ^m(v, v)
    let mut gvv = vec![S::zero(); n];
    for (mm, slot) in gvv.iter_mut().enumerate() {
        let mut acc = S::zero();
        for r in 0..n {
            for s in 0..n {
                acc += gamma[(mm * n + r) * n + s] * y[r] * y[s];
            }
        }
        *slot = acc;
    }
    let mut nonlinear = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = S::zero();
            for mm in 0..n {
                acc += gamma[(i * n + j) * n + mm] * y[mm];
                if !cartan_zero {
                    acc -= cartan_up[(i * n + j) * n + mm] * gvv[mm];
                }
            }
            nonlinear[i * n + j] = acc;
        }
    }

    let mut chern = gamma.clone();
    if with_chern && !cartan_zero {
        let c = |a: usize, b: usize, e: usize| d.cartan[(a * n + b) * n + e];
        let nl = |r: usize, k: usize| nonlinear[r * n + k];
        // T_{j l k} = C_jlr N^r_k − C_jkr N^r_l + C_lkr N^r_j
        for j in 0..n {
            for k in j..n {
                let mut t = vec![S::zero(); n];
                for (l, tl) in t.iter_mut().enumerate() {
                    let mut acc = S::zero();
                    for r in 0..n {
                        acc +=
                            c(j, l, r) * nl(r, k) - c(j, k, r) * nl(r, l) + c(l, k, r) * nl(r, j);
                    }
                    *tl = acc;
                }
                for i in 0..n {
                    let mut acc = S::zero();
                    for (l, &tl) in t.iter().enumerate() {
                        acc += g_inv[l * n + i] * tl;
                    }
                    let v = gamma[(i * n + j) * n + k] - acc;
                    chern[(i * n + j) * n + k] = v;
                    chern[(i * n + k) * n + j] = v;
                }
            }
        }
    }
    Ok(Coefficients {
        n,
        g: d.g,
        g_inv,
        gamma,
        cartan_up,
        nonlinear,
        chern,
    })
}

/// Connection coefficients at a tangent vector.
#[derive(Debug, Clone)]
pub struct ConnectionData {
    pub base: TangentVector,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub gamma: Tensor3,
    pub cartan_up: Tensor3,
    pub nonlinear: DMatrix<f64>,
    pub chern: Tensor3,
}

impl ConnectionData {
    /// `Γ(v)(a, b)^i = Γ^i_jk a^j b^k`.
    pub fn chern_apply(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        let n = self.gamma.n;
        DVector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += self.chern.get(i, j, k) * a[j] * b[k];
                }
            }
            acc
        })
    }
}

pub fn connection_data(m: &MetricSpec, v: &TangentVector) -> Result<ConnectionData> {
    if !m.in_domain(v) {
        return Err(Error::ConicDomain);
    }
    let c = coefficients::<f64>(m, &v.x, &v.y, true)?;
    let n = c.n;
    Ok(ConnectionData {
        base: v.clone(),
        g: DMatrix::from_row_slice(n, n, &c.g),
        g_inv: DMatrix::from_row_slice(n, n, &c.g_inv),
        gamma: Tensor3 { n, data: c.gamma },
        cartan_up: Tensor3 {
            n,
            data: c.cartan_up,
        },
        nonlinear: DMatrix::from_row_slice(n, n, &c.nonlinear),
        chern: Tensor3 { n, data: c.chern },
    })
}

/// hh-curvature `R^i_jkl`, stored at `((i n + j) n + k) n + l`.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub base: TangentVector,
    pub n: usize,
    pub r: Vec<f64>,
    pub connection: ConnectionData,
}

impl CurvatureData {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.r[((i * n + j) * n + k) * n + l]
    }

    /// `R_v(ξ, η)ζ = ξ^k η^l ζ^j R^i_jkl ∂_i`.
    pub fn apply(&self, xi: &[f64], eta: &[f64], zeta: &[f64]) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                if zeta[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        acc += xi[k] * eta[l] * zeta[j] * self.get(i, j, k, l);
                    }
                }
            }
            acc
        })
    }

    /// Matrix `A` with `A u = R_v(v, u) v`.
    pub fn jacobi_operator(&self) -> DMatrix<f64> {
        let n = self.n;
        let y = &self.base.y;
        DMatrix::from_fn(n, n, |i, l| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += y[k] * y[j] * self.get(i, j, k, l);
                }
            }
            acc
        })
    }

    /// `g_v(R_v(v, u) v, w)`.
    pub fn flag_form(&self, u: &[f64], w: &[f64]) -> f64 {
        let y = &self.base.y;
        let r = self.apply(y, u, y);
        let w = DVector::from_column_slice(w);
        r.dot(&(&self.connection.g * w))
    }
}

pub fn hh_curvature(m: &MetricSpec, v: &TangentVector) -> Result<CurvatureData> {
    let connection = connection_data(m, v)?;
    let n = m.dim;
    // δ_k Γ via one outer generator: x_k + ε, y − ε N_k
    let mut delta = vec![0.0; n * n * n * n]; // (k, i, j, l)
    for k in 0..n {
        let xs: Vec<Jet<f64, 2>> = (0..n)
            .map(|a| {
                if a == k {
                    Jet::seeded(v.x[a], 1)
                } else {
                    Jet::constant(v.x[a])
                }
            })
            .collect();
        let ys: Vec<Jet<f64, 2>> = (0..n)
            .map(|a| {
                let mut j = Jet::constant(v.y[a]);
                j.c[1] = -connection.nonlinear[(a, k)];
                j
            })
            .collect();
        let c = coefficients(m, &xs, &ys, true)?;
        for (idx, val) in c.chern.iter().enumerate() {
            delta[k * n * n * n + idx] = val.c[1];
        }
    }
    let gm = |i: usize, j: usize, k: usize| connection.chern.get(i, j, k);
    let dl = |k: usize, i: usize, j: usize, l: usize| delta[((k * n + i) * n + j) * n + l];
    let mut r = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = dl(k, i, j, l) - dl(l, i, j, k);
                    for h in 0..n {
                        acc += gm(i, h, k) * gm(h, j, l) - gm(i, h, l) * gm(h, j, k);
                    }
                    r[((i * n + j) * n + k) * n + l] = acc;
                }
            }
        }
    }
    Ok(CurvatureData {
        base: v.clone(),
        n,
        r,
        connection,
    })
}

pub fn flag_curvature_form(m: &MetricSpec, v: &TangentVector, u: &[f64], w: &[f64]) -> Result<f64> {
    Ok(hh_curvature(m, v)?.flag_form(u, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn euclidean_flat() {
        let m = MetricSpec::euclidean(3);
        let v = TangentVector::new(&[0.1, 0.2, 0.3], &[1.0, -1.0, 0.5]);
        let c = hh_curvature(&m, &v).unwrap();
        assert!(c.r.iter().all(|&x| x == 0.0));
        assert!(c.connection.chern.max_abs() == 0.0 && c.connection.nonlinear.abs().max() == 0.0);
        assert_eq!(c.flag_form(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn sphere_christoffel() {
        let m = MetricSpec::unit_sphere_chart();
        let v = TangentVector::new(&[FRAC_PI_4, 0.0], &[0.3, 0.8]);
        let c = connection_data(&m, &v).unwrap();
        assert!((c.chern.get(0, 1, 1) + 0.5).abs() < 1e-14);
        // Γ^φ_θφ = cot θ
        assert!((c.chern.get(1, 0, 1) - 1.0).abs() < 1e-14);
        let w = TangentVector::new(&[FRAC_PI_4, 0.0], &[-1.0, 0.1]);
        let d = connection_data(&m, &w).unwrap();
        for (a, b) in c.chern.data.iter().zip(&d.chern.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_sectional() {
        let m = MetricSpec::unit_sphere_chart();
        let th = 1.1;
        // unit speed along φ, unit normal along θ
        let v = TangentVector::new(&[th, 0.4], &[0.0, 1.0 / th.sin()]);
        let val = flag_curvature_form(&m, &v, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((val + 1.0).abs() < 1e-12, "{val}");
    }

    #[test]
    fn nonlinear_is_chern_contraction_for_randers() {
        let rows = vec![
            vec!["1 + 0.2*x1^2".to_string(), "0.1*x2".to_string()],
            vec!["0.1*x2".to_string(), "1 + 0.1*x1*x2".to_string()],
        ];
        let h = crate::metric::SymField::parse(2, &rows).unwrap();
        let w =
            crate::metric::OneForm::parse(2, &["0.2*x2".to_string(), "-0.1 + 0.05*x1".to_string()])
                .unwrap();
        let m = MetricSpec::randers(h, w);
        let v = TangentVector::new(&[0.3, -0.2], &[0.7, 0.4]);
        let c = connection_data(&m, &v).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| c.chern.get(i, j, k) * v.y[k]).sum();
                assert!((s - c.nonlinear[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
