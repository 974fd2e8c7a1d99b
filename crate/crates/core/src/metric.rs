//! Conic pseudo-Finsler metrics given by a Lagrangian `L(x, y)`, and the
//! fiber-derivative tensors obtained from it by jet seeding.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jets::{Jet, Scalar};

/// Base point plus velocity in a single chart.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentVector {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len(), "x and y dimensions differ");
        TangentVector {
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        TangentVector {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v * lambda).collect(),
        }
    }
}

/// Symmetric matrix field `h(x)` given by expressions in `x1..xn`.
#[derive(Debug, Clone)]
pub struct SymField {
    n: usize,
    // upper triangle, row major
    entries: Vec<Expr>,
    constant: Option<Vec<f64>>,
}

impl SymField {
    pub fn parse(n: usize, rows: &[Vec<String>]) -> Result<Self> {
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!(
                "metric matrix must be {n}x{n}"
            )));
        }
        let vars = x_names(n);
        let vars: Vec<&str> = vars.iter().map(String::as_str).collect();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                let e = Expr::parse(&rows[i][j], &vars)?;
                if i != j {
                    let f = Expr::parse(&rows[j][i], &vars)?;
                    if e.ast() != f.ast() {
                        return Err(Error::InvalidInput(format!(
                            "metric matrix not symmetric at ({i},{j})"
                        )));
                    }
                }
                entries.push(e);
            }
        }
        let constant = entries
            .iter()
            .map(Expr::as_constant)
            .collect::<Option<Vec<f64>>>();
        Ok(SymField {
            n,
            entries,
            constant,
        })
    }

    pub fn identity(n: usize) -> Self {
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { "1" } else { "0" }.to_string())
                    .collect()
            })
            .collect();
        SymField::parse(n, &rows).unwrap()
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j
    }

    /// `h(x)` as a dense row-major matrix.
    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let n = self.n;
        let upper: Vec<S> = match &self.constant {
            Some(c) => c.iter().map(|&v| S::from_f64(v)).collect(),
            None => self
                .entries
                .iter()
                .map(|e| e.eval(x))
                .collect::<Result<_>>()?,
        };
        let mut out = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = upper[self.slot(i, j)];
            }
        }
        Ok(out)
    }

    pub fn quadratic<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let h = self.eval(x)?;
        let n = self.n;
        let mut q = S::zero();
        for i in 0..n {
            let mut row = S::zero();
            for j in 0..n {
                row += h[i * n + j] * y[j];
            }
            q += row * y[i];
        }
        Ok(q)
    }
}

/// One-form `ω(x)` given by component expressions in `x1..xn`.
#[derive(Debug, Clone)]
pub struct OneForm {
    comps: Vec<Expr>,
}

impl OneForm {
    pub fn parse(n: usize, comps: &[String]) -> Result<Self> {
        if comps.len() != n {
            return Err(Error::InvalidInput(format!(
                "one-form needs {n} components"
            )));
        }
        let vars = x_names(n);
        let vars: Vec<&str> = vars.iter().map(String::as_str).collect();
        Ok(OneForm {
            comps: comps
                .iter()
                .map(|c| Expr::parse(c, &vars))
                .collect::<Result<_>>()?,
        })
    }

    pub fn constant(w: &[f64]) -> Self {
        OneForm {
            comps: w.iter().map(|&v| Expr::constant(v)).collect(),
        }
    }

    pub fn apply<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let mut acc = S::zero();
        for (c, &yi) in self.comps.iter().zip(y) {
            acc += c.eval(x)? * yi;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Euclidean,
    Riemannian {
        h: SymField,
    },
    /// `L = (sqrt(h(y,y)) + ω(y))²`
    Randers {
        h: SymField,
        omega: OneForm,
    },
    /// `L = K²`, `K = -h(y,y) / (2 ω(y))` on `{ω(y) < 0}`
    Kropina {
        h: SymField,
        omega: OneForm,
    },
    /// `L(x1..xn, y1..yn)`, optional domain `{d > 0}`.
    Custom {
        lagrangian: Expr,
        domain: Option<Expr>,
    },
}

#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub dim: usize,
    pub family: Family,
}

pub fn x_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

pub fn xy_names(n: usize) -> Vec<String> {
    let mut v = x_names(n);
    v.extend((1..=n).map(|i| format!("y{i}")));
    v
}

impl MetricSpec {
    pub fn euclidean(dim: usize) -> Self {
        MetricSpec {
            dim,
            family: Family::Euclidean,
        }
    }

    pub fn riemannian(h: SymField) -> Self {
        MetricSpec {
            dim: h.n,
            family: Family::Riemannian { h },
        }
    }

    pub fn randers(h: SymField, omega: OneForm) -> Self {
        MetricSpec {
            dim: h.n,
            family: Family::Randers { h, omega },
        }
    }

    pub fn kropina(h: SymField, omega: OneForm) -> Self {
        MetricSpec {
            dim: h.n,
            family: Family::Kropina { h, omega },
        }
    }

    pub fn custom(dim: usize, lagrangian: &str, domain: Option<&str>) -> Result<Self> {
        let names = xy_names(dim);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let lagrangian = Expr::parse(lagrangian, &vars)?;
        let domain = domain.map(|d| Expr::parse(d, &vars)).transpose()?;
        Ok(MetricSpec {
            dim,
            family: Family::Custom { lagrangian, domain },
        })
    }

    /// Round metric of the unit sphere in the chart `(θ, φ)`: `diag(1, sin²θ)`.
    pub fn unit_sphere_chart() -> Self {
        let rows = vec![
            vec!["1".to_string(), "0".to_string()],
            vec!["0".to_string(), "sin(x1)^2".to_string()],
        ];
        MetricSpec::riemannian(SymField::parse(2, &rows).unwrap())
    }

    pub fn is_riemannian(&self) -> bool {
        matches!(self.family, Family::Euclidean | Family::Riemannian { .. })
    }

    /// `L(x, y)` over any scalar, without the domain check.
    pub fn lagrangian<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        match &self.family {
            Family::Euclidean => Ok(y.iter().fold(S::zero(), |a, &v| a + v * v)),
            Family::Riemannian { h } => h.quadratic(x, y),
            Family::Randers { h, omega } => {
                let f = h.quadratic(x, y)?.try_sqrt()? + omega.apply(x, y)?;
                Ok(f * f)
            }
            Family::Kropina { h, omega } => {
                let w = omega.apply(x, y)?;
                let k = h.quadratic(x, y)?.try_div(w.scale(-2.0))?;
                Ok(k * k)
            }
            Family::Custom { lagrangian, .. } => {
                let mut vars = x.to_vec();
                vars.extend_from_slice(y);
                lagrangian.eval(&vars)
            }
        }
    }

    pub fn in_domain(&self, v: &TangentVector) -> bool {
        self.in_domain_xy(&v.x, &v.y)
    }

    pub fn in_domain_xy(&self, x: &[f64], y: &[f64]) -> bool {
        if x.len() != self.dim || y.len() != self.dim {
            return false;
        }
        if !x.iter().chain(y).all(|v| v.is_finite()) || y.iter().all(|&v| v == 0.0) {
            return false;
        }
        let ok = match &self.family {
            Family::Euclidean | Family::Riemannian { .. } => true,
            Family::Randers { h, omega } => match (h.quadratic(x, y), omega.apply(x, y)) {
                (Ok(q), Ok(w)) => q > 0.0 && q.sqrt() + w > 0.0,
                _ => false,
            },
            Family::Kropina { h, omega } => match (h.quadratic(x, y), omega.apply(x, y)) {
                (Ok(q), Ok(w)) => w < 0.0 && q > 0.0,
                _ => false,
            },
            Family::Custom { domain, .. } => match domain {
                Some(d) => {
                    let mut vars = x.to_vec();
                    vars.extend_from_slice(y);
                    matches!(d.eval(&vars), Ok(v) if v > 0.0)
                }
                None => true,
            },
        };
        ok && matches!(self.lagrangian(x, y), Ok(l) if l.is_finite())
    }

    pub fn eval_l(&self, v: &TangentVector) -> Result<f64> {
        if !self.in_domain(v) {
            return Err(Error::ConicDomain);
        }
        self.lagrangian(&v.x, &v.y)
    }

    fn check(&self, v: &TangentVector) -> Result<()> {
        if !self.in_domain(v) {
            return Err(Error::ConicDomain);
        }
        Ok(())
    }

    pub fn fundamental_tensor(&self, v: &TangentVector) -> Result<FundamentalTensor> {
        self.check(v)?;
        let n = self.dim;
        let d = self.derivatives(&v.x, &v.y, false, false)?;
        let g = DMatrix::from_row_slice(n, n, &d.g);
        let rcond = reciprocal_condition(&g);
        if !(rcond >= RCOND_MIN) {
            return Err(Error::Degenerate { rcond });
        }
        let g_inv = g.clone().try_inverse().ok_or(Error::Degenerate { rcond })?;
        Ok(FundamentalTensor {
            base: v.clone(),
            g,
            g_inv,
        })
    }

    pub fn cartan_tensor(&self, v: &TangentVector) -> Result<CartanTensor> {
        self.check(v)?;
        let d = self.derivatives(&v.x, &v.y, false, true)?;
        Ok(CartanTensor {
            base: v.clone(),
            c: Tensor3 {
                n: self.dim,
                data: d.cartan,
            },
        })
    }

    /// `∂g_ij/∂x^m` stored at `(m, i, j)`.
    pub fn dg_dx(&self, v: &TangentVector) -> Result<Tensor3> {
        self.check(v)?;
        let d = self.derivatives(&v.x, &v.y, true, false)?;
        Ok(Tensor3 {
            n: self.dim,
            data: d.dg,
        })
    }

    /// Fiber derivatives of `L` at `(x, y)` over any scalar.
    pub(crate) fn derivatives<S: Scalar>(
        &self,
        x: &[S],
        y: &[S],
        want_dg: bool,
        want_cartan: bool,
    ) -> Result<Derivatives<S>> {
        let n = self.dim;
        let mut g = vec![S::zero(); n * n];
        let mut dg = if want_dg {
            vec![S::zero(); n * n * n]
        } else {
            Vec::new()
        };
        let mut cartan = if want_cartan {
            vec![S::zero(); n * n * n]
        } else {
            Vec::new()
        };

        if self.is_riemannian() && !want_cartan {
            // L is quadratic in y, so a single x generator suffices on top of h.
            if let Family::Riemannian { h } = &self.family {
                if want_dg {
                    for m in 0..n {
                        let xs: Vec<Jet<S, 2>> = (0..n)
                            .map(|i| {
                                if i == m {
                                    Jet::seeded(x[i], 1)
                                } else {
                                    Jet::constant(x[i])
                                }
                            })
                            .collect();
                        let hm = h.eval(&xs)?;
                        for ij in 0..n * n {
                            g[ij] = hm[ij].c[0];
                            dg[m * n * n + ij] = hm[ij].c[1];
                        }
                    }
                } else {
                    g = h.eval(x)?;
                }
            } else {
                for i in 0..n {
                    g[i * n + i] = S::one();
                }
            }
            return Ok(Derivatives { g, dg, cartan });
        }

        let half = 0.5;
        let ms: Vec<Option<usize>> = if want_dg {
            (0..n).map(Some).collect()
        } else {
            vec![None]
        };
        for &m in &ms {
            let xs: Vec<Jet<S, 8>> = (0..n)
                .map(|k| {
                    if Some(k) == m {
                        Jet::seeded(x[k], 0b100)
                    } else {
                        Jet::constant(x[k])
                    }
                })
                .collect();
            for i in 0..n {
                for j in i..n {
                    let ys: Vec<Jet<S, 8>> = (0..n)
                        .map(|k| {
                            let mask =
                                if k == i { 0b01 } else { 0 } | if k == j { 0b10 } else { 0 };
                            Jet::seeded(y[k], mask)
                        })
                        .collect();
                    let l = self.lagrangian(&xs, &ys)?;
                    let gij = l.c[0b011].scale(half);
                    g[i * n + j] = gij;
                    g[j * n + i] = gij;
                    if let Some(m) = m {
                        let d = l.c[0b111].scale(half);
                        dg[m * n * n + i * n + j] = d;
                        dg[m * n * n + j * n + i] = d;
                    }
                }
            }
        }

        if want_cartan {
            let xs: Vec<Jet<S, 8>> = x.iter().map(|&v| Jet::constant(v)).collect();
            for i in 0..n {
                for j in i..n {
                    for k in j..n {
                        let ys: Vec<Jet<S, 8>> = (0..n)
                            .map(|a| {
                                let mask = if a == i { 0b001 } else { 0 }
                                    | if a == j { 0b010 } else { 0 }
                                    | if a == k { 0b100 } else { 0 };
                                Jet::seeded(y[a], mask)
                            })
                            .collect();
                        let c = self.lagrangian(&xs, &ys)?.c[0b111].scale(0.25);
                        for (a, b, d) in permutations3(i, j, k) {
                            cartan[(a * n + b) * n + d] = c;
                        }
                    }
                }
            }
        }
        Ok(Derivatives { g, dg, cartan })
    }
}

fn permutations3(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [
        (i, j, k),
        (i, k, j),
        (j, i, k),
        (j, k, i),
        (k, i, j),
        (k, j, i),
    ]
}

pub(crate) struct Derivatives<S> {
    pub g: Vec<S>,
    pub dg: Vec<S>,
    pub cartan: Vec<S>,
}

pub const RCOND_MIN: f64 = 1e-10;

pub fn reciprocal_condition(g: &DMatrix<f64>) -> f64 {
    let sv = g.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Dense `n×n×n` array indexed `(a, b, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct FundamentalTensor {
    pub base: TangentVector,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
}

impl FundamentalTensor {
    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        let u = DVector::from_column_slice(u);
        let w = DVector::from_column_slice(w);
        u.dot(&(&self.g * w))
    }
}

#[derive(Debug, Clone)]
pub struct CartanTensor {
    pub base: TangentVector,
    pub c: Tensor3,
}

impl CartanTensor {
    /// Matrix `C_v(w, ·, ·)`.
    pub fn contract(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.c.n;
        DMatrix::from_fn(n, n, |b, c| {
            (0..n).map(|a| w[a] * self.c.get(a, b, c)).sum()
        })
    }
}
