//! Scenario configuration, read from TOML.

use std::sync::Arc;

use finsler_morse::curves::{geodesic_bvp, geodesic_ivp, Geodesic};
use finsler_morse::metric::{MetricSpec, OneForm, SymField};
use finsler_morse::ode::Tolerances;
use finsler_morse::submanifold::{normal_lift, Submanifold};
use finsler_morse::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub metric: MetricConfig,
    pub geodesic: GeodesicConfig,
    pub p: SubmanifoldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<SubmanifoldConfig>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricConfig {
    Euclidean {
        dim: usize,
    },
    /// Round unit sphere in the chart `(θ, φ)`.
    SphereChart,
    Riemannian {
        h: Vec<Vec<String>>,
    },
    Randers {
        h: Vec<Vec<String>>,
        omega: Vec<String>,
    },
    Kropina {
        h: Vec<Vec<String>>,
        omega: Vec<String>,
    },
    Custom {
        dim: usize,
        lagrangian: String,
        domain: Option<String>,
    },
}

impl MetricConfig {
    pub fn build(&self) -> Result<MetricSpec> {
        let sym = |h: &Vec<Vec<String>>| SymField::parse(h.len(), h);
        Ok(match self {
            MetricConfig::Euclidean { dim } => MetricSpec::euclidean(*dim),
            MetricConfig::SphereChart => MetricSpec::unit_sphere_chart(),
            MetricConfig::Riemannian { h } => MetricSpec::riemannian(sym(h)?),
            MetricConfig::Randers { h, omega } => {
                MetricSpec::randers(sym(h)?, OneForm::parse(h.len(), omega)?)
            }
            MetricConfig::Kropina { h, omega } => {
                MetricSpec::kropina(sym(h)?, OneForm::parse(h.len(), omega)?)
            }
            MetricConfig::Custom {
                dim,
                lagrangian,
                domain,
            } => MetricSpec::custom(*dim, lagrangian, domain.as_deref())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeodesicConfig {
    /// With `lift`, the tangential part of `v` is first adjusted so that `v` is normal to `P`.
    Ivp {
        p: Vec<f64>,
        v: Vec<f64>,
        tau: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        lift: bool,
    },
    /// Shooting from `p` to `q`; the guess defaults to `(q − p) / τ`.
    Bvp {
        p: Vec<f64>,
        q: Vec<f64>,
        tau: f64,
        guess: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SubmanifoldConfig {
    Point {
        x: Vec<f64>,
    },
    Line {
        origin: Vec<f64>,
        dir: Vec<f64>,
    },
    /// Circle in the plane spanned by `a, b` (default: first two axes).
    Circle {
        center: Vec<f64>,
        radius: f64,
        a: Option<Vec<f64>>,
        b: Option<Vec<f64>>,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    Graph {
        dim: usize,
        f: String,
    },
    Parametric {
        map: Vec<String>,
        guess: Vec<f64>,
    },
    Quadric {
        origin: Vec<f64>,
        tangents: Vec<Vec<f64>>,
        normal: Vec<f64>,
        hessian: Vec<Vec<f64>>,
    },
}

impl SubmanifoldConfig {
    pub fn build(&self) -> Result<Submanifold> {
        Ok(match self {
            SubmanifoldConfig::Point { x } => Submanifold::point(x),
            SubmanifoldConfig::Line { origin, dir } => Submanifold::line(origin, dir),
            SubmanifoldConfig::Circle {
                center,
                radius,
                a,
                b,
            } => {
                let n = center.len();
                let unit = |i: usize| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
                Submanifold::new(
                    n,
                    finsler_morse::submanifold::Shape::Circle {
                        center: center.clone(),
                        a: a.clone().unwrap_or_else(|| unit(0)),
                        b: b.clone().unwrap_or_else(|| unit(1)),
                        radius: *radius,
                    },
                )?
            }
            SubmanifoldConfig::Sphere { center, radius } => Submanifold::sphere(center, *radius),
            SubmanifoldConfig::Graph { dim, f } => Submanifold::graph(*dim, f)?,
            SubmanifoldConfig::Parametric { map, guess } => {
                let map: Vec<&str> = map.iter().map(String::as_str).collect();
                Submanifold::parametric(&map, guess)?
            }
            SubmanifoldConfig::Quadric {
                origin,
                tangents,
                normal,
                hessian,
            } => Submanifold::quadric(origin, tangents, normal, hessian)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub mesh: usize,
    /// Relative ODE tolerance; the absolute one is 1/100 of it.
    pub ode_tol: f64,
    pub rank_tol: f64,
    pub scan_samples: usize,
    /// Also assemble at twice the mesh and compare counts.
    pub mesh_check: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            mesh: finsler_morse::indexform::DEFAULT_MESH,
            ode_tol: 1e-10,
            rank_tol: finsler_morse::jacobi::RANK_TOL,
            scan_samples: finsler_morse::jacobi::SCAN_SAMPLES,
            mesh_check: true,
        }
    }
}

impl Numerics {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.ode_tol,
            atol: self.ode_tol * 1e-2,
        }
    }
}

/// Integers a scenario is expected to produce.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expect {
    pub index: Option<usize>,
    pub nullity: Option<usize>,
    pub index_pq_sub: Option<usize>,
    pub nullity_pq_sub: Option<usize>,
    pub endpoint_index: Option<usize>,
    pub endpoint_nullity: Option<usize>,
    /// Focal instants `(t, multiplicity)` matched within 1e-6.
    pub focal: Option<Vec<(f64, usize)>>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mesh: Option<usize>,
    pub ode_tol: Option<f64>,
    pub rank_tol: Option<f64>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn from_toml(src: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mesh {
            self.numerics.mesh = m;
        }
        if let Some(t) = o.ode_tol {
            self.numerics.ode_tol = t;
        }
        if let Some(r) = o.rank_tol {
            self.numerics.rank_tol = r;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
    }

    /// Integrates the configured geodesic.
    pub fn geodesic(&self, m: &Arc<MetricSpec>, p: &Submanifold) -> Result<Geodesic> {
        let tol = self.numerics.tolerances();
        match &self.geodesic {
            GeodesicConfig::Ivp { p: x, v, tau, lift } => {
                let v = if *lift {
                    normal_lift(m, p, x, v)?
                } else {
                    v.clone()
                };
                geodesic_ivp(m, x, &v, *tau, tol)
            }
            GeodesicConfig::Bvp { p, q, tau, guess } => {
                let g = guess
                    .clone()
                    .unwrap_or_else(|| p.iter().zip(q).map(|(a, b)| (b - a) / tau).collect());
                geodesic_bvp(m, p, q, *tau, &g, tol)
            }
        }
    }

    pub fn metric_spec(&self) -> Result<Arc<MetricSpec>> {
        let m = self.metric.build()?;
        let check = |len: usize, what: &str| {
            if len != m.dim {
                Err(Error::InvalidInput(format!(
                    "{what} has dimension {len}, metric has {}",
                    m.dim
                )))
            } else {
                Ok(())
            }
        };
        match &self.geodesic {
            GeodesicConfig::Ivp { p, v, .. } => {
                check(p.len(), "start point")?;
                check(v.len(), "start velocity")?;
            }
            GeodesicConfig::Bvp { p, q, .. } => {
                check(p.len(), "start point")?;
                check(q.len(), "end point")?;
            }
        }
        Ok(Arc::new(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let src = r#"
name = "demo"

[metric]
family = "randers"
h = [["1", "0"], ["0", "1 + 0.1*x1^2"]]
omega = ["0.2", "0"]

[geodesic]
kind = "ivp"
p = [0.5, 0.0]
v = [-1.0, 0.0]
tau = 1.0

[p]
kind = "circle"
center = [0.0, 0.0]
radius = 0.5

[numerics]
mesh = 128
"#;
        let s = Scenario::from_toml(src).unwrap();
        assert_eq!(s.numerics.mesh, 128);
        assert_eq!(s.numerics.ode_tol, 1e-10);
        assert!(matches!(s.metric, MetricConfig::Randers { .. }));
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        s.metric_spec().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let src = "name = \"x\"\nbogus = 1\n[metric]\nfamily = \"euclidean\"\ndim = 2\n";
        assert!(Scenario::from_toml(src).is_err());
    }
}
