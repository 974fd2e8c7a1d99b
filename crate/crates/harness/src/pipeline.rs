//! Full pipeline for one scenario and its report.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use finsler_morse::indexform::{
    assemble, broken_jacobi_index, descent_direction, end_condition, endpoint_form, kernel_vectors,
    spectral_counts, spectral_index, EndCondition, IndexResult,
};
use finsler_morse::jacobi::{
    disconjugate_partition, focal_points, interior_multiplicity, p_jacobi_basis,
    radial_column_residual, FocalPoint, ReducedJacobiSystem, ScanOptions,
};
use finsler_morse::submanifold::orthogonality_check;
use finsler_morse::Error;
use serde::Serialize;

use crate::scenario::Scenario;

/// A failed stage and its error.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait Stage<T> {
    fn stage(self, name: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for finsler_morse::Result<T> {
    fn stage(self, name: &'static str) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage: name, error })
    }
}

/// One checked claim with the compared values.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Assertion {
    /// All integers equal.
    Equal {
        name: String,
        values: Vec<usize>,
        pass: bool,
    },
    /// `value ≤ bound`.
    AtMost {
        name: String,
        value: f64,
        bound: f64,
        pass: bool,
    },
    /// `value < 0`.
    Negative {
        name: String,
        value: f64,
        pass: bool,
    },
    /// `|value − target| ≤ tolerance`.
    Near {
        name: String,
        value: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
    },
}

impl Assertion {
    pub fn equal(name: &str, values: &[usize]) -> Self {
        let pass = values.windows(2).all(|w| w[0] == w[1]);
        Assertion::Equal {
            name: name.into(),
            values: values.to_vec(),
            pass,
        }
    }

    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Assertion::AtMost {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    pub fn negative(name: &str, value: f64) -> Self {
        Assertion::Negative {
            name: name.into(),
            value,
            pass: value < 0.0,
        }
    }

    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Assertion::Near {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            Assertion::Equal { pass, .. }
            | Assertion::AtMost { pass, .. }
            | Assertion::Negative { pass, .. }
            | Assertion::Near { pass, .. } => *pass,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Assertion::Equal { name, .. }
            | Assertion::AtMost { name, .. }
            | Assertion::Negative { name, .. }
            | Assertion::Near { name, .. } => name,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Assertion::Equal { name, values, .. } => format!("{name}: {values:?}"),
            Assertion::AtMost {
                name, value, bound, ..
            } => format!("{name}: {value:.3e} <= {bound:.1e}"),
            Assertion::Negative { name, value, .. } => format!("{name}: {value:.6e} < 0"),
            Assertion::Near {
                name,
                value,
                target,
                tolerance,
                ..
            } => {
                format!("{name}: |{value:.12} - {target:.12}| <= {tolerance:.1e}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocalEntry {
    pub t: f64,
    pub multiplicity: usize,
    pub uncertain: bool,
    pub at_end: bool,
}

impl From<&FocalPoint> for FocalEntry {
    fn from(p: &FocalPoint) -> Self {
        FocalEntry {
            t: p.t,
            multiplicity: p.multiplicity,
            uncertain: p.uncertain,
            at_end: p.at_end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counts {
    pub index: usize,
    pub nullity: usize,
}

impl From<&IndexResult> for Counts {
    fn from(r: &IndexResult) -> Self {
        Counts {
            index: r.index,
            nullity: r.nullity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointCounts {
    pub spectral: Counts,
    pub spectral_fine: Option<Counts>,
    pub restricted: Counts,
    /// `None` when the span hypothesis fails.
    pub endpoint_form: Option<Counts>,
    pub endpoint_matrix: Option<Vec<Vec<f64>>>,
    pub hypothesis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Indices {
    pub spectral: Counts,
    pub spectral_fine: Option<Counts>,
    pub restricted: Counts,
    pub focal_sum: usize,
    /// `dim` of P-Jacobi fields vanishing at `τ`.
    pub end_multiplicity: usize,
    pub broken: Counts,
    pub with_q: Option<EndpointCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentEntry {
    pub s: f64,
    pub epsilon: f64,
    pub predicted: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: Scenario,
    pub dim: usize,
    pub k: usize,
    pub tau: f64,
    pub l0: f64,
    pub focal: Vec<FocalEntry>,
    pub partition: Vec<f64>,
    pub indices: Indices,
    pub eigen_head: Vec<f64>,
    pub descent: Option<DescentEntry>,
    pub residuals: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    pub pass: bool,
}

impl Report {
    pub fn failures(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.pass()).collect()
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name() == name)
    }

    /// Deterministic JSON payload (no timings).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Report plus wall-clock seconds per stage, kept apart so the report
/// itself is reproducible.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub timings: Vec<(String, f64)>,
}

/// Bounds used for residual assertions.
pub const PERPENDICULAR_TOL: f64 = 1e-8;
pub const DRIFT_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const WRONSKIAN_TOL: f64 = 1e-8;
pub const KERNEL_TOL: f64 = 1e-5;

pub fn run_scenario(s: &Scenario) -> Result<RunOutput, StageError> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let num = &s.numerics;
    let opts = ScanOptions {
        samples: num.scan_samples,
        rank_tol: num.rank_tol,
        refine_tol: 1e-8,
    };
    let m = s.metric_spec().stage("metric")?;
    let p = s.p.build().stage("submanifold")?;
    let q = match &s.q {
        Some(c) => Some(c.build().stage("submanifold")?),
        None => None,
    };
    let geo = s.geodesic(&m, &p).stage("geodesic")?;
    lap("geodesic", &mut timings);

    let mut assertions = Vec::new();
    let mut residuals = BTreeMap::new();
    let l0 = geo.l0();
    let drift = geo.l_drift(400).stage("geodesic")? / l0.abs().max(1.0);
    residuals.insert("l_drift".to_string(), drift);
    assertions.push(Assertion::at_most("l-conservation", drift, DRIFT_TOL));
    let (r0, r1) =
        orthogonality_check(&m, &p, q.as_ref(), &geo.start(), &geo.end()).stage("submanifold")?;
    residuals.insert("perpendicular_start".into(), r0);
    assertions.push(Assertion::at_most(
        "perpendicular-start",
        r0,
        PERPENDICULAR_TOL,
    ));
    if q.is_some() {
        residuals.insert("perpendicular_end".into(), r1);
        assertions.push(Assertion::at_most(
            "perpendicular-end",
            r1,
            PERPENDICULAR_TOL,
        ));
    }

    let sys = ReducedJacobiSystem::reduce(&geo, &p).stage("reduce")?;
    residuals.insert("r_symmetry".into(), sys.symmetry_residual());
    residuals.insert("r_radial".into(), sys.radial_residual());
    assertions.push(Assertion::at_most(
        "r-symmetric",
        sys.symmetry_residual(),
        SYMMETRY_TOL,
    ));
    assertions.push(Assertion::at_most(
        "r-radial-flat",
        sys.radial_residual(),
        DRIFT_TOL,
    ));
    let gram = sys.frame().gram_deviation(200).stage("reduce")?;
    residuals.insert("frame_orthonormality".into(), gram);
    assertions.push(Assertion::at_most("frame-orthonormal", gram, DRIFT_TOL));
    lap("reduce", &mut timings);

    let basis = p_jacobi_basis(&sys).stage("jacobi")?;
    let (wdrift, w0) = basis.wronskian_drift(400);
    residuals.insert("wronskian_drift".into(), wdrift.max(w0));
    assertions.push(Assertion::at_most(
        "wronskian-constant",
        wdrift.max(w0),
        WRONSKIAN_TOL,
    ));
    let radial = radial_column_residual(&sys, &basis, 200);
    residuals.insert("radial_column".into(), radial);
    assertions.push(Assertion::at_most("radial-column", radial, DRIFT_TOL));
    let focal = focal_points(&sys, &basis, opts);
    let uncertain = focal.iter().filter(|f| f.uncertain).count();
    assertions.push(Assertion::equal("no-uncertain-focal", &[uncertain, 0]));
    let focal_sum = interior_multiplicity(&focal);
    let end_multiplicity: usize = focal
        .iter()
        .filter(|f| f.at_end)
        .map(|f| f.multiplicity)
        .sum();
    lap("focal", &mut timings);

    let nodes = disconjugate_partition(&sys, &focal, opts).stage("partition")?;
    let (broken, asym) = broken_jacobi_index(&sys, &basis, &nodes).stage("broken")?;
    residuals.insert("broken_asymmetry".into(), asym);
    assertions.push(Assertion::at_most("broken-symmetric", asym, 1e-6));
    lap("broken", &mut timings);

    let fixed = EndCondition::Fixed;
    let form = assemble(&sys, &fixed, num.mesh, false).stage("indexform")?;
    let spectral = spectral_index(&form).stage("indexform")?;
    let restricted = spectral_counts(&assemble(&sys, &fixed, num.mesh, true).stage("indexform")?);
    let spectral_fine = if num.mesh_check {
        Some(spectral_counts(
            &assemble(&sys, &fixed, 2 * num.mesh, false).stage("indexform")?,
        ))
    } else {
        None
    };
    if spectral.nullity > 0 {
        let ker = kernel_vectors(&form, spectral.nullity);
        let worst = ker
            .iter()
            .map(|u| form.kernel_residual(&sys, &fixed, u))
            .fold(0.0, f64::max);
        residuals.insert("kernel_residual".into(), worst);
        assertions.push(Assertion::at_most(
            "kernel-solves-jacobi",
            worst,
            KERNEL_TOL,
        ));
    }
    assertions.push(Assertion::equal(
        "index-agreement",
        &[spectral.index, focal_sum, broken.index],
    ));
    assertions.push(Assertion::equal(
        "nullity-agreement",
        &[spectral.nullity, end_multiplicity, broken.nullity],
    ));
    assertions.push(Assertion::equal(
        "restricted-index",
        &[spectral.index, restricted.index],
    ));
    assertions.push(Assertion::equal(
        "restricted-nullity",
        &[spectral.nullity, restricted.nullity],
    ));
    if let Some(f) = &spectral_fine {
        assertions.push(Assertion::equal("mesh-index", &[spectral.index, f.index]));
        assertions.push(Assertion::equal(
            "mesh-nullity",
            &[spectral.nullity, f.nullity],
        ));
    }
    lap("indexform", &mut timings);

    let with_q = match &q {
        None => None,
        Some(q) => {
            let end = end_condition(&sys, q).stage("endpoint")?;
            let sub = spectral_index(&assemble(&sys, &end, num.mesh, false).stage("endpoint")?)
                .stage("endpoint")?;
            let sub_r = spectral_counts(&assemble(&sys, &end, num.mesh, true).stage("endpoint")?);
            let sub_fine = if num.mesh_check {
                Some(spectral_counts(
                    &assemble(&sys, &end, 2 * num.mesh, false).stage("endpoint")?,
                ))
            } else {
                None
            };
            assertions.push(Assertion::equal(
                "restricted-q-index",
                &[sub.index, sub_r.index],
            ));
            assertions.push(Assertion::equal(
                "restricted-q-nullity",
                &[sub.nullity, sub_r.nullity],
            ));
            if let Some(f) = &sub_fine {
                assertions.push(Assertion::equal("mesh-q-index", &[sub.index, f.index]));
                assertions.push(Assertion::equal(
                    "mesh-q-nullity",
                    &[sub.nullity, f.nullity],
                ));
            }
            let (endpoint, matrix, hypothesis) = match endpoint_form(&sys, &basis, q) {
                Ok(a) => {
                    residuals.insert("endpoint_asymmetry".into(), a.asymmetry);
                    assertions.push(Assertion::equal(
                        "endpoint-decomposition",
                        &[sub.index, spectral.index + a.result.index],
                    ));
                    let rows = a
                        .matrix
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect();
                    (Some(Counts::from(&a.result)), Some(rows), true)
                }
                Err(Error::Hypothesis(_)) => (None, None, false),
                Err(e) => {
                    return Err(StageError {
                        stage: "endpoint",
                        error: e,
                    })
                }
            };
            lap("endpoint", &mut timings);
            Some(EndpointCounts {
                spectral: Counts::from(&sub),
                spectral_fine: sub_fine.as_ref().map(Counts::from),
                restricted: Counts::from(&sub_r),
                endpoint_form: endpoint,
                endpoint_matrix: matrix,
                hypothesis,
            })
        }
    };

    let descent = match focal.iter().find(|f| !f.at_end && !f.uncertain) {
        Some(f) => {
            let d = descent_direction(&sys, &basis, f).stage("descent")?;
            assertions.push(Assertion::negative("descent-negative", d.value));
            Some(DescentEntry {
                s: d.s,
                epsilon: d.epsilon,
                predicted: d.predicted,
                value: d.value,
            })
        }
        None => None,
    };
    lap("descent", &mut timings);

    if let Some(e) = &s.expect {
        let mut want = |name: &str, got: Option<usize>, expected: Option<usize>| {
            if let (Some(g), Some(x)) = (got, expected) {
                assertions.push(Assertion::equal(name, &[g, x]));
            }
        };
        want("expect-index", Some(spectral.index), e.index);
        want("expect-nullity", Some(spectral.nullity), e.nullity);
        let wq = with_q.as_ref();
        want(
            "expect-q-index",
            wq.map(|w| w.spectral.index),
            e.index_pq_sub,
        );
        want(
            "expect-q-nullity",
            wq.map(|w| w.spectral.nullity),
            e.nullity_pq_sub,
        );
        want(
            "expect-endpoint-index",
            wq.and_then(|w| w.endpoint_form.map(|c| c.index)),
            e.endpoint_index,
        );
        want(
            "expect-endpoint-nullity",
            wq.and_then(|w| w.endpoint_form.map(|c| c.nullity)),
            e.endpoint_nullity,
        );
        if let Some(list) = &e.focal {
            assertions.push(Assertion::equal(
                "expect-focal-count",
                &[focal.len(), list.len()],
            ));
            for (i, (t, mu)) in list.iter().enumerate() {
                if let Some(f) = focal.get(i) {
                    assertions.push(Assertion::near(
                        &format!("expect-focal-{i}-t"),
                        f.t,
                        *t,
                        1e-6,
                    ));
                    assertions.push(Assertion::equal(
                        &format!("expect-focal-{i}-mult"),
                        &[f.multiplicity, *mu],
                    ));
                }
            }
        }
    }

    let pass = assertions.iter().all(Assertion::pass);
    let report = Report {
        scenario: s.clone(),
        dim: sys.dim(),
        k: sys.k(),
        tau: sys.tau(),
        l0,
        focal: focal.iter().map(FocalEntry::from).collect(),
        partition: nodes,
        indices: Indices {
            spectral: Counts::from(&spectral),
            spectral_fine: spectral_fine.as_ref().map(Counts::from),
            restricted: Counts::from(&restricted),
            focal_sum,
            end_multiplicity,
            broken: Counts::from(&broken),
            with_q,
        },
        eigen_head: spectral.head.clone(),
        descent,
        residuals,
        assertions,
        pass,
    };
    Ok(RunOutput { report, timings })
}
