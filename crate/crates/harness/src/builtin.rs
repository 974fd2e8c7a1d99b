//! Named scenarios with known answers.

use std::f64::consts::PI;

use crate::scenario::{
    Expect, GeodesicConfig, MetricConfig, Numerics, Scenario, SubmanifoldConfig,
};

fn scenario(
    name: &str,
    metric: MetricConfig,
    geodesic: GeodesicConfig,
    p: SubmanifoldConfig,
    q: Option<SubmanifoldConfig>,
    expect: Expect,
) -> Scenario {
    Scenario {
        name: name.into(),
        metric,
        geodesic,
        p,
        q,
        numerics: Numerics::default(),
        seed: None,
        expect: Some(expect),
    }
}

/// Geodesic from the equator along a meridian of the unit sphere, P a point.
pub fn sphere_point(tau: f64) -> Scenario {
    let name = if tau == PI {
        "sphere-point-pi".to_string()
    } else {
        format!("sphere-point-{tau}")
    };
    let n_conj = (1..4).filter(|j| (*j as f64) * PI < tau - 1e-6).count();
    let at_end = (tau / PI - (tau / PI).round()).abs() < 1e-12;
    let mut focal: Vec<(f64, usize)> = (1..=n_conj).map(|j| (j as f64 * PI, 1)).collect();
    if at_end {
        focal.push((tau, 1));
    }
    scenario(
        &name,
        MetricConfig::SphereChart,
        GeodesicConfig::Ivp {
            p: vec![PI / 2.0, 0.0],
            v: vec![0.0, 1.0],
            tau,
            lift: false,
        },
        SubmanifoldConfig::Point {
            x: vec![PI / 2.0, 0.0],
        },
        None,
        Expect {
            index: Some(n_conj),
            nullity: Some(at_end as usize),
            focal: Some(focal),
            ..Expect::default()
        },
    )
}

/// Inward normal geodesic from the Euclidean unit circle.
pub fn euclid_circle_inward(tau: f64) -> Scenario {
    let index = (tau > 1.0 + 1e-6) as usize;
    let nullity = ((tau - 1.0).abs() < 1e-12) as usize;
    let focal = if tau >= 1.0 - 1e-12 {
        vec![(1.0, 1)]
    } else {
        vec![]
    };
    scenario(
        &format!("euclid-circle-inward-{tau:.1}"),
        MetricConfig::Euclidean { dim: 2 },
        GeodesicConfig::Ivp {
            p: vec![1.0, 0.0],
            v: vec![-1.0, 0.0],
            tau,
            lift: false,
        },
        SubmanifoldConfig::Circle {
            center: vec![0.0, 0.0],
            radius: 1.0,
            a: None,
            b: None,
        },
        None,
        Expect {
            index: Some(index),
            nullity: Some(nullity),
            focal: Some(focal),
            ..Expect::default()
        },
    )
}

/// Inward normal geodesic from the unit sphere in ℝ³; focal of multiplicity 2 at 1.
pub fn euclid_sphere_inward(tau: f64) -> Scenario {
    let index = if tau > 1.0 + 1e-6 { 2 } else { 0 };
    let focal = if tau >= 1.0 - 1e-12 {
        vec![(1.0, 2)]
    } else {
        vec![]
    };
    scenario(
        &format!("sphere-in-r3-{tau:.1}"),
        MetricConfig::Euclidean { dim: 3 },
        GeodesicConfig::Ivp {
            p: vec![0.0, 0.0, 1.0],
            v: vec![0.0, 0.0, -1.0],
            tau,
            lift: false,
        },
        SubmanifoldConfig::Sphere {
            center: vec![0.0, 0.0, 0.0],
            radius: 1.0,
        },
        None,
        Expect {
            index: Some(index),
            nullity: Some(((tau - 1.0).abs() < 1e-12) as usize),
            focal: Some(focal),
            ..Expect::default()
        },
    )
}

fn unit_circle() -> SubmanifoldConfig {
    SubmanifoldConfig::Circle {
        center: vec![0.0, 0.0],
        radius: 1.0,
        a: None,
        b: None,
    }
}

/// From `(−3, 0)` through the unit circle to its far side `(1, 0)`.
pub fn point_to_circle_far() -> Scenario {
    scenario(
        "euclid-point-to-circle-far",
        MetricConfig::Euclidean { dim: 2 },
        GeodesicConfig::Ivp {
            p: vec![-3.0, 0.0],
            v: vec![1.0, 0.0],
            tau: 4.0,
            lift: false,
        },
        SubmanifoldConfig::Point { x: vec![-3.0, 0.0] },
        Some(unit_circle()),
        Expect {
            index: Some(0),
            nullity: Some(0),
            index_pq_sub: Some(1),
            nullity_pq_sub: Some(0),
            endpoint_index: Some(1),
            endpoint_nullity: Some(0),
            focal: Some(vec![]),
        },
    )
}

/// From `(−3, 0)` to the near side `(−1, 0)` of the unit circle.
pub fn point_to_circle_near() -> Scenario {
    scenario(
        "euclid-point-to-circle-near",
        MetricConfig::Euclidean { dim: 2 },
        GeodesicConfig::Ivp {
            p: vec![-3.0, 0.0],
            v: vec![1.0, 0.0],
            tau: 2.0,
            lift: false,
        },
        SubmanifoldConfig::Point { x: vec![-3.0, 0.0] },
        Some(unit_circle()),
        Expect {
            index: Some(0),
            nullity: Some(0),
            index_pq_sub: Some(0),
            nullity_pq_sub: Some(0),
            endpoint_index: Some(0),
            endpoint_nullity: Some(0),
            focal: Some(vec![]),
        },
    )
}

/// From the center to the unit circle.
pub fn center_to_circle() -> Scenario {
    scenario(
        "euclid-center-to-circle",
        MetricConfig::Euclidean { dim: 2 },
        GeodesicConfig::Ivp {
            p: vec![0.0, 0.0],
            v: vec![1.0, 0.0],
            tau: 1.0,
            lift: false,
        },
        SubmanifoldConfig::Point { x: vec![0.0, 0.0] },
        Some(unit_circle()),
        Expect {
            index: Some(0),
            nullity: Some(0),
            index_pq_sub: Some(0),
            nullity_pq_sub: Some(1),
            endpoint_index: Some(0),
            endpoint_nullity: Some(1),
            focal: Some(vec![]),
        },
    )
}

/// Kropina metric `|y|²/(2y¹)` from the origin to `(1, 0.5)`.
pub fn kropina() -> Scenario {
    let id = vec![
        vec!["1".to_string(), "0".to_string()],
        vec!["0".to_string(), "1".to_string()],
    ];
    scenario(
        "kropina-wind",
        MetricConfig::Kropina {
            h: id,
            omega: vec!["-1".into(), "0".into()],
        },
        GeodesicConfig::Bvp {
            p: vec![0.0, 0.0],
            q: vec![1.0, 0.5],
            tau: 1.0,
            guess: None,
        },
        SubmanifoldConfig::Point { x: vec![0.0, 0.0] },
        None,
        Expect {
            index: Some(0),
            nullity: Some(0),
            focal: Some(vec![]),
            ..Expect::default()
        },
    )
}

/// Focal-free scenario used for index-lemma trials.
pub fn lemma_circle() -> Scenario {
    let mut s = euclid_circle_inward(0.5);
    s.name = "circle-0.5-lemma".into();
    s
}

pub fn all() -> Vec<Scenario> {
    vec![
        sphere_point(2.5),
        sphere_point(4.0),
        sphere_point(7.0),
        sphere_point(PI),
        euclid_circle_inward(0.5),
        euclid_circle_inward(1.0),
        euclid_circle_inward(1.5),
        euclid_sphere_inward(1.5),
        point_to_circle_far(),
        point_to_circle_near(),
        center_to_circle(),
        kropina(),
    ]
}

pub fn by_name(name: &str) -> Option<Scenario> {
    all()
        .into_iter()
        .chain([lemma_circle()])
        .find(|s| s.name == name)
}
