mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::random_randers;
use finsler_morse::curves::geodesic_ivp;
use finsler_morse::jacobi::{
    conjugate_points, focal_points, interior_multiplicity, p_jacobi_basis, ReducedJacobiSystem,
    ScanOptions,
};
use finsler_morse::metric::{MetricSpec, TangentVector};
use finsler_morse::ode::Tolerances;
use finsler_morse::submanifold::{
    normal_bundle_basis, normal_exp_differential, normal_exp_rank_drop, normal_lift,
    shape_operator, Submanifold,
};
use proptest::prelude::*;

fn circle_system(
    m: MetricSpec,
    r: f64,
    tau: f64,
) -> (Arc<MetricSpec>, Submanifold, ReducedJacobiSystem) {
    let m = Arc::new(m);
    let c = Submanifold::planar_circle(2, &[0.0, 0.0], r);
    let y = normal_lift(&m, &c, &[r, 0.0], &[-1.0, 0.0]).unwrap();
    let g = geodesic_ivp(&m, &[r, 0.0], &y, tau, Tolerances::default()).unwrap();
    let sys = ReducedJacobiSystem::reduce(&g, &c).unwrap();
    (m, c, sys)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn circle_focal_at_radius(r in 0.3..2.0f64) {
        let (_, _, sys) = circle_system(MetricSpec::euclidean(2), r, 1.5 * r);
        let basis = p_jacobi_basis(&sys).unwrap();
        let f = focal_points(&sys, &basis, ScanOptions::default());
        prop_assert_eq!(f.len(), 1);
        prop_assert!((f[0].t - r).abs() <= 1e-6);
        prop_assert_eq!(f[0].multiplicity, 1);
        prop_assert!(!f[0].uncertain);
    }

    #[test]
    fn wronskian_and_symmetry_on_randers(seed in 0u64..10_000) {
        let (_, _, sys) = circle_system(random_randers(seed, 2), 0.7, 1.2);
        let basis = p_jacobi_basis(&sys).unwrap();
        let (drift, w0) = basis.wronskian_drift(100);
        prop_assert!(drift.max(w0) <= 1e-8);
        prop_assert!(sys.symmetry_residual() <= 1e-9);
        prop_assert!(sys.radial_residual() <= 1e-8);
    }
}

#[test]
fn shape_operator_of_circle() {
    for r in [0.5, 1.0, 2.0] {
        let m = MetricSpec::euclidean(2);
        let c = Submanifold::planar_circle(2, &[0.0, 0.0], r);
        let v = TangentVector::new(&[r, 0.0], &[-1.0, 0.0]);
        let s = shape_operator(&m, &c, &v).unwrap();
        let e = s.eigenvalues();
        assert_eq!(e.len(), 1);
        assert!((e[0].abs() - 1.0 / r).abs() < 1e-12);
    }
}

#[test]
fn shape_operator_identities_randers() {
    for seed in 0..10 {
        let m = random_randers(seed, 3);
        let p = Submanifold::sphere(&[0.0, 0.0, 0.0], 0.8);
        let x = [0.0, 0.48, 0.64];
        let y = normal_lift(&m, &p, &x, &[0.1, -0.6, -0.8]).unwrap();
        let s = shape_operator(&m, &p, &TangentVector::new(&x, &y)).unwrap();
        assert!(s.duality_residual() < 1e-9);
        assert!(s.self_adjoint_residual() < 1e-9);
    }
}

#[test]
fn euclidean_normal_exp_closed_form() {
    // exp^{LN}(x, −λu) = (1 − λ)u on the unit circle
    let m = Arc::new(MetricSpec::euclidean(2));
    let c = Submanifold::planar_circle(2, &[0.0, 0.0], 1.0);
    let th: f64 = 0.7;
    let (u, t) = ([th.cos(), th.sin()], [-th.sin(), th.cos()]);
    let lam = 0.4;
    let v = TangentVector::new(&u, &[-lam * u[0], -lam * u[1]]);
    let dirs = normal_bundle_basis(&m, &c, &v).unwrap();
    let d = normal_exp_differential(&m, &c, &v, &dirs, Tolerances::uniform(1e-12)).unwrap();
    let base: f64 = dirs[0].0.iter().zip(&t).map(|(a, b)| a * b).sum();
    for i in 0..2 {
        assert!((d[0][i] - (1.0 - lam) * base * t[i]).abs() < 1e-9);
        assert!((d[1][i] - dirs[1].1[i]).abs() < 1e-9);
    }
    let v1 = TangentVector::new(&u, &[-u[0], -u[1]]);
    let (l, ratio) =
        normal_exp_rank_drop(&m, &c, &v1, 0.8, 1.2, Tolerances::uniform(1e-12)).unwrap();
    assert!((l - 1.0).abs() < 1e-8 && ratio < 1e-7);
}

#[test]
fn sphere_conjugates_and_multiplicities() {
    let m = Arc::new(MetricSpec::unit_sphere_chart());
    let g = geodesic_ivp(
        &m,
        &[PI / 2.0, 0.0],
        &[0.0, 1.0],
        7.0,
        Tolerances::default(),
    )
    .unwrap();
    let sys = ReducedJacobiSystem::reduce(&g, &Submanifold::point(&[PI / 2.0, 0.0])).unwrap();
    let c = conjugate_points(&sys, 0.0, 7.0, ScanOptions::default()).unwrap();
    assert_eq!(c.len(), 2);
    assert!((c[0].t - PI).abs() < 1e-6 && (c[1].t - 2.0 * PI).abs() < 1e-6);

    let m = Arc::new(MetricSpec::euclidean(3));
    let s = Submanifold::sphere(&[0.0, 0.0, 0.0], 1.0);
    let g = geodesic_ivp(
        &m,
        &[0.0, 0.0, 1.0],
        &[0.0, 0.0, -1.0],
        1.5,
        Tolerances::default(),
    )
    .unwrap();
    let sys = ReducedJacobiSystem::reduce(&g, &s).unwrap();
    let f = focal_points(&sys, &p_jacobi_basis(&sys).unwrap(), ScanOptions::default());
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].multiplicity, 2);
    assert!((f[0].t - 1.0).abs() < 1e-6);
    assert_eq!(interior_multiplicity(&f), 2);
}
