mod common;

use std::sync::Arc;

use common::{random_randers, rng};
use finsler_morse::curves::geodesic_ivp;
use finsler_morse::indexform::{
    assemble, index_lemma_trial, kernel_vectors, spectral_counts, spectral_index, DiscretizedForm,
    EndCondition,
};
use finsler_morse::jacobi::{focal_points, p_jacobi_basis, ReducedJacobiSystem, ScanOptions};
use finsler_morse::metric::MetricSpec;
use finsler_morse::ode::Tolerances;
use finsler_morse::submanifold::{normal_lift, Submanifold};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn circle(m: MetricSpec, r: f64, tau: f64) -> ReducedJacobiSystem {
    let m = Arc::new(m);
    let c = Submanifold::planar_circle(2, &[0.0, 0.0], r);
    let y = normal_lift(&m, &c, &[r, 0.0], &[-1.0, 0.0]).unwrap();
    let g = geodesic_ivp(&m, &[r, 0.0], &y, tau, Tolerances::default()).unwrap();
    ReducedJacobiSystem::reduce(&g, &c).unwrap()
}

fn ball3(m: MetricSpec, tau: f64) -> ReducedJacobiSystem {
    let m = Arc::new(m);
    let s = Submanifold::sphere(&[0.0, 0.0, 0.0], 0.8);
    let x = [0.0, 0.48, 0.64];
    let y = normal_lift(&m, &s, &x, &[0.0, -0.6, -0.8]).unwrap();
    let g = geodesic_ivp(&m, &x, &y, tau, Tolerances::default()).unwrap();
    ReducedJacobiSystem::reduce(&g, &s).unwrap()
}

/// Eigenvalues of `K x = λ M x` through a dense Cholesky reduction.
fn dense_spectrum(form: &DiscretizedForm) -> Vec<f64> {
    let k = form.stiffness().to_dense();
    let m = form.mass().to_dense();
    let l = m.cholesky().expect("mass is positive definite").l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * k * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut e: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

#[test]
fn banded_inertia_matches_dense_oracle() {
    for (sys, n) in [
        (circle(MetricSpec::euclidean(2), 1.0, 2.3), 24),
        (ball3(random_randers(3, 3), 1.9), 16),
    ] {
        let form = assemble(&sys, &EndCondition::Fixed, n, false).unwrap();
        let eig = dense_spectrum(&form);
        let res = spectral_index(&form).unwrap();
        let neg = eig.iter().filter(|&&e| e < -1e-7).count();
        let zero = eig.iter().filter(|&&e| e.abs() <= 1e-7).count();
        assert_eq!((res.index, res.nullity), (neg, zero));
        for (a, b) in res.head.iter().zip(&eig) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn restricted_kernel_embeds_into_full_kernel() {
    let sys = circle(MetricSpec::euclidean(2), 1.0, 1.0);
    let full = assemble(&sys, &EndCondition::Fixed, 256, false).unwrap();
    let restricted = assemble(&sys, &EndCondition::Fixed, 256, true).unwrap();
    let (a, b) = (spectral_counts(&full), spectral_counts(&restricted));
    assert_eq!((a.index, a.nullity), (0, 1));
    assert_eq!((b.index, b.nullity), (0, 1));
    let ker = kernel_vectors(&restricted, 1).remove(0);
    let u = full.embed(&restricted, &ker);
    assert!(full.kernel_residual(&sys, &EndCondition::Fixed, &u) < 1e-5);
    let mut r = rng(9);
    let w = DVector::from_fn(full.dofs(), |_, _| r.random_range(-1.0..1.0));
    let scale = full.stiffness().max_abs() * u.norm() * w.norm();
    assert!(full.form(&u, &w).abs() < 1e-6 * scale);
}

#[test]
fn dirichlet_form_is_positive() {
    let m = Arc::new(MetricSpec::euclidean(2));
    let g = geodesic_ivp(&m, &[0.0, 0.0], &[1.0, 0.0], 1.0, Tolerances::default()).unwrap();
    let sys = ReducedJacobiSystem::reduce(&g, &Submanifold::point(&[0.0, 0.0])).unwrap();
    let basis = p_jacobi_basis(&sys).unwrap();
    let mut r = rng(2);
    let mut knots: Vec<DVector<f64>> = (0..7)
        .map(|_| DVector::from_fn(2, |_, _| r.random_range(-1.0..1.0)))
        .collect();
    knots[6] = DVector::zeros(2);
    let t = index_lemma_trial(&sys, &basis, &[], &knots).unwrap();
    assert!(t.jacobi.abs() < 1e-14);
    assert!(t.field > 0.0);
}

fn masked(mask: &[bool], on: bool, seed: u64) -> DVector<f64> {
    let mut r = rng(seed);
    DVector::from_fn(mask.len(), |i, _| {
        if mask[i] == on {
            r.random_range(-1.0..1.0)
        } else {
            0.0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn normal_and_tangential_fields_decouple(seed in 0u64..10_000) {
        let sys = ball3(random_randers(seed, 3), 1.1);
        let form = assemble(&sys, &EndCondition::Fixed, 64, false).unwrap();
        let mask = form.radial_mask();
        prop_assert!(mask.iter().any(|&b| b));
        let (nor, tan) = (masked(&mask, true, seed), masked(&mask, false, seed + 1));
        let scale = form.stiffness().max_abs() * nor.norm() * tan.norm();
        prop_assert!(form.form(&nor, &tan).abs() <= 1e-8 * scale);
    }

    #[test]
    fn restriction_preserves_counts(seed in 0u64..10_000, tau in 0.5..2.5f64) {
        let sys = ball3(random_randers(seed, 3), tau);
        let f = focal_points(&sys, &p_jacobi_basis(&sys).unwrap(), ScanOptions::default());
        prop_assume!(f.iter().all(|p| (p.t - tau).abs() > 1e-3));
        let a = spectral_counts(&assemble(&sys, &EndCondition::Fixed, 128, false).unwrap());
        let b = spectral_counts(&assemble(&sys, &EndCondition::Fixed, 128, true).unwrap());
        prop_assert_eq!((a.index, a.nullity), (b.index, b.nullity));
        let focal_sum: usize = f.iter().filter(|p| !p.at_end).map(|p| p.multiplicity).sum();
        prop_assert_eq!(a.index, focal_sum);
    }
}
