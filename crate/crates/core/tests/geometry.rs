mod common;

use common::{max_abs, random_randers, random_riemannian, random_vec, rng};
use finsler_morse::connection::{connection_data, hh_curvature};
use finsler_morse::metric::{MetricSpec, TangentVector};
use nalgebra::DVector;
use proptest::prelude::*;

fn metric(seed: u64, n: usize, randers: bool) -> MetricSpec {
    if randers {
        random_randers(seed, n)
    } else {
        random_riemannian(seed, n)
    }
}

fn draw(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r = rng(seed ^ 0x5eed);
    (
        random_vec(&mut r, n, 1.0),
        random_vec(&mut r, n, 1.0),
        random_vec(&mut r, n, 1.0),
        random_vec(&mut r, n, 1.0),
    )
}

fn dim() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(3usize)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homogeneity_and_scale_invariance(seed in 0u64..10_000, n in dim(), randers in any::<bool>()) {
        let m = metric(seed, n, randers);
        let (x, y, _, _) = draw(seed, n);
        let v = TangentVector::new(&x, &y);
        let l = m.eval_l(&v).unwrap();
        let g = m.fundamental_tensor(&v).unwrap().g;
        for lam in [0.5, 2.0, 7.3] {
            let lv = m.eval_l(&v.scaled(lam)).unwrap();
            prop_assert!((lv - lam * lam * l).abs() <= 1e-10 * lam * lam * l.abs());
            let gl = m.fundamental_tensor(&v.scaled(lam)).unwrap().g;
            prop_assert!((gl - &g).abs().max() <= 1e-10 * g.abs().max());
        }
        let gvv = DVector::from_column_slice(&y).dot(&(&g * DVector::from_column_slice(&y)));
        prop_assert!((gvv - l).abs() <= 1e-10 * l.abs());
    }

    #[test]
    fn tensors_match_finite_differences(seed in 0u64..10_000, n in dim()) {
        let m = metric(seed, n, true);
        let (x, y, _, _) = draw(seed, n);
        let v = TangentVector::new(&x, &y);
        let g = m.fundamental_tensor(&v).unwrap().g;
        let c = m.cartan_tensor(&v).unwrap().c;
        let dg = m.dg_dx(&v).unwrap();
        let h = 1e-4;
        let l = |dy: &[f64]| {
            let yy: Vec<f64> = y.iter().zip(dy).map(|(a, b)| a + b).collect();
            m.lagrangian(&x, &yy).unwrap()
        };
        let e = |i: usize, s: f64| -> Vec<f64> { (0..n).map(|k| if k == i { s } else { 0.0 }).collect() };
        let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + q).collect() };
        for i in 0..n {
            for j in 0..n {
                let fd = (l(&add(&e(i, h), &e(j, h))) - l(&add(&e(i, h), &e(j, -h)))
                    - l(&add(&e(i, -h), &e(j, h))) + l(&add(&e(i, -h), &e(j, -h))))
                    / (8.0 * h * h);
                prop_assert!((g[(i, j)] - fd).abs() <= 1e-6 * g.abs().max());
            }
        }
        // C_ijk = ½ ∂g_ij/∂y^k and ∂g_ij/∂x^m, from g at shifted points
        for k in 0..n {
            let yp: Vec<f64> = add(&y, &e(k, h));
            let ym: Vec<f64> = add(&y, &e(k, -h));
            let gp = m.fundamental_tensor(&TangentVector::new(&x, &yp)).unwrap().g;
            let gm = m.fundamental_tensor(&TangentVector::new(&x, &ym)).unwrap().g;
            let xp: Vec<f64> = add(&x, &e(k, h));
            let xm: Vec<f64> = add(&x, &e(k, -h));
            let hp = m.fundamental_tensor(&TangentVector::new(&xp, &y)).unwrap().g;
            let hm = m.fundamental_tensor(&TangentVector::new(&xm, &y)).unwrap().g;
            for i in 0..n {
                for j in 0..n {
                    let fd = (gp[(i, j)] - gm[(i, j)]) / (4.0 * h);
                    prop_assert!((c.get(i, j, k) - fd).abs() <= 1e-6 * (1.0 + c.max_abs()));
                    let fdx = (hp[(i, j)] - hm[(i, j)]) / (2.0 * h);
                    prop_assert!((dg.get(k, i, j) - fdx).abs() <= 1e-6 * (1.0 + dg.max_abs()));
                }
            }
        }
        let cy = m.cartan_tensor(&v).unwrap().contract(&y);
        prop_assert!(cy.abs().max() <= 1e-10 * (1.0 + c.max_abs()));
    }

    #[test]
    fn curvature_symmetries(seed in 0u64..10_000, n in dim(), randers in any::<bool>()) {
        let m = metric(seed, n, randers);
        let (x, y, u, w) = draw(seed, n);
        let v = TangentVector::new(&x, &y);
        let r = hh_curvature(&m, &v).unwrap();
        let g = &r.connection.g;
        let gd = |a: &DVector<f64>, b: &[f64]| a.dot(&(g * DVector::from_column_slice(b)));
        let scale = (1e-12_f64).max(max_abs(&r.r)) * g.norm() * 10.0;
        // flag form symmetric in (u, w)
        let a = gd(&r.apply(&y, &u, &y), &w);
        let b = gd(&r.apply(&y, &w, &y), &u);
        prop_assert!((a - b).abs() <= 1e-9 * scale);
        // g(R(u, v)v, w) = −g(R(u, v)w, v)
        let a = gd(&r.apply(&u, &y, &y), &w);
        let b = gd(&r.apply(&u, &y, &w), &y);
        prop_assert!((a + b).abs() <= 1e-9 * scale);
        // antisymmetry in the last two indices
        for i in 0..n { for j in 0..n { for k in 0..n { for l in 0..n {
            prop_assert!((r.get(i, j, k, l) + r.get(i, j, l, k)).abs() <= 1e-9 * scale);
        }}}}
    }

    #[test]
    fn riemannian_connection_ignores_direction(seed in 0u64..10_000, n in dim()) {
        let m = metric(seed, n, false);
        let (x, y, u, _) = draw(seed, n);
        let a = connection_data(&m, &TangentVector::new(&x, &y)).unwrap();
        let b = connection_data(&m, &TangentVector::new(&x, &u)).unwrap();
        for (p, q) in a.chern.data.iter().zip(&b.chern.data) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
    }
}

#[test]
fn sphere_christoffels_and_curvature() {
    let m = MetricSpec::unit_sphere_chart();
    let th: f64 = 1.1;
    let v = TangentVector::new(&[th, 0.3], &[0.4, 0.7]);
    let c = connection_data(&m, &v).unwrap();
    assert!((c.chern.get(0, 1, 1) + th.sin() * th.cos()).abs() < 1e-13);
    assert!((c.chern.get(1, 0, 1) - th.cos() / th.sin()).abs() < 1e-13);
    assert!(c.chern.get(0, 0, 0).abs() < 1e-14);
    // constant curvature 1: g(R(u,v)v, u) = |v|²|u|² − g(v,u)², and R(v,u) = −R(u,v)
    let r = hh_curvature(&m, &v).unwrap();
    let u = [0.9, -0.2];
    let g = |a: &[f64], b: &[f64]| a[0] * b[0] + th.sin().powi(2) * a[1] * b[1];
    let want = g(&v.y, &v.y) * g(&u, &u) - g(&v.y, &u).powi(2);
    assert!((r.flag_form(&u, &u) + want).abs() < 1e-10);
    let ruv = r.apply(&u, &v.y, &v.y);
    assert!((g(ruv.as_slice(), &u) - want).abs() < 1e-10);
}

#[test]
fn euclidean_is_flat() {
    let m = MetricSpec::euclidean(3);
    let v = TangentVector::new(&[0.1, 0.2, 0.3], &[1.0, -1.0, 0.5]);
    let r = hh_curvature(&m, &v).unwrap();
    assert!(max_abs(&r.r) == 0.0);
}
