use finsler_morse::jets::{extract_partial, seed, Jet4, Scalar};
use proptest::prelude::*;

/// Monomial `c · x0^a x1^b x2^d`.
type Mono = (f64, [u32; 3]);

fn eval(poly: &[Mono], x: &[Jet4]) -> Jet4 {
    let mut acc = Jet4::constant(0.0);
    for (c, e) in poly {
        let mut t = Jet4::constant(*c);
        for (xi, &k) in x.iter().zip(e) {
            t *= xi.powi(k as i32);
        }
        acc += t;
    }
    acc
}

/// Mixed partial of a polynomial along `coords`, by falling factorials.
fn analytic(poly: &[Mono], coords: &[usize], x: &[f64]) -> f64 {
    poly.iter()
        .map(|(c, e)| {
            let mut e = *e;
            let mut k = *c;
            for &i in coords {
                if e[i] == 0 {
                    return 0.0;
                }
                k *= e[i] as f64;
                e[i] -= 1;
            }
            k * x
                .iter()
                .zip(&e)
                .map(|(xi, &p)| xi.powi(p as i32))
                .product::<f64>()
        })
        .sum()
}

fn mono() -> impl Strategy<Value = Mono> {
    (-2.0..2.0f64, 0u32..=4, 0u32..=4, 0u32..=4)
        .prop_filter("degree at most 4", |(_, a, b, d)| a + b + d <= 4)
        .prop_map(|(c, a, b, d)| (c, [a, b, d]))
}

proptest! {
    #[test]
    fn polynomial_partials_exact(
        poly in prop::collection::vec(mono(), 1..8),
        x in prop::collection::vec(-1.5..1.5f64, 3),
        coords in prop::collection::vec(0usize..3, 0..=4),
    ) {
        let dirs: Vec<(usize, usize)> = coords.iter().enumerate().map(|(g, &i)| (i, g)).collect();
        let xs = seed(&x, &dirs).unwrap();
        let gens: Vec<usize> = (0..coords.len()).collect();
        let got = extract_partial(&eval(&poly, &xs), &gens).unwrap();
        let want = analytic(&poly, &coords, &x);
        let scale = poly.iter().map(|m| m.0.abs()).sum::<f64>() * 100.0;
        prop_assert!((got - want).abs() <= 1e-13 * scale, "{got} vs {want}");
    }

    #[test]
    fn repeated_direction_gives_pure_second(x in -2.0..2.0f64) {
        // f = sin(x) exp(x): f'' = 2 cos(x) exp(x)
        let xs = seed(&[x], &[(0, 0), (0, 1)]).unwrap();
        let f = xs[0].sin() * xs[0].exp();
        let got = extract_partial(&f, &[0, 1]).unwrap();
        prop_assert!((got - 2.0 * x.cos() * x.exp()).abs() < 1e-12 * (1.0 + x.exp()));
    }

    #[test]
    fn sqrt_ln_first_and_second(x in 0.2..3.0f64) {
        // f = sqrt(x) ln(x)
        let xs = seed(&[x], &[(0, 0), (0, 1)]).unwrap();
        let f = xs[0].try_sqrt().unwrap() * xs[0].try_ln().unwrap();
        let d1 = (0.5 * x.ln() + 1.0) / x.sqrt();
        let d2 = -x.ln() / (4.0 * x.powf(1.5));
        prop_assert!((extract_partial(&f, &[0]).unwrap() - d1).abs() < 1e-12);
        prop_assert!((extract_partial(&f, &[0, 1]).unwrap() - d2).abs() < 1e-12);
    }
}

#[test]
fn capacity_limits() {
    assert!(seed(&[1.0], &[(0, 4)]).is_err());
    let xs = seed(&[1.0], &[]).unwrap();
    assert!(extract_partial(&xs[0], &[5]).is_err());
    assert_eq!(extract_partial(&xs[0], &[]).unwrap(), 1.0);
}
