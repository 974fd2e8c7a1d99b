#![allow(dead_code, clippy::needless_range_loop)]

use finsler_morse::metric::{MetricSpec, OneForm, SymField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `h = I + ε S(x)` with quadratic polynomial entries.
pub fn perturbed_h(r: &mut ChaCha8Rng, n: usize, eps: f64) -> SymField {
    let mut rows = vec![vec![String::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            let mut e = format!("{}", if i == j { 1.0 } else { 0.0 });
            e += &format!(" + ({:e})", eps * r.random_range(-1.0..1.0));
            for a in 0..n {
                e += &format!(" + ({:e})*x{}", eps * r.random_range(-1.0..1.0), a + 1);
                for b in a..n {
                    e += &format!(
                        " + ({:e})*x{}*x{}",
                        eps * r.random_range(-1.0..1.0),
                        a + 1,
                        b + 1
                    );
                }
            }
            rows[i][j] = e.clone();
            rows[j][i] = e;
        }
    }
    SymField::parse(n, &rows).unwrap()
}

pub fn random_randers(seed: u64, n: usize) -> MetricSpec {
    let mut r = rng(seed);
    let h = perturbed_h(&mut r, n, 0.03);
    let w: Vec<f64> = (0..n).map(|_| 0.15 * r.random_range(-1.0..1.0)).collect();
    MetricSpec::randers(h, OneForm::constant(&w))
}

pub fn random_riemannian(seed: u64, n: usize) -> MetricSpec {
    let mut r = rng(seed);
    MetricSpec::riemannian(perturbed_h(&mut r, n, 0.03))
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-half..half)).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}
