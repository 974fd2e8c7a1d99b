//! Symmetric band matrices with an unpivoted LDLᵀ factorization, used for
//! Sylvester inertia counts and shifted solves.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    /// `a[i (bw + 1) + d] = A[i, i − d]`
    a: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand {
            n,
            bw,
            a: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.a[i * (self.bw + 1) + (i - j)]
        }
    }

    /// Adds `v` to `A[i, j]` (and, implicitly, `A[j, i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry outside the band");
        self.a[i * (self.bw + 1) + (i - j)] += v;
    }

    /// `self − σ other` for matrices of the same shape.
    pub fn shifted(&self, other: &SymBand, sigma: f64) -> SymBand {
        assert!(self.n == other.n && self.bw == other.bw);
        SymBand {
            n: self.n,
            bw: self.bw,
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(x, y)| x - sigma * y)
                .collect(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let v = self.a[i * (self.bw + 1) + (i - j)];
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn ldlt(&self) -> BandLdlt {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let tiny = 1e-14 * scale;
        let mut l = vec![0.0; n * w];
        let mut d = vec![0.0; n];
        let mut tiny_pivots = 0;
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut djj = self.a[j * w];
            for k in lo..j {
                let ljk = l[j * w + (j - k)];
                djj -= ljk * ljk * d[k];
            }
            if djj.abs() < tiny {
                tiny_pivots += 1;
                djj = if djj < 0.0 { -tiny } else { tiny };
            }
            d[j] = djj;
            for i in j + 1..(j + bw + 1).min(n) {
                let lo_i = i.saturating_sub(bw);
                let mut s = self.a[i * w + (i - j)];
                for k in lo_i.max(lo)..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)] * d[k];
                }
                l[i * w + (i - j)] = s / djj;
            }
        }
        BandLdlt {
            n,
            bw,
            l,
            d,
            tiny_pivots,
        }
    }

    /// Number of negative, (numerically) zero and positive eigenvalues.
    pub fn inertia(&self) -> Inertia {
        self.ldlt().inertia()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone)]
pub struct BandLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
    tiny_pivots: usize,
}

impl BandLdlt {
    pub fn inertia(&self) -> Inertia {
        let negative = self.d.iter().filter(|&&x| x < 0.0).count();
        Inertia {
            negative,
            zero: self.tiny_pivots,
            positive: self.n - negative,
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, w) = (self.n, self.bw + 1);
        let mut x = b.clone();
        for i in 0..n {
            let lo = i.saturating_sub(self.bw);
            for k in lo..i {
                x[i] -= self.l[i * w + (i - k)] * x[k];
            }
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            for j in i + 1..(i + self.bw + 1).min(n) {
                x[i] -= self.l[j * w + (j - i)] * x[j];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, bw: usize) -> SymBand {
        let mut a = SymBand::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, (i as f64 * 0.37).sin() * 3.0);
            for d in 1..=bw.min(i) {
                a.add(i, i - d, ((i * 7 + d) as f64).cos());
            }
        }
        a
    }

    #[test]
    fn inertia_matches_dense_spectrum() {
        let a = sample(40, 3);
        let eig = a.to_dense().symmetric_eigen().eigenvalues;
        let neg = eig.iter().filter(|&&x| x < 0.0).count();
        assert_eq!(a.inertia().negative, neg);
    }

    #[test]
    fn solve_and_multiply() {
        let mut a = sample(30, 4);
        for i in 0..30 {
            a.add(i, i, 12.0);
        }
        let b = DVector::from_fn(30, |i, _| (i as f64).sqrt());
        let x = a.ldlt().solve(&b);
        assert!((a.mul_vec(&x) - &b).norm() < 1e-8 * b.norm());
        assert!((a.to_dense() * &x - a.mul_vec(&x)).norm() < 1e-10);
    }
}
