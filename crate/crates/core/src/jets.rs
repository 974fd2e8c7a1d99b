//! Truncated Taylor arithmetic over square-zero generators.
//!
//! A `Jet<S, M>` carries `M = 2^g` coefficients indexed by subsets of `g`
//! generators `ε_0..ε_{g-1}` with `ε_i² = 0`. The coefficient at bitmask `s`
//! is the mixed partial along the directions seeded into the generators of
//! `s`. Coefficients are themselves scalars, so jets nest: a `Jet<Jet<f64, 2>, 8>`
//! holds three inner generators and one outer one.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Maximum number of generators over the whole nesting.
pub const MAX_GENERATORS: usize = 4;

/// Scalar field the geometry code is generic over.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    /// Real value part (coefficient of the empty subset, recursively).
    fn re(&self) -> f64;
    fn scale(self, k: f64) -> Self;
    fn try_recip(self) -> Result<Self>;
    fn try_sqrt(self) -> Result<Self>;
    fn try_ln(self) -> Result<Self>;
    fn try_powf(self, p: f64) -> Result<Self>;
    fn powi(self, n: i32) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn try_div(self, rhs: Self) -> Result<Self> {
        Ok(self * rhs.try_recip()?)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn try_recip(self) -> Result<Self> {
        if self == 0.0 {
            return Err(Error::DivisionByZero);
        }
        Ok(1.0 / self)
    }
    fn try_sqrt(self) -> Result<Self> {
        if !(self > 0.0) {
            return Err(Error::NonPositiveSqrt(self));
        }
        Ok(self.sqrt())
    }
    fn try_ln(self) -> Result<Self> {
        if !(self > 0.0) {
            return Err(Error::NonPositiveLog(self));
        }
        Ok(self.ln())
    }
    fn try_powf(self, p: f64) -> Result<Self> {
        if !(self > 0.0) {
            return Err(Error::NonPositivePow(self));
        }
        Ok(self.powf(p))
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// Truncated Taylor number with `M` coefficients (`M` a power of two, at most 16).
#[derive(Clone, Copy, PartialEq)]
pub struct Jet<S: Scalar, const M: usize> {
    pub c: [S; M],
}

/// Flat jet over the full four generators.
pub type Jet4 = Jet<f64, 16>;

impl<S: Scalar, const M: usize> fmt::Debug for Jet<S, M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.c.iter()).finish()
    }
}

impl<S: Scalar, const M: usize> Jet<S, M> {
    const GENS: usize = M.trailing_zeros() as usize;

    pub fn constant(v: S) -> Self {
        let mut c = [S::zero(); M];
        c[0] = v;
        Jet { c }
    }

    /// `v + Σ ε_g` over the generators listed in `mask`.
    pub fn seeded(v: S, mask: usize) -> Self {
        let mut j = Self::constant(v);
        for g in 0..Self::GENS {
            if mask & (1 << g) != 0 {
                j.c[1 << g] = S::one();
            }
        }
        j
    }

    pub fn value(&self) -> S {
        self.c[0]
    }

    pub fn generators() -> usize {
        Self::GENS
    }

    pub fn coeff(&self, mask: usize) -> Result<S> {
        if mask >= M {
            return Err(Error::UnknownGenerator(mask));
        }
        Ok(self.c[mask])
    }

    /// Coefficient-shift: the jet over the generators outside `mask`
    /// (renumbered compactly) whose coefficients are those of `mask ∪ rest`.
    pub fn partial<const K: usize>(&self, mask: usize) -> Jet<S, K> {
        debug_assert!(mask < M);
        let free: Vec<usize> = (0..Self::GENS).filter(|g| mask & (1 << g) == 0).collect();
        debug_assert_eq!(1 << free.len(), K);
        let mut out = Jet::<S, K>::constant(S::zero());
        for r in 0..K {
            let mut full = mask;
            for (bit, g) in free.iter().enumerate() {
                if r & (1 << bit) != 0 {
                    full |= 1 << g;
                }
            }
            out.c[r] = self.c[full];
        }
        out
    }

    fn nilpotent(&self) -> Self {
        let mut d = *self;
        d.c[0] = S::zero();
        d
    }

    /// `f(value + δ) = Σ_k f^(k)(value) δ^k / k!`; `derivs[k] = f^(k)(value)`.
    fn compose(&self, derivs: &[S]) -> Self {
        let d = self.nilpotent();
        let mut out = Self::constant(derivs[0]);
        let mut pow = Self::constant(S::one());
        let mut fact = 1.0;
        for (k, dk) in derivs.iter().enumerate().skip(1).take(Self::GENS) {
            pow *= d;
            fact *= k as f64;
            let w = dk.scale(1.0 / fact);
            for s in 1..M {
                out.c[s] += pow.c[s] * w;
            }
        }
        out
    }

    fn order(&self) -> usize {
        Self::GENS
    }
}

impl<S: Scalar, const M: usize> Add for Jet<S, M> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for i in 0..M {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl<S: Scalar, const M: usize> Sub for Jet<S, M> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for i in 0..M {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl<S: Scalar, const M: usize> Neg for Jet<S, M> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for i in 0..M {
            self.c[i] = -self.c[i];
        }
        self
    }
}

impl<S: Scalar, const M: usize> Mul for Jet<S, M> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        // subset convolution
        let mut out = [S::zero(); M];
        for (s, slot) in out.iter_mut().enumerate() {
            let mut acc = self.c[0] * o.c[s];
            let mut a = s;
            while a != 0 {
                acc += self.c[a] * o.c[s ^ a];
                a = (a - 1) & s;
            }
            *slot = acc;
        }
        Jet { c: out }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl<S: Scalar, const M: usize> Div for Jet<S, M> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        match o.try_recip() {
            Ok(r) => self * r,
            Err(_) => Self::constant(S::from_f64(f64::NAN)),
        }
    }
}

impl<S: Scalar, const M: usize> AddAssign for Jet<S, M> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar, const M: usize> SubAssign for Jet<S, M> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar, const M: usize> MulAssign for Jet<S, M> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar, const M: usize> Scalar for Jet<S, M> {
    fn from_f64(v: f64) -> Self {
        Self::constant(S::from_f64(v))
    }

    fn re(&self) -> f64 {
        self.c[0].re()
    }

    fn scale(mut self, k: f64) -> Self {
        for c in self.c.iter_mut() {
            *c = c.scale(k);
        }
        self
    }

    fn try_recip(self) -> Result<Self> {
        let x = self.c[0];
        let r = x.try_recip()?;
        let mut d = [S::zero(); 5];
        d[0] = r;
        let mut p = r;
        let mut k = 1.0;
        for (i, slot) in d.iter_mut().enumerate().skip(1).take(self.order()) {
            p *= r;
            k *= -(i as f64);
            *slot = p.scale(k);
        }
        Ok(self.compose(&d[..=self.order()]))
    }

    fn try_sqrt(self) -> Result<Self> {
        self.try_powf(0.5)
    }

    fn try_ln(self) -> Result<Self> {
        let x = self.c[0];
        let l = x.try_ln()?;
        let r = x.try_recip()?;
        let mut d = [S::zero(); 5];
        d[0] = l;
        let mut p = S::one();
        let mut k = 1.0;
        for (i, slot) in d.iter_mut().enumerate().skip(1).take(self.order()) {
            p *= r;
            *slot = p.scale(k);
            k *= -(i as f64);
        }
        Ok(self.compose(&d[..=self.order()]))
    }

    fn try_powf(self, p: f64) -> Result<Self> {
        let x = self.c[0];
        let r = x.try_recip()?;
        let base = x.try_powf(p)?;
        let mut d = [S::zero(); 5];
        d[0] = base;
        let mut cur = base;
        let mut fall = 1.0;
        for (i, slot) in d.iter_mut().enumerate().skip(1).take(self.order()) {
            fall *= p - (i as f64 - 1.0);
            cur *= r;
            *slot = cur.scale(fall);
        }
        Ok(self.compose(&d[..=self.order()]))
    }

    fn powi(self, n: i32) -> Self {
        let x = self.c[0];
        let mut d = [S::zero(); 5];
        let mut fall = 1.0;
        for (i, slot) in d.iter_mut().enumerate().take(self.order() + 1) {
            if i > 0 {
                fall *= n as f64 - (i as f64 - 1.0);
            }
            if fall != 0.0 {
                *slot = x.powi(n - i as i32).scale(fall);
            }
        }
        self.compose(&d[..=self.order()])
    }

    fn sin(self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let d = [s, c, -s, -c, s];
        self.compose(&d[..=self.order()])
    }

    fn cos(self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let d = [c, -s, -c, s, c];
        self.compose(&d[..=self.order()])
    }

    fn exp(self) -> Self {
        let e = self.c[0].exp();
        let d = [e; 5];
        self.compose(&d[..=self.order()])
    }
}

/// Lift a point into flat jets, seeding `x[coord] += ε_gen` for each direction.
pub fn seed(x: &[f64], directions: &[(usize, usize)]) -> Result<Vec<Jet4>> {
    let mut gens: Vec<usize> = directions.iter().map(|d| d.1).collect();
    gens.sort_unstable();
    gens.dedup();
    if let Some(&g) = gens.iter().find(|&&g| g >= MAX_GENERATORS) {
        return Err(Error::Capacity(g + 1));
    }
    let mut out: Vec<Jet4> = x.iter().map(|&v| Jet::constant(v)).collect();
    for &(i, g) in directions {
        let slot = out
            .get_mut(i)
            .ok_or_else(|| Error::InvalidInput(format!("seed index {i} out of range")))?;
        slot.c[1 << g] += 1.0;
    }
    Ok(out)
}

/// Coefficient for the generator subset `gens`.
pub fn extract_partial(j: &Jet4, gens: &[usize]) -> Result<f64> {
    let mut mask = 0;
    for &g in gens {
        if g >= MAX_GENERATORS {
            return Err(Error::UnknownGenerator(g));
        }
        mask |= 1 << g;
    }
    Ok(j.c[mask])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_first_order() {
        let x = seed(&[3.0], &[(0, 0)]).unwrap();
        let y = x[0] * x[0];
        assert_eq!(y.c[0], 9.0);
        assert_eq!(y.c[1], 6.0);
    }

    #[test]
    fn multilinear_fourth_partial() {
        let x = seed(&[1.5, -2.0, 0.5, 3.0], &[(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap();
        let p = x[0] * x[1] * x[2] * x[3];
        assert_eq!(extract_partial(&p, &[0, 1, 2, 3]).unwrap(), 1.0);
    }

    #[test]
    fn no_generators_is_evaluation() {
        let x = seed(&[2.0, 5.0], &[]).unwrap();
        let p = x[0] * x[1] + x[0];
        assert_eq!(extract_partial(&p, &[]).unwrap(), 12.0);
        assert!(p.c[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn capacity_error() {
        assert!(matches!(seed(&[1.0], &[(0, 4)]), Err(Error::Capacity(_))));
        assert!(extract_partial(&Jet4::constant(1.0), &[7]).is_err());
    }

    #[test]
    fn sqrt_and_sin() {
        let x = seed(&[4.0], &[(0, 0)]).unwrap()[0];
        let r = x.try_sqrt().unwrap();
        assert!((r.c[0] - 2.0).abs() < 1e-15 && (r.c[1] - 0.25).abs() < 1e-15);
        let z = seed(&[0.0], &[(0, 0)]).unwrap()[0].sin();
        assert_eq!(z.c[0], 0.0);
        assert_eq!(z.c[1], 1.0);
    }

    #[test]
    fn recip_mixed_against_finite_differences() {
        let x = seed(&[2.0], &[(0, 0), (0, 1)]).unwrap()[0];
        let r = x.try_recip().unwrap();
        // second derivative of 1/x by central differences
        let f = |t: f64| 1.0 / t;
        let h = 1e-4;
        let fd = (f(2.0 + h) - 2.0 * f(2.0) + f(2.0 - h)) / (h * h);
        assert!((r.c[3] - 0.25).abs() < 1e-15);
        assert!((r.c[3] - fd).abs() < 1e-6);
    }

    #[test]
    fn zero_division_and_bad_sqrt() {
        let z = Jet4::constant(0.0);
        assert!(z.try_recip().is_err());
        assert!(Jet4::constant(-1.0).try_sqrt().is_err());
        assert!(z.try_sqrt().is_err());
    }

    #[test]
    fn degree_three_has_no_fourth_partial() {
        let x = seed(&[0.7], &[(0, 0), (0, 1), (0, 2), (0, 3)]).unwrap()[0];
        let p = x * x * x - x.scale(2.0);
        assert!(p.c[15].abs() < 1e-13);
        assert!((p.c[7] - 6.0).abs() < 1e-13);
    }

    #[test]
    fn euclidean_hessian_two_subset() {
        for i in 0..2 {
            for j in 0..2 {
                let x = seed(&[0.3, -1.1], &[(i, 0), (j, 1)]).unwrap();
                let l = x[0] * x[0] + x[1] * x[1];
                let expect = if i == j { 2.0 } else { 0.0 };
                assert!((extract_partial(&l, &[0, 1]).unwrap() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn nested_matches_flat() {
        type Inner = Jet<f64, 2>;
        let a = Jet::<Inner, 8>::seeded(Inner::seeded(0.4, 1), 0b011);
        let b = Jet::<Inner, 8>::seeded(Inner::constant(1.3), 0b100);
        let n = (a * b).sin() * a;
        let fa = Jet4::seeded(0.4, 0b1011);
        let fb = Jet4::seeded(1.3, 0b0100);
        let f = (fa * fb).sin() * fa;
        for s in 0..8 {
            for t in 0..2 {
                assert!((n.c[s].c[t] - f.c[s | (t << 3)]).abs() < 1e-14);
            }
        }
        let p: Jet<f64, 2> = f.partial(0b0111);
        assert_eq!(p.c[1], f.c[15]);
    }

    #[test]
    fn powi_negative_base() {
        let x = Jet::<f64, 4>::seeded(-2.0, 0b11);
        let y = x.powi(3);
        assert_eq!(y.c[0], -8.0);
        assert_eq!(y.c[1], 12.0);
        assert_eq!(y.c[3], -12.0);
        let z = Jet::<f64, 4>::seeded(0.0, 0b11).powi(2);
        assert_eq!(z.c[3], 2.0);
    }
}
