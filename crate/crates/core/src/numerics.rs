//! Scalar abstraction, compensated summation and log-domain helpers.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Values a [`Sequence`](crate::calculus::Sequence) may carry: reals, complex
/// numbers, or small fixed-dimension real vectors.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    /// Norm used for boundedness checks and residuals.
    fn norm(&self) -> f64;
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(&self) -> f64 {
        Complex64::norm(*self)
    }
    fn is_finite(&self) -> bool {
        Complex64::is_finite(*self)
    }
}

/// Euclidean vector of fixed dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector<const D: usize>(#[serde(with = "serde_arrays")] pub [f64; D]);

mod serde_arrays {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[f64; D], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<[f64; D], De::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"fixed-length array"))
    }
}

impl<const D: usize> Vector<D> {
    fn zip(self, rhs: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = [0.0; D];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(rhs.0.iter())) {
            *o = f(*a, *b);
        }
        Vector(out)
    }
}

impl<const D: usize> Add for Vector<D> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }
}

impl<const D: usize> Sub for Vector<D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }
}

impl<const D: usize> Neg for Vector<D> {
    type Output = Self;
    fn neg(self) -> Self {
        Vector(self.0.map(|a| -a))
    }
}

impl<const D: usize> Mul<f64> for Vector<D> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Vector(self.0.map(|a| a * rhs))
    }
}

impl<const D: usize> Scalar for Vector<D> {
    fn zero() -> Self {
        Vector([0.0; D])
    }
    fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
    fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }
}

/// Kahan compensated accumulator. Works component-wise for any [`Scalar`].
#[derive(Clone, Copy, Debug)]
pub struct KahanSum<T: Scalar> {
    sum: T,
    comp: T,
}

impl<T: Scalar> Default for KahanSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> KahanSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), comp: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum
    }
}

impl<T: Scalar> FromIterator<T> for KahanSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn kahan_sum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<KahanSum<T>>().value()
}

/// `1 - exp(-d)` without cancellation; equals 1 for `d = +inf`.
#[inline]
pub fn one_minus_exp_neg(d: f64) -> f64 {
    -(-d).exp_m1()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Geometric grid of integers in `[lo, hi]` with the given ratio. Always contains
/// both endpoints; consecutive duplicates are removed.
pub fn geometric_grid(lo: u64, hi: u64, ratio: f64) -> Vec<u64> {
    assert!(ratio > 1.0, "grid ratio must exceed 1");
    if hi < lo {
        return Vec::new();
    }
    let mut out = vec![lo];
    let mut x = lo.max(1) as f64;
    loop {
        x *= ratio;
        let n = x.round() as u64;
        if n >= hi {
            break;
        }
        if n > *out.last().unwrap() {
            out.push(n);
        }
    }
    if *out.last().unwrap() != hi {
        out.push(hi);
    }
    out
}

/// Decade probe grid `{10^2, 10^2.5, 10^3, …}` capped at and always including `horizon`.
pub fn log_probe_grid(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut e = 2.0_f64;
    loop {
        let n = 10f64.powf(e).round() as u64;
        if n >= horizon {
            break;
        }
        out.push(n);
        e += 0.5;
    }
    out.push(horizon);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_small_increments() {
        let mut acc = KahanSum::new();
        acc.add(1.0e16_f64);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        assert_eq!(acc.value(), 1.0e16 + 1000.0);
    }

    #[test]
    fn kahan_complex_componentwise() {
        let xs = (0..10_000).map(|_| Complex64::new(0.1, -0.1));
        let s = kahan_sum(xs);
        assert!((s.re - 1000.0).abs() < 1e-10);
        assert!((s.im + 1000.0).abs() < 1e-10);
    }

    #[test]
    fn vector_ops() {
        let a = Vector([3.0, 4.0]);
        assert_eq!(a.norm(), 5.0);
        assert_eq!((a - a), Vector::<2>::zero());
        assert_eq!(a * 2.0, Vector([6.0, 8.0]));
        let s = kahan_sum(std::iter::repeat_n(Vector([0.5, 1.0]), 4));
        assert_eq!(s, Vector([2.0, 4.0]));
    }

    #[test]
    fn log_domain_helpers() {
        assert_eq!(one_minus_exp_neg(f64::INFINITY), 1.0);
        assert!((one_minus_exp_neg(1e-20) - 1e-20).abs() < 1e-35);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn grids_cover_endpoints() {
        let g = geometric_grid(1, 1000, 1.25);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_probe_grid(100_000), vec![100, 316, 1000, 3162, 10_000, 31_623, 100_000]);
    }
}
