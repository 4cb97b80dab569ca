//! Sequences on ℕ and the backward discrete derivative.
//!
//! Δf(n) = f(n) − f(n−1) for n above the first index and Δf(start) = f(start).
//! That boundary rule is the same as extending `f` by zero to the left, which is
//! what makes Σ_{m ≤ n} Δf(m) telescope to f(n) and what [`poly_delta`] relies on
//! when it expands p(Δ) into shifted values.

use std::collections::HashMap;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, RwLock};

use lru::LruCache;

use crate::error::{Error, Result};
use crate::numerics::Scalar;

type EvalFn<T> = dyn Fn(u64) -> T + Send + Sync;

enum Memo<T> {
    None,
    Unbounded(RwLock<HashMap<u64, T>>),
    Lru(Mutex<LruCache<u64, T>>),
}

impl<T: Scalar> Memo<T> {
    fn get(&self, n: u64) -> Option<T> {
        match self {
            Memo::None => None,
            Memo::Unbounded(m) => m.read().expect("memo poisoned").get(&n).copied(),
            Memo::Lru(m) => m.lock().expect("memo poisoned").get(&n).copied(),
        }
    }

    fn insert(&self, n: u64, v: T) {
        match self {
            Memo::None => {}
            Memo::Unbounded(m) => {
                m.write().expect("memo poisoned").insert(n, v);
            }
            Memo::Lru(m) => {
                m.lock().expect("memo poisoned").put(n, v);
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Memo::None => 0,
            Memo::Unbounded(m) => m.read().expect("memo poisoned").len(),
            Memo::Lru(m) => m.lock().expect("memo poisoned").len(),
        }
    }
}

struct Inner<T> {
    name: String,
    eval: Box<EvalFn<T>>,
    memo: Memo<T>,
    domain_start: u64,
    bound: Option<f64>,
}

/// A lazily evaluated, memoized map `n ↦ x_n` on `[domain_start, ∞)`.
///
/// Cloning is cheap and clones share the memo table. The evaluation closure
/// must be deterministic; concurrent `get` calls are allowed.
pub struct Sequence<T: Scalar> {
    inner: Arc<Inner<T>>,
}

impl<T: Scalar> Clone for Sequence<T> {
    fn clone(&self) -> Self {
        Self { inner: Arc::clone(&self.inner) }
    }
}

impl<T: Scalar> fmt::Debug for Sequence<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sequence")
            .field("name", &self.inner.name)
            .field("domain_start", &self.inner.domain_start)
            .field("bound", &self.inner.bound)
            .finish()
    }
}

pub struct SequenceBuilder<T: Scalar> {
    name: String,
    eval: Box<EvalFn<T>>,
    domain_start: u64,
    bound: Option<f64>,
    cache: CachePolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CachePolicy {
    None,
    Unbounded,
    Lru(usize),
}

impl<T: Scalar> SequenceBuilder<T> {
    pub fn domain_start(mut self, start: u64) -> Self {
        assert!(start >= 1, "sequences are indexed from 1");
        self.domain_start = start;
        self
    }

    /// Declares `‖x_n‖ ≤ bound`; checked on every access in debug builds.
    pub fn bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn cache(mut self, policy: CachePolicy) -> Self {
        self.cache = policy;
        self
    }

    pub fn build(self) -> Sequence<T> {
        let memo = match self.cache {
            CachePolicy::None => Memo::None,
            CachePolicy::Unbounded => Memo::Unbounded(RwLock::new(HashMap::new())),
            CachePolicy::Lru(cap) => {
                let cap = NonZeroUsize::new(cap).expect("LRU capacity must be positive");
                Memo::Lru(Mutex::new(LruCache::new(cap)))
            }
        };
        Sequence {
            inner: Arc::new(Inner {
                name: self.name,
                eval: self.eval,
                memo,
                domain_start: self.domain_start,
                bound: self.bound,
            }),
        }
    }
}

impl<T: Scalar> Sequence<T> {
    pub fn builder(name: impl Into<String>, eval: impl Fn(u64) -> T + Send + Sync + 'static) -> SequenceBuilder<T> {
        SequenceBuilder {
            name: name.into(),
            eval: Box::new(eval),
            domain_start: 1,
            bound: None,
            cache: CachePolicy::Unbounded,
        }
    }

    /// Unbounded-memo sequence starting at 1.
    pub fn new(name: impl Into<String>, eval: impl Fn(u64) -> T + Send + Sync + 'static) -> Self {
        Self::builder(name, eval).build()
    }

    pub fn constant(c: T) -> Self {
        Self::builder("constant", move |_| c).bound(c.norm()).cache(CachePolicy::None).build()
    }

    /// Sequence backed by explicit values `x_1, …, x_len`; zero past the end.
    pub fn from_values(name: impl Into<String>, values: Vec<T>) -> Self {
        let bound = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let values = Arc::new(values);
        Self::builder(name, move |n| values.get((n - 1) as usize).copied().unwrap_or_else(T::zero))
            .bound(bound)
            .cache(CachePolicy::None)
            .build()
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn domain_start(&self) -> u64 {
        self.inner.domain_start
    }

    pub fn bound(&self) -> Option<f64> {
        self.inner.bound
    }

    pub fn cached_len(&self) -> usize {
        self.inner.memo.len()
    }

    pub fn get(&self, n: u64) -> Result<T> {
        if n == 0 || n < self.inner.domain_start {
            return Err(Error::Domain { n, start: self.inner.domain_start });
        }
        Ok(self.eval_checked(n))
    }

    /// Like [`get`](Self::get) but returns zero below the domain (zero extension).
    pub fn get_or_zero(&self, n: u64) -> T {
        if n == 0 || n < self.inner.domain_start {
            T::zero()
        } else {
            self.eval_checked(n)
        }
    }

    fn eval_checked(&self, n: u64) -> T {
        if let Some(v) = self.inner.memo.get(n) {
            return v;
        }
        let v = (self.inner.eval)(n);
        if let Some(b) = self.inner.bound {
            debug_assert!(
                v.norm() <= b * (1.0 + 1e-12),
                "sequence `{}` exceeds its bound {b} at n = {n}: {v:?}",
                self.inner.name
            );
        }
        self.inner.memo.insert(n, v);
        v
    }

    /// `x_lo, …, x_hi` (inclusive), evaluated directly without touching the memo table.
    pub fn values(&self, lo: u64, hi: u64) -> Result<Vec<T>> {
        if lo == 0 || lo < self.inner.domain_start {
            return Err(Error::Domain { n: lo, start: self.inner.domain_start });
        }
        Ok((lo..=hi)
            .map(|n| match self.inner.memo.get(n) {
                Some(v) => v,
                None => (self.inner.eval)(n),
            })
            .collect())
    }

    /// Pointwise map into a new (unmemoized) sequence with the same domain.
    pub fn map<U: Scalar>(&self, name: impl Into<String>, f: impl Fn(T) -> U + Send + Sync + 'static) -> Sequence<U> {
        let this = self.clone();
        Sequence::builder(name, move |n| f(this.get_or_zero(n)))
            .domain_start(self.domain_start())
            .cache(CachePolicy::None)
            .build()
    }

    /// `α·self + β·other` on the later of the two domains.
    pub fn linear_combination(&self, alpha: f64, other: &Sequence<T>, beta: f64) -> Sequence<T> {
        let (a, b) = (self.clone(), other.clone());
        let start = self.domain_start().max(other.domain_start());
        let mut builder = Sequence::builder(format!("lincomb({}, {})", a.name(), b.name()), move |n| {
            a.get_or_zero(n) * alpha + b.get_or_zero(n) * beta
        })
        .domain_start(start)
        .cache(CachePolicy::None);
        if let (Some(ba), Some(bb)) = (self.bound(), other.bound()) {
            builder = builder.bound(alpha.abs() * ba + beta.abs() * bb);
        }
        builder.build()
    }
}

/// Integer polynomial `a_0 + a_1 x + … + a_m x^m`; the zero polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct IntPolynomial {
    coeffs: Vec<i64>,
}

impl IntPolynomial {
    pub fn new(mut coeffs: Vec<i64>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: i64) -> Self {
        Self::new(vec![c])
    }

    pub fn x() -> Self {
        Self::new(vec![0, 1])
    }

    /// `(1 − x)^k`. Applied to Δ this is the backward shift by `k`.
    pub fn one_minus_x_pow(k: u32) -> Self {
        let coeffs = (0..=k)
            .map(|j| {
                let b = binomial(k as u64, j as u64) as i64;
                if j % 2 == 0 {
                    b
                } else {
                    -b
                }
            })
            .collect();
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|i| self.coeffs.get(i).copied().unwrap_or(0) + other.coeffs.get(i).copied().unwrap_or(0))
            .collect();
        Self::new(coeffs)
    }

    /// Coefficients `b_j` with `p(Δ)f(n) = Σ_j b_j f(n−j)`, from Δ = 1 − E⁻¹.
    pub fn shift_expansion(&self) -> Vec<i128> {
        let mut b = vec![0i128; self.coeffs.len()];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, bj) in b.iter_mut().enumerate().take(i + 1) {
                let c = binomial(i as u64, j as u64) as i128;
                let term = a as i128 * c;
                *bj += if j % 2 == 0 { term } else { -term };
            }
        }
        b
    }
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &a) in self.coeffs.iter().enumerate().rev() {
            if a == 0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if a < 0 { '-' } else { '+' })?;
            } else if a < 0 {
                write!(f, "-")?;
            }
            first = false;
            let m = a.unsigned_abs();
            match (i, m) {
                (0, _) => write!(f, "{m}")?,
                (1, 1) => write!(f, "x")?,
                (1, _) => write!(f, "{m}x")?,
                (_, 1) => write!(f, "x^{i}")?,
                _ => write!(f, "{m}x^{i}")?,
            }
        }
        Ok(())
    }
}

pub(crate) fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Δf(n).
pub fn delta<T: Scalar>(f: &Sequence<T>, n: u64) -> Result<T> {
    let start = f.domain_start();
    let here = f.get(n)?;
    if n == start {
        Ok(here)
    } else {
        Ok(here - f.get(n - 1)?)
    }
}

/// Δ^ℓ f as a memoized sequence; Δ⁰f is `f` itself.
pub fn delta_iter<T: Scalar>(f: &Sequence<T>, ell: usize) -> Sequence<T> {
    let mut current = f.clone();
    for level in 1..=ell {
        let prev = current.clone();
        let start = prev.domain_start();
        current = Sequence::builder(format!("Δ^{level} {}", f.name()), move |n| {
            // n ≥ start is guaranteed by Sequence::get.
            delta(&prev, n).expect("domain checked by caller")
        })
        .domain_start(start)
        .build();
    }
    current
}

/// p(Δ)f, evaluated as the exact integer combination Σ_j b_j f(n−j) with f
/// extended by zero to the left. For `p = (1−x)^k` this returns f(n−k) with
/// no rounding at all.
pub fn poly_delta<T: Scalar>(p: &IntPolynomial, f: &Sequence<T>) -> Sequence<T> {
    let b: Vec<f64> = p.shift_expansion().into_iter().map(|c| c as f64).collect();
    let f = f.clone();
    let start = f.domain_start();
    Sequence::builder(format!("({p})(Δ) {}", f.name()), move |n| {
        let mut acc = crate::numerics::KahanSum::new();
        for (j, &c) in b.iter().enumerate() {
            if c == 0.0 || (j as u64) >= n {
                continue;
            }
            acc.add(f.get_or_zero(n - j as u64) * c);
        }
        acc.value()
    })
    .domain_start(start)
    .build()
}

/// n ↦ Σ_j C(k,j)(−1)^j Δ^j f(n), which equals f(n−k). Defined for
/// n − k ≥ domain_start; evaluation below that is a domain error.
pub fn shift_via_delta<T: Scalar>(f: &Sequence<T>, k: u32) -> Sequence<T> {
    if k == 0 {
        return f.clone();
    }
    let levels: Vec<(f64, Sequence<T>)> = (0..=k as usize)
        .map(|j| {
            let c = binomial(k as u64, j as u64) as f64;
            (if j % 2 == 0 { c } else { -c }, delta_iter(f, j))
        })
        .collect();
    let start = f.domain_start() + k as u64;
    Sequence::builder(format!("shift_{k} {}", f.name()), move |n| {
        let mut acc = crate::numerics::KahanSum::new();
        for (c, level) in &levels {
            acc.add(level.get_or_zero(n) * *c);
        }
        acc.value()
    })
    .domain_start(start)
    .build()
}
