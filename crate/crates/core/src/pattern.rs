//! Configurations {a, a+⌊f(n)⌋, …, a+⌊f(n+k)⌋} inside an integer set.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::Sequence;
use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: u64 = 10_000_000;
pub const DEFAULT_THETA: f64 = 1e-2;

/// Subset of [1, n_max] as a bitmask; bit i stands for the integer i.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegerSet {
    n_max: u64,
    words: Vec<u64>,
}

impl IntegerSet {
    pub fn empty(n_max: u64) -> Self {
        Self { n_max, words: vec![0; (n_max as usize + 1).div_ceil(64) + 1] }
    }

    pub fn full(n_max: u64) -> Self {
        let mut s = Self::empty(n_max);
        for i in 1..=n_max {
            s.insert(i);
        }
        s
    }

    pub fn from_predicate(n_max: u64, mut pred: impl FnMut(u64) -> bool) -> Self {
        let mut s = Self::empty(n_max);
        for i in 1..=n_max {
            if pred(i) {
                s.insert(i);
            }
        }
        s
    }

    /// ⋃_j [4^j, 4^j + 2^{2j−1}), j ≥ 1.
    pub fn blocks(n_max: u64) -> Self {
        let mut s = Self::empty(n_max);
        let mut j = 1u32;
        while let Some(start) = 4u64.checked_pow(j).filter(|&x| x <= n_max) {
            let end = (start + (1u64 << (2 * j - 1))).min(n_max + 1);
            for i in start..end {
                s.insert(i);
            }
            j += 1;
        }
        s
    }

    /// Integers congruent to one of `residues` modulo `modulus`.
    pub fn congruence(n_max: u64, modulus: u64, residues: &[u64]) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::Invalid("modulus must be positive".into()));
        }
        let mut mask = vec![false; modulus as usize];
        for &r in residues {
            mask[(r % modulus) as usize] = true;
        }
        Ok(Self::from_predicate(n_max, |i| mask[(i % modulus) as usize]))
    }

    pub fn random(n_max: u64, density: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::Invalid(format!("density {density} is not in [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::from_predicate(n_max, |_| rng.random_bool(density)))
    }

    /// Newline-delimited integers; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path, n_max: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        let mut s = Self::empty(n_max);
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: u64 = line
                .parse()
                .map_err(|_| Error::Invalid(format!("{}:{}: not an integer", path.display(), line_no + 1)))?;
            if v == 0 || v > n_max {
                return Err(Error::Invalid(format!("{}:{}: {v} outside [1, {n_max}]", path.display(), line_no + 1)));
            }
            s.insert(v);
        }
        Ok(s)
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn insert(&mut self, i: u64) {
        assert!((1..=self.n_max).contains(&i), "{i} outside [1, {}]", self.n_max);
        self.words[(i / 64) as usize] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: u64) -> bool {
        i >= 1 && i <= self.n_max && self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / self.n_max as f64
    }

    pub fn is_subset(&self, other: &IntegerSet) -> bool {
        self.n_max <= other.n_max && self.iter().all(|i| other.contains(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (1..=self.n_max).filter(move |&i| self.contains(i))
    }

    /// Members in [lo, hi].
    pub fn count_in(&self, lo: u64, hi: u64) -> u64 {
        (lo.max(1)..=hi.min(self.n_max)).filter(|&i| self.contains(i)).count() as u64
    }

    /// Bits [bit, bit + 64) as one word; positions past the end read as zero.
    fn word_at(&self, bit: u64) -> u64 {
        let w = (bit / 64) as usize;
        let off = bit % 64;
        let lo = self.words.get(w).copied().unwrap_or(0);
        if off == 0 {
            lo
        } else {
            let hi = self.words.get(w + 1).copied().unwrap_or(0);
            (lo >> off) | (hi << (64 - off))
        }
    }
}

/// The shift set {0, ⌊f(n)⌋, …, ⌊f(n+k)⌋}, sorted and deduplicated.
pub fn config_shifts(f: &Sequence<f64>, k: u32, n: u64) -> Result<Vec<u64>> {
    let mut shifts = vec![0u64];
    for i in 0..=k as u64 {
        let v = f.get(n + i)?.floor();
        if v < 0.0 {
            return Err(Error::Invalid(format!("negative shift {v} at n = {}", n + i)));
        }
        shifts.push(v as u64);
    }
    shifts.sort_unstable();
    shifts.dedup();
    Ok(shifts)
}

/// Number of a ∈ [1, n_max − max shift] with a + s ∈ E for every shift s.
fn config_count(e: &IntegerSet, shifts: &[u64]) -> Result<(u64, u64)> {
    let top = *shifts.last().unwrap_or(&0);
    if top >= e.n_max {
        return Err(Error::RangeExhausted { shift: top, n_max: e.n_max });
    }
    let range = e.n_max - top;
    let mut count = 0u64;
    let mut a = 1u64;
    while a <= range {
        let mut acc = u64::MAX;
        for &s in shifts {
            acc &= e.word_at(a + s);
            if acc == 0 {
                break;
            }
        }
        let left = range - a + 1;
        if left < 64 {
            acc &= (1u64 << left) - 1;
        }
        count += acc.count_ones() as u64;
        a += 64;
    }
    Ok((count, range))
}

/// |A(n) ∩ [1, n_max − ⌊f(n+k)⌋]| divided by the range length.
pub fn config_density(e: &IntegerSet, f: &Sequence<f64>, k: u32, n: u64) -> Result<f64> {
    let (count, range) = config_count(e, &config_shifts(f, k, n)?)?;
    Ok(count as f64 / range as f64)
}

/// Largest n with ⌊f(n+k)⌋ < n_max, for increasing f; `None` if even n = start fails.
pub fn max_scannable_n(f: &Sequence<f64>, k: u32, n_max: u64) -> Option<u64> {
    let ok = |n: u64| f.get(n + k as u64).map(|v| v.floor() < n_max as f64).unwrap_or(false);
    let mut lo = f.domain_start().max(1);
    if !ok(lo) {
        return None;
    }
    let mut hi = lo + 1;
    while ok(hi) {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return Some(lo);
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityRow {
    pub n: u64,
    pub density: f64,
}

/// Densities over `n_lo..=n_hi`, computed in parallel.
pub fn density_scan(e: &IntegerSet, f: &Sequence<f64>, k: u32, n_lo: u64, n_hi: u64) -> Result<Vec<DensityRow>> {
    (n_lo..=n_hi)
        .into_par_iter()
        .map(|n| config_density(e, f, k, n).map(|density| DensityRow { n, density }))
        .collect()
}

/// S_θ = {n ∈ [n_lo, n_hi] : config_density > θ}, as a set inside [1, n_hi].
pub fn good_set(e: &IntegerSet, f: &Sequence<f64>, k: u32, theta: f64, n_lo: u64, n_hi: u64) -> Result<IntegerSet> {
    if theta <= 0.0 {
        return Err(Error::Invalid(format!("threshold {theta} must be positive")));
    }
    Ok(good_set_from_scan(&density_scan(e, f, k, n_lo, n_hi)?, theta, n_hi))
}

pub fn good_set_from_scan(rows: &[DensityRow], theta: f64, n_max: u64) -> IntegerSet {
    let mut s = IntegerSet::empty(n_max);
    for r in rows.iter().filter(|r| r.density > theta) {
        s.insert(r.n);
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowHit {
    pub n: u64,
    pub lo: u64,
    pub hi: u64,
    pub clipped: bool,
    pub hit: bool,
    pub window_avg: f64,
}

/// For each N: does S meet [N − ⌈N^{1/2+ε}⌉, N], and what fraction of the window lies in S.
pub fn window_hit_check(s: &IntegerSet, epsilon: f64, n_list: &[u64]) -> Result<Vec<WindowHit>> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::Invalid(format!("epsilon {epsilon} is not in (0, 1/2]")));
    }
    n_list
        .iter()
        .map(|&n| {
            if n == 0 || n > s.n_max {
                return Err(Error::Invalid(format!("N = {n} outside [1, {}]", s.n_max)));
            }
            let len = (n as f64).powf(0.5 + epsilon).ceil() as u64;
            let clipped = len >= n;
            let lo = if clipped { 1 } else { n - len };
            let count = s.count_in(lo, n);
            Ok(WindowHit {
                n,
                lo,
                hi: n,
                clipped,
                hit: count > 0,
                window_avg: count as f64 / (n - lo + 1) as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f15() -> Sequence<f64> {
        Sequence::new("n^1.5", |n| (n as f64).powf(1.5))
    }

    #[test]
    fn full_set_density_one() {
        let e = IntegerSet::full(5000);
        assert_eq!(config_density(&e, &f15(), 1, 20).unwrap(), 1.0);
    }

    #[test]
    fn evens_follow_parity() {
        let e = IntegerSet::congruence(20_000, 2, &[0]).unwrap();
        let f = f15();
        for n in 2..200 {
            let shifts = config_shifts(&f, 1, n).unwrap();
            let d = config_density(&e, &f, 1, n).unwrap();
            if shifts.iter().all(|s| s % 2 == 0) {
                assert!((d - 0.5).abs() < 1e-3, "n = {n}: {d}");
            } else {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn range_exhausted() {
        let e = IntegerSet::full(100);
        assert!(matches!(config_density(&e, &f15(), 1, 30), Err(Error::RangeExhausted { .. })));
    }

    #[test]
    fn blocks_layout() {
        let e = IntegerSet::blocks(100);
        let members: Vec<u64> = e.iter().collect();
        let expected: Vec<u64> = (4..6).chain(16..24).chain(64..96).collect();
        assert_eq!(members, expected);
    }

    #[test]
    fn blocks_good_set_nonempty() {
        let e = IntegerSet::blocks(1 << 20);
        let s = good_set(&e, &f15(), 1, 0.01, 10, 500).unwrap();
        assert!(!s.is_empty());
    }

    #[test]
    fn squares_hit() {
        let s = IntegerSet::from_predicate(20_000, |i| {
            let r = (i as f64).sqrt().round() as u64;
            r * r == i
        });
        let h = &window_hit_check(&s, 0.1, &[10_000]).unwrap()[0];
        assert_eq!(h.lo, 10_000 - 252);
        assert!(h.hit);
    }

    #[test]
    fn full_window_average_and_clip() {
        let s = IntegerSet::full(1000);
        let h = window_hit_check(&s, 0.5, &[5, 900]).unwrap();
        assert!(h[0].clipped && h[0].lo == 1);
        assert!(h.iter().all(|w| w.hit && w.window_avg == 1.0));
        assert!(window_hit_check(&s, 0.6, &[10]).is_err());
    }

    #[test]
    fn scannable_bound() {
        let f = f15();
        let n = max_scannable_n(&f, 1, 10_000).unwrap();
        assert!(((n + 1) as f64).powf(1.5) < 10_000.0);
        assert!(((n + 2) as f64).powf(1.5) >= 10_000.0);
    }

    #[test]
    fn file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "# set\n3\n7\n\n10\n").unwrap();
        let e = IntegerSet::from_file(&p, 10).unwrap();
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![3, 7, 10]);
        std::fs::write(&p, "11\n").unwrap();
        assert!(IntegerSet::from_file(&p, 10).is_err());
    }
}
