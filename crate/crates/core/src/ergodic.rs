//! Circle rotations and cyclic shifts with exact multi-shift correlations
//! μ(A ∩ T^{−m₁}A ∩ … ∩ T^{−m_k}A).

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::averaging::{uniform_avg_estimate, weighted_avg};
use crate::calculus::{poly_delta, CachePolicy, IntPolynomial, Sequence};
use crate::error::{Error, Result};
use crate::weights::{builtin, classify_F, weight_from_f};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MpSystem {
    /// x ↦ x + α mod 1 on [0, 1).
    Rotation { alpha: f64 },
    /// x ↦ x + step mod q on ℤ_q.
    Cyclic { q: u32, step: u32 },
}

pub const DEFAULT_ALPHA: f64 = std::f64::consts::SQRT_2 - 1.0;

impl MpSystem {
    /// Rotation by α, refusing α whose continued fraction terminates within 12 steps.
    pub fn rotation(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Invalid(format!("rotation number {alpha} is not in (0, 1)")));
        }
        let mut x = alpha;
        for depth in 0..12 {
            if x < 1e-9 {
                return Err(Error::Invalid(format!(
                    "rotation number {alpha} looks rational (continued fraction ends at depth {depth})"
                )));
            }
            let inv = 1.0 / x;
            x = inv - inv.floor();
        }
        Ok(MpSystem::Rotation { alpha })
    }

    pub fn cyclic(q: u32, step: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::Invalid("cyclic group order must be positive".into()));
        }
        Ok(MpSystem::Cyclic { q, step: step % q })
    }

    pub fn description(&self) -> String {
        match self {
            MpSystem::Rotation { alpha } => format!("rotation by {alpha}"),
            MpSystem::Cyclic { q, step } => format!("Z/{q} shifted by {step}"),
        }
    }
}

/// m·α mod 1 using an exact product error term, so large m do not drift.
pub fn rotation_offset(m: i64, alpha: f64) -> f64 {
    let mf = m as f64;
    let p = mf * alpha;
    let err = mf.mul_add(alpha, -p);
    let mut r = (p - p.floor()) + err;
    r -= r.floor();
    if r >= 1.0 {
        r -= 1.0;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MeasurableSet {
    /// Sorted, disjoint half-open arcs inside [0, 1).
    Arcs(Vec<(f64, f64)>),
    /// Subset of ℤ_q as a bitmask.
    Bits { q: u32, words: Vec<u64> },
}

impl MeasurableSet {
    /// Union of arcs `[a, b)`; `a > b` denotes an arc wrapping through 0.
    pub fn arcs(arcs: &[(f64, f64)]) -> Result<Self> {
        let mut pieces = Vec::new();
        for &(a, b) in arcs {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                return Err(Error::Invalid(format!("arc [{a}, {b}) is not inside [0, 1]")));
            }
            if a < b {
                pieces.push((a, b));
            } else if a > b {
                pieces.push((a, 1.0));
                pieces.push((0.0, b));
            }
        }
        let set = MeasurableSet::Arcs(normalize(pieces));
        if set.measure() <= 0.0 {
            return Err(Error::Invalid("set has measure zero".into()));
        }
        Ok(set)
    }

    pub fn elements(q: u32, elems: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut words = vec![0u64; (q as usize).div_ceil(64)];
        for e in elems {
            if e >= q {
                return Err(Error::Invalid(format!("element {e} is outside Z/{q}")));
            }
            words[(e / 64) as usize] |= 1 << (e % 64);
        }
        let set = MeasurableSet::Bits { q, words };
        if set.measure() <= 0.0 {
            return Err(Error::Invalid("set has measure zero".into()));
        }
        Ok(set)
    }

    pub fn full(sys: &MpSystem) -> Self {
        match sys {
            MpSystem::Rotation { .. } => MeasurableSet::Arcs(vec![(0.0, 1.0)]),
            MpSystem::Cyclic { q, .. } => {
                MeasurableSet::elements(*q, 0..*q).expect("nonempty group")
            }
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            MeasurableSet::Arcs(a) => a.iter().map(|(x, y)| y - x).sum(),
            MeasurableSet::Bits { q, words } => {
                words.iter().map(|w| w.count_ones()).sum::<u32>() as f64 / *q as f64
            }
        }
    }

    pub fn contains_point(&self, x: f64) -> bool {
        match self {
            MeasurableSet::Arcs(a) => a.iter().any(|&(lo, hi)| lo <= x && x < hi),
            MeasurableSet::Bits { .. } => false,
        }
    }

    pub fn contains(&self, e: u32) -> bool {
        match self {
            MeasurableSet::Bits { q, words } => e < *q && words[(e / 64) as usize] >> (e % 64) & 1 == 1,
            MeasurableSet::Arcs(_) => false,
        }
    }
}

fn normalize(mut pieces: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pieces.retain(|(a, b)| b > a);
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
    for (a, b) in pieces {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Arcs of `A − c mod 1`.
fn shift_arcs(arcs: &[(f64, f64)], c: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(arcs.len() + 1);
    for &(a, b) in arcs {
        let (a2, b2) = (a - c, b - c);
        if a2 >= 0.0 {
            out.push((a2, b2));
        } else if b2 <= 0.0 {
            out.push((a2 + 1.0, b2 + 1.0));
        } else {
            out.push((a2 + 1.0, 1.0));
            out.push((0.0, b2));
        }
    }
    normalize(out)
}

fn intersect_arcs(x: &[(f64, f64)], y: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < x.len() && j < y.len() {
        let lo = x[i].0.max(y[j].0);
        let hi = x[i].1.min(y[j].1);
        if hi > lo {
            out.push((lo, hi));
        }
        if x[i].1 < y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// T^{−c}A.
pub fn preimage(sys: &MpSystem, set: &MeasurableSet, c: i64) -> Result<MeasurableSet> {
    match (sys, set) {
        (MpSystem::Rotation { alpha }, MeasurableSet::Arcs(a)) => {
            Ok(MeasurableSet::Arcs(shift_arcs(a, rotation_offset(c, *alpha))))
        }
        (MpSystem::Cyclic { q, step }, MeasurableSet::Bits { q: q2, .. }) if q == q2 => {
            let off = cyclic_offset(c, *q, *step);
            MeasurableSet::elements(*q, (0..*q).filter(|&x| set.contains(((x as u64 + off) % *q as u64) as u32)))
        }
        _ => Err(Error::Invalid("set does not live on this system".into())),
    }
}

fn cyclic_offset(m: i64, q: u32, step: u32) -> u64 {
    let qi = q as i128;
    ((m as i128 * step as i128).rem_euclid(qi)) as u64
}

/// μ(⋂_i T^{−m_i} A) for exactly the given shifts (no implicit 0).
pub fn intersection_measure(sys: &MpSystem, set: &MeasurableSet, shifts: &[i64]) -> Result<f64> {
    let mut shifts = shifts.to_vec();
    shifts.sort_unstable();
    shifts.dedup();
    if shifts.is_empty() {
        return Ok(1.0);
    }
    match (sys, set) {
        (MpSystem::Rotation { alpha }, MeasurableSet::Arcs(a)) => {
            let mut acc = shift_arcs(a, rotation_offset(shifts[0], *alpha));
            for &m in &shifts[1..] {
                if acc.is_empty() {
                    break;
                }
                acc = intersect_arcs(&acc, &shift_arcs(a, rotation_offset(m, *alpha)));
            }
            Ok(acc.iter().map(|(x, y)| y - x).sum())
        }
        (MpSystem::Cyclic { q, step }, MeasurableSet::Bits { q: q2, words }) if q == q2 => {
            let mut acc = vec![u64::MAX; words.len()];
            let tail = *q as usize % 64;
            if tail != 0 {
                *acc.last_mut().unwrap() = (1u64 << tail) - 1;
            }
            for &m in &shifts {
                let off = cyclic_offset(m, *q, *step);
                let rotated = rotate_bits(words, *q, off);
                for (a, r) in acc.iter_mut().zip(rotated) {
                    *a &= r;
                }
            }
            Ok(acc.iter().map(|w| w.count_ones()).sum::<u32>() as f64 / *q as f64)
        }
        _ => Err(Error::Invalid("set does not live on this system".into())),
    }
}

/// Bitmask of {x : x + off ∈ A}.
fn rotate_bits(words: &[u64], q: u32, off: u64) -> Vec<u64> {
    let mut out = vec![0u64; words.len()];
    let q = q as u64;
    for x in 0..q {
        let y = (x + off) % q;
        if words[(y / 64) as usize] >> (y % 64) & 1 == 1 {
            out[(x / 64) as usize] |= 1 << (x % 64);
        }
    }
    out
}

/// μ(A ∩ T^{−m₁}A ∩ … ∩ T^{−m_k}A); the zero shift is always included.
pub fn correlation(sys: &MpSystem, set: &MeasurableSet, shifts: &[i64]) -> Result<f64> {
    let mut all = Vec::with_capacity(shifts.len() + 1);
    all.push(0);
    all.extend_from_slice(shifts);
    intersection_measure(sys, set, &all)
}

/// [`correlation`] memoized by the sorted, deduplicated shift tuple.
#[derive(Clone, Debug)]
pub struct Correlator {
    sys: MpSystem,
    set: MeasurableSet,
    cache: Arc<RwLock<HashMap<Vec<i64>, f64>>>,
}

impl Correlator {
    pub fn new(sys: MpSystem, set: MeasurableSet) -> Self {
        Self { sys, set, cache: Default::default() }
    }

    pub fn system(&self) -> &MpSystem {
        &self.sys
    }

    pub fn set(&self) -> &MeasurableSet {
        &self.set
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache poisoned").len()
    }

    pub fn correlation(&self, shifts: &[i64]) -> Result<f64> {
        let mut key = Vec::with_capacity(shifts.len() + 1);
        key.push(0);
        key.extend_from_slice(shifts);
        key.sort_unstable();
        key.dedup();
        if let Some(v) = self.cache.read().expect("cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = intersection_measure(&self.sys, &self.set, &key)?;
        self.cache.write().expect("cache poisoned").insert(key, v);
        Ok(v)
    }
}

/// `[(1−x)^k, (1−x)^{k−1}, …, 1]`: evaluated at index n + k these give
/// f(n), f(n+1), …, f(n+k).
pub fn forward_shift_polys(k: u32) -> Vec<IntPolynomial> {
    (0..=k).rev().map(IntPolynomial::one_minus_x_pow).collect()
}

/// The shift vector ⌊p_i(Δ)f(n)⌋.
pub fn shifts_at(polys: &[Sequence<f64>], n: u64) -> Vec<i64> {
    polys.iter().map(|p| p.get_or_zero(n).floor() as i64).collect()
}

/// n ↦ μ(A ∩ T^{−⌊p_1(Δ)f(n)⌋}A ∩ …).
pub fn recurrence_sequence(corr: &Correlator, f: &Sequence<f64>, p_list: &[IntPolynomial]) -> Sequence<f64> {
    let polys: Vec<Sequence<f64>> = p_list.iter().map(|p| poly_delta(p, f)).collect();
    let corr = corr.clone();
    Sequence::builder(format!("recurrence({})", f.name()), move |n| {
        corr.correlation(&shifts_at(&polys, n)).expect("set matches system")
    })
    .domain_start(f.domain_start())
    .bound(1.0)
    .cache(CachePolicy::None)
    .build()
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOptions {
    pub horizon: u64,
    /// Window threshold for the uniform sweep, as a fraction of W(horizon).
    pub uniform_fraction: f64,
    pub positivity_threshold: f64,
    pub tolerance: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { horizon: 100_000, uniform_fraction: 0.25, positivity_threshold: 1e-4, tolerance: 0.02 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub system: String,
    pub measure: f64,
    pub horizon: u64,
    pub ell: usize,
    pub cesaro: f64,
    pub weighted: f64,
    pub uniform: f64,
    pub uniform_spread: f64,
    pub cesaro_minus_weighted: f64,
    pub cesaro_minus_uniform: f64,
    pub weighted_minus_uniform: f64,
    pub positivity_margin: f64,
    /// "positive" when the margin clears the threshold, otherwise "inconclusive".
    pub positivity: String,
    pub agree: bool,
}

/// Cesàro, W-weighted (W = Δ^{ℓ−1}f, weights ΔW/W) and uniform-W averages of the
/// recurrence sequence.
pub fn recurrence_experiment(
    corr: &Correlator,
    f: &Sequence<f64>,
    p_list: &[IntPolynomial],
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    let h = opts.horizon;
    let class = classify_F(f, h, 4)?;
    let ell = class.ell.ok_or_else(|| Error::Uncertified {
        name: f.name().to_string(),
        ell: 0,
        reason: "no ℓ ≤ 4 certified".into(),
    })?;
    if !class.tempered {
        return Err(Error::Uncertified { name: f.name().to_string(), ell, reason: "not tempered".into() });
    }
    let w = weight_from_f(f, ell)?.log_form()?;
    let x = recurrence_sequence(corr, f, p_list);
    let cesaro = weighted_avg(&builtin("cesaro")?, &x, h)?;
    let weighted = weighted_avg(&w, &x, h)?;
    let threshold = opts.uniform_fraction * w.log_v(h)?.exp();
    let uni = uniform_avg_estimate(&w, &x, threshold, h, opts.tolerance)?;
    let margin = cesaro.min(weighted);
    Ok(ExperimentReport {
        system: corr.system().description(),
        measure: corr.set().measure(),
        horizon: h,
        ell,
        cesaro,
        weighted,
        uniform: uni.report.value,
        uniform_spread: uni.report.tail_oscillation,
        cesaro_minus_weighted: cesaro - weighted,
        cesaro_minus_uniform: cesaro - uni.report.value,
        weighted_minus_uniform: weighted - uni.report.value,
        positivity_margin: margin,
        positivity: if margin > opts.positivity_threshold { "positive" } else { "inconclusive" }.into(),
        agree: (cesaro - weighted).abs() <= opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shift_gives_measure() {
        let sys = MpSystem::rotation(DEFAULT_ALPHA).unwrap();
        let a = MeasurableSet::arcs(&[(0.1, 0.35)]).unwrap();
        assert!((correlation(&sys, &a, &[]).unwrap() - 0.25).abs() < 1e-15);
        assert!((correlation(&sys, &a, &[0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cyclic_disjoint_example() {
        let sys = MpSystem::cyclic(12, 1).unwrap();
        let a = MeasurableSet::elements(12, 0..4).unwrap();
        assert_eq!(correlation(&sys, &a, &[6]).unwrap(), 0.0);
        assert_eq!(correlation(&sys, &a, &[2]).unwrap(), 2.0 / 12.0);
    }

    #[test]
    fn rotation_half_arc_one_step() {
        let sys = MpSystem::rotation(DEFAULT_ALPHA).unwrap();
        let a = MeasurableSet::arcs(&[(0.0, 0.5)]).unwrap();
        // [0, 0.5) ∩ [−α, 0.5 − α) mod 1 = [0, 0.5 − α)
        let v = correlation(&sys, &a, &[1]).unwrap();
        assert!((v - (0.5 - DEFAULT_ALPHA)).abs() < 1e-15);
        assert!((v - 0.0858).abs() < 1e-4);
    }

    #[test]
    fn rejects_rational_rotation() {
        assert!(MpSystem::rotation(0.25).is_err());
        assert!(MpSystem::rotation(1.5).is_err());
    }

    #[test]
    fn duplicates_are_ignored() {
        let sys = MpSystem::rotation(DEFAULT_ALPHA).unwrap();
        let a = MeasurableSet::arcs(&[(0.2, 0.7), (0.9, 0.05)]).unwrap();
        let once = correlation(&sys, &a, &[5]).unwrap();
        assert_eq!(correlation(&sys, &a, &[5, 5, 5]).unwrap(), once);
    }

    #[test]
    fn shift_invariance_through_preimage() {
        let sys = MpSystem::rotation(DEFAULT_ALPHA).unwrap();
        let a = MeasurableSet::arcs(&[(0.2, 0.45), (0.6, 0.8)]).unwrap();
        for c in [1i64, 7] {
            let shifts = [0i64, 3, 11];
            let moved: Vec<i64> = shifts.iter().map(|m| m + c).collect();
            let lhs = intersection_measure(&sys, &a, &moved).unwrap();
            let rhs = intersection_measure(&sys, &preimage(&sys, &a, c).unwrap(), &shifts).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let cyc = MpSystem::cyclic(30, 7).unwrap();
        let b = MeasurableSet::elements(30, [1, 2, 5, 8, 13, 21]).unwrap();
        let lhs = intersection_measure(&cyc, &b, &[4, 8]).unwrap();
        let rhs = intersection_measure(&cyc, &preimage(&cyc, &b, 4).unwrap(), &[0, 4]).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn large_offsets_stay_accurate() {
        // Compare against a split-product evaluation.
        let m: i64 = 31_622_776;
        let hi = (m / 4096) as f64 * 4096.0;
        let lo = (m % 4096) as f64;
        let a = DEFAULT_ALPHA;
        let split = ((hi * a).fract() + (lo * a).fract()).fract();
        assert!((rotation_offset(m, a) - split).abs() < 1e-9);
    }

    #[test]
    fn forward_polys_recover_forward_values() {
        let f = Sequence::new("n^1.5", |n| (n as f64).powf(1.5));
        let polys: Vec<Sequence<f64>> = forward_shift_polys(2).iter().map(|p| poly_delta(p, &f)).collect();
        for n in 1..200u64 {
            let s = shifts_at(&polys, n + 2);
            let direct: Vec<i64> = (0..=2).map(|i| ((n + i) as f64).powf(1.5).floor() as i64).collect();
            assert_eq!(s, direct);
        }
    }

    #[test]
    fn recurrence_with_empty_list_is_measure() {
        let sys = MpSystem::rotation(DEFAULT_ALPHA).unwrap();
        let a = MeasurableSet::arcs(&[(0.0, 0.3)]).unwrap();
        let x = recurrence_sequence(&Correlator::new(sys, a), &Sequence::new("n", |n| n as f64), &[]);
        for n in 1..20 {
            assert!((x.get(n).unwrap() - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn full_space_experiment() {
        let sys = MpSystem::rotation(DEFAULT_ALPHA).unwrap();
        let full = MeasurableSet::full(&sys);
        let f = Sequence::new("n^1.5", |n| (n as f64).powf(1.5));
        let opts = ExperimentOptions { horizon: 20_000, ..Default::default() };
        let r = recurrence_experiment(&Correlator::new(sys, full), &f, &forward_shift_polys(1), &opts).unwrap();
        assert!((r.cesaro - 1.0).abs() < 1e-9 && (r.weighted - 1.0).abs() < 1e-9 && (r.uniform - 1.0).abs() < 1e-9);
        assert_eq!(r.positivity, "positive");
    }

    #[test]
    fn dense_cyclic_sets_have_nonnegative_averages() {
        let sys = MpSystem::cyclic(101, 1).unwrap();
        let a = MeasurableSet::elements(101, 0..51).unwrap();
        let corr = Correlator::new(sys, a);
        for m in 0..101 {
            assert!(corr.correlation(&[m]).unwrap() >= 2.0 * 51.0 / 101.0 - 1.0 - 1e-15);
        }
    }
}
