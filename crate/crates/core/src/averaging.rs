//! Weighted, interval, uniform and iterated averages.
//!
//! Every average here uses the V-form weights ΔV(n)/V(N) of a [`WeightScheme`],
//! evaluated in the log domain. Running averages obey the convex recursion
//! `E_N = e^{−ΔlogV(N)} E_{N−1} + (1 − e^{−ΔlogV(N)}) x_N`, which is how the
//! streaming estimators avoid O(N²) work.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::Sequence;
use crate::error::{Error, Result};
use crate::numerics::{geometric_grid, one_minus_exp_neg, KahanSum, Scalar};
use crate::weights::{WeightScheme, WeightTable};

pub const DEFAULT_TOLERANCE: f64 = 5e-3;
pub const DEFAULT_HORIZON: u64 = 100_000;
pub const WINDOW_GRID_RATIO: f64 = 1.25;

/// Finite-horizon estimate of a limit.
#[derive(Clone, Debug, Serialize)]
pub struct AverageReport<T> {
    pub value: T,
    pub horizon: u64,
    /// max ‖E_N − value‖ over N in the last 10% of the horizon.
    pub tail_oscillation: f64,
    pub converged: bool,
    pub tolerance: f64,
}

impl<T: Scalar> AverageReport<T> {
    fn from_trajectory(traj: &Trajectory<T>, value: T, tolerance: f64) -> Self {
        let horizon = traj.end();
        let tail_start = (horizon as f64 * 0.9).ceil() as u64;
        let tail_oscillation = traj.tail_sup(tail_start, |e| (e - value).norm());
        Self { value, horizon, tail_oscillation, converged: tail_oscillation <= tolerance, tolerance }
    }
}

/// Partial results `E_n` for `n ∈ [start, start + values.len() − 1]`.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub start: u64,
    pub values: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn end(&self) -> u64 {
        self.start + self.values.len() as u64 - 1
    }

    pub fn at(&self, n: u64) -> T {
        self.values[(n - self.start) as usize]
    }

    pub fn last(&self) -> T {
        *self.values.last().expect("empty trajectory")
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, T)> + '_ {
        self.values.iter().enumerate().map(move |(i, v)| (self.start + i as u64, *v))
    }

    pub fn tail_sup(&self, from: u64, f: impl Fn(T) -> f64) -> f64 {
        self.iter().filter(|(n, _)| *n >= from).map(|(_, v)| f(v)).fold(0.0, f64::max)
    }
}

/// `x_lo, …, x_hi`, with zero below the sequence's domain.
pub(crate) fn sample<T: Scalar>(x: &Sequence<T>, lo: u64, hi: u64) -> Result<Vec<T>> {
    let start = x.domain_start();
    if lo >= start {
        return x.values(lo, hi);
    }
    let mut out = vec![T::zero(); (start.min(hi + 1) - lo) as usize];
    if hi >= start {
        out.extend(x.values(start, hi)?);
    }
    Ok(out)
}

fn check_horizon(scheme: &WeightScheme, big_n: u64) -> Result<()> {
    if big_n < scheme.domain_start() {
        return Err(Error::Domain { n: big_n, start: scheme.domain_start() });
    }
    Ok(())
}

fn weighted_sum<T: Scalar>(table: &WeightTable, xs: &[T], big_n: u64) -> T {
    let mut acc = KahanSum::new();
    for (i, &x) in xs.iter().enumerate() {
        acc.add(x * table.weight(table.start + i as u64, big_n));
    }
    acc.value()
}

/// E^V_{n≤N} x_n = Σ ΔV(n)/V(N) · x_n, summed with compensation.
pub fn weighted_avg<T: Scalar>(scheme: &WeightScheme, x: &Sequence<T>, big_n: u64) -> Result<T> {
    check_horizon(scheme, big_n)?;
    let table = scheme.table(big_n)?;
    let xs = sample(x, table.start, big_n)?;
    Ok(weighted_sum(&table, &xs, big_n))
}

fn stream<T: Scalar>(table: &WeightTable, xs: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(xs.len());
    let mut e = T::zero();
    for (i, &x) in xs.iter().enumerate() {
        e = if i == 0 {
            x
        } else {
            let keep = (-table.step[i]).exp();
            e * keep + x * one_minus_exp_neg(table.step[i])
        };
        out.push(e);
    }
    out
}

/// All running averages E_{n≤N} for N up to `big_n`.
pub fn weighted_trajectory<T: Scalar>(scheme: &WeightScheme, x: &Sequence<T>, big_n: u64) -> Result<Trajectory<T>> {
    iterated_trajectory(scheme, x, 1, big_n)
}

pub fn weighted_avg_report<T: Scalar>(
    scheme: &WeightScheme,
    x: &Sequence<T>,
    big_n: u64,
    tolerance: f64,
) -> Result<AverageReport<T>> {
    let value = weighted_avg(scheme, x, big_n)?;
    let traj = weighted_trajectory(scheme, x, big_n)?;
    Ok(AverageReport::from_trajectory(&traj, value, tolerance))
}

/// E^V_{n∈[M,N]} = Σ_{n=M}^{N} ΔV(n) x_n / (V(N) − V(M)); note the N − M + 1 terms.
pub fn interval_avg<T: Scalar>(scheme: &WeightScheme, x: &Sequence<T>, m: u64, big_n: u64) -> Result<T> {
    if m >= big_n {
        return Err(Error::Invalid(format!("interval [{m}, {big_n}] needs M < N")));
    }
    let start = scheme.domain_start();
    if m < start {
        return Err(Error::Domain { n: m, start });
    }
    let gap = scheme.log_v(m)? - scheme.log_v(big_n)?;
    let denom = -gap.exp_m1();
    if !(denom > 0.0) {
        return Err(Error::DegenerateInterval { m, n: big_n });
    }
    let table = scheme.table(big_n)?;
    let xs = sample(x, m, big_n)?;
    let mut acc = KahanSum::new();
    for (i, &v) in xs.iter().enumerate() {
        acc.add(v * table.weight(m + i as u64, big_n));
    }
    Ok(acc.value() * (1.0 / denom))
}

/// Family of intervals `[M_j, N_j]`.
#[derive(Clone, Debug, Serialize)]
pub struct IntervalFamily {
    pub pairs: Vec<(u64, u64)>,
    pub description: String,
}

impl IntervalFamily {
    /// `M_j` geometric with ratio 1.25 from `m0`, `N_j` the least index with
    /// V(N_j) − V(M_j) ≥ `gap0 · j`. Stops at the horizon.
    pub fn canonical(scheme: &WeightScheme, m0: u64, gap0: f64, horizon: u64) -> Result<Self> {
        let table = scheme.table(horizon)?;
        let mut pairs = Vec::new();
        let mut m = m0.max(table.start) as f64;
        for j in 1.. {
            let mi = m.round() as u64;
            if mi >= horizon {
                break;
            }
            match first_reaching(&table, mi, gap0 * j as f64) {
                Some(n) => pairs.push((mi, n)),
                None => break,
            }
            m *= WINDOW_GRID_RATIO;
        }
        Ok(Self { pairs, description: format!("M geometric x{WINDOW_GRID_RATIO} from {m0}, V gap >= {gap0}·j") })
    }
}

/// log(V(N) − V(M)).
fn log_gap(table: &WeightTable, m: u64, n: u64) -> f64 {
    let (lm, ln) = (table.log_v_at(m), table.log_v_at(n));
    ln + (-(lm - ln).exp_m1()).ln()
}

/// Least N > M in the table with V(N) − V(M) ≥ threshold.
fn first_reaching(table: &WeightTable, m: u64, threshold: f64) -> Option<u64> {
    let target = threshold.ln();
    let hi = table.hi();
    if m >= hi || log_gap(table, m, hi) < target {
        return None;
    }
    let (mut lo, mut up) = (m + 1, hi);
    while lo < up {
        let mid = lo + (up - lo) / 2;
        if log_gap(table, m, mid) >= target {
            up = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformReport<T> {
    pub report: AverageReport<T>,
    pub worst_window: Option<(u64, u64)>,
    pub windows: usize,
    pub threshold: f64,
    pub grid_ratio: f64,
    /// No window met the threshold; `report` is then meaningless.
    pub inconclusive: bool,
}

/// Sweeps windows `[M, N] ⊆ [start, horizon]` with V(N) − V(M) ≥ threshold and
/// averages over each with [`window_avg`] normalization. `value` is the mean over
/// windows ending at the horizon; `tail_oscillation` is the largest deviation of
/// any qualifying window from it.
pub fn uniform_avg_estimate<T: Scalar>(
    scheme: &WeightScheme,
    x: &Sequence<T>,
    threshold: f64,
    horizon: u64,
    tolerance: f64,
) -> Result<UniformReport<T>> {
    if !(threshold > 0.0) {
        return Err(Error::Invalid("window threshold must be positive".into()));
    }
    let table = scheme.table(horizon)?;
    let xs = sample(x, table.start, horizon)?;
    let traj = stream(&table, &xs);
    let mut windows = Vec::new();
    for m in geometric_grid(table.start, horizon, WINDOW_GRID_RATIO) {
        let Some(n0) = first_reaching(&table, m, threshold) else { continue };
        for n in geometric_grid(n0, horizon, WINDOW_GRID_RATIO) {
            windows.push((m, n));
        }
    }
    let empty = UniformReport {
        report: AverageReport { value: T::zero(), horizon, tail_oscillation: f64::INFINITY, converged: false, tolerance },
        worst_window: None,
        windows: 0,
        threshold,
        grid_ratio: WINDOW_GRID_RATIO,
        inconclusive: true,
    };
    if windows.is_empty() {
        return Ok(empty);
    }
    let values: Vec<T> = windows.par_iter().map(|&(m, n)| window_value(&table, &xs, &traj, m, n)).collect();
    let full: Vec<T> = windows.iter().zip(&values).filter(|((_, n), _)| *n == horizon).map(|(_, v)| *v).collect();
    let mut acc = KahanSum::new();
    for v in &full {
        acc.add(*v);
    }
    let value = acc.value() * (1.0 / full.len() as f64);
    let (worst_idx, spread) = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (*v - value).norm()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(UniformReport {
        report: AverageReport { value, horizon, tail_oscillation: spread, converged: spread <= tolerance, tolerance },
        worst_window: Some(windows[worst_idx]),
        windows: windows.len(),
        threshold,
        grid_ratio: WINDOW_GRID_RATIO,
        inconclusive: false,
    })
}

/// Window average with the weights on `[m, n]` rescaled to sum to one.
fn window_value<T: Scalar>(table: &WeightTable, xs: &[T], traj: &[T], m: u64, n: u64) -> T {
    if m == table.start {
        return traj[table.idx(n)];
    }
    let log_r = table.log_v_at(m - 1) - table.log_v_at(n);
    let mass = -log_r.exp_m1();
    if mass < 1e-6 {
        // Short windows relative to V(N): sum directly to avoid cancellation.
        let mut acc = KahanSum::new();
        for k in m..=n {
            acc.add(xs[table.idx(k)] * table.weight(k, n));
        }
        return acc.value() * (1.0 / mass);
    }
    (traj[table.idx(n)] - traj[table.idx(m - 1)] * log_r.exp()) * (1.0 / mass)
}

/// Self-normalized window average Σ_{n=M}^{N} ΔV(n) x_n / (V(N) − V(M−1)).
pub fn window_avg<T: Scalar>(scheme: &WeightScheme, x: &Sequence<T>, m: u64, big_n: u64) -> Result<T> {
    let start = scheme.domain_start();
    if m < start || m > big_n {
        return Err(Error::Domain { n: m, start });
    }
    let table = scheme.table(big_n)?;
    let xs = sample(x, start, big_n)?;
    let mass = if m == start { 1.0 } else { -(table.log_v_at(m - 1) - table.log_v_at(big_n)).exp_m1() };
    let mut acc = KahanSum::new();
    for k in m..=big_n {
        acc.add(xs[table.idx(k)] * table.weight(k, big_n));
    }
    Ok(acc.value() * (1.0 / mass))
}

/// E(k)_{n≤N}: k-fold iterated average. `k = 1` is [`weighted_avg`] exactly.
pub fn iterated_avg_direct<T: Scalar>(scheme: &WeightScheme, x: &Sequence<T>, k: usize, big_n: u64) -> Result<T> {
    if k == 0 {
        return Err(Error::Invalid("iteration depth k must be at least 1".into()));
    }
    if k == 1 {
        return weighted_avg(scheme, x, big_n);
    }
    check_horizon(scheme, big_n)?;
    let table = scheme.table(big_n)?;
    let mut level = sample(x, table.start, big_n)?;
    for _ in 1..k {
        level = stream(&table, &level);
    }
    Ok(weighted_sum(&table, &level, big_n))
}

/// Running E(k)_{n≤N} for every N up to `big_n`, in one forward pass.
pub fn iterated_trajectory<T: Scalar>(
    scheme: &WeightScheme,
    x: &Sequence<T>,
    k: usize,
    big_n: u64,
) -> Result<Trajectory<T>> {
    if k == 0 {
        return Err(Error::Invalid("iteration depth k must be at least 1".into()));
    }
    check_horizon(scheme, big_n)?;
    let table = scheme.table(big_n)?;
    let xs = sample(x, table.start, big_n)?;
    let mut state = vec![T::zero(); k];
    let mut out = Vec::with_capacity(xs.len());
    for (i, &v) in xs.iter().enumerate() {
        let (keep, take) = if i == 0 { (0.0, 1.0) } else { ((-table.step[i]).exp(), one_minus_exp_neg(table.step[i])) };
        let mut input = v;
        for s in state.iter_mut() {
            *s = *s * keep + input * take;
            input = *s;
        }
        out.push(input);
    }
    Ok(Trajectory { start: table.start, values: out })
}

pub fn iterated_avg_report<T: Scalar>(
    scheme: &WeightScheme,
    x: &Sequence<T>,
    k: usize,
    big_n: u64,
    tolerance: f64,
) -> Result<AverageReport<T>> {
    let value = iterated_avg_direct(scheme, x, k, big_n)?;
    let traj = iterated_trajectory(scheme, x, k, big_n)?;
    Ok(AverageReport::from_trajectory(&traj, value, tolerance))
}

/// Σ ΔV(n)/V(N) · (logV(N) − logV(n))^k / k! · x_n, the closed form for E(k+1).
pub fn iterated_avg_closed<T: Scalar>(scheme: &WeightScheme, x: &Sequence<T>, k: usize, big_n: u64) -> Result<T> {
    if k == 0 {
        return weighted_avg(scheme, x, big_n);
    }
    check_horizon(scheme, big_n)?;
    let table = scheme.table(big_n)?;
    let xs = sample(x, table.start, big_n)?;
    let top = table.log_v_at(big_n);
    let log_fact: f64 = (1..=k).map(|j| (j as f64).ln()).sum();
    let mut acc = KahanSum::new();
    for (i, &v) in xs.iter().enumerate() {
        let gap = top - table.log_v[i];
        if gap <= 0.0 {
            continue;
        }
        // Combine the weight and the polynomial factor in one exponent.
        let log_factor = k as f64 * gap.ln() - log_fact - gap;
        let head = if i == 0 { 1.0 } else { one_minus_exp_neg(table.step[i]) };
        acc.add(v * (head * log_factor.exp()));
    }
    Ok(acc.value())
}

#[derive(Clone, Debug, Serialize)]
pub struct EInfinityReport {
    /// `tail_sups[k−1]` = sup over N ∈ [0.9·horizon, horizon] of ‖E(k)_{n≤N}(x_n − L)‖.
    pub tail_sups: Vec<f64>,
    pub first_below: Option<usize>,
    pub converged: bool,
    pub tolerance: f64,
    pub horizon: u64,
}

pub fn e_infinity_estimate<T: Scalar>(
    scheme: &WeightScheme,
    x: &Sequence<T>,
    limit: T,
    k_max: usize,
    horizon: u64,
    tolerance: f64,
) -> Result<EInfinityReport> {
    if k_max < 2 {
        return Err(Error::Invalid("k_max must be at least 2".into()));
    }
    check_horizon(scheme, horizon)?;
    let table = scheme.table(horizon)?;
    let xs = sample(x, table.start, horizon)?;
    let tail_start = (horizon as f64 * 0.9).ceil() as u64;
    let mut state = vec![T::zero(); k_max];
    let mut sups = vec![0.0f64; k_max];
    for (i, &v) in xs.iter().enumerate() {
        let (keep, take) = if i == 0 { (0.0, 1.0) } else { ((-table.step[i]).exp(), one_minus_exp_neg(table.step[i])) };
        let mut input = v - limit;
        let in_tail = table.start + i as u64 >= tail_start;
        for (s, sup) in state.iter_mut().zip(sups.iter_mut()) {
            *s = *s * keep + input * take;
            input = *s;
            if in_tail {
                *sup = sup.max(s.norm());
            }
        }
    }
    let first_below = sups.iter().position(|s| *s <= tolerance);
    let converged = first_below.is_some_and(|k| sups[k..].iter().all(|s| *s <= tolerance));
    Ok(EInfinityReport { tail_sups: sups, first_below: first_below.map(|k| k + 1), converged, tolerance, horizon })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossSchemeReport {
    pub horizon: u64,
    /// ‖E^U_{n≤N}(E^V_{k≤n} x_k) − E^U_{n≤N} x_n‖.
    pub residual: f64,
    /// Σ_k |ω_k − u_k|, where ω_k is the effective weight of x_k on the left and
    /// u_k = ΔU(k)/U(N). The residual never exceeds sup‖x‖ times this gap.
    pub weight_gap: f64,
}

/// Compares the U-average of running V-averages with the plain U-average.
pub fn cross_scheme_identity_check<T: Scalar>(
    u: &WeightScheme,
    v: &WeightScheme,
    x: &Sequence<T>,
    big_n: u64,
) -> Result<CrossSchemeReport> {
    let start = u.domain_start().max(v.domain_start());
    check_horizon(u, big_n)?;
    check_horizon(v, big_n)?;
    let tu = u.table(big_n)?;
    let tv = v.table(big_n)?;
    let xs = sample(x, tv.start, big_n)?;
    let inner = stream(&tv, &xs);
    let mut lhs = KahanSum::new();
    let mut rhs = KahanSum::new();
    for n in tu.start..=big_n {
        let w = tu.weight(n, big_n);
        if n >= tv.start {
            lhs.add(inner[tv.idx(n)] * w);
        }
        rhs.add(sample_at(&xs, &tv, n, x) * w);
    }
    let residual = (lhs.value() - rhs.value()).norm();

    // B(k) = Σ_{n≥k} u_n V(k)/V(n), built backwards; ω_k = (ΔV(k)/V(k))·B(k).
    let mut gap = KahanSum::new();
    let mut b = 0.0f64;
    for k in (start..=big_n).rev() {
        let uk = if k >= tu.start { tu.weight(k, big_n) } else { 0.0 };
        let next_decay = if k < big_n { (-tv.step_at(k + 1)).exp() } else { 0.0 };
        b = uk + next_decay * b;
        let head = if k == tv.start { 1.0 } else { one_minus_exp_neg(tv.step_at(k)) };
        gap.add((head * b - uk).abs());
    }
    for k in tu.start..start {
        gap.add(tu.weight(k, big_n));
    }
    Ok(CrossSchemeReport { horizon: big_n, residual, weight_gap: gap.value() })
}

fn sample_at<T: Scalar>(xs: &[T], tv: &WeightTable, n: u64, x: &Sequence<T>) -> T {
    if n >= tv.start {
        xs[tv.idx(n)]
    } else {
        x.get_or_zero(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::builtin;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn phase() -> Sequence<Complex64> {
        Sequence::builder("e^{2πi log n}", |n| Complex64::from_polar(1.0, 2.0 * PI * (n as f64).ln()))
            .bound(1.0)
            .build()
    }

    fn c() -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(1.0, 2.0 * PI)
    }

    #[test]
    fn constant_sequences_average_to_themselves() {
        let x = Sequence::constant(3.0);
        for name in ["cesaro", "log", "exp_sqrt"] {
            let s = builtin(name).unwrap();
            assert!((weighted_avg(&s, &x, 1000).unwrap() - 3.0).abs() < 1e-9);
            for k in 1..5 {
                assert!((iterated_avg_direct(&s, &x, k, 1000).unwrap() - 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cesaro_is_arithmetic_mean() {
        let x = Sequence::new("sin", |n| (n as f64).sin());
        let s = builtin("cesaro").unwrap();
        let mean: f64 = (1..=5000).map(|n| (n as f64).sin()).sum::<f64>() / 5000.0;
        assert!((weighted_avg(&s, &x, 5000).unwrap() - mean).abs() < 1e-13);
    }

    #[test]
    fn cesaro_alternating_half() {
        let x = Sequence::new("odd", |n| (n % 2) as f64);
        let s = builtin("cesaro").unwrap();
        assert!((weighted_avg(&s, &x, 1_000_000).unwrap() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn cesaro_log_phase_tracks_c_times_last() {
        let s = builtin("cesaro").unwrap();
        let x = phase();
        let n = 100_000;
        let v = weighted_avg(&s, &x, n).unwrap();
        assert!((v - c() * x.get(n).unwrap()).norm() < 0.02);
    }

    #[test]
    fn interval_examples() {
        let s = builtin("cesaro").unwrap();
        let c = interval_avg(&s, &Sequence::constant(2.0), 10, 20).unwrap();
        assert!((c - 2.0 * 1.1).abs() < 1e-12);
        let id = Sequence::new("n", |n| n as f64);
        assert!((interval_avg(&s, &id, 1, 3).unwrap() - 3.0).abs() < 1e-12);
        let even = Sequence::new("even", |n| ((n + 1) % 2) as f64);
        assert!((interval_avg(&s, &even, 1_000_000, 2_000_000).unwrap() - 0.5).abs() < 1e-5);
        assert!(interval_avg(&s, &id, 5, 5).is_err());
        let flat = WeightScheme::new("flat", Sequence::new("0", |_| 0.0));
        assert!(matches!(interval_avg(&flat, &id, 2, 5), Err(Error::DegenerateInterval { .. })));
    }

    #[test]
    fn uniform_examples() {
        let s = builtin("cesaro").unwrap();
        let r = uniform_avg_estimate(&s, &Sequence::constant(1.5), 50.0, 100_000, 1e-3).unwrap();
        assert!((r.report.value - 1.5).abs() < 1e-9 && r.report.tail_oscillation < 1e-9);
        let r = uniform_avg_estimate(&s, &phase(), 100.0, 100_000, DEFAULT_TOLERANCE).unwrap();
        assert!(!r.report.converged && r.report.tail_oscillation >= 0.05);
        let lg = builtin("log").unwrap();
        let r = uniform_avg_estimate(&lg, &phase(), 0.5, 1_000_000, 0.1).unwrap();
        assert!(r.report.value.norm() < 0.1, "{:?}", r.report);
        let none = uniform_avg_estimate(&s, &phase(), 1e9, 1000, 0.1).unwrap();
        assert!(none.inconclusive);
    }

    #[test]
    fn window_value_matches_interval_avg() {
        let s = builtin("exp_sqrt").unwrap();
        let x = phase();
        let table = s.table(5000).unwrap();
        let xs = sample(&x, 1, 5000).unwrap();
        let traj = stream(&table, &xs);
        for (m, n) in [(1u64, 5000u64), (100, 200), (2000, 2001), (10, 4000)] {
            let a = window_value(&table, &xs, &traj, m, n);
            let b = window_avg(&s, &x, m, n).unwrap();
            assert!((a - b).norm() < 1e-9, "{m} {n}");
        }
    }

    #[test]
    fn k1_bit_identical_and_iterates_track_powers() {
        let s = builtin("cesaro").unwrap();
        let x = phase();
        assert_eq!(iterated_avg_direct(&s, &x, 1, 12345).unwrap(), weighted_avg(&s, &x, 12345).unwrap());
        let n = 100_000;
        let v = iterated_avg_direct(&s, &x, 3, n).unwrap();
        assert!((v - c().powu(3) * x.get(n).unwrap()).norm() < 0.05);
        let traj = iterated_trajectory(&s, &x, 3, n).unwrap();
        assert!((traj.last() - v).norm() < 1e-10);
    }

    #[test]
    fn iterated_matches_quadratic_oracle() {
        // Definitional O(N²) nesting for small N.
        let s = builtin("exp_sqrt").unwrap();
        let x = Sequence::new("cos", |n| (n as f64 * 0.7).cos());
        let big_n = 300;
        let mut level: Vec<f64> = (1..=big_n).map(|n| x.get(n).unwrap()).collect();
        for _ in 0..3 {
            level = (1..=big_n)
                .map(|m| (1..=m).map(|j| s.normalized_weight(j, m).unwrap() * level[(j - 1) as usize]).sum())
                .collect();
        }
        let direct = iterated_avg_direct(&s, &x, 3, big_n).unwrap();
        assert!((direct - level[(big_n - 1) as usize]).abs() < 1e-12);
    }

    #[test]
    fn closed_k0_and_constants() {
        let s = builtin("cesaro").unwrap();
        let x = phase();
        assert_eq!(iterated_avg_closed(&s, &x, 0, 5000).unwrap(), weighted_avg(&s, &x, 5000).unwrap());
        for name in ["cesaro", "exp_sqrt"] {
            let s = builtin(name).unwrap();
            for k in 0..5 {
                let v = iterated_avg_closed(&s, &Sequence::constant(1.0), k, 100_000).unwrap();
                assert!((v - 1.0).abs() < 0.01, "{name} {k} {v}");
            }
        }
    }

    #[test]
    fn e_infinity_examples() {
        let s = builtin("cesaro").unwrap();
        let r = e_infinity_estimate(&s, &Sequence::constant(2.0), 2.0, 4, 10_000, 1e-9).unwrap();
        assert!(r.tail_sups.iter().all(|v| *v <= 1e-9));
        let alt = Sequence::new("(-1)^n", |n| if n % 2 == 0 { 1.0 } else { -1.0 });
        let r = e_infinity_estimate(&s, &alt, 0.0, 3, 100_000, 1e-4).unwrap();
        assert!(r.tail_sups[0] <= 1e-4);
        let r = e_infinity_estimate(&s, &phase(), Complex64::new(0.0, 0.0), 4, 100_000, 1e-3).unwrap();
        let cm = c().norm();
        // Beyond k = 3 the o(1) term is no longer small next to |C|^k at this horizon.
        for (k, v) in r.tail_sups.iter().enumerate().take(3) {
            let expected = cm.powi(k as i32 + 1);
            assert!((v / expected - 1.0).abs() < 0.2, "{k}: {v} vs {expected}");
        }
    }

    #[test]
    fn cross_scheme_constant_and_bound() {
        let u = builtin("cesaro").unwrap();
        let v = builtin("exp_sqrt").unwrap();
        let r = cross_scheme_identity_check(&u, &v, &Sequence::constant(1.0), 10_000).unwrap();
        assert!(r.residual < 1e-9);
        let rs: Vec<f64> = [1_000u64, 10_000, 100_000]
            .iter()
            .map(|&n| cross_scheme_identity_check(&u, &v, &phase(), n).unwrap().residual)
            .collect();
        assert!(rs[0] > rs[1] && rs[1] > rs[2], "{rs:?}");
        let r = cross_scheme_identity_check(&u, &v, &phase(), 10_000).unwrap();
        assert!(r.residual <= r.weight_gap + 1e-12);
    }

    #[test]
    fn reports_flag_convergence() {
        let s = builtin("cesaro").unwrap();
        let r = weighted_avg_report(&s, &Sequence::constant(1.0), 1000, DEFAULT_TOLERANCE).unwrap();
        assert!(r.converged && r.tail_oscillation < 1e-12);
        let r = weighted_avg_report(&s, &phase(), 100_000, DEFAULT_TOLERANCE).unwrap();
        assert!(!r.converged);
    }
}
