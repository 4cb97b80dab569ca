//! Summability matrices: regularity probes and two explicit constructions
//! relating window averages to weighted averages.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::averaging::{sample, weighted_trajectory};
use crate::calculus::Sequence;
use crate::error::{Error, Result};
use crate::numerics::{one_minus_exp_neg, KahanSum, Scalar};
use crate::weights::WeightScheme;

/// Integer-valued spacing function s(N).
#[derive(Clone)]
pub struct Spacing {
    name: String,
    f: Arc<dyn Fn(u64) -> u64 + Send + Sync>,
}

impl fmt::Debug for Spacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Spacing({})", self.name)
    }
}

impl Spacing {
    pub fn new(name: impl Into<String>, f: impl Fn(u64) -> u64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn constant(c: u64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    /// ⌈N^p⌉ clipped to [1, N−1].
    pub fn power(p: f64) -> Self {
        Self::new(format!("ceil(N^{p})"), move |n| {
            let v = (n as f64).powf(p).ceil() as u64;
            v.clamp(1, n.saturating_sub(1).max(1))
        })
    }

    /// ⌊N/2⌋, at least 1.
    pub fn half() -> Self {
        Self::new("floor(N/2)", |n| (n / 2).max(1))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn at(&self, n: u64) -> u64 {
        (self.f)(n)
    }
}

/// Row `N` of a matrix: `values[i] = c_{N, lo + i}`, zero outside `[lo, hi]`.
#[derive(Clone, Debug, Serialize)]
pub struct SparseRow {
    pub lo: u64,
    pub hi: u64,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn get(&self, n: u64) -> f64 {
        if n < self.lo || n > self.hi {
            0.0
        } else {
            self.values[(n - self.lo) as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, c)| (self.lo + i as u64, *c))
    }

    pub fn sum(&self) -> f64 {
        crate::numerics::kahan_sum(self.values.iter().copied())
    }

    pub fn abs_sum(&self) -> f64 {
        crate::numerics::kahan_sum(self.values.iter().map(|c| c.abs()))
    }

    /// `N,n,c` lines.
    pub fn to_csv(&self, big_n: u64) -> String {
        let mut out = String::new();
        for (n, c) in self.iter() {
            out.push_str(&format!("{big_n},{n},{c:e}\n"));
        }
        out
    }
}

type RowFn = dyn Fn(u64) -> Result<SparseRow> + Send + Sync;

/// Matrix `(c_{N,n})` with rows built on demand and cached per N.
#[derive(Clone)]
pub struct SummabilityMatrix {
    name: String,
    params: String,
    row_fn: Arc<RowFn>,
    cache: Arc<Mutex<HashMap<u64, Arc<SparseRow>>>>,
}

impl fmt::Debug for SummabilityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SummabilityMatrix({} {})", self.name, self.params)
    }
}

impl SummabilityMatrix {
    pub fn new(
        name: impl Into<String>,
        params: impl Into<String>,
        row_fn: impl Fn(u64) -> Result<SparseRow> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), params: params.into(), row_fn: Arc::new(row_fn), cache: Default::default() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &str {
        &self.params
    }

    pub fn row(&self, big_n: u64) -> Result<Arc<SparseRow>> {
        if let Some(r) = self.cache.lock().expect("row cache poisoned").get(&big_n) {
            return Ok(Arc::clone(r));
        }
        let row = Arc::new((self.row_fn)(big_n)?);
        self.cache.lock().expect("row cache poisoned").insert(big_n, Arc::clone(&row));
        Ok(row)
    }

    pub fn identity() -> Self {
        Self::new("identity", "", |n| Ok(SparseRow { lo: n, hi: n, values: vec![1.0] }))
    }

    pub fn cesaro() -> Self {
        Self::new("cesaro", "", |n| Ok(SparseRow { lo: 1, hi: n, values: vec![1.0 / n as f64; n as usize] }))
    }

    /// c_{N,n} = 1 for n = 1 only; its first column never decays.
    pub fn column_one() -> Self {
        Self::new("column_one", "", |_| Ok(SparseRow { lo: 1, hi: 1, values: vec![1.0] }))
    }

    /// Rows of [`build_window_matrix`].
    pub fn window(u: WeightScheme, s: Spacing) -> Self {
        let params = format!("U={}, s={}", u.name(), s.name());
        Self::new("window", params, move |n| build_window_matrix(&u, &s, n))
    }

    /// Rows of [`build_descending_row`] with `A = a(N)`, `B = b(N)`.
    pub fn descending(
        w: WeightScheme,
        s: Spacing,
        a: impl Fn(u64) -> u64 + Send + Sync + 'static,
        b: impl Fn(u64) -> u64 + Send + Sync + 'static,
    ) -> Self {
        let params = format!("W={}, s={}", w.name(), s.name());
        Self::new("descending", params, move |n| build_descending_row(&w, &s, a(n), b(n)).map(|r| r.row))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub horizon: u64,
    pub n_probe: u64,
    pub column_decay: f64,
    pub row_sum_error: f64,
    pub abs_row_sup: f64,
    pub tolerance: f64,
    pub bound: f64,
    pub verdict: bool,
}

/// Finite-horizon check of the three regularity conditions. Rows are probed at
/// eleven N spread over `[0.9·horizon, horizon]`; columns `n ≤ n_probe` at N = horizon.
pub fn check_regularity(mat: &SummabilityMatrix, horizon: u64, n_probe: u64) -> Result<RegularityReport> {
    check_regularity_with(mat, horizon, n_probe, 1e-2, 2.0)
}

pub fn check_regularity_with(
    mat: &SummabilityMatrix,
    horizon: u64,
    n_probe: u64,
    tolerance: f64,
    bound: f64,
) -> Result<RegularityReport> {
    if horizon < 10 * n_probe {
        return Err(Error::Invalid(format!("horizon {horizon} must be at least 10·n_probe = {}", 10 * n_probe)));
    }
    let lo = (horizon as f64 * 0.9).ceil() as u64;
    let mut probes: Vec<u64> = (0..=10).map(|i| lo + (horizon - lo) * i / 10).collect();
    probes.dedup();
    let mut row_sum_error = 0.0f64;
    let mut abs_row_sup = 0.0f64;
    for &n in &probes {
        let row = mat.row(n)?;
        row_sum_error = row_sum_error.max((row.sum() - 1.0).abs());
        abs_row_sup = abs_row_sup.max(row.abs_sum());
    }
    let last = mat.row(horizon)?;
    let column_decay = (1..=n_probe).map(|n| last.get(n).abs()).fold(0.0, f64::max);
    let verdict = column_decay <= tolerance && row_sum_error <= tolerance && abs_row_sup <= bound;
    Ok(RegularityReport { horizon, n_probe, column_decay, row_sum_error, abs_row_sup, tolerance, bound, verdict })
}

/// Σ_n c_{N,n} y_n over the row's support.
pub fn apply_row<T: Scalar>(mat: &SummabilityMatrix, y: &Sequence<T>, big_n: u64) -> Result<T> {
    let row = mat.row(big_n)?;
    let ys = sample(y, row.lo, row.hi)?;
    let mut acc = KahanSum::new();
    for (c, v) in row.values.iter().zip(ys) {
        acc.add(v * *c);
    }
    Ok(acc.value())
}

fn log_delta(u: &WeightScheme, n: u64) -> Result<f64> {
    let d = u.delta_log_v(n)?;
    let head = if n == u.domain_start() { 0.0 } else { one_minus_exp_neg(d).ln() };
    Ok(u.log_v(n)? + head)
}

fn check_window(u: &WeightScheme, s: &Spacing, big_n: u64) -> Result<u64> {
    let sn = s.at(big_n);
    if sn == 0 || sn + 1 > big_n || big_n - sn < u.domain_start() {
        return Err(Error::Hypothesis {
            hypothesis: format!("1 ≤ s(N) ≤ N − 1 with N − s(N) ≥ {}", u.domain_start()),
            index: big_n,
        });
    }
    Ok(sn)
}

/// Row N of the window matrix: with d_n = ΔlogU(n) and s = s(N),
/// c_{N,N} = 1/(s(1 − e^{−d_N})) and, for N − s ≤ n < N,
/// c_{N,n} = (1/s)·(1/(1 − e^{−d_n}) − 1/(e^{d_{n+1}} − 1)), which is
/// U(n)(1/ΔU(n) − 1/ΔU(n+1))/s written without forming U.
pub fn build_window_matrix(u: &WeightScheme, s: &Spacing, big_n: u64) -> Result<SparseRow> {
    let sn = check_window(u, s, big_n)?;
    let lo = big_n - sn;
    let mut prev = log_delta(u, lo)?;
    for n in lo + 1..=big_n {
        let cur = log_delta(u, n)?;
        if cur < prev - 1e-12 * prev.abs().max(1.0) {
            return Err(Error::Hypothesis { hypothesis: "ΔU nondecreasing".into(), index: n });
        }
        prev = cur;
    }
    let inv_s = 1.0 / sn as f64;
    let start = u.domain_start();
    let first = |n: u64| -> Result<f64> {
        if n == start {
            Ok(1.0)
        } else {
            Ok(1.0 / one_minus_exp_neg(u.delta_log_v(n)?))
        }
    };
    let mut values = Vec::with_capacity(sn as usize + 1);
    for n in lo..big_n {
        let next = 1.0 / u.delta_log_v(n + 1)?.exp_m1();
        values.push(inv_s * (first(n)? - next));
    }
    values.push(inv_s * first(big_n)?);
    Ok(SparseRow { lo, hi: big_n, values })
}

/// For every k in the window, s(N)·ΔU(k)·Σ_{n=k}^{N} c_{N,n}/U(n) − 1, computed
/// through the suffix recursion S(k) = c_k + e^{−d_{k+1}} S(k+1). Returns the
/// largest relative deviation and its index.
pub fn window_telescoping_error(u: &WeightScheme, s: &Spacing, big_n: u64) -> Result<(f64, u64)> {
    let row = build_window_matrix(u, s, big_n)?;
    let sn = s.at(big_n) as f64;
    let start = u.domain_start();
    let mut suffix = 0.0;
    let mut worst = (0.0, big_n);
    for k in (row.lo..=row.hi).rev() {
        let decay = if k < big_n { (-u.delta_log_v(k + 1)?).exp() } else { 0.0 };
        suffix = row.get(k) + decay * suffix;
        let head = if k == start { 1.0 } else { one_minus_exp_neg(u.delta_log_v(k)?) };
        let err = (sn * head * suffix - 1.0).abs();
        if err > worst.0 {
            worst = (err, k);
        }
    }
    Ok(worst)
}

/// Σ_n c_{N,n} = 1 + U(N−s)/(s ΔU(N−s)).
pub fn window_row_sum_closed_form(u: &WeightScheme, s: &Spacing, big_n: u64) -> Result<f64> {
    let sn = check_window(u, s, big_n)?;
    let m = big_n - sn;
    let head = if m == u.domain_start() { 1.0 } else { one_minus_exp_neg(u.delta_log_v(m)?) };
    Ok(1.0 + 1.0 / (sn as f64 * head))
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowResidual {
    pub horizon: u64,
    pub residual: f64,
    /// U(N−s−1)/(s ΔU(N−s)) · ‖E^U_{n≤N−s−1} x_n‖, the exact size of the tail term.
    pub tail_term: f64,
    /// sup‖x‖ · U(N−s−1)/(s ΔU(N−s)).
    pub tail_bound: f64,
}

/// ‖E_{n∈[N−s,N]} x_n − Σ_n c_{N,n} E^U_{k≤n} x_k‖, where the window average is
/// (1/s) Σ_{n=N−s}^{N} x_n.
pub fn window_vs_weighted_residual<T: Scalar>(
    u: &WeightScheme,
    s: &Spacing,
    x: &Sequence<T>,
    big_n: u64,
) -> Result<WindowResidual> {
    let row = build_window_matrix(u, s, big_n)?;
    let sn = s.at(big_n);
    let traj = weighted_trajectory(u, x, big_n)?;
    let xs = sample(x, row.lo, big_n)?;
    let mut lhs = KahanSum::new();
    for v in &xs {
        lhs.add(*v);
    }
    let lhs = lhs.value() * (1.0 / sn as f64);
    let mut rhs = KahanSum::new();
    for (n, c) in row.iter() {
        rhs.add(traj.at(n) * c);
    }
    let residual = (lhs - rhs.value()).norm();
    let m = big_n - sn;
    let (factor, tail_avg) = if m > u.domain_start() {
        (1.0 / (sn as f64 * u.delta_log_v(m)?.exp_m1()), traj.at(m - 1).norm())
    } else {
        (0.0, 0.0)
    };
    let sup = sample(x, u.domain_start(), big_n)?.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(WindowResidual { horizon: big_n, residual, tail_term: factor * tail_avg, tail_bound: factor * sup })
}

#[derive(Clone, Debug, Serialize)]
pub struct DescendingRow {
    pub row: SparseRow,
    /// Largest relative deviation in the defining identity over the checked n.
    pub identity_error: f64,
    pub identity_checks: usize,
}

/// Builds c_{N,n} for n ∈ [A, B] with W = log V of the scheme:
/// c_B = s(B)ΔW(B)/(W(B) − W(A)) and, descending,
/// c_n = s(n)(ΔW(n)/(W(B) − W(A)) − Σ_{j>n, j−s(j)≤n} c_j/s(j)).
///
/// Because Δs ∈ {0, 1}, j − s(j) is nondecreasing, so the active j form a
/// contiguous block (n, J] and a running sum gives O(B − A) work.
pub fn build_descending_row(w: &WeightScheme, s: &Spacing, a: u64, b: u64) -> Result<DescendingRow> {
    let start = w.domain_start();
    if a >= b {
        return Err(Error::Invalid(format!("descending row needs A < B, got [{a}, {b}]")));
    }
    if a <= start {
        return Err(Error::Domain { n: a, start: start + 1 });
    }
    let len = (b - a + 1) as usize;
    let mut dw = Vec::with_capacity(len);
    let mut sv = Vec::with_capacity(len);
    for n in a..=b {
        dw.push(w.delta_log_v(n)?);
        let sn = s.at(n);
        if sn == 0 || sn >= n {
            return Err(Error::Hypothesis { hypothesis: "1 ≤ s(n) ≤ n − 1".into(), index: n });
        }
        sv.push(sn);
    }
    for i in 1..len {
        if dw[i] > dw[i - 1] * (1.0 + 1e-12) {
            return Err(Error::Hypothesis { hypothesis: "ΔW nonincreasing".into(), index: a + i as u64 });
        }
        let ds = sv[i] as i64 - sv[i - 1] as i64;
        if !(0..=1).contains(&ds) {
            return Err(Error::Hypothesis { hypothesis: "Δs ∈ {0, 1}".into(), index: a + i as u64 });
        }
    }
    let span = w.log_v(b)? - w.log_v(a)?;
    if !(span > 0.0) {
        return Err(Error::DegenerateInterval { m: a, n: b });
    }
    let target: Vec<f64> = dw.iter().map(|d| d / span).collect();

    let mut c = vec![0.0; len];
    let mut q = vec![0.0; len]; // c_j / s(j)
    let mut active = KahanSum::new();
    let mut top = len - 1; // largest index j still in the active block
    c[len - 1] = sv[len - 1] as f64 * target[len - 1];
    q[len - 1] = target[len - 1];
    for i in (0..len - 1).rev() {
        let n = a + i as u64;
        active.add(q[i + 1]);
        while top > i && (a + top as u64) - sv[top] > n {
            active.add(-q[top]);
            top -= 1;
        }
        let ci = sv[i] as f64 * (target[i] - active.value());
        if ci < -1e-12 {
            return Err(Error::Construction(format!(
                "negative weight c = {ci:e} at n = {n} despite verified hypotheses"
            )));
        }
        c[i] = ci;
        q[i] = ci / sv[i] as f64;
    }

    let stride = if cfg!(debug_assertions) { 1 } else { 16 };
    let mut identity_error = 0.0f64;
    let mut identity_checks = 0;
    for i in (0..len).step_by(stride).chain(std::iter::once(len - 1)) {
        let n = a + i as u64;
        let mut acc = KahanSum::new();
        for (j, qj) in q.iter().enumerate().skip(i) {
            let jn = a + j as u64;
            if jn - sv[j] <= n {
                acc.add(*qj);
            } else if jn > n + sv[len - 1] {
                break;
            }
        }
        let err = (acc.value() - target[i]).abs() / target[i].abs().max(f64::MIN_POSITIVE);
        identity_checks += 1;
        if err > 1e-8 {
            return Err(Error::Identity { index: n, lhs: acc.value(), rhs: target[i] });
        }
        identity_error = identity_error.max(err);
    }
    Ok(DescendingRow { row: SparseRow { lo: a, hi: b, values: c }, identity_error, identity_checks })
}

#[derive(Clone, Debug, Serialize)]
pub struct DescendingResidual {
    pub residual: f64,
    /// sup‖x‖ · s(B)ΔW(B)/(W(B) − W(A)).
    pub tail_bound: f64,
    /// sup‖x‖ · s(A)ΔW(A)/(W(B) − W(A)), the bound the switching argument gives directly.
    pub boundary_bound: f64,
}

/// ‖Σ_{k=A}^{B} c_k E_{n∈[k−s(k),k]} x_n − E^W_{n∈[A,B]} x_n‖ with
/// E_{n∈[k−s,k]} = (1/s) Σ_{n=k−s}^{k} x_n and E^W_{[A,B]} = Σ_{n=A}^{B} ΔW(n) x_n/(W(B) − W(A)).
pub fn uniform_from_windows_residual<T: Scalar>(
    w: &WeightScheme,
    s: &Spacing,
    x: &Sequence<T>,
    a: u64,
    b: u64,
) -> Result<DescendingResidual> {
    let built = build_descending_row(w, s, a, b)?;
    let lo = a - s.at(a);
    let xs = sample(x, lo, b)?;
    let mut prefix = Vec::with_capacity(xs.len() + 1);
    let mut acc = KahanSum::new();
    prefix.push(T::zero());
    for v in &xs {
        acc.add(*v);
        prefix.push(acc.value());
    }
    let window_sum = |k: u64| {
        let sk = s.at(k);
        prefix[(k - lo + 1) as usize] - prefix[(k - sk - lo) as usize]
    };
    let mut lhs = KahanSum::new();
    for (k, c) in built.row.iter() {
        lhs.add(window_sum(k) * (c / s.at(k) as f64));
    }
    let span = w.log_v(b)? - w.log_v(a)?;
    let mut rhs = KahanSum::new();
    for n in a..=b {
        rhs.add(xs[(n - lo) as usize] * (w.delta_log_v(n)? / span));
    }
    let sup = xs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(DescendingResidual {
        residual: (lhs.value() - rhs.value()).norm(),
        tail_bound: sup * s.at(b) as f64 * w.delta_log_v(b)? / span,
        boundary_bound: sup * s.at(a) as f64 * w.delta_log_v(a)? / span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::builtin;

    fn scheme(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> WeightScheme {
        WeightScheme::new(name, Sequence::new(name, move |n| f(n as f64)))
    }

    #[test]
    fn classical_matrices() {
        assert!(check_regularity(&SummabilityMatrix::identity(), 10_000, 100).unwrap().verdict);
        assert!(check_regularity(&SummabilityMatrix::cesaro(), 10_000, 100).unwrap().verdict);
        let bad = check_regularity(&SummabilityMatrix::column_one(), 10_000, 100).unwrap();
        assert!(!bad.verdict && bad.column_decay == 1.0);
        assert!(check_regularity(&SummabilityMatrix::cesaro(), 500, 100).is_err());
    }

    #[test]
    fn apply_row_examples() {
        let y = Sequence::new("1/n", |n| 1.0 / n as f64);
        assert_eq!(apply_row(&SummabilityMatrix::identity(), &y, 7).unwrap(), 1.0 / 7.0);
        let h: f64 = (1..=10_000).map(|n| 1.0 / n as f64).sum();
        let v = apply_row(&SummabilityMatrix::cesaro(), &y, 10_000).unwrap();
        assert!((v - h / 1e4).abs() < 1e-15);
        assert!((v - 9.7876e-4).abs() < 1e-7);
    }

    #[test]
    fn window_row_for_square() {
        let u = scheme("N^2", |x| 2.0 * x.ln());
        let row = build_window_matrix(&u, &Spacing::constant(1), 50).unwrap();
        assert_eq!((row.lo, row.hi), (49, 50));
        assert!((row.get(50) - 2500.0 / 99.0).abs() < 1e-10);
        let expected_49 = 49.0 * 49.0 * (1.0 / 97.0 - 1.0 / 99.0);
        assert!((row.get(49) - expected_49).abs() < 1e-10);
        let (err, _) = window_telescoping_error(&u, &Spacing::constant(1), 50).unwrap();
        assert!(err < 1e-12);
    }

    #[test]
    fn window_hypothesis_violation() {
        // ΔU decreasing: U = log(N+1) style concave weight.
        let u = scheme("sqrt-log", |x| x.sqrt().ln());
        assert!(matches!(
            build_window_matrix(&u, &Spacing::constant(3), 100),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn window_residual_matches_tail_term() {
        let u = scheme("e^{N^0.8}", |x| x.powf(0.8));
        let s = Spacing::power(0.9);
        let x = Sequence::constant(2.0);
        let r = window_vs_weighted_residual(&u, &s, &x, 5000).unwrap();
        assert!((r.residual - r.tail_term).abs() < 1e-9, "{r:?}");
        assert!((r.tail_term - r.tail_bound).abs() < 1e-9);
        let sum = build_window_matrix(&u, &s, 5000).unwrap().sum();
        assert!((sum - window_row_sum_closed_form(&u, &s, 5000).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn descending_small_cases() {
        let w = builtin("exp_sqrt").unwrap();
        let r = build_descending_row(&w, &Spacing::constant(1), 20, 60).unwrap();
        assert!(r.row.values.iter().all(|c| *c >= -1e-12));
        let r = build_descending_row(&w, &Spacing::power(0.5), 100, 400).unwrap();
        assert!(r.row.values.iter().all(|c| *c >= -1e-12));
        assert!(r.identity_error < 1e-8);
        let lg = builtin("cesaro").unwrap();
        let r = build_descending_row(&lg, &Spacing::half(), 50, 500).unwrap();
        assert!(r.row.values.iter().all(|c| *c >= -1e-12));
    }

    #[test]
    fn descending_rejects_increasing_delta() {
        let w = scheme("N^2", |x| x * x);
        assert!(matches!(
            build_descending_row(&w, &Spacing::constant(1), 10, 50),
            Err(Error::Hypothesis { .. })
        ));
        let jumpy = Spacing::new("jumpy", |n| if n % 2 == 0 { 2 } else { 5 });
        assert!(matches!(
            build_descending_row(&builtin("exp_sqrt").unwrap(), &jumpy, 10, 50),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn descending_constant_residual_is_boundary_mass() {
        let w = builtin("exp_sqrt").unwrap();
        let s = Spacing::power(0.75);
        let (a, b) = (400u64, 2500u64);
        let r = uniform_from_windows_residual(&w, &s, &Sequence::constant(1.0), a, b).unwrap();
        let row = build_descending_row(&w, &s, a, b).unwrap().row;
        let lhs: f64 = row.iter().map(|(k, c)| c * (s.at(k) + 1) as f64 / s.at(k) as f64).sum();
        let rhs = (w.log_v(b).unwrap() - w.log_v(a - 1).unwrap()) / (w.log_v(b).unwrap() - w.log_v(a).unwrap());
        assert!((r.residual - (lhs - rhs).abs()).abs() < 1e-9);
        assert!(r.residual <= r.boundary_bound + 1e-8);
        assert!(r.residual <= r.tail_bound + 1e-8);
    }
}
