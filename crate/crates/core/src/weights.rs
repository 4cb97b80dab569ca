//! Weight schemes stored through W = log V, plus heuristics for the classes
//! of slowly growing functions that produce them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::calculus::{delta_iter, poly_delta, CachePolicy, IntPolynomial, Sequence};
use crate::error::{Error, Result};
use crate::numerics::{geometric_grid, one_minus_exp_neg};

/// A weight function V given by `log_v = log V`. V is never materialized.
#[derive(Clone)]
pub struct WeightScheme {
    name: String,
    log_v: Sequence<f64>,
    /// Closed form of ΔlogV for n above the domain start, when subtraction would cancel.
    step: Option<Arc<dyn Fn(u64) -> f64 + Send + Sync>>,
    horizon_hint: u64,
}

impl fmt::Debug for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightScheme")
            .field("name", &self.name)
            .field("domain_start", &self.domain_start())
            .field("horizon_hint", &self.horizon_hint)
            .finish()
    }
}

/// Precomputed `logV(n)` and `ΔlogV(n)` for `n ∈ [start, hi]`; `step[0]` is +∞.
#[derive(Clone, Debug)]
pub struct WeightTable {
    pub start: u64,
    pub log_v: Vec<f64>,
    pub step: Vec<f64>,
}

impl WeightTable {
    pub fn hi(&self) -> u64 {
        self.start + self.log_v.len() as u64 - 1
    }

    #[inline]
    pub fn idx(&self, n: u64) -> usize {
        (n - self.start) as usize
    }

    #[inline]
    pub fn log_v_at(&self, n: u64) -> f64 {
        self.log_v[self.idx(n)]
    }

    #[inline]
    pub fn step_at(&self, n: u64) -> f64 {
        self.step[self.idx(n)]
    }

    /// ΔV(n)/V(N).
    #[inline]
    pub fn weight(&self, n: u64, big_n: u64) -> f64 {
        let i = self.idx(n);
        let ratio = (self.log_v[i] - self.log_v_at(big_n)).exp();
        if i == 0 {
            ratio
        } else {
            ratio * one_minus_exp_neg(self.step[i])
        }
    }
}

impl WeightScheme {
    pub fn new(name: impl Into<String>, log_v: Sequence<f64>) -> Self {
        Self { name: name.into(), log_v, step: None, horizon_hint: 100_000 }
    }

    /// Supplies ΔlogV(n) for n above the domain start in closed form.
    pub fn with_step(mut self, step: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        self.step = Some(Arc::new(step));
        self
    }

    pub fn with_horizon_hint(mut self, horizon: u64) -> Self {
        self.horizon_hint = horizon;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon_hint(&self) -> u64 {
        self.horizon_hint
    }

    pub fn domain_start(&self) -> u64 {
        self.log_v.domain_start()
    }

    pub fn log_v_sequence(&self) -> &Sequence<f64> {
        &self.log_v
    }

    pub fn log_v(&self, n: u64) -> Result<f64> {
        self.log_v.get(n)
    }

    /// ΔlogV(n) with the usual boundary rule: at the domain start it is logV(start).
    pub fn delta_log_v(&self, n: u64) -> Result<f64> {
        let start = self.domain_start();
        if n == start {
            return self.log_v(n);
        }
        if n < start {
            return Err(Error::Domain { n, start });
        }
        Ok(self.step_above_start(n))
    }

    fn step_above_start(&self, n: u64) -> f64 {
        match &self.step {
            Some(s) => s(n),
            None => self.log_v.get_or_zero(n) - self.log_v.get_or_zero(n - 1),
        }
    }

    /// ΔV(n)/V(N) in the log domain; at the domain start this is V(start)/V(N).
    pub fn normalized_weight(&self, n: u64, big_n: u64) -> Result<f64> {
        let start = self.domain_start();
        if n < start || n == 0 {
            return Err(Error::Domain { n, start });
        }
        if n > big_n {
            return Err(Error::BeyondHorizon { n, horizon: big_n });
        }
        let ratio = (self.log_v(n)? - self.log_v(big_n)?).exp();
        if n == start {
            Ok(ratio)
        } else {
            Ok(ratio * one_minus_exp_neg(self.step_above_start(n)))
        }
    }

    /// logV and ΔlogV on `[start, hi]`, evaluated in one pass without the memo table.
    pub fn table(&self, hi: u64) -> Result<WeightTable> {
        let start = self.domain_start();
        if hi < start {
            return Err(Error::Domain { n: hi, start });
        }
        let log_v = self.log_v.values(start, hi)?;
        let mut step = Vec::with_capacity(log_v.len());
        step.push(f64::INFINITY);
        for n in start + 1..=hi {
            let d = match &self.step {
                Some(s) => s(n),
                None => {
                    let i = (n - start) as usize;
                    log_v[i] - log_v[i - 1]
                }
            };
            step.push(d);
        }
        Ok(WeightTable { start, log_v, step })
    }

    /// Checks logV strictly increasing on `[start, hi]`.
    pub fn validate(&self, hi: u64) -> Result<()> {
        let t = self.table(hi)?;
        for (i, d) in t.step.iter().enumerate().skip(1) {
            if !(*d > 0.0) || !t.log_v[i].is_finite() {
                return Err(Error::Hypothesis {
                    hypothesis: format!("logV of `{}` strictly increasing", self.name),
                    index: t.start + i as u64,
                });
            }
        }
        Ok(())
    }

    /// The scheme with log V' = log(log V), so that averaging against `self.log_form()`
    /// uses the weights ΔW/W for W = log V. Starts at the first index with logV > 0.
    pub fn log_form(&self) -> Result<WeightScheme> {
        let mut start = self.domain_start();
        let limit = start + 1_000_000;
        while self.log_v(start)? <= 0.0 {
            start += 1;
            if start > limit {
                return Err(Error::Invalid(format!("logV of `{}` never becomes positive", self.name)));
            }
        }
        let inner = self.clone();
        let log_v = Sequence::builder(format!("log({})", self.log_v.name()), move |n| {
            inner.log_v.get_or_zero(n).ln()
        })
        .domain_start(start)
        .cache(CachePolicy::None)
        .build();
        let inner = self.clone();
        Ok(WeightScheme::new(format!("log_form({})", self.name), log_v)
            .with_step(move |n| {
                let prev = inner.log_v.get_or_zero(n - 1);
                (inner.step_above_start(n) / prev).ln_1p()
            })
            .with_horizon_hint(self.horizon_hint))
    }
}

/// Built-in schemes. Names: `cesaro`, `log`, `exp_sqrt`, `linear`,
/// `power:<c>` (V = N^c), `exp_pow:<a>` (log V = N^a, 0 < a ≤ 1).
pub fn builtin(name: &str) -> Result<WeightScheme> {
    let unknown = || Error::UnknownName { kind: "weight scheme", name: name.to_string() };
    let scheme = match name {
        "cesaro" => WeightScheme::new("cesaro", Sequence::new("log n", |n| (n as f64).ln()))
            .with_step(|n| (1.0 / (n - 1) as f64).ln_1p()),
        "log" => WeightScheme::new(
            "log",
            Sequence::builder("log log n", |n| (n as f64).ln().ln()).domain_start(2).build(),
        )
        .with_step(|n| {
            let prev = ((n - 1) as f64).ln();
            ((1.0 / (n - 1) as f64).ln_1p() / prev).ln_1p()
        }),
        "exp_sqrt" => WeightScheme::new("exp_sqrt", Sequence::new("sqrt n", |n| (n as f64).sqrt()))
            .with_step(|n| 1.0 / ((n as f64).sqrt() + ((n - 1) as f64).sqrt())),
        "linear" => WeightScheme::new("linear", Sequence::new("n", |n| n as f64)).with_step(|_| 1.0),
        _ => {
            let (family, param) = name.split_once(':').ok_or_else(unknown)?;
            let p: f64 = param.trim().parse().map_err(|_| unknown())?;
            match family {
                "power" if p > 0.0 => {
                    WeightScheme::new(name, Sequence::new(format!("{p} log n"), move |n| p * (n as f64).ln()))
                        .with_step(move |n| p * (1.0 / (n - 1) as f64).ln_1p())
                }
                "exp_pow" if p > 0.0 && p <= 1.0 => {
                    WeightScheme::new(name, Sequence::new(format!("n^{p}"), move |n| (n as f64).powf(p)))
                }
                _ => return Err(unknown()),
            }
        }
    };
    Ok(scheme)
}

pub const BUILTIN_NAMES: [&str; 6] = ["cesaro", "log", "exp_sqrt", "linear", "power:<c>", "exp_pow:<a>"];

/// Tunable constants behind the finite-horizon verdicts.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thresholds {
    /// Δ^{ℓ−1}f must grow by this factor across the probed tail.
    pub doubling_factor: f64,
    /// Δ^ℓf at the horizon must fall below this fraction of its value at `monotone_from`.
    pub decay_ratio: f64,
    /// N·ΔW(N) must exceed this by the horizon.
    pub growth_bound: f64,
    /// Ratio of the geometric probe grid.
    pub grid_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { doubling_factor: 2.0, decay_ratio: 0.5, growth_bound: 10.0, grid_ratio: 1.05 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Evidence {
    pub condition: String,
    pub lo: u64,
    pub hi: u64,
    pub verdict: bool,
}

/// Heuristic class membership verdict for a sampled function.
#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub ell: Option<usize>,
    pub tempered: bool,
    pub monotone_from: u64,
    pub horizon: u64,
    pub evidence: Vec<Evidence>,
    pub heuristic: bool,
}

fn x_pow(ell: usize) -> IntPolynomial {
    let mut c = vec![0; ell + 1];
    c[ell] = 1;
    IntPolynomial::new(c)
}

/// Δ^ℓ f evaluated through the exact shift expansion, without memoizing the levels.
fn delta_power(f: &Sequence<f64>, ell: usize) -> Sequence<f64> {
    if ell == 0 {
        f.clone()
    } else {
        poly_delta(&x_pow(ell), f)
    }
}

#[allow(non_snake_case)]
pub fn classify_F(f: &Sequence<f64>, horizon: u64, ell_max: usize) -> Result<ClassificationReport> {
    classify_f_with(f, horizon, ell_max, &Thresholds::default())
}

pub fn classify_f_with(
    f: &Sequence<f64>,
    horizon: u64,
    ell_max: usize,
    th: &Thresholds,
) -> Result<ClassificationReport> {
    if horizon < 100 {
        return Err(Error::Invalid(format!("classification horizon {horizon} is below 100")));
    }
    if ell_max == 0 {
        return Err(Error::Invalid("ell_max must be at least 1".into()));
    }
    let start = f.domain_start();
    let mut evidence = Vec::new();
    let mut last_monotone = horizon;
    for ell in 1..=ell_max {
        let lo = start + ell as u64;
        let grid = geometric_grid(lo, horizon, th.grid_ratio);
        let g = delta_power(f, ell);
        let samples: Vec<f64> = grid.iter().map(|&n| g.get_or_zero(n)).collect();
        // Floating noise of an ℓ-th difference of values of size |f|.
        let noise: Vec<f64> = grid
            .iter()
            .map(|&n| f.get_or_zero(n).abs().max(1.0) * f64::EPSILON * 4.0 * (1u64 << ell.min(60)) as f64)
            .collect();
        let mut from_idx = None;
        for i in (0..samples.len()).rev() {
            let positive = samples[i] > 8.0 * noise[i];
            let decreasing = i + 1 == samples.len() || samples[i + 1] <= samples[i] + noise[i];
            if positive && decreasing {
                from_idx = Some(i);
            } else {
                break;
            }
        }
        let Some(i0) = from_idx else {
            evidence.push(Evidence {
                condition: format!("Δ^{ell} f positive and decreasing"),
                lo,
                hi: horizon,
                verdict: false,
            });
            continue;
        };
        let monotone_from = grid[i0];
        last_monotone = monotone_from;
        let enough_tail = monotone_from <= horizon / 10;
        evidence.push(Evidence {
            condition: format!("Δ^{ell} f positive and decreasing from {monotone_from}"),
            lo: monotone_from,
            hi: horizon,
            verdict: enough_tail,
        });
        if !enough_tail {
            continue;
        }
        let decays = *samples.last().unwrap() < th.decay_ratio * samples[i0];
        evidence.push(Evidence {
            condition: format!("Δ^{ell} f(horizon) < {} Δ^{ell} f(monotone_from)", th.decay_ratio),
            lo: monotone_from,
            hi: horizon,
            verdict: decays,
        });
        if !decays {
            continue;
        }
        let h = delta_power(f, ell - 1);
        let base = monotone_from.max((horizon as f64).powf(0.25).round() as u64);
        let (h_lo, h_hi) = (h.get_or_zero(base), h.get_or_zero(horizon));
        let grows = h_hi > 0.0 && h_hi >= th.doubling_factor * h_lo.max(0.0) && h_hi > h_lo;
        evidence.push(Evidence {
            condition: format!("Δ^{} f grows by factor {} on [{base}, {horizon}]", ell - 1, th.doubling_factor),
            lo: base,
            hi: horizon,
            verdict: grows,
        });
        if !grows {
            continue;
        }
        let w = WeightScheme::new("Δ^{ℓ−1} f", h);
        let trace = check_tempered_growth_with(&w, horizon, th)?;
        evidence.push(Evidence {
            condition: "N·ΔW(N) increasing and large".into(),
            lo: trace.samples.first().map(|s| s.0).unwrap_or(horizon),
            hi: horizon,
            verdict: trace.verdict,
        });
        return Ok(ClassificationReport {
            ell: Some(ell),
            tempered: trace.verdict,
            monotone_from,
            horizon,
            evidence,
            heuristic: true,
        });
    }
    Ok(ClassificationReport { ell: None, tempered: false, monotone_from: last_monotone, horizon, evidence, heuristic: true })
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperedTrace {
    pub verdict: bool,
    /// `(N, N·ΔlogV(N))` on the probe grid.
    pub samples: Vec<(u64, f64)>,
}

pub fn check_tempered_growth(scheme: &WeightScheme, horizon: u64) -> Result<TemperedTrace> {
    check_tempered_growth_with(scheme, horizon, &Thresholds::default())
}

pub fn check_tempered_growth_with(scheme: &WeightScheme, horizon: u64, th: &Thresholds) -> Result<TemperedTrace> {
    let lo = (horizon / 100).max(scheme.domain_start() + 1).max(2);
    let grid = geometric_grid(lo, horizon, 1.5);
    let mut samples = Vec::with_capacity(grid.len());
    for &n in &grid {
        samples.push((n, n as f64 * scheme.delta_log_v(n)?));
    }
    let increasing = samples.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-9));
    let large = samples.last().map(|s| s.1 > th.growth_bound).unwrap_or(false);
    Ok(TemperedTrace { verdict: increasing && large, samples })
}

/// The scheme with log V = Δ^{ℓ−1} f, refused unless `f` is certified with this ℓ.
pub fn weight_from_f(f: &Sequence<f64>, ell: usize) -> Result<WeightScheme> {
    weight_from_f_with(f, ell, 100_000)
}

pub fn weight_from_f_with(f: &Sequence<f64>, ell: usize, horizon: u64) -> Result<WeightScheme> {
    if ell == 0 {
        return Err(Error::Invalid("ell must be positive".into()));
    }
    let report = classify_F(f, horizon, ell.max(4))?;
    if report.ell != Some(ell) {
        let reason = match report.ell {
            Some(l) => format!("classification certified ℓ = {l}"),
            None => format!("no ℓ ≤ {} certified up to {horizon}", ell.max(4)),
        };
        return Err(Error::Uncertified { name: f.name().to_string(), ell, reason });
    }
    let w = delta_iter(f, ell - 1);
    let start = report.monotone_from.max(f.domain_start());
    let w2 = w.clone();
    let log_v = Sequence::builder(format!("Δ^{} {}", ell - 1, f.name()), move |n| w2.get_or_zero(n))
        .domain_start(start)
        .build();
    let w3 = delta_iter(f, ell);
    Ok(WeightScheme::new(format!("Δ^{} {}", ell - 1, f.name()), log_v)
        .with_step(move |n| w3.get_or_zero(n))
        .with_horizon_hint(horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(name: &str, f: fn(f64) -> f64) -> Sequence<f64> {
        Sequence::new(name, move |n| f(n as f64))
    }

    #[test]
    fn builtin_values() {
        assert!((builtin("cesaro").unwrap().log_v(10).unwrap() - 10f64.ln()).abs() < 1e-15);
        assert_eq!(builtin("exp_sqrt").unwrap().log_v(16).unwrap(), 4.0);
        let n = 4f64.exp().round() as u64;
        assert!((builtin("log").unwrap().log_v(n).unwrap() - 4f64.ln()).abs() < 0.01);
        assert!(matches!(builtin("nope"), Err(Error::UnknownName { .. })));
        assert!(builtin("power:2").is_ok());
        assert!(builtin("exp_pow:0.5").is_ok());
        assert!(builtin("exp_pow:1.5").is_err());
    }

    #[test]
    fn closed_form_steps_match_differences() {
        for name in ["cesaro", "log", "exp_sqrt", "power:1.5", "linear"] {
            let s = builtin(name).unwrap();
            for n in (s.domain_start() + 1)..2000 {
                let direct = s.log_v(n).unwrap() - s.log_v(n - 1).unwrap();
                let d = s.delta_log_v(n).unwrap();
                let scale = s.log_v(n).unwrap().abs().max(1.0);
                assert!((d - direct).abs() <= 1e-14 * scale, "{name} {n}");
            }
        }
    }

    #[test]
    fn normalized_weight_examples() {
        let c = builtin("cesaro").unwrap();
        assert!((c.normalized_weight(3, 10).unwrap() - 0.1).abs() < 1e-15);
        let e = builtin("exp_sqrt").unwrap();
        let expected = (10.0f64 - 100.0).exp() * (1.0 - (-(10.0 - 99f64.sqrt())).exp());
        assert!((e.normalized_weight(100, 10_000).unwrap() - expected).abs() <= 1e-12 * expected);
        let d = e.delta_log_v(500).unwrap();
        assert!((e.normalized_weight(500, 500).unwrap() - (1.0 - (-d).exp())).abs() < 1e-15);
        assert!(e.normalized_weight(11, 10).is_err());
    }

    #[test]
    fn weights_sum_to_one() {
        for name in ["cesaro", "log", "exp_sqrt", "linear"] {
            let s = builtin(name).unwrap();
            for big_n in [10u64, 1000, 100_000] {
                let t = s.table(big_n).unwrap();
                let total = crate::numerics::kahan_sum((t.start..=big_n).map(|n| t.weight(n, big_n)));
                assert!((total - 1.0).abs() < 1e-9, "{name} {big_n}: {total}");
            }
        }
    }

    #[test]
    fn log_form_of_cesaro_is_log() {
        let lf = builtin("cesaro").unwrap().log_form().unwrap();
        let lg = builtin("log").unwrap();
        assert_eq!(lf.domain_start(), 2);
        for n in 2..500 {
            assert!((lf.log_v(n).unwrap() - lg.log_v(n).unwrap()).abs() < 1e-14);
            assert!((lf.delta_log_v(n).unwrap() - lg.delta_log_v(n).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn classification_examples() {
        let r = classify_F(&seq("n^1.5", |x| x.powf(1.5)), 1_000_000, 4).unwrap();
        assert_eq!(r.ell, Some(2));
        assert!(r.tempered);
        let r = classify_F(&seq("log n", f64::ln), 1_000_000, 4).unwrap();
        assert_eq!(r.ell, Some(1));
        assert!(!r.tempered);
        let r = classify_F(&seq("n", |x| x), 1_000_000, 4).unwrap();
        assert_eq!(r.ell, None);
        let r = classify_F(&seq("n^2", |x| x * x), 100_000, 4).unwrap();
        assert_eq!(r.ell, None);
        let r = classify_F(&seq("n^2.5", |x| x.powf(2.5)), 10_000, 4).unwrap();
        assert_eq!(r.ell, Some(3));
        assert!(classify_F(&seq("n", |x| x), 50, 4).is_err());
    }

    #[test]
    fn tempered_growth_examples() {
        assert!(check_tempered_growth(&builtin("exp_sqrt").unwrap(), 1_000_000).unwrap().verdict);
        assert!(!check_tempered_growth(&builtin("cesaro").unwrap(), 1_000_000).unwrap().verdict);
        assert!(check_tempered_growth(&builtin("linear").unwrap(), 1_000_000).unwrap().verdict);
    }

    #[test]
    fn weight_from_f_examples() {
        let f = seq("n^1.5", |x| x.powf(1.5));
        let w = weight_from_f(&f, 2).unwrap();
        for n in [1_000u64, 100_000, 1_000_000] {
            let ratio = w.log_v(n).unwrap() / (1.5 * (n as f64).sqrt());
            assert!((ratio - 1.0).abs() < 2.0 / (n as f64).sqrt(), "{n}: {ratio}");
        }
        let g = seq("sqrt", f64::sqrt);
        let w = weight_from_f(&g, 1).unwrap();
        assert_eq!(w.log_v(50).unwrap(), 50f64.sqrt());
        let l = weight_from_f(&seq("log n", f64::ln), 1).unwrap();
        assert_eq!(l.log_v(7).unwrap(), 7f64.ln());
        assert!(matches!(weight_from_f(&f, 1), Err(Error::Uncertified { .. })));
        assert!(weight_from_f(&seq("n", |x| x), 1).is_err());
    }

    #[test]
    fn weight_versus_log_step() {
        for name in ["cesaro", "exp_sqrt", "log"] {
            let s = builtin(name).unwrap();
            for n in geometric_grid(10, 100_000, 1.3) {
                let d = s.delta_log_v(n).unwrap();
                let w = s.normalized_weight(n, n).unwrap();
                assert!((w - d).abs() <= d * d, "{name} {n}");
            }
        }
    }

    #[test]
    fn no_nan_for_large_log_values() {
        let s = WeightScheme::new("big", Sequence::new("10 n", |n| 10.0 * n as f64));
        for n in [1u64, 10, 500, 999, 1000] {
            let w = s.normalized_weight(n, 1000).unwrap();
            assert!(w.is_finite() && w >= 0.0);
        }
    }
}
