//! Auxiliary weights r, U, T, α, Ũ and Z built from a weight scheme V, with
//! finite-horizon certificates for the limit conditions they are meant to satisfy.
//!
//! Everything is carried in logarithms: log U, log ΔU, log T, log Ũ.

use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::calculus::{CachePolicy, Sequence};
use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, log_probe_grid, one_minus_exp_neg};
use crate::toeplitz::Spacing;
use crate::weights::WeightScheme;

/// Largest exponent r·logV allowed before refusing; e^700 is near the f64 ceiling.
pub const EXPONENT_GUARD: f64 = 700.0;

/// Sequence defined by a first-order recurrence, extended on demand and shared by clones.
fn prefix_sequence(
    name: impl Into<String>,
    start: u64,
    step: impl Fn(u64, Option<f64>) -> f64 + Send + Sync + 'static,
) -> Sequence<f64> {
    let store: Arc<Mutex<Vec<f64>>> = Arc::new(Mutex::new(Vec::new()));
    Sequence::builder(name, move |n| {
        let mut vals = store.lock().expect("prefix store poisoned");
        while (vals.len() as u64) <= n - start {
            let m = start + vals.len() as u64;
            let prev = vals.last().copied();
            vals.push(step(m, prev));
        }
        vals[(n - start) as usize]
    })
    .domain_start(start)
    .cache(CachePolicy::None)
    .build()
}

/// How r(N) is chosen before clipping to a nonincreasing sequence.
#[derive(Clone, Debug, Serialize)]
pub enum RChoice {
    /// r(N) = scale · log(e + logV(N))^{−exponent}.
    LogPower { scale: f64, exponent: f64 },
    /// r(N) = max(logV(N)^{−1/2}, (s(N)·ΔlogV(N))^{−1/2}).
    SqrtMax,
}

impl Default for RChoice {
    fn default() -> Self {
        RChoice::LogPower { scale: 0.09, exponent: 0.15 }
    }
}

/// How Z(N) is chosen: Z(N) = log(N + 20)^{−power}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZChoice {
    pub power: f64,
}

impl Default for ZChoice {
    fn default() -> Self {
        Self { power: 2.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionRow {
    pub condition: String,
    pub n: u64,
    pub value: f64,
    pub verdict: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RTrace {
    pub probes: Vec<u64>,
    pub rows: Vec<ConditionRow>,
    pub failed: Vec<String>,
}

fn r_probes(horizon: u64) -> Vec<u64> {
    let mut p: Vec<u64> = [100u64, 1_000, 10_000].into_iter().filter(|&n| n < horizon).collect();
    p.push(horizon);
    p
}

/// Builds r with the conditions
/// (i) r·logV → ∞, (ii) r·s·ΔlogV → ∞, (iii) Δlog r / Δlog logV → 0,
/// checked at N ∈ {10², 10³, 10⁴, horizon}. (i) and (ii) must increase across the
/// probes; (iii) must shrink in magnitude and end below 0.1.
pub fn make_r(v: &WeightScheme, s: &Spacing, horizon: u64, choice: &RChoice) -> Result<(Sequence<f64>, RTrace)> {
    let start = v.domain_start().max(2);
    let (v1, s1, choice1) = (v.clone(), s.clone(), choice.clone());
    let raw = move |n: u64| -> f64 {
        let lv = v1.log_v(n).unwrap_or(f64::NAN);
        match &choice1 {
            RChoice::LogPower { scale, exponent } => scale * (std::f64::consts::E + lv.max(0.0)).ln().powf(-exponent),
            RChoice::SqrtMax => {
                let d = v1.delta_log_v(n).unwrap_or(f64::NAN);
                lv.powf(-0.5).max((s1.at(n) as f64 * d).powf(-0.5))
            }
        }
    };
    let r = prefix_sequence("r", start, move |n, prev| {
        let x = raw(n);
        match prev {
            Some(p) if p < x => p,
            _ => x,
        }
    });

    let probes = r_probes(horizon);
    let mut rows = Vec::new();
    let mut series: [Vec<f64>; 3] = Default::default();
    for &n in &probes {
        let rn = r.get(n)?;
        let lv = v.log_v(n)?;
        let dv = v.delta_log_v(n)?;
        let c1 = rn * lv;
        let c2 = rn * s.at(n) as f64 * dv;
        let c3 = (rn / r.get(n - 1)?).ln() / (lv / v.log_v(n - 1)?).ln();
        for (k, val) in [c1, c2, c3].into_iter().enumerate() {
            series[k].push(val);
        }
    }
    let increasing = |xs: &[f64]| xs.windows(2).all(|w| w[1] > w[0]);
    let verdicts = [
        increasing(&series[0]),
        increasing(&series[1]),
        series[2].windows(2).all(|w| w[1].abs() <= w[0].abs() + 1e-12) && series[2].last().unwrap().abs() < 0.1,
    ];
    let names = ["(i) r·logV → ∞", "(ii) r·s·ΔlogV → ∞", "(iii) Δlog r / Δlog logV → 0"];
    for (k, name) in names.iter().enumerate() {
        for (i, &n) in probes.iter().enumerate() {
            rows.push(ConditionRow { condition: name.to_string(), n, value: series[k][i], verdict: verdicts[k] });
        }
    }
    let failed: Vec<String> = names.iter().zip(verdicts).filter(|(_, ok)| !ok).map(|(n, _)| n.to_string()).collect();
    if !failed.is_empty() {
        return Err(Error::Construction(format!("r does not satisfy {}", failed.join(", "))));
    }
    Ok((r, RTrace { probes, rows, failed }))
}

/// Sequences log ΔU and log U for ΔU(N) = (ΔV(N)/V(N))·V(N)^{r(N)}.
#[derive(Clone, Debug)]
pub struct UParts {
    pub log_delta_u: Sequence<f64>,
    pub scheme: WeightScheme,
}

/// U(N) = Σ_{n≤N} (ΔV(n)/V(n))·V(n)^{r(n)} as a weight scheme over log U.
/// Evaluating at N with r(N)·logV(N) > 700 panics in the sequence; use
/// [`make_u_checked`] to get the overflow guard as an error first.
pub fn make_u(v: &WeightScheme, r: &Sequence<f64>) -> UParts {
    let start = r.domain_start().max(v.domain_start());
    let (v1, r1) = (v.clone(), r.clone());
    let log_du = Sequence::builder("log ΔU", move |n| {
        let head = if n == v1.domain_start() {
            0.0
        } else {
            one_minus_exp_neg(v1.delta_log_v(n).expect("in domain")).ln()
        };
        r1.get_or_zero(n) * v1.log_v(n).expect("in domain") + head
    })
    .domain_start(start)
    .build();
    let du = log_du.clone();
    let log_u = prefix_sequence("log U", start, move |n, prev| {
        let d = du.get_or_zero(n);
        match prev {
            None => d,
            Some(p) => log_add_exp(p, d),
        }
    });
    let (du2, lu2) = (log_du.clone(), log_u.clone());
    let scheme = WeightScheme::new("U", log_u).with_step(move |n| {
        // ΔlogU = −log(1 − ΔU/U)
        -(-(du2.get_or_zero(n) - lu2.get_or_zero(n)).exp()).ln_1p()
    });
    UParts { log_delta_u: log_du, scheme }
}

/// [`make_u`] after checking the exponent guard on `[start, horizon]`.
pub fn make_u_checked(v: &WeightScheme, r: &Sequence<f64>, horizon: u64) -> Result<UParts> {
    let start = r.domain_start().max(v.domain_start());
    for n in start..=horizon {
        let e = r.get(n)? * v.log_v(n)?;
        if e > EXPONENT_GUARD {
            return Err(Error::Overflow { index: n, exponent: e });
        }
    }
    Ok(make_u(v, r))
}

/// log T(N) = r(N)·logV(N) − log r(N).
pub fn make_log_t(v: &WeightScheme, r: &Sequence<f64>) -> Sequence<f64> {
    let (v1, r1) = (v.clone(), r.clone());
    Sequence::builder("log T", move |n| {
        let rn = r1.get_or_zero(n);
        rn * v1.log_v(n).expect("in domain") - rn.ln()
    })
    .domain_start(r.domain_start().max(v.domain_start()))
    .build()
}

/// ΔT(N)/T(N) = 1 − T(N−1)/T(N).
fn t_ratio(log_t: &Sequence<f64>, n: u64) -> f64 {
    -(log_t.get_or_zero(n - 1) - log_t.get_or_zero(n)).exp_m1()
}

pub fn make_z(choice: ZChoice) -> Sequence<f64> {
    Sequence::builder(format!("log(N+20)^-{}", choice.power), move |n| ((n + 20) as f64).ln().powf(-choice.power))
        .cache(CachePolicy::None)
        .build()
}

#[derive(Clone, Debug, Serialize)]
pub struct TildeCertificate {
    pub lo: u64,
    pub horizon: u64,
    /// Smallest slack α_N − 1 − (ΔT(N)/T(N))(1 + Z(N−1)) seen, relative to its right side.
    pub alpha_eq_min_slack: f64,
    /// Smallest Δ²Ũ(N+1)/ΔŨ(N) seen.
    pub second_difference_min: f64,
    /// (ΔŨ(N)/Ũ(N)) / (ΔT(N)/T(N)) at the horizon.
    pub ratio_at_horizon: f64,
    pub ratio_ok: bool,
    /// Smallest ΔŨ(N+1)/ΔŨ(N) − ΔT(N+1)/ΔT(N).
    pub comparison_min: f64,
    /// max (ΔŨ(N)/Ũ(N)) / (ΔT(N)/T(N)).
    pub h: f64,
}

#[derive(Clone, Debug)]
pub struct TildeU {
    pub scheme: WeightScheme,
    pub alpha: Sequence<f64>,
    pub certificate: TildeCertificate,
}

/// Ũ(start) = U(start), Ũ(N+1) = α_N Ũ(N) with α_N = 1/(1 − (ΔT(N+1)/T(N+1))(1 + Z(N))).
/// The certificate scans every N in `[lo, horizon]`.
pub fn make_u_tilde(
    log_t: &Sequence<f64>,
    z: &Sequence<f64>,
    log_u_start: f64,
    lo: u64,
    horizon: u64,
) -> Result<TildeU> {
    let start = log_t.domain_start();
    let (lt, z1) = (log_t.clone(), z.clone());
    let x_of = Arc::new(move |n: u64| t_ratio(&lt, n + 1) * (1.0 + z1.get_or_zero(n)));
    let xa = Arc::clone(&x_of);
    let alpha = Sequence::builder("α", move |n| 1.0 / (1.0 - xa(n))).domain_start(start).build();
    let xb = Arc::clone(&x_of);
    let log_ut = prefix_sequence("log Ũ", start, move |n, prev| match prev {
        None => log_u_start,
        Some(p) => p - (-xb(n - 1)).ln_1p(),
    });
    let xc = Arc::clone(&x_of);
    let scheme = WeightScheme::new("Ũ", log_ut.clone()).with_step(move |n| -(-xc(n - 1)).ln_1p());

    let lo = lo.max(start + 2);
    let mut alpha_eq_min_slack = f64::INFINITY;
    let mut second_difference_min = f64::INFINITY;
    let mut comparison_min = f64::INFINITY;
    let mut h = 0.0f64;
    for n in lo..=horizon {
        let xn = x_of(n);
        if !(xn < 1.0) {
            return Err(Error::Hypothesis { hypothesis: "(ΔT/T)(1 + Z) < 1".into(), index: n });
        }
        // α_N − 1 = x_N/(1 − x_N) against (ΔT(N)/T(N))(1 + Z(N−1)) = x_{N−1}.
        let lhs = xn / (1.0 - xn);
        let rhs = x_of(n - 1);
        let slack = (lhs - rhs) / rhs;
        if slack < -1e-12 {
            return Err(Error::Construction(format!(
                "ΔŨ fails to be nondecreasing at N = {n} (α_N − 1 = {lhs:e} < {rhs:e}); use a slower Z"
            )));
        }
        alpha_eq_min_slack = alpha_eq_min_slack.min(slack);
        // log ΔŨ(N) = log Ũ(N) + log(1 − 1/α_{N−1}) = log Ũ(N) + log x_{N−1}.
        let log_du = |m: u64| log_ut.get_or_zero(m) + x_of(m - 1).ln();
        let ld_next = log_du(n + 1);
        let ld = log_du(n);
        let second = (ld_next - ld).exp_m1();
        second_difference_min = second_difference_min.min(second);
        let q = t_ratio(log_t, n);
        let ut_ratio = -(log_ut.get_or_zero(n - 1) - log_ut.get_or_zero(n)).exp_m1();
        h = h.max(ut_ratio / q);
        let log_dt = |m: u64| log_t.get_or_zero(m) + t_ratio(log_t, m).ln();
        let t_growth = (log_dt(n + 1) - log_dt(n)).exp();
        comparison_min = comparison_min.min((ld_next - ld).exp() - t_growth);
    }
    let q = t_ratio(log_t, horizon);
    let ut_ratio = -(log_ut.get(horizon - 1)? - log_ut.get(horizon)?).exp_m1();
    let ratio_at_horizon = ut_ratio / q;
    let certificate = TildeCertificate {
        lo,
        horizon,
        alpha_eq_min_slack,
        second_difference_min,
        ratio_at_horizon,
        ratio_ok: (ratio_at_horizon - 1.0).abs() <= 0.05,
        comparison_min,
        h,
    };
    Ok(TildeU { scheme, alpha, certificate })
}

#[derive(Clone, Debug, Serialize)]
pub struct UConditionRow {
    pub n: u64,
    /// V(N−1)/ΔU(N) · (ΔU(N)/ΔV(N) − ΔU(N−1)/ΔV(N−1)).
    pub value: f64,
    /// ΔlogU(N)/ΔlogV(N).
    pub log_ratio: f64,
    pub relative_error_estimate: f64,
    pub cancellation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct UConditionTrace {
    pub rows: Vec<UConditionRow>,
    pub verdict: bool,
}

fn log_delta_of(scheme: &WeightScheme, n: u64) -> Result<f64> {
    let head = if n == scheme.domain_start() { 0.0 } else { one_minus_exp_neg(scheme.delta_log_v(n)?).ln() };
    Ok(scheme.log_v(n)? + head)
}

/// Evaluates the U-condition on the logarithmic probe grid up to the horizon.
/// With ρ = log ΔU − log ΔV and d = ΔlogV(N) the quantity equals
/// −expm1(ρ(N−1) − ρ(N)) / expm1(d).
pub fn check_u_condition(u: &WeightScheme, v: &WeightScheme, horizon: u64) -> Result<UConditionTrace> {
    let start = u.domain_start().max(v.domain_start()) + 1;
    let mut rows = Vec::new();
    for n in log_probe_grid(horizon).into_iter().filter(|&n| n > start) {
        let rho = |m: u64| -> Result<f64> { Ok(log_delta_of(u, m)? - log_delta_of(v, m)?) };
        let (r0, r1) = (rho(n - 1)?, rho(n)?);
        let diff = r0 - r1;
        let d = v.delta_log_v(n)?;
        let value = -diff.exp_m1() / d.exp_m1();
        let relative_error_estimate = if diff == 0.0 {
            if r0 == 0.0 && r1 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            4.0 * f64::EPSILON * (r0.abs() + r1.abs()) / diff.abs()
        };
        rows.push(UConditionRow {
            n,
            value,
            log_ratio: u.delta_log_v(n)? / d,
            relative_error_estimate,
            cancellation: relative_error_estimate > 1e-3,
        });
    }
    let verdict = rows.last().is_some_and(|r| (r.value + 1.0).abs() <= 0.1);
    Ok(UConditionTrace { rows, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct AuxConfig {
    pub r: RChoice,
    pub z: ZChoice,
    /// First N of the Ũ certificate scan. The nondecreasing-ΔŨ inequality only
    /// has slack once (ΔT/T)² outweighs the drift of ΔT/T, roughly N ≳ 1/r(N)²,
    /// which is about 200 for log V = √N with the default r.
    pub certify_from: u64,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self { r: RChoice::default(), z: ZChoice::default(), certify_from: 200 }
    }
}

/// The full chain r → U → T → (α, Ũ) for a scheme V and spacing s.
#[derive(Clone, Debug)]
pub struct AuxWeights {
    pub r: Sequence<f64>,
    pub r_trace: RTrace,
    pub u: UParts,
    pub log_t: Sequence<f64>,
    pub z: Sequence<f64>,
    pub tilde: TildeU,
}

impl AuxWeights {
    pub fn build(v: &WeightScheme, s: &Spacing, horizon: u64, config: &AuxConfig) -> Result<Self> {
        let (r, r_trace) = make_r(v, s, horizon, &config.r)?;
        let u = make_u_checked(v, &r, horizon)?;
        let log_t = make_log_t(v, &r);
        let z = make_z(config.z);
        let log_u_start = u.scheme.log_v(u.scheme.domain_start())?;
        let tilde = make_u_tilde(&log_t, &z, log_u_start, config.certify_from, horizon)?;
        Ok(Self { r, r_trace, u, log_t, z, tilde })
    }

    /// T(N)/U(N).
    pub fn t_over_u(&self, n: u64) -> Result<f64> {
        Ok((self.log_t.get(n)? - self.u.scheme.log_v(n)?).exp())
    }
}
