//! Named sequences, functions and spacings, parsed from `name` or `name:params`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::Sequence;
use crate::error::{Error, Result};
use crate::toeplitz::Spacing;

pub const SEQUENCE_NAMES: [&str; 6] =
    ["constant:<re>[,<im>]", "exp_log_phase", "random_sign[:<seed>]", "alternating", "phase_power:<a>", "phase_linear:<alpha>"];
pub const FUNCTION_NAMES: [&str; 3] = ["power:<p>", "n_log_n", "poly:<a0>,<a1>,..."];
pub const SPACING_NAMES: [&str; 3] = ["const:<c>", "power:<p>", "half"];
pub const SYSTEM_NAMES: [&str; 2] = ["rotation", "cyclic"];
pub const SET_GENERATORS: [&str; 4] = ["blocks", "congruence", "random", "file"];

fn split(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (spec.trim(), None),
    }
}

fn numbers(kind: &'static str, spec: &str, params: Option<&str>) -> Result<Vec<f64>> {
    let Some(p) = params else { return Ok(Vec::new()) };
    p.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::UnknownName { kind, name: spec.to_string() }))
        .collect()
}

/// x_n = e^{2πi log n}.
pub fn exp_log_phase() -> Sequence<Complex64> {
    Sequence::builder("exp_log_phase", |n| Complex64::from_polar(1.0, TAU * (n as f64).ln())).bound(1.0).build()
}

/// 1/(1 + 2πi): Cesàro averages of e^{2πi log n} track this multiple of x_N.
pub fn exp_log_phase_constant() -> Complex64 {
    Complex64::new(1.0, TAU).inv()
}

/// Seeded ±1 values for n ∈ [1, len].
pub fn random_signs(seed: u64, len: u64) -> Sequence<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..len).map(|_| Complex64::new(if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0)).collect();
    Sequence::from_values(format!("random_sign:{seed}"), values)
}

/// Bounded test sequence by name. `len` sizes materialized (random) sequences.
pub fn sequence(spec: &str, default_seed: u64, len: u64) -> Result<Sequence<Complex64>> {
    let unknown = || Error::UnknownName { kind: "sequence", name: spec.to_string() };
    let (name, params) = split(spec);
    let nums = numbers("sequence", spec, params)?;
    let seq = match (name, nums.as_slice()) {
        ("constant", [re]) => Sequence::constant(Complex64::new(*re, 0.0)),
        ("constant", [re, im]) => Sequence::constant(Complex64::new(*re, *im)),
        ("exp_log_phase", []) => exp_log_phase(),
        ("random_sign", []) => random_signs(default_seed, len),
        ("random_sign", [s]) if *s >= 0.0 && s.fract() == 0.0 => random_signs(*s as u64, len),
        ("alternating", []) => {
            Sequence::builder("alternating", |n| Complex64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).bound(1.0).build()
        }
        ("phase_power", [a]) => {
            let a = *a;
            Sequence::builder(spec, move |n| Complex64::from_polar(1.0, TAU * (n as f64).powf(a))).bound(1.0).build()
        }
        ("phase_linear", [alpha]) => {
            let alpha = *alpha;
            Sequence::builder(spec, move |n| {
                Complex64::from_polar(1.0, TAU * crate::ergodic::rotation_offset(n as i64, alpha))
            })
            .bound(1.0).build()
        }
        _ => return Err(unknown()),
    };
    Ok(seq)
}

/// Real function f(n) by name.
pub fn function(spec: &str) -> Result<Sequence<f64>> {
    let unknown = || Error::UnknownName { kind: "function", name: spec.to_string() };
    let (name, params) = split(spec);
    let nums = numbers("function", spec, params)?;
    let f = match (name, nums.as_slice()) {
        ("power", [p]) if *p > 0.0 => {
            let p = *p;
            Sequence::new(spec, move |n| (n as f64).powf(p))
        }
        ("n_log_n", []) => Sequence::new("n_log_n", |n| n as f64 * (n as f64).ln()),
        ("poly", cs) if !cs.is_empty() => {
            let cs = cs.to_vec();
            Sequence::new(spec, move |n| cs.iter().rev().fold(0.0, |acc, c| acc * n as f64 + c))
        }
        _ => return Err(unknown()),
    };
    Ok(f)
}

pub fn spacing(spec: &str) -> Result<Spacing> {
    let unknown = || Error::UnknownName { kind: "spacing", name: spec.to_string() };
    let (name, params) = split(spec);
    let nums = numbers("spacing", spec, params)?;
    match (name, nums.as_slice()) {
        ("half", []) => Ok(Spacing::half()),
        ("const", [c]) if *c >= 1.0 && c.fract() == 0.0 => Ok(Spacing::constant(*c as u64)),
        ("power", [p]) if *p > 0.0 && *p < 1.0 => Ok(Spacing::power(*p)),
        _ => Err(unknown()),
    }
}
