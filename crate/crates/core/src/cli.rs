//! Batch driver behind the `wavg` binary.
//!
//! A run reads one TOML experiment file, writes `report.json` (deterministic),
//! `report.meta.json` (timestamp, version) and optional CSV traces, and exits
//! 0 when every assertion passes, 2 when one fails and 1 on config or IO errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::averaging::{
    iterated_avg_report, iterated_avg_closed, iterated_trajectory, uniform_avg_estimate, weighted_avg_report,
    weighted_trajectory, Trajectory, DEFAULT_TOLERANCE,
};
use crate::calculus::Sequence;
use crate::catalog;
use crate::constructions::{check_u_condition, AuxConfig, AuxWeights, ZChoice};
use crate::ergodic::{forward_shift_polys, recurrence_experiment, Correlator, ExperimentOptions, MeasurableSet, MpSystem};
use crate::numerics::geometric_grid;
use crate::pattern::{self, IntegerSet};
use crate::toeplitz::{check_regularity, window_telescoping_error, SummabilityMatrix};
use crate::weights::{builtin, weight_from_f, WeightScheme, BUILTIN_NAMES};

pub const OUT_DIR_ENV: &str = "WAVG_OUT_DIR";
pub const DEFAULT_MAX_HORIZON: u64 = 50_000_000;
const TRACE_GRID_RATIO: f64 = 1.01;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Engine(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "wavg", version, about = "Weighted averages, summability matrices and recurrence experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an experiment file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Validate an experiment file without running it.
    Check {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print available schemes, sequences, functions, systems and set generators.
    List {
        /// Also list custom schemes registered in this file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug, Default, Clone)]
pub struct Overrides {
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Avg,
    Iterate,
    Uniform,
    Toeplitz,
    Construct,
    Ergodic,
    Scan,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct CustomScheme {
    pub name: String,
    /// Alias of a built-in scheme.
    pub base: Option<String>,
    /// Build W = Δ^{ℓ−1}f from a catalog function.
    pub from_f: Option<String>,
    pub ell: Option<usize>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct IterateSpec {
    pub k: Option<usize>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct UniformSpec {
    pub threshold: Option<f64>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct ToeplitzSpec {
    pub matrix: Option<String>,
    pub u: Option<String>,
    pub s: Option<String>,
    pub n_probe: Option<u64>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct ConstructSpec {
    pub v: Option<String>,
    pub s: Option<String>,
    pub certify_from: Option<u64>,
    pub z_power: Option<f64>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct ErgodicSpec {
    pub system: Option<String>,
    pub alpha: Option<f64>,
    pub arcs: Option<Vec<[f64; 2]>>,
    pub q: Option<u32>,
    pub step: Option<u32>,
    pub elements: Option<Vec<u32>>,
    pub f: Option<String>,
    pub k: Option<u32>,
    pub uniform_fraction: Option<f64>,
    pub positivity_threshold: Option<f64>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub set: Option<String>,
    pub n_max: Option<u64>,
    pub modulus: Option<u64>,
    pub residues: Option<Vec<u64>>,
    pub density: Option<f64>,
    pub path: Option<PathBuf>,
    pub f: Option<String>,
    pub k: Option<u32>,
    pub theta: Option<f64>,
    pub n_lo: Option<u64>,
    pub n_hi: Option<u64>,
    pub epsilon: Option<f64>,
    pub n_list: Option<Vec<u64>>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct AssertSpec {
    /// `"prediction"`, a real number, or `[re, im]`.
    pub expected: Option<toml::Value>,
    pub max_error: Option<f64>,
    #[serde(default)]
    pub require: Vec<String>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub name: Option<String>,
    pub scheme: Option<String>,
    pub sequence: Option<String>,
    pub horizon: Option<u64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_horizon: Option<u64>,
    #[serde(default = "yes")]
    pub trace: bool,
    #[serde(default)]
    pub schemes: Vec<CustomScheme>,
    pub iterate: Option<IterateSpec>,
    pub uniform: Option<UniformSpec>,
    pub toeplitz: Option<ToeplitzSpec>,
    pub construct: Option<ConstructSpec>,
    pub ergodic: Option<ErgodicSpec>,
    pub scan: Option<ScanSpec>,
    #[serde(rename = "assert")]
    pub assertions: Option<AssertSpec>,
}

fn yes() -> bool {
    true
}

fn missing(field: &str) -> CliError {
    CliError::Config(format!("missing field `{field}`"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(h) = o.horizon {
            self.horizon = Some(h);
        }
        if let Some(t) = o.tolerance {
            self.tolerance = Some(t);
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = Some(d.clone());
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon.unwrap_or(100_000)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(DEFAULT_TOLERANCE)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("wavg-out"))
    }

    /// Resolves a scheme name against the custom registry, then the built-ins.
    pub fn scheme(&self, name: &str) -> CliResult<WeightScheme> {
        if let Some(c) = self.schemes.iter().find(|c| c.name == name) {
            let mut s = match (&c.base, &c.from_f) {
                (Some(base), None) => builtin(base)?,
                (None, Some(f)) => weight_from_f(&catalog::function(f)?, c.ell.unwrap_or(1))?.log_form()?,
                _ => {
                    return Err(CliError::Config(format!(
                        "custom scheme `{}` needs exactly one of `base` or `from_f`",
                        c.name
                    )))
                }
            };
            s = WeightScheme::new(c.name.clone(), s.log_v_sequence().clone());
            return Ok(s);
        }
        Ok(builtin(name)?)
    }

    fn main_scheme(&self) -> CliResult<WeightScheme> {
        self.scheme(self.scheme.as_deref().ok_or_else(|| missing("scheme"))?)
    }

    fn main_sequence(&self) -> CliResult<Sequence<Complex64>> {
        let spec = self.sequence.as_deref().ok_or_else(|| missing("sequence"))?;
        Ok(catalog::sequence(spec, self.seed(), self.horizon())?)
    }

    /// Resolves every referenced name and checks the horizon cap.
    pub fn validate(&self) -> CliResult<()> {
        let cap = self.max_horizon.unwrap_or(DEFAULT_MAX_HORIZON);
        if self.horizon() > cap {
            return Err(CliError::Config(format!("horizon {} exceeds the cap {cap}", self.horizon())));
        }
        if !(self.tolerance() > 0.0) {
            return Err(CliError::Config("`tolerance` must be positive".into()));
        }
        match self.kind {
            Kind::Avg | Kind::Iterate | Kind::Uniform => {
                self.main_scheme()?;
                self.main_sequence()?;
                if self.kind == Kind::Uniform {
                    self.uniform.as_ref().and_then(|u| u.threshold).ok_or_else(|| missing("uniform.threshold"))?;
                }
            }
            Kind::Toeplitz => {
                let t = self.toeplitz.clone().unwrap_or_default();
                self.matrix(&t)?;
            }
            Kind::Construct => {
                let c = self.construct.clone().ok_or_else(|| missing("construct"))?;
                self.scheme(c.v.as_deref().ok_or_else(|| missing("construct.v"))?)?;
                catalog::spacing(c.s.as_deref().ok_or_else(|| missing("construct.s"))?)?;
            }
            Kind::Ergodic => {
                let e = self.ergodic.clone().ok_or_else(|| missing("ergodic"))?;
                self.system(&e)?;
                catalog::function(e.f.as_deref().ok_or_else(|| missing("ergodic.f"))?)?;
            }
            Kind::Scan => {
                let s = self.scan.clone().ok_or_else(|| missing("scan"))?;
                catalog::function(s.f.as_deref().ok_or_else(|| missing("scan.f"))?)?;
                if s.set.is_none() {
                    return Err(missing("scan.set"));
                }
            }
        }
        if let Some(a) = &self.assertions {
            if a.expected.is_some() && !matches!(self.kind, Kind::Avg | Kind::Iterate | Kind::Uniform) {
                return Err(CliError::Config("`assert.expected` only applies to avg, iterate and uniform".into()));
            }
            if a.expected.is_some() {
                self.expected()?;
            }
        }
        Ok(())
    }

    fn k(&self) -> usize {
        self.iterate.as_ref().and_then(|i| i.k).unwrap_or(1)
    }

    fn expected(&self) -> CliResult<Option<Complex64>> {
        let Some(v) = self.assertions.as_ref().and_then(|a| a.expected.as_ref()) else { return Ok(None) };
        let bad = || CliError::Config("`assert.expected` must be \"prediction\", a number or [re, im]".into());
        let num = |v: &toml::Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
        match v {
            toml::Value::String(s) if s == "prediction" => self.prediction().map(Some),
            toml::Value::Array(a) if a.len() == 2 => {
                Ok(Some(Complex64::new(num(&a[0]).ok_or_else(bad)?, num(&a[1]).ok_or_else(bad)?)))
            }
            other => num(other).map(|x| Some(Complex64::new(x, 0.0))).ok_or_else(bad),
        }
    }

    /// Known limiting behaviour at the horizon for a few catalog pairs.
    fn prediction(&self) -> CliResult<Complex64> {
        let seq = self.sequence.as_deref().unwrap_or("");
        let scheme = self.scheme.as_deref().unwrap_or("");
        let k = if self.kind == Kind::Iterate { self.k() } else { 1 };
        if seq.starts_with("constant") {
            return Ok(self.main_sequence()?.get(1)?);
        }
        if seq == "exp_log_phase" && scheme == "cesaro" && self.kind != Kind::Uniform {
            let c = catalog::exp_log_phase_constant();
            return Ok(c.powu(k as u32) * catalog::exp_log_phase().get(self.horizon())?);
        }
        Err(CliError::Config(format!("no prediction for sequence `{seq}` under scheme `{scheme}`")))
    }

    fn matrix(&self, t: &ToeplitzSpec) -> CliResult<SummabilityMatrix> {
        let name = t.matrix.as_deref().ok_or_else(|| missing("toeplitz.matrix"))?;
        Ok(match name {
            "identity" => SummabilityMatrix::identity(),
            "cesaro" => SummabilityMatrix::cesaro(),
            "column_one" => SummabilityMatrix::column_one(),
            "window" => SummabilityMatrix::window(
                self.scheme(t.u.as_deref().ok_or_else(|| missing("toeplitz.u"))?)?,
                catalog::spacing(t.s.as_deref().ok_or_else(|| missing("toeplitz.s"))?)?,
            ),
            other => return Err(crate::Error::UnknownName { kind: "matrix", name: other.into() }.into()),
        })
    }

    fn system(&self, e: &ErgodicSpec) -> CliResult<(MpSystem, MeasurableSet)> {
        match e.system.as_deref().ok_or_else(|| missing("ergodic.system"))? {
            "rotation" => {
                let sys = MpSystem::rotation(e.alpha.unwrap_or(crate::ergodic::DEFAULT_ALPHA))?;
                let arcs: Vec<(f64, f64)> =
                    e.arcs.as_ref().ok_or_else(|| missing("ergodic.arcs"))?.iter().map(|a| (a[0], a[1])).collect();
                Ok((sys, MeasurableSet::arcs(&arcs)?))
            }
            "cyclic" => {
                let q = e.q.ok_or_else(|| missing("ergodic.q"))?;
                let sys = MpSystem::cyclic(q, e.step.unwrap_or(1))?;
                let set = MeasurableSet::elements(q, e.elements.clone().ok_or_else(|| missing("ergodic.elements"))?)?;
                Ok((sys, set))
            }
            other => Err(crate::Error::UnknownName { kind: "system", name: other.into() }.into()),
        }
    }

    fn integer_set(&self, s: &ScanSpec) -> CliResult<IntegerSet> {
        let n_max = s.n_max.unwrap_or(pattern::DEFAULT_N_MAX);
        Ok(match s.set.as_deref().ok_or_else(|| missing("scan.set"))? {
            "blocks" => IntegerSet::blocks(n_max),
            "congruence" => IntegerSet::congruence(
                n_max,
                s.modulus.ok_or_else(|| missing("scan.modulus"))?,
                s.residues.as_deref().ok_or_else(|| missing("scan.residues"))?,
            )?,
            "random" => IntegerSet::random(n_max, s.density.ok_or_else(|| missing("scan.density"))?, self.seed())?,
            "file" => IntegerSet::from_file(s.path.as_deref().ok_or_else(|| missing("scan.path"))?, n_max)?,
            other => return Err(crate::Error::UnknownName { kind: "set generator", name: other.into() }.into()),
        })
    }
}

/// Everything a run produces before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
    pub traces: BTreeMap<String, Vec<Vec<f64>>>,
    pub trace_headers: BTreeMap<String, Vec<&'static str>>,
}

fn cjson(z: Complex64) -> Value {
    json!({ "re": finite(z.re), "im": finite(z.im) })
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format!("{x}"))
    }
}

fn trace_rows(traj: &Trajectory<Complex64>) -> Vec<Vec<f64>> {
    geometric_grid(traj.start, traj.end(), TRACE_GRID_RATIO)
        .into_iter()
        .map(|n| {
            let v = traj.at(n);
            vec![n as f64, v.re, v.im]
        })
        .collect()
}

/// Runs a validated config in memory.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let h = cfg.horizon();
    let tol = cfg.tolerance();
    let mut checks: BTreeMap<String, bool> = BTreeMap::new();
    let mut traces = BTreeMap::new();
    let mut headers = BTreeMap::new();
    let mut value: Option<Complex64> = None;
    let result = match cfg.kind {
        Kind::Avg => {
            let (scheme, x) = (cfg.main_scheme()?, cfg.main_sequence()?);
            let r = weighted_avg_report(&scheme, &x, h, tol)?;
            if cfg.trace {
                traces.insert("trace".to_string(), trace_rows(&weighted_trajectory(&scheme, &x, h)?));
                headers.insert("trace".to_string(), vec!["n", "re", "im"]);
            }
            checks.insert("converged".into(), r.converged);
            value = Some(r.value);
            json!({ "value": cjson(r.value), "tail_oscillation": finite(r.tail_oscillation), "converged": r.converged })
        }
        Kind::Iterate => {
            let (scheme, x, k) = (cfg.main_scheme()?, cfg.main_sequence()?, cfg.k());
            let r = iterated_avg_report(&scheme, &x, k, h, tol)?;
            let closed = iterated_avg_closed(&scheme, &x, k - 1, h)?;
            if cfg.trace {
                traces.insert("trace".to_string(), trace_rows(&iterated_trajectory(&scheme, &x, k, h)?));
                headers.insert("trace".to_string(), vec!["n", "re", "im"]);
            }
            checks.insert("converged".into(), r.converged);
            value = Some(r.value);
            json!({
                "k": k,
                "value": cjson(r.value),
                "closed_form": cjson(closed),
                "closed_form_gap": finite((closed - r.value).norm()),
                "tail_oscillation": finite(r.tail_oscillation),
                "converged": r.converged,
            })
        }
        Kind::Uniform => {
            let (scheme, x) = (cfg.main_scheme()?, cfg.main_sequence()?);
            let threshold = cfg.uniform.as_ref().and_then(|u| u.threshold).ok_or_else(|| missing("uniform.threshold"))?;
            let r = uniform_avg_estimate(&scheme, &x, threshold, h, tol)?;
            checks.insert("converged".into(), r.report.converged);
            checks.insert("conclusive".into(), !r.inconclusive);
            value = Some(r.report.value);
            json!({
                "value": cjson(r.report.value),
                "spread": finite(r.report.tail_oscillation),
                "worst_window": r.worst_window,
                "windows": r.windows,
                "threshold": threshold,
                "converged": r.report.converged,
                "inconclusive": r.inconclusive,
            })
        }
        Kind::Toeplitz => {
            let t = cfg.toeplitz.clone().unwrap_or_default();
            let mat = cfg.matrix(&t)?;
            let n_probe = t.n_probe.unwrap_or((h / 100).max(1));
            let r = check_regularity(&mat, h, n_probe)?;
            checks.insert("regular".into(), r.verdict);
            let mut out = json!({
                "matrix": mat.name(),
                "params": mat.params(),
                "regularity": serde_json::to_value(&r).expect("serializable"),
            });
            if t.matrix.as_deref() == Some("window") {
                let u = cfg.scheme(t.u.as_deref().unwrap_or_default())?;
                let s = catalog::spacing(t.s.as_deref().unwrap_or_default())?;
                let (err, k) = window_telescoping_error(&u, &s, h)?;
                checks.insert("telescoping".into(), err <= 1e-10);
                out["telescoping_error"] = finite(err);
                out["telescoping_checks"] = json!(k);
            }
            if cfg.trace {
                let row = mat.row(h)?;
                traces.insert("row".to_string(), row.iter().map(|(n, c)| vec![n as f64, c]).collect());
                headers.insert("row".to_string(), vec!["n", "c"]);
            }
            out
        }
        Kind::Construct => {
            let c = cfg.construct.clone().ok_or_else(|| missing("construct"))?;
            let v = cfg.scheme(c.v.as_deref().unwrap_or_default())?;
            let s = catalog::spacing(c.s.as_deref().unwrap_or_default())?;
            let config = AuxConfig {
                z: ZChoice { power: c.z_power.unwrap_or(ZChoice::default().power) },
                certify_from: c.certify_from.unwrap_or(AuxConfig::default().certify_from),
                ..AuxConfig::default()
            };
            let aux = AuxWeights::build(&v, &s, h, &config)?;
            let cond = check_u_condition(&aux.u.scheme, &v, h)?;
            let t_over_u = aux.t_over_u(h)?;
            let cert = &aux.tilde.certificate;
            checks.insert("r_conditions".into(), aux.r_trace.failed.is_empty());
            checks.insert("u_condition".into(), cond.verdict);
            checks.insert("t_over_u".into(), (t_over_u - 1.0).abs() <= 0.05);
            checks.insert("tilde_convex".into(), cert.second_difference_min >= -1e-12);
            checks.insert("tilde_ratio".into(), cert.ratio_ok);
            if cfg.trace {
                traces.insert(
                    "u_condition".to_string(),
                    cond.rows.iter().map(|r| vec![r.n as f64, r.value, r.log_ratio]).collect(),
                );
                headers.insert("u_condition".to_string(), vec!["n", "value", "log_ratio"]);
            }
            json!({
                "r_trace": serde_json::to_value(&aux.r_trace).expect("serializable"),
                "u_condition": serde_json::to_value(&cond).expect("serializable"),
                "t_over_u": finite(t_over_u),
                "tilde_certificate": serde_json::to_value(cert).expect("serializable"),
            })
        }
        Kind::Ergodic => {
            let e = cfg.ergodic.clone().ok_or_else(|| missing("ergodic"))?;
            let (sys, set) = cfg.system(&e)?;
            let f = catalog::function(e.f.as_deref().unwrap_or_default())?;
            let defaults = ExperimentOptions::default();
            let opts = ExperimentOptions {
                horizon: h,
                uniform_fraction: e.uniform_fraction.unwrap_or(defaults.uniform_fraction),
                positivity_threshold: e.positivity_threshold.unwrap_or(defaults.positivity_threshold),
                tolerance: tol,
            };
            let r = recurrence_experiment(&Correlator::new(sys, set), &f, &forward_shift_polys(e.k.unwrap_or(1)), &opts)?;
            checks.insert("positive".into(), r.positivity == "positive");
            checks.insert("agree".into(), r.agree);
            serde_json::to_value(&r).expect("serializable")
        }
        Kind::Scan => {
            let s = cfg.scan.clone().ok_or_else(|| missing("scan"))?;
            let e = cfg.integer_set(&s)?;
            let f = catalog::function(s.f.as_deref().unwrap_or_default())?;
            let k = s.k.unwrap_or(1);
            let theta = s.theta.unwrap_or(pattern::DEFAULT_THETA);
            let max_n = pattern::max_scannable_n(&f, k, e.n_max())
                .ok_or_else(|| CliError::Config("n_max is too small for any n".into()))?;
            let n_lo = s.n_lo.unwrap_or(f.domain_start().max(1));
            let n_hi = s.n_hi.unwrap_or(max_n).min(max_n);
            if n_lo > n_hi {
                return Err(CliError::Config(format!("empty n-range [{n_lo}, {n_hi}]")));
            }
            let rows = pattern::density_scan(&e, &f, k, n_lo, n_hi)?;
            let good = pattern::good_set_from_scan(&rows, theta, n_hi);
            let n_list = s.n_list.clone().unwrap_or_else(|| vec![n_hi]);
            let hits = pattern::window_hit_check(&good, s.epsilon.unwrap_or(0.2), &n_list)?;
            checks.insert("hit_all".into(), hits.iter().all(|w| w.hit));
            checks.insert("good_nonempty".into(), !good.is_empty());
            if cfg.trace {
                traces.insert("density".to_string(), rows.iter().map(|r| vec![r.n as f64, r.density]).collect());
                headers.insert("density".to_string(), vec!["n", "density"]);
            }
            json!({
                "set_density": e.density(),
                "n_max": e.n_max(),
                "max_scannable_n": max_n,
                "n_range": [n_lo, n_hi],
                "theta": theta,
                "good_count": good.len(),
                "windows": serde_json::to_value(&hits).expect("serializable"),
            })
        }
    };

    let mut assertions = Vec::new();
    if let Some(a) = &cfg.assertions {
        if let Some(expected) = cfg.expected()? {
            let got = value.ok_or_else(|| CliError::Config("this kind has no scalar value".into()))?;
            let err = (got - expected).norm();
            let max = a.max_error.unwrap_or(tol);
            assertions.push(json!({
                "name": "expected",
                "passed": err <= max,
                "detail": { "expected": cjson(expected), "error": finite(err), "max_error": max },
            }));
        }
        for name in &a.require {
            let ok = *checks
                .get(name)
                .ok_or_else(|| CliError::Config(format!("unknown check `{name}` in assert.require")))?;
            assertions.push(json!({ "name": name, "passed": ok }));
        }
    }
    let passed = assertions.iter().all(|a| a["passed"] == json!(true));
    let report = json!({
        "kind": format!("{:?}", cfg.kind).to_lowercase(),
        "name": cfg.name,
        "horizon": h,
        "tolerance": tol,
        "seed": cfg.seed(),
        "scheme": cfg.scheme,
        "sequence": cfg.sequence,
        "result": result,
        "checks": checks,
        "assertions": assertions,
        "passed": passed,
    });
    Ok(Outcome { report, passed, traces, trace_headers: headers })
}

/// Writes `report.json`, `report.meta.json` and `<name>.csv` traces into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path, config_path: Option<&Path>) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, rows) in &outcome.traces {
        if let Some(bad) = rows.iter().find(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(CliError::Engine(crate::Error::Invalid(format!("non-finite value in trace `{name}`: {bad:?}"))));
        }
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(&outcome.trace_headers[name]).map_err(csv_err)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
    }
    let text = serde_json::to_string_pretty(&outcome.report).expect("serializable");
    std::fs::write(dir.join("report.json"), text + "\n").map_err(io)?;
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "created_unix": created,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "config": config_path.map(|p| p.display().to_string()),
    });
    std::fs::write(dir.join("report.meta.json"), serde_json::to_string_pretty(&meta).expect("serializable") + "\n")
        .map_err(io)?;
    Ok(())
}

pub fn catalog_text(cfg: Option<&ExperimentConfig>) -> String {
    let mut out = String::new();
    let mut section = |title: &str, names: &mut dyn Iterator<Item = String>| {
        out.push_str(title);
        out.push_str(":\n");
        for n in names {
            out.push_str("  ");
            out.push_str(&n);
            out.push('\n');
        }
    };
    let custom: Vec<String> = cfg.map(|c| c.schemes.iter().map(|s| format!("{} (custom)", s.name)).collect()).unwrap_or_default();
    section("schemes", &mut BUILTIN_NAMES.iter().map(|s| s.to_string()).chain(custom));
    section("sequences", &mut catalog::SEQUENCE_NAMES.iter().map(|s| s.to_string()));
    section("functions", &mut catalog::FUNCTION_NAMES.iter().map(|s| s.to_string()));
    section("spacings", &mut catalog::SPACING_NAMES.iter().map(|s| s.to_string()));
    section("matrices", &mut ["identity", "cesaro", "column_one", "window"].iter().map(|s| s.to_string()));
    section("systems", &mut catalog::SYSTEM_NAMES.iter().map(|s| s.to_string()));
    section("set generators", &mut catalog::SET_GENERATORS.iter().map(|s| s.to_string()));
    out
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("wavg: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::List { config } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            print!("{}", catalog_text(cfg.as_ref()));
            Ok(0)
        }
        Command::Check { config, overrides } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&overrides);
            cfg.validate()?;
            println!("{}: ok", config.display());
            Ok(0)
        }
        Command::Run { config, overrides } => {
            set_threads(overrides.threads);
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&overrides);
            let outcome = execute(&cfg)?;
            let dir = cfg.out_dir();
            write_outcome(&outcome, &dir, Some(&config))?;
            for a in outcome.report["assertions"].as_array().into_iter().flatten() {
                let mark = if a["passed"] == json!(true) { "pass" } else { "FAIL" };
                println!("{mark} {}", a["name"].as_str().unwrap_or("?"));
            }
            println!("report: {}", dir.join("report.json").display());
            Ok(if outcome.passed { 0 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_average() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"avg\"\nscheme = \"cesaro\"\nsequence = \"constant:3\"\nhorizon = 100\n[assert]\nexpected = 3.0\n",
        )
        .unwrap();
        let out = execute(&cfg).unwrap();
        assert!(out.passed);
        assert!((out.report["result"]["value"]["re"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_scheme_is_named() {
        let cfg = ExperimentConfig::from_toml("kind = \"avg\"\nsequence = \"constant:3\"\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("scheme"), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_toml("kind = \"avg\"\nhorizn = 5\n").is_err());
    }

    #[test]
    fn horizon_cap() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"avg\"\nscheme = \"cesaro\"\nsequence = \"constant:1\"\nhorizon = 1000\nmax_horizon = 100\n",
        )
        .unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("cap"));
    }

    #[test]
    fn custom_scheme_listed_and_usable() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"avg\"\nscheme = \"mine\"\nsequence = \"constant:2\"\nhorizon = 500\n\
             [[schemes]]\nname = \"mine\"\nbase = \"exp_pow:0.5\"\n",
        )
        .unwrap();
        assert!(catalog_text(Some(&cfg)).contains("mine (custom)"));
        assert!(!catalog_text(None).contains("custom"));
        assert!(execute(&cfg).is_ok());
    }
}
