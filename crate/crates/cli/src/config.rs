//! Experiment configuration.
//!
//! Configs are flat TOML. Model keys follow the parameter file format
//! (`K`, `lambda0`, `beta`, `delta`, `buffer`, `n`); the remaining keys
//! select horizons, replication counts and per-experiment settings.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use matchsim::model::parse_buffer_text;
use matchsim::SystemParams;
use serde::Serialize;
use toml::{Table, Value};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_KS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SimulateCtmc,
    SimulateLimit,
    DoubleEnded,
    GeneratorCheck,
    ConvergeSweep,
    CompareLaws,
    OracleValidate,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::SimulateCtmc,
        Kind::SimulateLimit,
        Kind::DoubleEnded,
        Kind::GeneratorCheck,
        Kind::ConvergeSweep,
        Kind::CompareLaws,
        Kind::OracleValidate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::SimulateCtmc => "simulate-ctmc",
            Kind::SimulateLimit => "simulate-limit",
            Kind::DoubleEnded => "double-ended",
            Kind::GeneratorCheck => "generator-check",
            Kind::ConvergeSweep => "converge-sweep",
            Kind::CompareLaws => "compare-laws",
            Kind::OracleValidate => "oracle-validate",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown kind {s:?}"))
    }
}

/// Test functions selectable for `converge-sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFunction {
    /// Polynomial bump in `s_1 − s_2`.
    Bump,
    /// Gaussian in `s_1 − s_2`.
    Gaussian,
    /// `s_1²`, which violates the regulated condition.
    Square,
}

impl FromStr for SweepFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bump" => Ok(SweepFunction::Bump),
            "gaussian" => Ok(SweepFunction::Gaussian),
            "square" => Ok(SweepFunction::Square),
            other => Err(format!("unknown test_function {other:?} (bump, gaussian, square)")),
        }
    }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub params: SystemParams,
    pub horizon: f64,
    pub dt: f64,
    pub tol: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    /// Initial counts for the chain. Defaults to all zeros.
    pub initial: Vec<u32>,
    /// Initial scaled state for the limit. Defaults to all zeros.
    pub initial_limit: Vec<f64>,
    /// Noise scale of the double-ended process. Defaults to `√(2λ₀)`.
    pub sigma: f64,
    pub x0: f64,
    /// Observation times for `compare-laws`. Defaults to `[horizon]`.
    pub times: Vec<f64>,
    pub ks_threshold: f64,
    pub n_grid: Vec<u64>,
    pub window_lower: Vec<f64>,
    pub window_upper: Vec<f64>,
    pub test_function: SweepFunction,
    pub record_every: usize,
    pub entry_cap: usize,
}

struct Reader<'a> {
    table: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn number(&mut self, key: &str) -> Option<f64> {
        match self.table.get(key)? {
            Value::Integer(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            other => {
                self.errors.push(format!("{key} must be a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn integer(&mut self, key: &str) -> Option<i64> {
        match self.table.get(key)? {
            Value::Integer(i) => Some(*i),
            other => {
                self.errors.push(format!("{key} must be an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn unsigned(&mut self, key: &str) -> Option<u64> {
        let v = self.integer(key)?;
        if v < 0 {
            self.errors.push(format!("{key} must be nonnegative, got {v}"));
            return None;
        }
        Some(v as u64)
    }

    fn text(&mut self, key: &str) -> Option<String> {
        match self.table.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.errors.push(format!("{key} must be a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn numbers(&mut self, key: &str) -> Option<Vec<f64>> {
        let Value::Array(items) = self.table.get(key)? else {
            self.errors.push(format!("{key} must be an array"));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, v) in items.iter().enumerate() {
            match v {
                Value::Integer(x) => out.push(*x as f64),
                Value::Float(x) => out.push(*x),
                Value::String(s) if key == "buffer" => match parse_buffer_text(s) {
                    Some(x) => out.push(x),
                    None => {
                        self.errors.push(format!("{key}[{i}] is not a number or \"inf\": {s:?}"));
                        return None;
                    }
                },
                other => {
                    self.errors.push(format!("{key}[{i}] must be a number, got {}", other.type_str()));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn length(&mut self, key: &str, v: &Option<Vec<f64>>, k: Option<usize>) {
        if let (Some(v), Some(k)) = (v, k) {
            if v.len() != k {
                self.errors.push(format!("{key} length {} does not match K = {k}", v.len()));
            }
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "kind", "K", "lambda0", "beta", "delta", "buffer", "n", "horizon", "T", "dt", "tol",
    "replications", "seed", "out", "initial", "initial_limit", "sigma", "x0", "times",
    "ks_threshold", "n_grid", "window_lower", "window_upper", "test_function", "record_every",
    "entry_cap",
];

/// Parses and validates a config, collecting every problem found.
///
/// `kind_override` takes precedence over a `kind` key in the file.
pub fn validate_config(raw: &str, kind_override: Option<Kind>) -> Result<ExperimentConfig, Vec<String>> {
    let table: Table = raw.parse().map_err(|e: toml::de::Error| vec![format!("parse error: {e}")])?;
    let mut r = Reader {
        table: &table,
        errors: Vec::new(),
    };
    for key in table.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            r.errors.push(format!("unknown key {key:?}"));
        }
    }

    let kind = match (kind_override, r.text("kind")) {
        (Some(k), _) => Some(k),
        (None, Some(s)) => match s.parse() {
            Ok(k) => Some(k),
            Err(e) => {
                r.errors.push(e);
                None
            }
        },
        (None, None) => {
            r.errors.push("kind required".into());
            None
        }
    };

    let k = match r.unsigned("K") {
        Some(k) if k >= 2 => Some(k as usize),
        Some(k) => {
            r.errors.push(format!("K must be at least 2, got {k}"));
            None
        }
        None => {
            if !table.contains_key("K") {
                r.errors.push("K required".into());
            }
            None
        }
    };
    let lambda0 = r.number("lambda0").unwrap_or(1.0);
    let beta = r.numbers("beta");
    let delta = r.numbers("delta");
    let buffer = r.numbers("buffer");
    for (key, v) in [("beta", &beta), ("delta", &delta)] {
        if v.is_none() && !table.contains_key(key) {
            r.errors.push(format!("{key} required"));
        }
        r.length(key, v, k);
    }
    let buffer = match (buffer, k) {
        (Some(b), _) => Some(b),
        (None, Some(k)) if !table.contains_key("buffer") => Some(vec![f64::INFINITY; k]),
        _ => None,
    };
    r.length("buffer", &buffer, k);
    let n = r.unsigned("n").unwrap_or(1);

    let horizon = match (r.number("horizon"), r.number("T")) {
        (Some(_), Some(_)) => {
            r.errors.push("give either horizon or T, not both".into());
            0.0
        }
        (Some(h), None) | (None, Some(h)) => h,
        (None, None) => 1.0,
    };
    if !(horizon >= 0.0 && horizon.is_finite()) {
        r.errors.push(format!("horizon must be nonnegative and finite, got {horizon}"));
    }
    let dt = r.number("dt").unwrap_or(DEFAULT_DT);
    if !(dt > 0.0 && dt.is_finite()) {
        r.errors.push(format!("dt must be positive, got {dt}"));
    }
    let tol = r.number("tol").unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        r.errors.push(format!("tol must lie in (0, 1), got {tol}"));
    }
    let replications = r.unsigned("replications").unwrap_or(1) as usize;
    if replications == 0 {
        r.errors.push("replications must be at least 1".into());
    }
    let seed = r.unsigned("seed").unwrap_or(0);
    let out = PathBuf::from(r.text("out").unwrap_or_else(|| "out".into()));

    let kk = k.unwrap_or(0);
    let initial = match r.numbers("initial") {
        Some(v) => {
            r.length("initial", &Some(v.clone()), k);
            if v.iter().any(|x| *x < 0.0 || x.fract() != 0.0 || *x > u32::MAX as f64) {
                r.errors.push("initial must hold nonnegative integer counts".into());
            }
            v.into_iter().map(|x| x as u32).collect()
        }
        None => vec![0; kk],
    };
    let initial_limit = r.numbers("initial_limit").unwrap_or_else(|| vec![0.0; kk]);
    r.length("initial_limit", &Some(initial_limit.clone()), k);
    let sigma = r.number("sigma").unwrap_or((2.0 * lambda0).sqrt());
    if !(sigma >= 0.0 && sigma.is_finite()) {
        r.errors.push(format!("sigma must be nonnegative, got {sigma}"));
    }
    let x0 = r.number("x0").unwrap_or(0.0);
    let times = r.numbers("times").unwrap_or_else(|| vec![horizon]);
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| *t < 0.0) {
        r.errors.push("times must be a nonempty increasing list of nonnegative values".into());
    }
    let ks_threshold = r.number("ks_threshold").unwrap_or(DEFAULT_KS_THRESHOLD);
    let n_grid: Vec<u64> = r
        .numbers("n_grid")
        .unwrap_or_else(|| vec![100.0, 1000.0, 10000.0])
        .into_iter()
        .map(|x| x as u64)
        .collect();
    if n_grid.is_empty() || n_grid.contains(&0) {
        r.errors.push("n_grid must list positive scales".into());
    }
    let window_lower = r.numbers("window_lower").unwrap_or_else(|| vec![0.0; kk]);
    let window_upper = r.numbers("window_upper").unwrap_or_else(|| vec![2.0; kk]);
    r.length("window_lower", &Some(window_lower.clone()), k);
    r.length("window_upper", &Some(window_upper.clone()), k);
    let test_function = match r.text("test_function") {
        Some(s) => s.parse().unwrap_or_else(|e| {
            r.errors.push(e);
            SweepFunction::Bump
        }),
        None => SweepFunction::Bump,
    };
    let record_every = r.unsigned("record_every").unwrap_or(1).max(1) as usize;
    let entry_cap = r
        .unsigned("entry_cap")
        .unwrap_or(matchsim::kernel::DEFAULT_ENTRY_CAP as u64) as usize;

    let params = match (k, beta, delta, buffer) {
        (Some(_), Some(beta), Some(delta), Some(buffer)) if r.errors.is_empty() => {
            match SystemParams::new(lambda0, beta, delta, buffer, n) {
                Ok(p) => Some(p),
                Err(e) => {
                    r.errors.push(e.to_string());
                    None
                }
            }
        }
        _ => None,
    };

    if let (Some(kind), Some(p)) = (kind, &params) {
        if matches!(kind, Kind::DoubleEnded) && p.k() != 2 {
            r.errors.push(format!("{kind} needs K = 2"));
        }
    }

    match (kind, params) {
        (Some(kind), Some(params)) if r.errors.is_empty() => Ok(ExperimentConfig {
            kind,
            params,
            horizon,
            dt,
            tol,
            replications,
            seed,
            out,
            initial,
            initial_limit,
            sigma,
            x0,
            times,
            ks_threshold,
            n_grid,
            window_lower,
            window_upper,
            test_function,
            record_every,
            entry_cap,
        }),
        _ => Err(r.errors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
kind = "simulate-ctmc"
K = 2
lambda0 = 1.0
beta = [0.3, -0.3]
delta = [1, 1]
buffer = ["inf", 2.5]
n = 400
horizon = 5
replications = 10
seed = 42
"#;

    #[test]
    fn full_config_echoes_defaults() {
        let c = validate_config(FULL, None).unwrap();
        assert_eq!(c.kind, Kind::SimulateCtmc);
        assert_eq!(c.params.k(), 2);
        assert_eq!(c.params.buffer(), &[f64::INFINITY, 2.5]);
        assert_eq!(c.dt, DEFAULT_DT);
        assert_eq!(c.tol, DEFAULT_TOL);
        assert_eq!(c.times, vec![5.0]);
        assert_eq!(c.initial, vec![0, 0]);
        assert!((c.sigma - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn missing_k_is_reported() {
        let raw = FULL.replace("K = 2\n", "");
        let errs = validate_config(&raw, None).unwrap_err();
        assert!(errs.iter().any(|e| e == "K required"), "{errs:?}");
    }

    #[test]
    fn errors_are_collected() {
        let raw = FULL
            .replace("beta = [0.3, -0.3]", "beta = [0.3]")
            .replace("replications = 10", "replications = 0")
            .replace("kind = \"simulate-ctmc\"", "kind = \"nope\"");
        let errs = validate_config(&raw, None).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("beta length")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("replications")));
        assert!(errs.iter().any(|e| e.contains("unknown kind")));
    }

    #[test]
    fn override_and_unknown_keys() {
        let c = validate_config(FULL, Some(Kind::GeneratorCheck)).unwrap();
        assert_eq!(c.kind, Kind::GeneratorCheck);
        let errs = validate_config(&format!("{FULL}\nbogus = 1\n"), None).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("bogus")));
    }

    #[test]
    fn double_ended_needs_two_classes() {
        let raw = "K = 3\nbeta = [0,0,0]\ndelta = [1,1,1]\n";
        let errs = validate_config(raw, Some(Kind::DoubleEnded)).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("K = 2")));
    }
}
