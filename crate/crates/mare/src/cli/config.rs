//! TOML run configuration with strict validation.
//!
//! Four flat sections: `[scenario]`, `[protocol]`, `[initial]`, `[output]`.
//! Unknown keys, keys that do not apply to the chosen scenario/family, and
//! missing required keys are all reported together.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::engine::Duration;
use crate::error::{Error, Result};
use crate::protocols::{Acceleration, PreparationFamily, ProtocolSpec, RecordStride, TauSchedule};
use crate::scenario::{ScenarioKind, ScenarioParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    /// `P_m ∝ e^{−βω_S m} V_m` (superconducting only).
    Thermal,
    /// `P_m ∝ V_m`.
    InfiniteTemperature,
    Gaussian { mu: f64, sigma: f64 },
    Delta { m0: i64 },
    /// Two-column `m,P_m` CSV (the snapshot format).
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub series: String,
    pub summary: String,
    pub snapshots: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub scenario: ScenarioParams,
    pub protocol: ProtocolSpec,
    pub initial: InitialDistribution,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Units {
    Absolute,
    Ratio,
}

/// Reads keys out of one section and remembers what was consumed.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<String>,
    errors: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errors: &'a mut Vec<String>) -> Self {
        let table = match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errors.push(format!("{name}: must be a table"));
                None
            }
            None => None,
        };
        Self { name, table, used: BTreeSet::new(), errors }
    }

    fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn err(&mut self, key: &str, msg: &str) {
        self.errors.push(format!("{}.{key}: {msg}", self.name));
    }

    fn float_opt(&mut self, key: &str) -> Option<f64> {
        match self.raw(key) {
            None => None,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(_) => {
                self.err(key, "expected a number");
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> f64 {
        if !self.has(key) {
            self.err(key, "missing required key");
            self.used.insert(key.to_string());
            return f64::NAN;
        }
        self.float_opt(key).unwrap_or(f64::NAN)
    }

    fn int_opt(&mut self, key: &str) -> Option<i64> {
        match self.raw(key) {
            None => None,
            Some(Value::Integer(i)) => Some(*i),
            Some(Value::Float(x)) if x.fract() == 0.0 && x.abs() < 9.0e15 => Some(*x as i64),
            Some(_) => {
                self.err(key, "expected an integer");
                None
            }
        }
    }

    fn int(&mut self, key: &str) -> i64 {
        if !self.has(key) {
            self.err(key, "missing required key");
            self.used.insert(key.to_string());
            return 0;
        }
        self.int_opt(key).unwrap_or(0)
    }

    fn str_opt(&mut self, key: &str) -> Option<&'a str> {
        match self.raw(key) {
            None => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                self.err(key, "expected a string");
                None
            }
        }
    }

    fn str(&mut self, key: &str) -> Option<&'a str> {
        if !self.has(key) {
            self.err(key, "missing required key");
            self.used.insert(key.to_string());
            return None;
        }
        self.str_opt(key)
    }

    fn bool_opt(&mut self, key: &str) -> Option<bool> {
        match self.raw(key) {
            None => None,
            Some(Value::Boolean(b)) => Some(*b),
            Some(_) => {
                self.err(key, "expected a boolean");
                None
            }
        }
    }

    /// Keys that exist but do not apply to the chosen variant.
    fn forbid(&mut self, keys: &[&str], context: &str) {
        for k in keys {
            if self.has(k) {
                self.used.insert(k.to_string());
                self.err(k, &format!("unused parameter for {context}"));
            }
        }
    }

    fn finish(self) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k) {
                    self.errors.push(format!("{}.{k}: unknown key", self.name));
                }
            }
        }
    }
}

const SC_KEYS: [&str; 4] = ["a", "kappa", "beta", "omega_s"];
const QD_KEYS: [&str; 6] = ["omega_b", "a_c", "a_nc", "gamma", "omega", "delta"];

pub fn load_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}

/// Parse a configuration; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunSpec> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![format!("parse: {e}")]))?;
    let mut errors = Vec::new();
    for k in root.keys() {
        if !["scenario", "protocol", "initial", "output"].contains(&k.as_str()) {
            errors.push(format!("{k}: unknown section"));
        }
    }
    if !root.contains_key("scenario") {
        errors.push("scenario: missing required section".into());
    }
    if !root.contains_key("protocol") {
        errors.push("protocol: missing required section".into());
    }

    let (scenario, time_unit) = parse_scenario(&root, &mut errors);
    let protocol = parse_protocol(&root, &mut errors, time_unit);
    let initial = parse_initial(&root, &mut errors, scenario.kind, base);
    let output = parse_output(&root, &mut errors, protocol.n_rep, base);

    if errors.is_empty() {
        if let Err(e) = scenario.validate() {
            errors.push(format!("scenario: {e}"));
        }
        if let Err(e) = protocol.validate() {
            errors.push(format!("protocol: {e}"));
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok(RunSpec { scenario, protocol, initial, output })
}

fn parse_scenario(root: &Table, errors: &mut Vec<String>) -> (ScenarioParams, f64) {
    let mut s = Section::new(root, "scenario", errors);
    let kind = match s.str("kind") {
        Some("superconducting") => ScenarioKind::Superconducting,
        Some("quantum_dot") => ScenarioKind::QuantumDot,
        Some(other) => {
            s.err("kind", &format!("expected superconducting or quantum_dot, got {other:?}"));
            ScenarioKind::Superconducting
        }
        None => ScenarioKind::Superconducting,
    };
    let units = match s.str_opt("units") {
        None | Some("absolute") => Units::Absolute,
        Some("ratio") => Units::Ratio,
        Some(other) => {
            s.err("units", &format!("expected absolute or ratio, got {other:?}"));
            Units::Absolute
        }
    };
    let scale = s.float_opt("frequency_scale").unwrap_or(1.0);
    if !(scale > 0.0 && scale.is_finite()) {
        s.err("frequency_scale", "must be positive");
    }
    let n = s.int("n");
    if n <= 0 {
        s.err("n", "must be positive");
    }
    let cutoff = match s.raw("cutoff") {
        None => None,
        Some(Value::Integer(c)) => Some(Some(*c)),
        Some(Value::String(x)) if x == "none" => Some(None),
        Some(_) => {
            s.err("cutoff", "expected an integer or \"none\"");
            None
        }
    };
    let gamma_deph_raw = s.float_opt("gamma_deph").unwrap_or(0.0);
    let mut p;
    let time_unit;
    match kind {
        ScenarioKind::Superconducting => {
            s.forbid(&QD_KEYS, "kind = superconducting");
            let spin = s.float_opt("s").unwrap_or(0.5);
            let omega_s = s.float("omega_s") * scale;
            let (a, kappa, beta, gd) = (s.float("a"), s.float("kappa"), s.float("beta"), gamma_deph_raw);
            p = match units {
                Units::Absolute => {
                    time_unit = 1.0;
                    ScenarioParams::superconducting(omega_s, a * scale, kappa * scale, beta / scale, n.max(1) as u64)
                }
                Units::Ratio => {
                    time_unit = 1.0 / omega_s;
                    ScenarioParams::superconducting(omega_s, a * omega_s, kappa * omega_s, beta / omega_s, n.max(1) as u64)
                }
            };
            p.gamma_deph = match units {
                Units::Absolute => gd * scale,
                Units::Ratio => gd * omega_s,
            };
            p.s = spin;
            p.cutoff = cutoff.flatten();
        }
        ScenarioKind::QuantumDot => {
            s.forbid(&SC_KEYS[..3], "kind = quantum_dot");
            let mut q = ScenarioParams::gaas_dot();
            q.omega_s = s.float_opt("omega_s").map_or(0.0, |w| w * scale);
            q.omega_b = s.float("omega_b") * scale;
            q.a_c = s.float("a_c") * scale;
            q.a_nc = s.float("a_nc") * scale;
            q.gamma = s.float("gamma") * scale;
            q.omega = s.float("omega") * scale;
            q.delta = s.float_opt("delta").unwrap_or(0.0) * scale;
            q.gamma_deph = gamma_deph_raw * scale;
            q.n = n.max(1) as u64;
            q.s = s.float("s");
            q.cutoff = match cutoff {
                Some(c) => c,
                None => Some(n.max(1) / 50),
            };
            time_unit = match units {
                Units::Absolute => 1.0,
                Units::Ratio => 1.0 / q.a_c.abs(),
            };
            p = q;
        }
    }
    s.finish();
    (p, time_unit)
}

fn parse_duration(s: &mut Section, key: &str, time_unit: f64) -> Duration {
    if !s.has(key) {
        s.err(key, "missing required key");
        s.used.insert(key.to_string());
        return Duration::Infinite;
    }
    match s.raw(key) {
        Some(Value::String(x)) if x == "infinite" => Duration::Infinite,
        Some(Value::Float(t)) => Duration::Finite(t * time_unit),
        Some(Value::Integer(t)) => Duration::Finite(*t as f64 * time_unit),
        _ => {
            s.err(key, "expected a non-negative number or \"infinite\"");
            Duration::Infinite
        }
    }
}

fn parse_protocol(root: &Table, errors: &mut Vec<String>, time_unit: f64) -> ProtocolSpec {
    let mut s = Section::new(root, "protocol", errors);
    let family_name = s.str("family");
    let t_c = parse_duration(&mut s, "t_c", time_unit);
    let n_rep = s.int("n_rep");
    if n_rep < 0 {
        s.err("n_rep", "must be non-negative");
    }
    let family = match family_name {
        Some("up_z") => PreparationFamily::UpZ,
        Some("down_z") => PreparationFamily::DownZ,
        Some("theta_correlated") => PreparationFamily::ThetaCorrelated,
        Some("ramsey_linear") => PreparationFamily::RamseyLinear { alpha: s.float("alpha"), phi: s.float("phi") },
        Some("ramsey_sensing") => {
            let tau = if s.has("tau_schedule") { s.float_opt("tau").unwrap_or(0.0) } else { s.float("tau") };
            PreparationFamily::RamseySensing { tau: tau * time_unit }
        }
        Some(other) => {
            s.err("family", &format!("unknown family {other:?}"));
            PreparationFamily::UpZ
        }
        None => PreparationFamily::UpZ,
    };
    let context = format!("family = {}", family_name.unwrap_or("?"));
    match family {
        PreparationFamily::RamseyLinear { .. } => s.forbid(&["tau", "tau_schedule"], &context),
        PreparationFamily::RamseySensing { .. } => s.forbid(&["alpha", "phi"], &context),
        _ => s.forbid(&["alpha", "phi", "tau", "tau_schedule"], &context),
    }
    let tau_schedule = match s.raw("tau_schedule") {
        None => None,
        Some(Value::Table(t)) => {
            let get = |k: &str| match t.get(k) {
                Some(Value::Float(x)) => Some(*x),
                Some(Value::Integer(i)) => Some(*i as f64),
                _ => None,
            };
            for k in t.keys() {
                if !["start", "end", "steps"].contains(&k.as_str()) {
                    s.err(&format!("tau_schedule.{k}"), "unknown key");
                }
            }
            match (get("start"), get("end"), t.get("steps").and_then(Value::as_integer)) {
                (Some(a), Some(b), Some(k)) if k > 0 => {
                    Some(TauSchedule { start: a * time_unit, end: b * time_unit, steps: k as usize })
                }
                _ => {
                    s.err("tau_schedule", "needs numeric start, end and a positive integer steps");
                    None
                }
            }
        }
        Some(_) => {
            s.err("tau_schedule", "expected a table {start, end, steps}");
            None
        }
    };
    let record_every = match s.raw("record_every") {
        None => RecordStride::Log,
        Some(Value::String(x)) if x == "log" => RecordStride::Log,
        Some(Value::Integer(k)) if *k > 0 => RecordStride::Every(*k as u64),
        Some(_) => {
            s.err("record_every", "expected \"log\" or a positive integer");
            RecordStride::Log
        }
    };
    let acceleration = match s.str_opt("acceleration") {
        None | Some("auto") => Acceleration::Auto,
        Some("direct") => Acceleration::Direct,
        Some("power") => Acceleration::Power,
        Some(other) => {
            s.err("acceleration", &format!("expected auto, direct or power, got {other:?}"));
            Acceleration::Auto
        }
    };
    let ignore_validity = s.bool_opt("ignore_validity").unwrap_or(false);
    s.finish();
    ProtocolSpec {
        family,
        t_c,
        n_rep: n_rep.max(0) as u64,
        tau_schedule,
        record_every,
        acceleration,
        ignore_validity,
    }
}

fn parse_initial(root: &Table, errors: &mut Vec<String>, kind: ScenarioKind, base: &Path) -> InitialDistribution {
    let mut s = Section::new(root, "initial", errors);
    let default = match kind {
        ScenarioKind::Superconducting => "thermal",
        ScenarioKind::QuantumDot => "infinite_temperature",
    };
    let name = s.str_opt("kind").unwrap_or(default);
    let all = ["mu", "sigma", "m0", "path"];
    let context = format!("initial kind = {name}");
    let out = match name {
        "thermal" => {
            if kind == ScenarioKind::QuantumDot {
                s.err("kind", "thermal initial state needs the superconducting scenario");
            }
            s.forbid(&all, &context);
            InitialDistribution::Thermal
        }
        "infinite_temperature" => {
            s.forbid(&all, &context);
            InitialDistribution::InfiniteTemperature
        }
        "gaussian" => {
            s.forbid(&["m0", "path"], &context);
            let mu = s.float_opt("mu").unwrap_or(0.0);
            let sigma = s.float("sigma");
            if sigma.is_nan() || sigma <= 0.0 {
                s.err("sigma", "must be positive");
            }
            InitialDistribution::Gaussian { mu, sigma }
        }
        "delta" => {
            s.forbid(&["mu", "sigma", "path"], &context);
            InitialDistribution::Delta { m0: s.int_opt("m0").unwrap_or(0) }
        }
        "file" => {
            s.forbid(&["mu", "sigma", "m0"], &context);
            let path = s.str("path").map(|p| base.join(p)).unwrap_or_default();
            InitialDistribution::File { path }
        }
        other => {
            s.err("kind", &format!("unknown initial distribution {other:?}"));
            InitialDistribution::InfiniteTemperature
        }
    };
    s.finish();
    out
}

fn parse_output(root: &Table, errors: &mut Vec<String>, n_rep: u64, base: &Path) -> OutputSpec {
    let mut s = Section::new(root, "output", errors);
    let directory = base.join(s.str_opt("directory").unwrap_or("output"));
    let series = s.str_opt("series").unwrap_or("series.csv").to_string();
    let summary = s.str_opt("summary").unwrap_or("summary.json").to_string();
    let snapshots = match s.raw("snapshots") {
        None => {
            let mut v = vec![0, n_rep];
            v.dedup();
            v
        }
        Some(Value::Array(a)) => {
            let mut v = Vec::new();
            for x in a {
                match x.as_integer() {
                    Some(c) if c >= 0 && c as u64 <= n_rep => v.push(c as u64),
                    _ => s.err("snapshots", &format!("entry {x} is not a cycle in [0, n_rep]")),
                }
            }
            v.sort_unstable();
            v.dedup();
            v
        }
        Some(_) => {
            s.err("snapshots", "expected an array of cycle indices");
            vec![]
        }
    };
    s.finish();
    OutputSpec { directory, series, summary, snapshots }
}
