use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{load_config, InitialDistribution, RunSpec};
use super::output::{read_snapshot, series_csv, snapshot_csv, to_json, write};
use crate::engine::{build_propagator, evolve, ode_oracle, oracle_steps, Duration, JointState, ORACLE_MAX_BINS};
use crate::error::{Error, Result};
use crate::grid::log_sum_exp;
use crate::numeric::neumaier_sum;
use crate::observables::{moments, t2_star};
use crate::protocols::{run_cycles_with_snapshots, TRACE_TOLERANCE};
use crate::scenario::{Scenario, ScenarioParams};

/// Oracle agreement threshold (max-abs over populations and coherences).
pub const ORACLE_TOLERANCE: f64 = 1e-8;

/// Initial `P_m` on the scenario's grid.
pub fn initial_distribution(init: &InitialDistribution, scenario: &Scenario) -> Result<Vec<f64>> {
    let g = &scenario.grid;
    let from_logs = |logs: Vec<f64>| {
        let z = log_sum_exp(&logs);
        logs.iter().map(|l| (l - z).exp()).collect::<Vec<f64>>()
    };
    let p = match init {
        InitialDistribution::Thermal => {
            let bw = scenario.params.beta * scenario.params.omega_s;
            from_logs(g.ms().zip(&g.log_volumes).map(|(m, lv)| lv - bw * m as f64).collect())
        }
        InitialDistribution::InfiniteTemperature => from_logs(g.log_volumes.clone()),
        InitialDistribution::Gaussian { mu, sigma } => {
            from_logs(g.ms().map(|m| -((m as f64 - mu) / sigma).powi(2) / 2.0).collect())
        }
        InitialDistribution::Delta { m0 } => {
            g.check(*m0)?;
            let mut p = vec![0.0; g.len()];
            p[g.index(*m0)] = 1.0;
            p
        }
        InitialDistribution::File { path } => {
            let p = read_snapshot(path, g).map_err(|e| Error::Config(vec![format!("initial.path: {e}")]))?;
            let total = neumaier_sum(p.iter().copied());
            if (total - 1.0).abs() > TRACE_TOLERANCE || p.iter().any(|x| x.is_nan() || *x < 0.0) {
                return Err(Error::Unnormalized { total });
            }
            p
        }
    };
    Ok(p)
}

/// Run one configuration and write its outputs; returns the summary JSON.
pub fn cmd_run(spec: &RunSpec) -> Result<Value> {
    let start = Instant::now();
    let scenario = Scenario::build(spec.scenario.clone())?;
    let initial = initial_distribution(&spec.initial, &scenario)?;
    let out = run_cycles_with_snapshots(&initial, &spec.protocol, &scenario, &spec.output.snapshots)?;
    let dir = &spec.output.directory;
    write(&dir.join(&spec.output.series), &series_csv(&out.series))?;
    for (cycle, p) in &out.snapshots {
        write(&dir.join(format!("snapshot_{cycle}.csv")), &snapshot_csv(&scenario.grid, p))?;
    }
    let last = out.series.last().copied();
    let (mean, var) = moments(&scenario.grid, &out.final_p);
    let coupling = scenario.params.coupling();
    let t2 = t2_star(&scenario.grid, &out.final_p, coupling);
    let t2_initial = t2_star(&scenario.grid, &initial, coupling);
    let grid = &scenario.grid;
    let summary = json!({
        "grid": {"n_effective": grid.n_effective, "m_min": grid.m_min, "m_max": grid.m_max},
        "scenario": serde_json::to_value(&spec.scenario).unwrap_or(Value::Null),
        "protocol": serde_json::to_value(&spec.protocol).unwrap_or(Value::Null),
        "initial": serde_json::to_value(&spec.initial).unwrap_or(Value::Null),
        "mode": serde_json::to_value(out.mode).unwrap_or(Value::Null),
        "final": {
            "mean_m": mean,
            "var_m": var,
            "observables": serde_json::to_value(last).unwrap_or(Value::Null),
        },
        "t2_star_s": t2,
        "t2_star_ns": t2 * 1e9,
        "t2_star_initial_ns": t2_initial * 1e9,
        "validity": serde_json::to_value(scenario.validity_report()).unwrap_or(Value::Null),
        "renormalizations": out.renormalizations,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    write(&dir.join(&spec.output.summary), &to_json(&summary))?;
    Ok(summary)
}

pub fn cmd_validity(spec: &RunSpec) -> Result<Value> {
    let scenario = Scenario::build(spec.scenario.clone())?;
    let report = scenario.validity_report();
    let t_c = match spec.protocol.t_c {
        Duration::Finite(t) => Some(t),
        Duration::Infinite => None,
    };
    Ok(json!({
        "report": serde_json::to_value(&report).unwrap_or(Value::Null),
        "passes": report.passes(),
        "gamma_avg_t_c": t_c.map(|t| t * report.gamma_avg),
        "grid": {"n_effective": scenario.grid.n_effective, "m_min": scenario.grid.m_min, "m_max": scenario.grid.m_max},
    }))
}

/// One randomized oracle trial, serialized when it is the worst one.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTrial {
    pub index: usize,
    pub params: ScenarioParams,
    pub t: f64,
    pub n_steps: usize,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
    pub q_re: Vec<f64>,
    pub q_im: Vec<f64>,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub trials: usize,
    pub max_deviation: f64,
    pub passed: bool,
    pub worst: Option<OracleTrial>,
}

fn random_params(rng: &mut StdRng, n_eff: u64, quantum_dot: bool) -> ScenarioParams {
    let half = (n_eff / 2) as f64;
    if quantum_dot {
        let mut p = ScenarioParams::gaas_dot();
        p.n = n_eff;
        p.s = 0.5;
        p.cutoff = None;
        p.omega_b = rng.gen_range(0.5..3.0);
        p.omega = rng.gen_range(0.5..2.0);
        p.delta = rng.gen_range(-1.0..1.0);
        p.a_c = rng.gen_range(-0.3..0.3);
        p.a_nc = rng.gen_range(0.05..0.5);
        p.gamma = rng.gen_range(0.5..2.0);
        p.gamma_deph = if rng.gen_bool(0.3) { rng.gen_range(0.0..0.5) } else { 0.0 };
        p
    } else {
        let omega_s = rng.gen_range(0.5..2.0);
        let a = rng.gen_range(0.0..0.5) * omega_s / half;
        let kappa = rng.gen_range(0.2..2.0);
        ScenarioParams::superconducting(omega_s, a, kappa, 0.0, n_eff)
    }
}

fn random_state(rng: &mut StdRng, scenario: &Scenario) -> Result<JointState> {
    let n = scenario.grid.len();
    let mut up: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let mut dn: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let z: f64 = up.iter().chain(&dn).sum();
    up.iter_mut().chain(dn.iter_mut()).for_each(|x| *x /= z);
    let q: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar((up[i] * dn[i]).sqrt() * rng.gen::<f64>(), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    JointState::from_parts(scenario.grid.clone(), &up, &dn, &q)
}

/// Randomized cross-check of `evolve` against the RK4 oracle.
///
/// Even trials use the superconducting scenario, odd trials a small
/// quantum-dot scenario. `corrupt_rate` perturbs one rate of the analytic
/// side only (fault injection).
pub fn cmd_oracle(grid_size: u64, trials: usize, seed: u64, corrupt_rate: bool) -> Result<OracleReport> {
    if trials == 0 {
        log::warn!("oracle: zero trials requested, nothing checked");
        return Ok(OracleReport { trials: 0, max_deviation: 0.0, passed: true, worst: None });
    }
    let n_eff = grid_size.max(2) + grid_size % 2;
    if n_eff as usize + 1 > ORACLE_MAX_BINS {
        return Err(Error::OracleGridTooLarge { bins: n_eff as usize + 1 });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: Option<OracleTrial> = None;
    for index in 0..trials {
        let params = random_params(&mut rng, n_eff, index % 2 == 1);
        let scenario = Scenario::build(params.clone())?;
        let state = random_state(&mut rng, &scenario)?;
        let fastest = scenario.gamma_over_v.iter().cloned().fold(0.0, f64::max).max(1e-12);
        let t = if index % 10 == 0 { 0.0 } else { rng.gen_range(0.0..3.0) / fastest };
        let n_steps = oracle_steps(&scenario, t);
        let mut analytic_side = scenario.clone();
        if corrupt_rate {
            let k = analytic_side.gamma_over_v.len() / 2;
            analytic_side.gamma_over_v[k] *= 1.5;
        }
        let a = evolve(&state, &build_propagator(&analytic_side, Duration::Finite(t))?)?;
        let b = ode_oracle(&scenario, &state, t, n_steps)?;
        let deviation = a.max_abs_diff(&b);
        if worst.as_ref().is_none_or(|w| deviation > w.deviation) {
            worst = Some(OracleTrial {
                index,
                params,
                t,
                n_steps,
                p_up: state.p_up_vec(),
                p_down: state.p_down_vec(),
                q_re: state.q.iter().map(|c| c.re).collect(),
                q_im: state.q.iter().map(|c| c.im).collect(),
                deviation,
            });
        }
    }
    let max_deviation = worst.as_ref().map_or(0.0, |w| w.deviation);
    Ok(OracleReport { trials, max_deviation, passed: max_deviation < ORACLE_TOLERANCE, worst })
}

/// Run every config matching `pattern` in the worker pool.
pub fn cmd_sweep(pattern: &str) -> Result<Vec<(PathBuf, Result<Value>)>> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::Config(vec![format!("glob: {e}")]))?
        .filter_map(|p| p.ok())
        .collect();
    if paths.is_empty() {
        return Err(Error::Config(vec![format!("no configs match {pattern:?}")]));
    }
    let specs: Vec<(PathBuf, Result<RunSpec>)> = paths.iter().map(|p| (p.clone(), load_config(p))).collect();
    let mut dirs = std::collections::BTreeMap::<PathBuf, &Path>::new();
    for (path, spec) in &specs {
        if let Ok(s) = spec {
            if let Some(other) = dirs.insert(s.output.directory.clone(), path) {
                return Err(Error::Config(vec![format!(
                    "{} and {} write to the same output directory {}",
                    other.display(),
                    path.display(),
                    s.output.directory.display()
                )]));
            }
        }
    }
    Ok(specs
        .into_par_iter()
        .map(|(path, spec)| {
            let result = spec.and_then(|s| cmd_run(&s));
            (path, result)
        })
        .collect())
}

/// Machine-readable error payload.
pub fn error_json(e: &Error) -> Value {
    let details = match e {
        Error::Config(list) => list.clone(),
        other => vec![other.to_string()],
    };
    json!({"error": e.kind(), "message": e.to_string(), "details": details})
}
