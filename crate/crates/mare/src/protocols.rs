//! Preparation families and the iterative prepare → evolve → reset loop.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::Serialize;

use crate::engine::{build_propagator, evolve_in_place, CycleMap, DenseMap, Duration, JointState, Propagator};
use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::observables::{marginal, ObservableRecord};
use crate::scenario::{EigenFrame, Scenario};

/// Trace drift that triggers renormalization (with a warning).
pub const TRACE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreparationFamily {
    UpZ,
    DownZ,
    /// Anti-aligned with `B_m` for `m > 0`, aligned for `m < 0`, mixed at 0.
    ThetaCorrelated,
    /// Bloch vector at polar angle `α m + φ` in the xz-plane.
    RamseyLinear { alpha: f64, phi: f64 },
    /// Free precession for time `τ`: polar angle `2 c m τ` with `c` the
    /// scenario's colinear coupling (sign included).
    RamseySensing { tau: f64 },
}

/// `steps` sensing times linearly spaced over `[start, end]`, repeating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

pub fn tau_value(schedule: &TauSchedule, cycle: u64) -> Result<f64> {
    if schedule.steps == 0 {
        return Err(Error::EmptySchedule);
    }
    let j = (cycle % schedule.steps as u64) as f64;
    if schedule.steps == 1 {
        return Ok(schedule.start);
    }
    Ok(schedule.start + (schedule.end - schedule.start) * j / (schedule.steps - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStride {
    /// Cycles 1, 2, 4, 8, ... (times the schedule period) plus the last.
    Log,
    Every(u64),
}

/// How long runs are advanced between recorded cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    Auto,
    /// Step every cycle with its tridiagonal map.
    Direct,
    /// Compose one schedule period densely and square it.
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSpec {
    pub family: PreparationFamily,
    pub t_c: Duration,
    pub n_rep: u64,
    /// Overrides the `τ` of a `RamseySensing` family cycle by cycle.
    pub tau_schedule: Option<TauSchedule>,
    pub record_every: RecordStride,
    pub acceleration: Acceleration,
    /// Run even when the scenario's validity diagnostics fail.
    pub ignore_validity: bool,
}

impl ProtocolSpec {
    pub fn new(family: PreparationFamily, t_c: Duration, n_rep: u64) -> Self {
        Self {
            family,
            t_c,
            n_rep,
            tau_schedule: None,
            record_every: RecordStride::Log,
            acceleration: Acceleration::Auto,
            ignore_validity: false,
        }
    }

    /// Number of cycles after which the preparation sequence repeats.
    pub fn period(&self) -> usize {
        self.tau_schedule.map_or(1, |s| s.steps.max(1))
    }

    pub fn family_at(&self, cycle: u64) -> Result<PreparationFamily> {
        match (&self.tau_schedule, self.family) {
            (Some(s), PreparationFamily::RamseySensing { .. }) => {
                Ok(PreparationFamily::RamseySensing { tau: tau_value(s, cycle)? })
            }
            _ => Ok(self.family),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.tau_schedule {
            if s.steps == 0 {
                return Err(Error::EmptySchedule);
            }
            if !matches!(self.family, PreparationFamily::RamseySensing { .. }) {
                return Err(Error::InvalidParameter {
                    name: "tau_schedule",
                    reason: "only valid with the ramsey_sensing family".into(),
                });
            }
            if !self.n_rep.is_multiple_of(s.steps as u64) {
                return Err(Error::InvalidParameter {
                    name: "n_rep",
                    reason: format!("must be a multiple of the schedule length {}", s.steps),
                });
            }
        }
        if let RecordStride::Every(0) = self.record_every {
            return Err(Error::InvalidParameter { name: "record_every", reason: "stride must be positive".into() });
        }
        if let Duration::Finite(t) = self.t_c {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::NegativeDuration { t });
            }
        }
        Ok(())
    }
}

/// Per-bin Bloch vectors `r⃗_m` of a preparation family.
pub fn bloch_field(family: &PreparationFamily, scenario: &Scenario) -> Vec<[f64; 3]> {
    let xz = |theta: f64| {
        let (s, c) = theta.sin_cos();
        [s, 0.0, c]
    };
    let coupling = scenario.params.coupling();
    scenario
        .frames
        .iter()
        .map(|f| {
            let m = f.m as f64;
            match *family {
                PreparationFamily::UpZ => [0.0, 0.0, 1.0],
                PreparationFamily::DownZ => [0.0, 0.0, -1.0],
                PreparationFamily::ThetaCorrelated => match f.m.signum() {
                    1 => [-f.b_hat[0], -f.b_hat[1], -f.b_hat[2]],
                    -1 => f.b_hat,
                    _ => [0.0; 3],
                },
                PreparationFamily::RamseyLinear { alpha, phi } => xz(alpha * m + phi),
                PreparationFamily::RamseySensing { tau } => xz(2.0 * coupling * m * tau),
            }
        })
        .collect()
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Share of each bin prepared in `|↑_m⟩`: `(1 + r⃗_m·b̂_m)/2`.
pub fn up_fractions(field: &[[f64; 3]], scenario: &Scenario) -> Vec<f64> {
    field.iter().zip(&scenario.frames).map(|(r, f)| (0.5 * (1.0 + dot(r, &f.b_hat))).clamp(0.0, 1.0)).collect()
}

/// `⟨↑_m| r⃗·σ⃗ |↓_m⟩`.
fn transverse(r: &[f64; 3], f: &EigenFrame) -> Complex64 {
    let u = f.up();
    let d = f.down();
    let i = Complex64::i();
    let sx = u[0].conj() * d[1] + u[1].conj() * d[0];
    let sy = -i * u[0].conj() * d[1] + i * u[1].conj() * d[0];
    let sz = u[0].conj() * d[0] - u[1].conj() * d[1];
    sx * r[0] + sy * r[1] + sz * r[2]
}

fn check_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::GridMismatch);
    }
    if let Some(x) = p.iter().find(|x| x.is_nan() || **x < 0.0) {
        return Err(Error::InvalidParameter { name: "P", reason: format!("negative or NaN probability {x}") });
    }
    let total = neumaier_sum(p.iter().copied());
    if (total - 1.0).abs() > TRACE_TOLERANCE {
        return Err(Error::Unnormalized { total });
    }
    Ok(())
}

/// Attach the qubit state `(1 + r⃗_m·σ⃗)/2` to every bin of `P`.
pub fn prepare(p: &[f64], family: &PreparationFamily, scenario: &Scenario) -> Result<JointState> {
    check_distribution(p, scenario.grid.len())?;
    Ok(prepare_with_field(p, &bloch_field(family, scenario), scenario))
}

fn prepare_with_field(p: &[f64], field: &[[f64; 3]], scenario: &Scenario) -> JointState {
    let mut st = JointState::zeros(scenario.grid.clone());
    for (i, (r, f)) in field.iter().zip(&scenario.frames).enumerate() {
        let up = p[i] * (0.5 * (1.0 + dot(r, &f.b_hat))).clamp(0.0, 1.0);
        st.set_up(i, up);
        st.set_down(i, p[i] - up);
        st.q[i] = transverse(r, f) * (0.5 * p[i]);
    }
    st
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_p: Vec<f64>,
    pub series: Vec<ObservableRecord>,
    /// `(cycle, P_m)` for every requested snapshot cycle.
    pub snapshots: Vec<(u64, Vec<f64>)>,
    pub mode: Acceleration,
    pub renormalizations: u64,
}

pub fn run_cycles(initial: &[f64], spec: &ProtocolSpec, scenario: &Scenario) -> Result<RunOutput> {
    run_cycles_with_snapshots(initial, spec, scenario, &[])
}

/// Cycle counts at which observables are recorded for `mode`.
fn record_cycles(spec: &ProtocolSpec, mode: Acceleration) -> BTreeSet<u64> {
    let n = spec.n_rep;
    let mut out = BTreeSet::new();
    if n == 0 {
        return out;
    }
    let unit = if mode == Acceleration::Power { spec.period() as u64 } else { 1 };
    match spec.record_every {
        RecordStride::Log => {
            let mut c = unit;
            while c <= n {
                out.insert(c);
                c = match c.checked_mul(2) {
                    Some(c) => c,
                    None => break,
                };
            }
        }
        RecordStride::Every(k) => {
            out.extend((1..=n / k).map(|j| j * k));
        }
    }
    out.insert(n);
    out
}

/// Rough cost model (ns) used by `Acceleration::Auto`.
fn prefer_power(spec: &ProtocolSpec, bins: usize) -> bool {
    let n = bins as f64;
    let periods = (spec.n_rep / spec.period() as u64) as f64;
    if periods < 4.0 {
        return false;
    }
    let direct = spec.n_rep as f64 * n * 0.9;
    let power = 2.0 * n.powi(3) * (periods.log2() + 2.0) * 0.04 + spec.period() as f64 * 3.0 * n * n;
    power < direct
}

fn resolve_mode(spec: &ProtocolSpec, bins: usize, snapshots: &[u64]) -> Result<Acceleration> {
    let power_records = record_cycles(spec, Acceleration::Power);
    let power_ok = spec.record_every == RecordStride::Log
        && snapshots.iter().all(|c| *c == 0 || power_records.contains(c));
    match spec.acceleration {
        Acceleration::Direct => Ok(Acceleration::Direct),
        Acceleration::Power if power_ok => Ok(Acceleration::Power),
        Acceleration::Power => Err(Error::InvalidParameter {
            name: "acceleration",
            reason: "power mode records only at 0, period·2^k and n_rep (logarithmic stride)".into(),
        }),
        Acceleration::Auto if power_ok && prefer_power(spec, bins) => Ok(Acceleration::Power),
        Acceleration::Auto => Ok(Acceleration::Direct),
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    prop: Propagator,
    fields: Vec<Vec<[f64; 3]>>,
    maps: Vec<CycleMap>,
    out: RunOutput,
    snapshots: BTreeSet<u64>,
}

impl Runner<'_> {
    fn snapshot(&mut self, cycle: u64, p: &[f64]) {
        if self.snapshots.contains(&cycle) {
            self.out.snapshots.push((cycle, p.to_vec()));
        }
    }

    fn check_trace(&mut self, p: &mut [f64], sum: f64, cycle: u64) -> Result<()> {
        if !sum.is_finite() {
            return Err(Error::NonFinite { what: "trace", cycle });
        }
        if (sum - 1.0).abs() > TRACE_TOLERANCE {
            log::warn!("trace drifted to {sum:.17e} at cycle {cycle}; renormalizing");
            p.iter_mut().for_each(|x| *x /= sum);
            self.out.renormalizations += 1;
        }
        Ok(())
    }

    /// Cycle `cycle` (1-based count after completion) along the full joint path.
    fn full_cycle(&mut self, p: &mut Vec<f64>, cycle: u64) -> Result<()> {
        let k = ((cycle - 1) % self.fields.len() as u64) as usize;
        let mut st = prepare_with_field(p, &self.fields[k], self.scenario);
        evolve_in_place(&mut st, &self.prop)?;
        *p = marginal(&st);
        let sum = neumaier_sum(p.iter().copied());
        self.check_trace(p, sum, cycle)?;
        let rec = ObservableRecord::new(cycle, &st, self.scenario);
        if !rec.is_finite() {
            return Err(Error::NonFinite { what: "observable", cycle });
        }
        self.out.series.push(rec);
        self.snapshot(cycle, p);
        Ok(())
    }

    fn fast_cycle(&mut self, p: &mut Vec<f64>, tmp: &mut Vec<f64>, cycle: u64) -> Result<()> {
        let k = ((cycle - 1) % self.maps.len() as u64) as usize;
        let sum = self.maps[k].apply(p, tmp);
        std::mem::swap(p, tmp);
        self.check_trace(p, sum, cycle)
    }
}

pub fn run_cycles_with_snapshots(
    initial: &[f64],
    spec: &ProtocolSpec,
    scenario: &Scenario,
    snapshots: &[u64],
) -> Result<RunOutput> {
    spec.validate()?;
    check_distribution(initial, scenario.grid.len())?;
    if let Some(c) = snapshots.iter().find(|c| **c > spec.n_rep) {
        return Err(Error::InvalidParameter { name: "snapshots", reason: format!("cycle {c} exceeds n_rep") });
    }
    let validity = scenario.validity_report();
    if !validity.passes() && !spec.ignore_validity {
        return Err(Error::InvalidParameter {
            name: "scenario",
            reason: format!(
                "validity diagnostics fail (markov {:.3e}, secular {:.3e}); set ignore_validity to override",
                validity.markov, validity.secular
            ),
        });
    }
    let mode = resolve_mode(spec, scenario.grid.len(), snapshots)?;
    let prop = build_propagator(scenario, spec.t_c)?;
    let period = spec.period();
    let fields: Vec<_> =
        (0..period as u64).map(|k| Ok(bloch_field(&spec.family_at(k)?, scenario))).collect::<Result<_>>()?;
    let maps = fields.iter().map(|f| CycleMap::new(&prop, &up_fractions(f, scenario))).collect();
    let mut run = Runner {
        scenario,
        prop,
        fields,
        maps,
        out: RunOutput { final_p: vec![], series: vec![], snapshots: vec![], mode, renormalizations: 0 },
        snapshots: snapshots.iter().copied().collect(),
    };

    let mut p = initial.to_vec();
    let st0 = prepare_with_field(&p, &run.fields[0], scenario);
    run.out.series.push(ObservableRecord::new(0, &st0, scenario));
    run.snapshot(0, &p);

    let records = record_cycles(spec, mode);
    match mode {
        Acceleration::Power => run_power(&mut run, &mut p, spec, &records)?,
        _ => run_direct(&mut run, &mut p, spec, &records)?,
    }
    run.out.final_p = p;
    Ok(run.out)
}

fn run_direct(run: &mut Runner, p: &mut Vec<f64>, spec: &ProtocolSpec, records: &BTreeSet<u64>) -> Result<()> {
    let mut tmp = vec![0.0; p.len()];
    let mut wanted: BTreeSet<u64> = records.clone();
    wanted.extend(run.snapshots.iter().copied().filter(|c| *c > 0));
    let mut next = wanted.iter().copied().peekable();
    for cycle in 1..=spec.n_rep {
        if next.peek() == Some(&cycle) {
            next.next();
            run.full_cycle(p, cycle)?;
            if !records.contains(&cycle) {
                run.out.series.pop();
            }
        } else {
            run.fast_cycle(p, &mut tmp, cycle)?;
        }
        if cycle.is_power_of_two() {
            log::info!("cycle {cycle}/{}", spec.n_rep);
        }
    }
    Ok(())
}

/// Advance whole schedule periods by repeated squaring of the period map.
///
/// With `A` the period map, `B_j = A^{2^j}` and `Q_j = A^{2^j − 1} P₀`, the
/// state recorded after `2^j` periods comes from one explicit period started
/// at `Q_j`; the final state comes from one explicit period started at
/// `A^{n−1} P₀`, accumulated bit by bit from the same `B_j`.
fn run_power(run: &mut Runner, p: &mut Vec<f64>, spec: &ProtocolSpec, records: &BTreeSet<u64>) -> Result<()> {
    let period = spec.period() as u64;
    let n_periods = spec.n_rep / period;
    if n_periods == 0 {
        return Ok(());
    }
    let n = p.len();
    let mut a = DenseMap::identity(n);
    for map in &run.maps {
        map.left_multiply(&mut a);
    }
    log::info!("period map composed ({n} bins, period {period})");
    let explicit_period = |run: &mut Runner, start: &[f64], first_period: u64, record: bool| -> Result<Vec<f64>> {
        let mut q = start.to_vec();
        let mut tmp = vec![0.0; n];
        let base = first_period * period;
        for k in 1..period {
            run.fast_cycle(&mut q, &mut tmp, base + k)?;
        }
        if record {
            run.full_cycle(&mut q, base + period)?;
        } else {
            run.fast_cycle(&mut q, &mut tmp, base + period)?;
        }
        Ok(q)
    };
    let target = n_periods - 1;
    let mut q = p.clone();
    let mut f = p.clone();
    let mut b = a;
    let mut j = 0u32;
    loop {
        let count = 1u64 << j;
        if count < n_periods && records.contains(&(count * period)) {
            explicit_period(run, &q, count - 1, true)?;
        }
        if (target >> j) & 1 == 1 {
            f = b.apply(&f);
            let s = neumaier_sum(f.iter().copied());
            run.check_trace(&mut f, s, 0)?;
        }
        let more_records = count.checked_mul(2).is_some_and(|c| c < n_periods);
        let more_bits = (target >> (j + 1)) != 0;
        if !more_records && !more_bits {
            break;
        }
        if more_records {
            q = b.apply(&q);
        }
        b = b.square();
        b.normalize_columns();
        j += 1;
        log::info!("squared period map: 2^{j} periods");
    }
    *p = explicit_period(run, &f, n_periods - 1, true)?;
    Ok(())
}
