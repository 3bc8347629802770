//! Moments, entropies, the conserved quantity `M`, Ramsey visibility / T₂*,
//! and closed-form predictions for the superconducting scenario.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::engine::JointState;
use crate::grid::MagnetizationGrid;
use crate::numeric::neumaier_sum;
use crate::scenario::Scenario;

/// Probabilities below this are treated as exact zeros in entropy sums.
const P_FLOOR: f64 = 1e-300;

/// Column order of the series CSV.
pub const SERIES_COLUMNS: [&str; 8] = ["cycle", "mean_m", "var_m", "S_B", "S_obs", "S_vN", "M_expect", "trace"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub cycle: u64,
    pub mean_m: f64,
    pub var_m: f64,
    #[serde(rename = "S_B")]
    pub s_b: f64,
    #[serde(rename = "S_obs")]
    pub s_obs: f64,
    #[serde(rename = "S_vN")]
    pub s_vn: f64,
    #[serde(rename = "M_expect")]
    pub m_expect: f64,
    pub trace: f64,
}

impl ObservableRecord {
    pub fn new(cycle: u64, state: &JointState, scenario: &Scenario) -> Self {
        let p = marginal(state);
        let (mean_m, var_m) = moments(&state.grid, &p);
        let e = entropies(state, scenario);
        Self {
            cycle,
            mean_m,
            var_m,
            s_b: e.s_b,
            s_obs: e.s_obs,
            s_vn: e.s_vn,
            m_expect: conserved_m(state),
            trace: neumaier_sum(p.iter().copied()),
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [self.mean_m, self.var_m, self.s_b, self.s_obs, self.s_vn, self.m_expect, self.trace]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// `P_m = p↑(m) + p↓(m)`.
pub fn marginal(state: &JointState) -> Vec<f64> {
    state.pops.chunks_exact(2).map(|c| c[0] + c[1]).collect()
}

/// Mean and central variance of `P` over the grid.
pub fn moments(grid: &MagnetizationGrid, p: &[f64]) -> (f64, f64) {
    let mean = neumaier_sum(p.iter().enumerate().map(|(i, &x)| x * grid.m_at(i) as f64));
    let var = neumaier_sum(p.iter().enumerate().map(|(i, &x)| {
        let d = grid.m_at(i) as f64 - mean;
        x * d * d
    }));
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Entropies {
    pub s_b: f64,
    pub s_obs: f64,
    pub s_vn: f64,
}

fn plogp(p: f64) -> f64 {
    if p > P_FLOOR {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Reduced qubit state `ρ_S = Σ_m ρ_m` in the z-basis as `(ρ₀₀, ρ₁₁, ρ₀₁)`.
pub fn system_density(state: &JointState, scenario: &Scenario) -> (f64, f64, Complex64) {
    let mut r00 = Vec::with_capacity(state.len());
    let mut r11 = Vec::with_capacity(state.len());
    let mut r01 = Complex64::new(0.0, 0.0);
    for (i, f) in scenario.frames.iter().enumerate() {
        let (pu, pd, q) = (state.p_up(i), state.p_down(i), state.q[i]);
        let u = f.up();
        let d = f.down();
        // ρ = pu |u⟩⟨u| + pd |d⟩⟨d| + q |u⟩⟨d| + q* |d⟩⟨u|
        let elem = |a: usize, b: usize| {
            u[a] * u[b].conj() * pu + d[a] * d[b].conj() * pd + u[a] * d[b].conj() * q + d[a] * u[b].conj() * q.conj()
        };
        r00.push(elem(0, 0).re);
        r11.push(elem(1, 1).re);
        r01 += elem(0, 1);
    }
    (neumaier_sum(r00), neumaier_sum(r11), r01)
}

pub fn entropies(state: &JointState, scenario: &Scenario) -> Entropies {
    let grid = &state.grid;
    let p = marginal(state);
    let s_b = neumaier_sum(p.iter().map(|&x| plogp(x)));
    let s_obs = neumaier_sum(
        state
            .pops
            .iter()
            .map(|&x| plogp(x))
            .chain(p.iter().enumerate().map(|(i, &x)| if x > P_FLOOR { x * grid.log_volumes[i] } else { 0.0 })),
    );
    let (a, d, b) = system_density(state, scenario);
    let tr = a + d;
    let half = 0.5 * (a - d);
    let rad = (half * half + b.norm_sqr()).sqrt();
    let l1 = (0.5 * tr + rad) / tr;
    let l2 = ((0.5 * tr - rad) / tr).max(0.0);
    let s_vn = (plogp(l1) + plogp(l2)).clamp(0.0, 2f64.ln());
    Entropies { s_b, s_obs, s_vn }
}

/// `⟨M⟩ = Σ_m [m P_m + (p↑(m) − p↓(m))/2]`.
pub fn conserved_m(state: &JointState) -> f64 {
    let g = &state.grid;
    neumaier_sum((0..state.len()).map(|i| {
        let (u, d) = (state.p_up(i), state.p_down(i));
        g.m_at(i) as f64 * (u + d) + 0.5 * (u - d)
    }))
}

/// Distribution of the conserved quantity: entry `k` is `P(M = m_min − 1/2 + k)`.
pub fn conserved_distribution(state: &JointState) -> Vec<f64> {
    let n = state.len();
    let mut out = vec![0.0; n + 1];
    for i in 0..n {
        out[i] += state.p_down(i);
        out[i + 1] += state.p_up(i);
    }
    out
}

/// `⟨e^{iτcm}⟩`, normalised by the total weight of `p`.
pub fn characteristic(grid: &MagnetizationGrid, p: &[f64], coupling: f64, tau: f64) -> Complex64 {
    let (mut re, mut im) = (Vec::with_capacity(p.len()), Vec::with_capacity(p.len()));
    let mut total = Vec::with_capacity(p.len());
    for (i, &x) in p.iter().enumerate() {
        if x > P_FLOOR {
            let (s, c) = (tau * coupling * grid.m_at(i) as f64).sin_cos();
            re.push(x * c);
            im.push(x * s);
            total.push(x);
        }
    }
    Complex64::new(neumaier_sum(re), neumaier_sum(im)) / neumaier_sum(total)
}

/// Ramsey visibility `V_R(τ) = 1/2 − ⟨cos(τ c m)⟩/2`.
pub fn ramsey_visibility(grid: &MagnetizationGrid, p: &[f64], coupling: f64, tau: f64) -> f64 {
    0.5 - 0.5 * characteristic(grid, p, coupling, tau).re
}

/// First `τ > 0` at which the envelope `|⟨e^{iτcm}⟩|` falls to `e^{−1}`.
///
/// The envelope is periodic with period `2π/|c|` and symmetric about its
/// midpoint, so only `(0, π/|c|]` is scanned; a distribution that never
/// decays that far (e.g. a single bin) yields `f64::INFINITY`.
pub fn t2_star(grid: &MagnetizationGrid, p: &[f64], coupling: f64) -> f64 {
    let c = coupling.abs();
    if c == 0.0 {
        return f64::INFINITY;
    }
    let target = 1.0 / E;
    let env = |tau: f64| characteristic(grid, p, coupling, tau).norm();
    let tau_max = PI / c;
    let (_, var) = moments(grid, p);
    let sigma = var.max(0.0).sqrt();
    let mut step = tau_max / 4096.0;
    if sigma > 0.0 {
        step = step.min(2f64.sqrt() / (sigma * c) / 64.0);
    }
    let mut lo = 0.0;
    let mut hi = f64::NAN;
    let mut tau = step;
    while tau <= tau_max + 0.5 * step {
        if env(tau) < target {
            hi = tau;
            break;
        }
        lo = tau;
        tau += step;
    }
    if hi.is_nan() {
        return f64::INFINITY;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if env(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First and second moments of a joint state needed by the closed forms.
/// Correlators are raw (`⟨S_z m⟩`) with centralised versions alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlations {
    pub mean_m: f64,
    pub var_m: f64,
    pub mean_sz: f64,
    pub raw_sz_m: f64,
    pub central_sz_m: f64,
    pub mean_big_m: f64,
    pub mean_big_m2: f64,
}

/// Correlations of a state whose eigenbasis is the z-basis (superconducting).
pub fn correlations(state: &JointState) -> Correlations {
    let g = &state.grid;
    let p = marginal(state);
    let (mean_m, var_m) = moments(g, &p);
    let mean_sz = neumaier_sum((0..state.len()).map(|i| 0.5 * (state.p_up(i) - state.p_down(i))));
    let raw_sz_m =
        neumaier_sum((0..state.len()).map(|i| 0.5 * g.m_at(i) as f64 * (state.p_up(i) - state.p_down(i))));
    let mean_m2 = var_m + mean_m * mean_m;
    Correlations {
        mean_m,
        var_m,
        mean_sz,
        raw_sz_m,
        central_sz_m: raw_sz_m - mean_sz * mean_m,
        mean_big_m: mean_m + mean_sz,
        mean_big_m2: mean_m2 + 0.25 + 2.0 * raw_sz_m,
    }
}

/// Closed-form superconducting predictions (long-time limit of one cycle
/// and the per-cycle cooling laws).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScClosedForms {
    /// `⟨m⟩_∞ = ⟨M⟩ N/(N+1)`.
    pub mean_inf: f64,
    /// `⟨S_z⟩_∞ = ⟨M⟩/(N+1)`.
    pub sz_inf: f64,
    /// Reference closed form `(⟨M²⟩ − 1/4)(1 − 1/N) − ⟨M⟩²/(1 + 1/N²)`.
    pub var_inf_reference: f64,
    /// `⟨⟨m²⟩⟩₀ − ⟨S_z⟩₀² + 2⟨⟨S_z m⟩⟩₀`, the leading-order form.
    pub var_inf_leading: f64,
    /// Exact per-block steady state: `⟨M²⟩(N−1)/(N+1) + 1/4 − ⟨M⟩² N²/(N+1)²`.
    pub var_inf_exact: f64,
    /// Per-cycle change of the mean under down_z cooling.
    pub cooling_mean_step: f64,
    /// Per-cycle change of the variance under down_z cooling.
    pub cooling_var_step: f64,
    /// Θ-state covariance on a centred Gaussian, `−ς/√(2π)`.
    pub theta_covariance: f64,
    /// Reference Θ-state variance drop, `ς/√(2π)`.
    pub theta_var_drop_reference: f64,
    /// Reference maximal linear-Ramsey covariance, `−ς e^{−ς/2}/√(2π)`.
    pub ramsey_covariance_reference: f64,
    pub correlator_convention: &'static str,
}

/// `n` is the bath size `N`; `sigma` the standard deviation used by the
/// Gaussian-limit formulas.
pub fn sc_closed_forms(n: f64, c: &Correlations, sigma: f64) -> ScClosedForms {
    let big_m = c.mean_big_m;
    let big_m2 = c.mean_big_m2;
    let root = (2.0 * PI).sqrt();
    ScClosedForms {
        mean_inf: big_m * n / (n + 1.0),
        sz_inf: big_m / (n + 1.0),
        var_inf_reference: (big_m2 - 0.25) * (1.0 - 1.0 / n) - big_m * big_m / (1.0 + 1.0 / (n * n)),
        var_inf_leading: c.var_m - c.mean_sz * c.mean_sz + 2.0 * c.central_sz_m,
        var_inf_exact: big_m2 * (n - 1.0) / (n + 1.0) + 0.25 - big_m * big_m * (n / (n + 1.0)).powi(2),
        cooling_mean_step: -0.5,
        cooling_var_step: -0.25,
        theta_covariance: -sigma / root,
        theta_var_drop_reference: sigma / root,
        ramsey_covariance_reference: -sigma * (-sigma / 2.0).exp() / root,
        correlator_convention: "raw <S_z m>, centralised explicitly",
    }
}

/// Direct-summation audit of the linear-Ramsey covariance on a centred
/// Gaussian against the reference maximal value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RamseyCovarianceAudit {
    pub sigma: f64,
    pub alpha: f64,
    pub phi: f64,
    /// `⟨⟨S_z m⟩⟩` by direct summation at `(alpha, phi)`.
    pub numeric: f64,
    /// Most negative covariance over `φ` at the same `α`, by direct summation.
    pub numeric_min_over_phi: f64,
    /// Continuous-Gaussian value `−(ας²/2) sin φ e^{−α²ς²/2}`.
    pub gaussian: f64,
    pub reference: f64,
    pub relative_disagreement: f64,
    pub agrees: bool,
}

/// `p` must be a (discretised) centred Gaussian of width `sigma` on `grid`.
pub fn ramsey_covariance_audit(grid: &MagnetizationGrid, p: &[f64], sigma: f64, alpha: f64, phi: f64) -> RamseyCovarianceAudit {
    let cov = |phi: f64| {
        let mean_m = neumaier_sum(p.iter().enumerate().map(|(i, &x)| x * grid.m_at(i) as f64));
        let sz = |i: usize| 0.5 * (alpha * grid.m_at(i) as f64 + phi).cos();
        let mean_sz = neumaier_sum(p.iter().enumerate().map(|(i, &x)| x * sz(i)));
        let raw = neumaier_sum(p.iter().enumerate().map(|(i, &x)| x * sz(i) * grid.m_at(i) as f64));
        raw - mean_sz * mean_m
    };
    let numeric = cov(phi);
    // the covariance is a·cos φ + b·sin φ; its minimum over φ is −√(a²+b²)
    let a = cov(0.0);
    let b = cov(PI / 2.0);
    let numeric_min_over_phi = -(a * a + b * b).sqrt();
    let gaussian = -0.5 * alpha * sigma * sigma * phi.sin() * (-0.5 * alpha * alpha * sigma * sigma).exp();
    let reference = -sigma * (-sigma / 2.0).exp() / (2.0 * PI).sqrt();
    let relative_disagreement = (numeric - reference).abs() / numeric.abs().max(reference.abs());
    RamseyCovarianceAudit {
        sigma,
        alpha,
        phi,
        numeric,
        numeric_min_over_phi,
        gaussian,
        reference,
        relative_disagreement,
        agrees: relative_disagreement < 0.05,
    }
}
