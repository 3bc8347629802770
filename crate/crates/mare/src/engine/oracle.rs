use num_complex::Complex64;

use super::state::JointState;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub const ORACLE_MAX_BINS: usize = 200;
pub const ORACLE_MIN_STEPS: usize = 1000;

/// Right-hand side of the per-bin rate equations, written bin by bin (not
/// block by block) so that it shares nothing with the analytic propagator
/// beyond the rate table.
struct Rhs {
    /// `Γ_{m+1}/V_m`: loss of `p↑(m)`.
    up_out: Vec<f64>,
    /// `Γ_{m+1}/V_{m+1}`: gain of `p↑(m)` from `p↓(m+1)`.
    up_in: Vec<f64>,
    /// `Γ_m/V_m`: loss of `p↓(m)`.
    down_out: Vec<f64>,
    /// `Γ_m/V_{m−1}`: gain of `p↓(m)` from `p↑(m−1)`.
    down_in: Vec<f64>,
    coh: Vec<Complex64>,
}

impl Rhs {
    fn new(s: &Scenario) -> Self {
        let g = &s.grid;
        let n = g.len();
        let gv = &s.gamma_over_v;
        let mut r = Rhs {
            up_out: vec![0.0; n],
            up_in: vec![0.0; n],
            down_out: vec![0.0; n],
            down_in: vec![0.0; n],
            coh: vec![Complex64::new(0.0, 0.0); n],
        };
        for i in 0..n {
            let m = g.m_at(i);
            if i + 1 < n {
                // V_{m+1}/V_m
                let ratio = (g.log_volume(m + 1) - g.log_volume(m)).exp();
                r.up_in[i] = gv[i + 1];
                r.up_out[i] = gv[i + 1] * ratio;
            }
            if i > 0 {
                let ratio = (g.log_volume(m) - g.log_volume(m - 1)).exp();
                r.down_out[i] = gv[i];
                r.down_in[i] = gv[i] * ratio;
            }
            let decay = 0.5 * (r.down_out[i] + r.up_out[i]) + s.dephasing[i];
            r.coh[i] = Complex64::new(-decay, -2.0 * s.frames[i].xi);
        }
        r
    }

    fn eval(&self, up: &[f64], dn: &[f64], q: &[Complex64], dup: &mut [f64], ddn: &mut [f64], dq: &mut [Complex64]) {
        let n = up.len();
        for i in 0..n {
            let gain_up = if i + 1 < n { self.up_in[i] * dn[i + 1] } else { 0.0 };
            let gain_dn = if i > 0 { self.down_in[i] * up[i - 1] } else { 0.0 };
            dup[i] = gain_up - self.up_out[i] * up[i];
            ddn[i] = gain_dn - self.down_out[i] * dn[i];
            dq[i] = self.coh[i] * q[i];
        }
    }
}

/// Brute-force classical RK4 integration of the rate and coherence equations.
pub fn ode_oracle(scenario: &Scenario, state: &JointState, t: f64, n_steps: usize) -> Result<JointState> {
    let n = scenario.grid.len();
    if n > ORACLE_MAX_BINS {
        return Err(Error::OracleGridTooLarge { bins: n });
    }
    if n_steps < ORACLE_MIN_STEPS {
        return Err(Error::OracleTooFewSteps { n_steps });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::NegativeDuration { t });
    }
    if *state.grid != *scenario.grid {
        return Err(Error::GridMismatch);
    }
    let rhs = Rhs::new(scenario);
    let mut up = state.p_up_vec();
    let mut dn = state.p_down_vec();
    let mut q = state.q.clone();
    let h = t / n_steps as f64;
    let z = Complex64::new(0.0, 0.0);
    let mut k = [(vec![0.0; n], vec![0.0; n], vec![z; n]), (vec![0.0; n], vec![0.0; n], vec![z; n]),
                 (vec![0.0; n], vec![0.0; n], vec![z; n]), (vec![0.0; n], vec![0.0; n], vec![z; n])];
    let (mut tu, mut td, mut tq) = (vec![0.0; n], vec![0.0; n], vec![z; n]);
    for _ in 0..n_steps {
        for stage in 0..4 {
            let c = match stage {
                0 => 0.0,
                1 | 2 => 0.5 * h,
                _ => h,
            };
            for i in 0..n {
                if stage == 0 {
                    tu[i] = up[i];
                    td[i] = dn[i];
                    tq[i] = q[i];
                } else {
                    let prev = &k[stage - 1];
                    tu[i] = up[i] + c * prev.0[i];
                    td[i] = dn[i] + c * prev.1[i];
                    tq[i] = q[i] + prev.2[i] * c;
                }
            }
            let (a, b, cq) = &mut k[stage];
            rhs.eval(&tu, &td, &tq, a, b, cq);
        }
        for i in 0..n {
            up[i] += h / 6.0 * (k[0].0[i] + 2.0 * k[1].0[i] + 2.0 * k[2].0[i] + k[3].0[i]);
            dn[i] += h / 6.0 * (k[0].1[i] + 2.0 * k[1].1[i] + 2.0 * k[2].1[i] + k[3].1[i]);
            q[i] += (k[0].2[i] + k[1].2[i] * 2.0 + k[2].2[i] * 2.0 + k[3].2[i]) * (h / 6.0);
        }
    }
    JointState::from_parts(state.grid.clone(), &up, &dn, &q)
}

/// Step count that keeps `h·max_rate` below `0.01` (at least the minimum).
pub fn oracle_steps(scenario: &Scenario, t: f64) -> usize {
    let rhs = Rhs::new(scenario);
    let fastest = rhs
        .up_out
        .iter()
        .chain(&rhs.down_out)
        .copied()
        .chain(rhs.coh.iter().map(|c| c.norm()))
        .fold(0.0, f64::max);
    ((t * fastest / 0.01).ceil() as usize).max(ORACLE_MIN_STEPS)
}

