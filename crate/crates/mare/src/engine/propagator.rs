use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::JointState;
use crate::error::{Error, Result};
use crate::grid::MagnetizationGrid;
use crate::scenario::Scenario;

/// Below this many blocks evolve stays on the calling thread.
const PAR_MIN_BLOCKS: usize = 1 << 14;

/// Evolution time; `Infinite` projects every block onto its fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duration {
    Finite(f64),
    Infinite,
}

impl Duration {
    pub fn is_zero(&self) -> bool {
        matches!(self, Duration::Finite(t) if *t == 0.0)
    }
}

/// One conserved-M block `(p↑(m), p↓(m+1))`.
///
/// With `om = 1 − e^{−λt}`, `λ = Γ̄_m`, and the fixed-point fractions
/// `w = V_m/(V_m+V_{m+1})`, `w̄ = 1 − w`, the block matrix is
///
/// ```text
/// K = [ 1 − om·w̄    om·w     ]
///     [ om·w̄       1 − om·w ]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockKernel {
    pub om: f64,
    pub w: f64,
    pub wbar: f64,
}

impl BlockKernel {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.om * self.wbar, self.om * self.w], [self.om * self.wbar, 1.0 - self.om * self.w]]
    }

    /// Apply to `(u, d)` = `(p↑(m), p↓(m+1))`.
    #[inline]
    pub fn apply(&self, u: f64, d: f64) -> (f64, f64) {
        if self.om == 1.0 {
            let t = u + d;
            (self.w * t, self.wbar * t)
        } else {
            let flow = self.om * (self.w * d - self.wbar * u);
            (u + flow, d - flow)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Propagator {
    pub duration: Duration,
    pub grid: Arc<MagnetizationGrid>,
    /// Block `i` couples `p↑` of bin `i` with `p↓` of bin `i+1`.
    pub blocks: Vec<BlockKernel>,
    /// Per-bin multiplier of `q_m`.
    pub coherence: Vec<Complex64>,
}

/// `Γ̄_m = Γ_{m+1}/V_m (1 + V_m/V_{m+1})` written through the stored quotient
/// `Γ_{m+1}/V_{m+1}`: `Γ̄_m = (Γ_{m+1}/V_{m+1})(1 + V_{m+1}/V_m)`.
pub(crate) fn block_parameters(scenario: &Scenario, i: usize) -> (f64, f64, f64) {
    let grid = &scenario.grid;
    let r = grid.ratio_unchecked(grid.m_at(i));
    let back = scenario.block_rate(i);
    let lambda = back * (1.0 + r);
    (lambda, 1.0 / (1.0 + r), r / (1.0 + r))
}

pub fn build_propagator(scenario: &Scenario, t: Duration) -> Result<Propagator> {
    if let Duration::Finite(t) = t {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::NegativeDuration { t });
        }
    }
    let grid = scenario.grid.clone();
    let n = grid.len();
    let blocks = (0..n.saturating_sub(1))
        .map(|i| {
            let (lambda, w, wbar) = block_parameters(scenario, i);
            let om = match t {
                _ if lambda == 0.0 => 0.0,
                Duration::Infinite => 1.0,
                Duration::Finite(t) => -(-lambda * t).exp_m1(),
            };
            BlockKernel { om, w, wbar }
        })
        .collect();
    let coherence = (0..n)
        .map(|i| {
            let down_out = scenario.gamma_over_v[i];
            let up_out = if i + 1 < n { scenario.block_rate(i) * grid.ratio_unchecked(grid.m_at(i)) } else { 0.0 };
            let decay = 0.5 * (down_out + up_out) + scenario.dephasing[i];
            let freq = 2.0 * scenario.frames[i].xi;
            match t {
                Duration::Infinite if decay > 0.0 => Complex64::new(0.0, 0.0),
                Duration::Infinite => Complex64::new(1.0, 0.0),
                Duration::Finite(t) => Complex64::from_polar((-decay * t).exp(), -freq * t),
            }
        })
        .collect();
    Ok(Propagator { duration: t, grid, blocks, coherence })
}

/// Evolve a joint state; the input is left untouched.
pub fn evolve(state: &JointState, prop: &Propagator) -> Result<JointState> {
    let mut out = state.clone();
    evolve_in_place(&mut out, prop)?;
    Ok(out)
}

pub fn evolve_in_place(state: &mut JointState, prop: &Propagator) -> Result<()> {
    if *state.grid != *prop.grid {
        return Err(Error::GridMismatch);
    }
    if prop.duration.is_zero() {
        return Ok(());
    }
    let n = state.len();
    if n > 1 {
        let inner = &mut state.pops[1..2 * n - 1];
        let step = |(pair, k): (&mut [f64], &BlockKernel)| {
            let (u, d) = k.apply(pair[0], pair[1]);
            pair[0] = u;
            pair[1] = d;
        };
        if prop.blocks.len() >= PAR_MIN_BLOCKS {
            inner.par_chunks_exact_mut(2).zip(prop.blocks.par_iter()).for_each(step);
        } else {
            inner.chunks_exact_mut(2).zip(prop.blocks.iter()).for_each(step);
        }
    }
    for (q, c) in state.q.iter_mut().zip(&prop.coherence) {
        *q *= c;
    }
    Ok(())
}
