use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::MagnetizationGrid;

/// Joint qubit/bath state: populations `p(σ, m)` in the m-dependent
/// eigenbasis plus coherences `q_m = ⟨↑_m|ρ_m|↓_m⟩`.
///
/// Populations are stored interleaved as `[p↓(m_min), p↑(m_min), p↓(m_min+1), ...]`
/// so that every conserved-M block `(p↑(m), p↓(m+1))` occupies the contiguous
/// pair `pops[2i+1..2i+3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub grid: Arc<MagnetizationGrid>,
    pub pops: Vec<f64>,
    pub q: Vec<Complex64>,
}

impl JointState {
    pub fn zeros(grid: Arc<MagnetizationGrid>) -> Self {
        let n = grid.len();
        Self { grid, pops: vec![0.0; 2 * n], q: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Build from separate per-bin arrays.
    pub fn from_parts(
        grid: Arc<MagnetizationGrid>,
        p_up: &[f64],
        p_down: &[f64],
        q: &[Complex64],
    ) -> Result<Self> {
        let n = grid.len();
        if p_up.len() != n || p_down.len() != n || q.len() != n {
            return Err(Error::GridMismatch);
        }
        let mut pops = vec![0.0; 2 * n];
        for i in 0..n {
            pops[2 * i] = p_down[i];
            pops[2 * i + 1] = p_up[i];
        }
        Ok(Self { grid, pops, q: q.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    #[inline]
    pub fn p_up(&self, i: usize) -> f64 {
        self.pops[2 * i + 1]
    }

    #[inline]
    pub fn p_down(&self, i: usize) -> f64 {
        self.pops[2 * i]
    }

    #[inline]
    pub fn set_up(&mut self, i: usize, v: f64) {
        self.pops[2 * i + 1] = v;
    }

    #[inline]
    pub fn set_down(&mut self, i: usize, v: f64) {
        self.pops[2 * i] = v;
    }

    pub fn p_up_vec(&self) -> Vec<f64> {
        self.pops.iter().skip(1).step_by(2).copied().collect()
    }

    pub fn p_down_vec(&self) -> Vec<f64> {
        self.pops.iter().step_by(2).copied().collect()
    }

    pub fn trace(&self) -> f64 {
        crate::numeric::neumaier_sum(self.pops.iter().copied())
    }

    /// Largest violation of the per-block positivity `|q|² ≤ p↑ p↓`.
    pub fn positivity_violation(&self) -> f64 {
        (0..self.len())
            .map(|i| self.q[i].norm_sqr() - self.p_up(i) * self.p_down(i))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let p = self.pops.iter().zip(&other.pops).map(|(a, b)| (a - b).abs());
        let q = self.q.iter().zip(&other.q).map(|(a, b)| (a - b).norm());
        p.chain(q).fold(0.0, f64::max)
    }
}
