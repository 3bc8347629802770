//! Magnetization axis and volume factors.
//!
//! `V_m = N'! / ((N'/2 + m)! (N'/2 - m)!)` overflows any float long before
//! `N' = 10^5`, so volumes live in log space and neighbour ratios are taken
//! from the exact rational form.

use crate::error::{Error, Result};

/// Effective number of spin-1/2 constituents emulating `n` spins of size `s`:
/// `N' = (4/3) n s (s+1)`, rounded to the nearest even integer (ties up).
pub fn effective_size(s: f64, n: i64) -> Result<u64> {
    if n <= 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("spin count must be positive, got {n}"),
        });
    }
    let twice = 2.0 * s;
    if !(twice.is_finite() && twice >= 1.0 && twice.fract() == 0.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: format!("spin must be a positive half-integer, got {s}"),
        });
    }
    // (4/3) n s(s+1) = n * 2s * (2s+2) / 3, exact in integers.
    let twice = twice as u64;
    let num = n as u64 * twice * (twice + 2);
    // round(num / 6) * 2 with ties rounded up
    let half = (num + 3) / 6;
    let n_eff = 2 * half;
    if twice == 1 && n_eff != n as u64 {
        log::warn!("odd spin count {n} rounded up to {n_eff}");
    } else if !num.is_multiple_of(6) {
        log::warn!("effective size {:.3} rounded to even {n_eff}", num as f64 / 3.0);
    }
    Ok(n_eff.max(2))
}

/// `ln(N'! / ((N'/2+m)! (N'/2-m)!))` through log-gamma.
fn ln_binomial(n_eff: u64, m: i64) -> f64 {
    let half = (n_eff / 2) as f64;
    let n = n_eff as f64;
    let m = m as f64;
    // a - (b + c): the sum is commutative, so the value is exactly symmetric in m
    libm::lgamma(n + 1.0) - (libm::lgamma(half + m + 1.0) + libm::lgamma(half - m + 1.0))
}

/// Symmetric integer grid `m_min..=m_max` with per-bin log-volumes.
#[derive(Debug, Clone)]
pub struct MagnetizationGrid {
    pub n_effective: u64,
    pub m_min: i64,
    pub m_max: i64,
    pub cutoff: Option<i64>,
    pub log_volumes: Vec<f64>,
}

impl PartialEq for MagnetizationGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_effective == other.n_effective && self.m_min == other.m_min && self.m_max == other.m_max
    }
}

impl MagnetizationGrid {
    pub fn new(n_effective: u64, cutoff: Option<i64>) -> Result<Self> {
        if n_effective < 2 || !n_effective.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "n_effective",
                reason: format!("must be even and >= 2, got {n_effective}"),
            });
        }
        let full = (n_effective / 2) as i64;
        let m_max = match cutoff {
            Some(c) if c < 0 => {
                return Err(Error::InvalidParameter {
                    name: "cutoff",
                    reason: format!("must be non-negative, got {c}"),
                })
            }
            Some(c) => c.min(full),
            None => full,
        };
        let log_volumes = (-m_max..=m_max).map(|m| ln_binomial(n_effective, m)).collect();
        Ok(Self { n_effective, m_min: -m_max, m_max, cutoff, log_volumes })
    }

    pub fn len(&self) -> usize {
        (self.m_max - self.m_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether the cutoff actually removed bins.
    pub fn is_truncated(&self) -> bool {
        self.m_max < (self.n_effective / 2) as i64
    }

    pub fn contains(&self, m: i64) -> bool {
        (self.m_min..=self.m_max).contains(&m)
    }

    /// Bin index of `m`. Panics when `m` is off-grid.
    pub fn index(&self, m: i64) -> usize {
        assert!(self.contains(m), "m = {m} outside [{}, {}]", self.m_min, self.m_max);
        (m - self.m_min) as usize
    }

    pub fn m_at(&self, i: usize) -> i64 {
        self.m_min + i as i64
    }

    pub fn ms(&self) -> impl Iterator<Item = i64> + '_ {
        self.m_min..=self.m_max
    }

    pub fn check(&self, m: i64) -> Result<()> {
        if self.contains(m) {
            Ok(())
        } else {
            Err(Error::OutOfRange { m, m_min: self.m_min, m_max: self.m_max })
        }
    }

    /// `ln V_m`. Panics when `m` is off-grid.
    pub fn log_volume(&self, m: i64) -> f64 {
        self.log_volumes[self.index(m)]
    }

    /// `V_{m+1}/V_m = (N'/2 - m)/(N'/2 + m + 1)`, both bins on the grid.
    pub fn volume_ratio(&self, m: i64) -> Result<f64> {
        self.check(m)?;
        self.check(m + 1)?;
        Ok(self.ratio_unchecked(m))
    }

    #[inline]
    pub(crate) fn ratio_unchecked(&self, m: i64) -> f64 {
        let half = (self.n_effective / 2) as i64;
        (half - m) as f64 / (half + m + 1) as f64
    }

    /// `ln Σ_m V_m` in log-sum-exp form.
    pub fn log_total_volume(&self) -> f64 {
        log_sum_exp(&self.log_volumes)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
