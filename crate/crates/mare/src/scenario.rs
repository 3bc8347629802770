//! Scenario physics: effective field `B_m`, the m-dependent qubit eigenbasis,
//! flip-flop rates and validity diagnostics.
//!
//! Two scenarios are supported. In the superconducting one the qubit couples
//! to `N` two-level systems with `B_m = (ω_S + A m) ẑ` and
//! `Γ_m = κ V_m (1/2 + m/N)`. In the quantum-dot one a driven electron spin
//! sees `B_m = Ω x̂ + (Δ + A_c m) ẑ` in the rotating frame, and nuclear
//! flip-flops are mediated by a Lorentzian spectral density.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{effective_size, MagnetizationGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Superconducting,
    QuantumDot,
}

/// Physical constants of one scenario, angular frequencies in rad/s.
///
/// Fields that do not apply to `kind` are ignored (and rejected by the
/// config loader).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioParams {
    pub kind: ScenarioKind,
    pub omega_s: f64,
    /// Superconducting hyperfine constant.
    pub a: f64,
    pub kappa: f64,
    /// Inverse temperature in s/rad, so that `β ω_S` is dimensionless.
    pub beta: f64,
    pub omega_b: f64,
    /// Colinear hyperfine constant; may be negative.
    pub a_c: f64,
    pub a_nc: f64,
    pub gamma: f64,
    pub omega: f64,
    pub delta: f64,
    /// Physical spin count.
    pub n: u64,
    /// Spin quantum number of each bath spin.
    pub s: f64,
    pub gamma_deph: f64,
    /// `|m|` truncation; `None` means the full grid.
    pub cutoff: Option<i64>,
}

impl ScenarioParams {
    pub fn superconducting(omega_s: f64, a: f64, kappa: f64, beta: f64, n: u64) -> Self {
        Self {
            kind: ScenarioKind::Superconducting,
            omega_s,
            a,
            kappa,
            beta,
            omega_b: 0.0,
            a_c: 0.0,
            a_nc: 0.0,
            gamma: 0.0,
            omega: 0.0,
            delta: 0.0,
            n,
            s: 0.5,
            gamma_deph: 0.0,
            cutoff: None,
        }
    }

    /// GaAs quantum dot reference values, drive on Hartmann-Hahn resonance
    /// (`Ω = ω_B`, `Δ = 0`) and the default cutoff `|m| ≤ N/50`.
    pub fn gaas_dot() -> Self {
        let mhz = 2.0 * PI * 1e6;
        let omega_b = 18.96 * mhz;
        Self {
            kind: ScenarioKind::QuantumDot,
            omega_s: 4.2e3 * mhz,
            a: 0.0,
            kappa: 0.0,
            beta: 0.0,
            omega_b,
            a_c: -0.13 * mhz,
            a_nc: 0.003 * mhz,
            gamma: omega_b / 5.0,
            omega: omega_b,
            delta: 0.0,
            n: 69_000,
            s: 1.5,
            gamma_deph: 0.0,
            cutoff: Some(69_000 / 50),
        }
    }

    pub fn n_effective(&self) -> Result<u64> {
        effective_size(self.s, self.n as i64)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg: &[(&'static str, f64)] = match self.kind {
            ScenarioKind::Superconducting => {
                &[("omega_s", self.omega_s), ("a", self.a), ("kappa", self.kappa), ("beta", self.beta)]
            }
            ScenarioKind::QuantumDot => &[
                ("omega_b", self.omega_b),
                ("a_nc", self.a_nc),
                ("gamma", self.gamma),
                ("omega", self.omega),
            ],
        };
        for &(name, v) in nonneg.iter().chain(&[("gamma_deph", self.gamma_deph)]) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be finite and >= 0, got {v}") });
            }
        }
        for (name, v) in [("a_c", self.a_c), ("delta", self.delta)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { name, reason: format!("must be finite, got {v}") });
            }
        }
        if self.kind == ScenarioKind::QuantumDot && self.gamma == 0.0 {
            return Err(Error::InvalidParameter { name: "gamma", reason: "linewidth must be positive".into() });
        }
        self.n_effective()?;
        Ok(())
    }

    /// Coupling that converts `m` into a qubit frequency shift: `A_c` or `A`.
    pub fn coupling(&self) -> f64 {
        match self.kind {
            ScenarioKind::Superconducting => self.a,
            ScenarioKind::QuantumDot => self.a_c,
        }
    }
}

/// Effective field `B_m` as a 3-vector.
pub fn field(p: &ScenarioParams, m: i64) -> [f64; 3] {
    let m = m as f64;
    match p.kind {
        ScenarioKind::Superconducting => [0.0, 0.0, p.omega_s + p.a * m],
        ScenarioKind::QuantumDot => [p.omega, 0.0, p.delta + p.a_c * m],
    }
}

/// Qubit eigenbasis at one magnetization. `|↑_m⟩` is aligned with `B_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenFrame {
    pub m: i64,
    /// `ξ_m = |B_m|/2`.
    pub xi: f64,
    pub b_hat: [f64; 3],
    /// Half the polar angle of `b̂`: `|↑_m⟩ = cos χ |↑_z⟩ + e^{iφ} sin χ |↓_z⟩`.
    pub chi: f64,
    /// Azimuth of `b̂`.
    pub phi: f64,
}

impl EigenFrame {
    fn from_field(m: i64, b: [f64; 3]) -> Result<Self> {
        let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateField { m });
        }
        let b_hat = [b[0] / norm, b[1] / norm, b[2] / norm];
        let rho = b[0].hypot(b[1]);
        let theta = rho.atan2(b[2]);
        let phi = if rho == 0.0 { 0.0 } else { b[1].atan2(b[0]) };
        Ok(Self { m, xi: norm / 2.0, b_hat, chi: theta / 2.0, phi })
    }

    /// Frame fixed to the z-axis, used where the field vanishes.
    pub fn z_aligned(m: i64, bz: f64) -> Self {
        let (b_hat, chi) = if bz < 0.0 { ([0.0, 0.0, -1.0], PI / 2.0) } else { ([0.0, 0.0, 1.0], 0.0) };
        Self { m, xi: bz.abs() / 2.0, b_hat, chi, phi: 0.0 }
    }

    /// `|↑_m⟩` in the z-basis.
    pub fn up(&self) -> [Complex64; 2] {
        let (s, c) = self.chi.sin_cos();
        [Complex64::new(c, 0.0), Complex64::from_polar(s, self.phi)]
    }

    /// `|↓_m⟩` in the z-basis.
    pub fn down(&self) -> [Complex64; 2] {
        let (s, c) = self.chi.sin_cos();
        [-Complex64::from_polar(s, -self.phi), Complex64::new(c, 0.0)]
    }
}

pub fn eigenbasis(p: &ScenarioParams, m: i64) -> Result<EigenFrame> {
    EigenFrame::from_field(m, field(p, m))
}

/// Lorentzian bath spectral density `ϱ(ω) = 4 A_nc² γ / ((ω_B − ω)² + γ²)`.
pub fn spectral_density(p: &ScenarioParams, w: f64) -> f64 {
    let d = p.omega_b - w;
    4.0 * p.a_nc * p.a_nc * p.gamma / (d * d + p.gamma * p.gamma)
}

/// `Γ_m` in scaled form: `Γ_m / V_m` next to `ln V_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRate {
    pub per_volume: f64,
    pub log_volume: f64,
}

/// `Γ_m / V_m` without boundary handling; `frames` supply `m` and `m−1`.
fn rate_per_volume(p: &ScenarioParams, m: i64, lower: &EigenFrame, upper: &EigenFrame) -> f64 {
    let n = p.n as f64;
    let r = match p.kind {
        ScenarioKind::Superconducting => 0.5 + m as f64 / n,
        ScenarioKind::QuantumDot => 2.0 / 3.0 * p.s * (p.s + 1.0) + m as f64 / n,
    }
    .max(0.0);
    match p.kind {
        ScenarioKind::Superconducting => p.kappa * r,
        ScenarioKind::QuantumDot => {
            let detune = p.omega_b - upper.xi - lower.xi;
            let k = 8.0 * PI * p.a_nc * p.a_nc * p.gamma / (detune * detune + p.gamma * p.gamma);
            k * r * matrix_element_sq(upper, lower)
        }
    }
}

/// `|⟨↓_m| S_z |↑_{m−1}⟩|²` with `S_z = σ_z/2`.
pub fn matrix_element_sq(upper: &EigenFrame, lower: &EigenFrame) -> f64 {
    let d = upper.down();
    let u = lower.up();
    let amp = 0.5 * (d[0].conj() * u[0] - d[1].conj() * u[1]);
    amp.norm_sqr()
}

fn frame_or_fallback(p: &ScenarioParams, m: i64) -> EigenFrame {
    let b = field(p, m);
    eigenbasis(p, m).unwrap_or_else(|_| EigenFrame::z_aligned(m, b[2]))
}

/// `Γ_m` on `grid`; exactly zero at the lower grid edge, where the partner
/// bin `m−1` does not exist.
pub fn jump_rate(p: &ScenarioParams, grid: &MagnetizationGrid, m: i64) -> Result<ScaledRate> {
    grid.check(m)?;
    let log_volume = grid.log_volume(m);
    if m == grid.m_min {
        return Ok(ScaledRate { per_volume: 0.0, log_volume });
    }
    let per_volume = rate_per_volume(p, m, &frame_or_fallback(p, m - 1), &frame_or_fallback(p, m));
    Ok(ScaledRate { per_volume, log_volume })
}

/// A scenario bound to its grid, with frames and rates precomputed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub grid: Arc<MagnetizationGrid>,
    pub frames: Vec<EigenFrame>,
    /// `Γ_m / V_m` per bin; entry 0 (lower edge) is zero.
    pub gamma_over_v: Vec<f64>,
    /// Extra coherence decay `γ_m / V_m` per bin.
    pub dephasing: Vec<f64>,
}

impl Scenario {
    pub fn build(params: ScenarioParams) -> Result<Self> {
        params.validate()?;
        let n_eff = params.n_effective()?;
        let grid = MagnetizationGrid::new(n_eff, params.cutoff)?;
        if params.kind == ScenarioKind::Superconducting {
            for m in [grid.m_min, grid.m_max] {
                if field(&params, m)[2] <= 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "a",
                        reason: format!("ω_S + A m must stay positive on the grid (fails at m = {m})"),
                    });
                }
            }
        }
        let frames: Vec<EigenFrame> = grid.ms().map(|m| frame_or_fallback(&params, m)).collect();
        let mut gamma_over_v = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            gamma_over_v[i] = rate_per_volume(&params, grid.m_at(i), &frames[i - 1], &frames[i]);
        }
        let nn = (n_eff as f64).powi(2);
        let dephasing =
            grid.ms().map(|m| params.gamma_deph * (1.0 - 4.0 * (m as f64).powi(2) / nn)).collect();
        Ok(Self { params, grid: Arc::new(grid), frames, gamma_over_v, dephasing })
    }

    pub fn frame(&self, m: i64) -> &EigenFrame {
        &self.frames[self.grid.index(m)]
    }

    /// `Γ_{m+1}/V_{m+1}` for the block at bin `i` (zero at the top edge).
    #[inline]
    pub(crate) fn block_rate(&self, i: usize) -> f64 {
        self.gamma_over_v.get(i + 1).copied().unwrap_or(0.0)
    }

    pub fn validity_report(&self) -> ValidityReport {
        validity_report(&self.params, self)
    }
}

/// Dimensionless Markov and secular criteria plus the average flip rate.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    pub applicable: bool,
    /// `N A_nc² / γ²`.
    pub markov: f64,
    pub markov_ok: bool,
    /// `A_nc² N / (4 γ Ω)`.
    pub secular: f64,
    pub secular_ok: bool,
    /// `(1/(2sN)) Σ_m Γ_m / V_m` in s⁻¹ (scaled form; the unscaled sum overflows).
    pub gamma_avg: f64,
    pub note: String,
}

impl ValidityReport {
    pub fn passes(&self) -> bool {
        self.markov_ok && self.secular_ok
    }
}

pub fn validity_report(p: &ScenarioParams, scenario: &Scenario) -> ValidityReport {
    let n = p.n as f64;
    let sum: f64 = scenario.gamma_over_v.iter().sum();
    let gamma_avg = sum / (2.0 * p.s * n);
    match p.kind {
        ScenarioKind::Superconducting => ValidityReport {
            applicable: false,
            markov: 0.0,
            markov_ok: true,
            secular: 0.0,
            secular_ok: true,
            gamma_avg,
            note: "not applicable: superconducting scenario is weak-coupling by construction (κ ≪ ω_S)".into(),
        },
        ScenarioKind::QuantumDot => {
            let a2 = p.a_nc * p.a_nc;
            let markov = n * a2 / (p.gamma * p.gamma);
            let secular = if p.omega > 0.0 { a2 * n / (4.0 * p.gamma * p.omega) } else { f64::INFINITY };
            ValidityReport {
                applicable: true,
                markov,
                markov_ok: markov < 1.0,
                secular,
                secular_ok: secular < 1.0,
                gamma_avg,
                note: String::new(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc() -> ScenarioParams {
        ScenarioParams::superconducting(1.0, 1e-4, 1e-5, 1e-3, 1000)
    }

    #[test]
    fn fields() {
        assert_eq!(field(&sc(), 0), [0.0, 0.0, 1.0]);
        let mut qd = ScenarioParams::gaas_dot();
        assert_eq!(field(&qd, 0), [qd.omega, 0.0, 0.0]);
        qd.delta = 3.0 * 0.13 * 2.0 * PI * 1e6;
        assert!(field(&qd, 3)[2].abs() < 1e-6);
    }

    #[test]
    fn sc_frames_are_z() {
        let s = Scenario::build(sc()).unwrap();
        assert!(s.frames.iter().all(|f| f.chi == 0.0 && f.b_hat == [0.0, 0.0, 1.0]));
        let f = s.frame(100);
        assert!((f.xi - (1.0 + 1e-2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn qd_frame_at_resonance_is_x() {
        let p = ScenarioParams::gaas_dot();
        let f = eigenbasis(&p, 0).unwrap();
        assert!((f.xi - p.omega / 2.0).abs() < 1e-6);
        let u = f.up();
        let d = f.down();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((u[0].re - r).abs() < 1e-15 && (u[1].re - r).abs() < 1e-15);
        assert!((d[0].re + r).abs() < 1e-15 && (d[1].re - r).abs() < 1e-15);
    }

    #[test]
    fn degenerate_field_errors() {
        let mut p = ScenarioParams::gaas_dot();
        p.omega = 0.0;
        assert!(matches!(eigenbasis(&p, 0), Err(Error::DegenerateField { m: 0 })));
    }

    #[test]
    fn spectral_density_shape() {
        let p = ScenarioParams::gaas_dot();
        let peak = 4.0 * p.a_nc * p.a_nc / p.gamma;
        assert!((spectral_density(&p, p.omega_b) / peak - 1.0).abs() < 1e-14);
        assert!((spectral_density(&p, p.omega_b + p.gamma) / peak - 0.5).abs() < 1e-14);
        assert!((spectral_density(&p, p.omega_b - p.gamma) / peak - 0.5).abs() < 1e-14);
        let mut prev = peak;
        for k in 1..50 {
            let v = spectral_density(&p, p.omega_b + k as f64 * p.gamma);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < peak * 1e-3);
    }

    #[test]
    fn sc_rates() {
        let p = sc();
        let s = Scenario::build(p.clone()).unwrap();
        let g = &s.grid;
        assert_eq!(jump_rate(&p, g, -500).unwrap().per_volume, 0.0);
        let r0 = jump_rate(&p, g, 0).unwrap();
        assert!((r0.per_volume - p.kappa / 2.0).abs() < 1e-20);
        assert_eq!(r0.log_volume, g.log_volume(0));
        assert!(jump_rate(&p, g, 501).is_err());
        // the physical lower boundary rate vanishes by formula as well
        assert_eq!(s.gamma_over_v[0], 0.0);
        assert!((s.gamma_over_v[1] - p.kappa / 1000.0).abs() < 1e-20);
    }

    #[test]
    fn validity_table_values() {
        let s = Scenario::build(ScenarioParams::gaas_dot()).unwrap();
        let v = s.validity_report();
        assert!(v.markov_ok && v.secular_ok, "{v:?}");
        let mut p = ScenarioParams::gaas_dot();
        p.a_nc *= 100.0;
        let v = Scenario::build(p).unwrap().validity_report();
        assert!(!v.markov_ok);
    }

    #[test]
    fn sc_rejects_negative_field() {
        let p = ScenarioParams::superconducting(1.0, 0.01, 1e-5, 0.0, 1000);
        assert!(Scenario::build(p).is_err());
    }
}
