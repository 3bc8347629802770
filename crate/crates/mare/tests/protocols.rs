//! Preparation families, schedules and the cycle loop.

use mare::engine::Duration;
use mare::grid::{log_sum_exp, MagnetizationGrid};
use mare::observables::{conserved_m, marginal, moments};
use mare::protocols::{
    bloch_field, prepare, run_cycles, run_cycles_with_snapshots, tau_value, up_fractions, Acceleration,
    PreparationFamily, ProtocolSpec, RecordStride, TauSchedule,
};
use mare::scenario::{Scenario, ScenarioParams};
use proptest::prelude::*;

fn sc(n: u64, beta: f64) -> Scenario {
    Scenario::build(ScenarioParams::superconducting(1.0, 0.1 / n as f64, 1e-5, beta, n)).unwrap()
}

fn normalized(logs: Vec<f64>) -> Vec<f64> {
    let z = log_sum_exp(&logs);
    logs.into_iter().map(|l| (l - z).exp()).collect()
}

fn thermal(s: &Scenario) -> Vec<f64> {
    let bw = s.params.beta * s.params.omega_s;
    normalized(s.grid.ms().zip(&s.grid.log_volumes).map(|(m, lv)| lv - bw * m as f64).collect())
}

fn gaussian(g: &MagnetizationGrid, mu: f64, sigma: f64) -> Vec<f64> {
    normalized(g.ms().map(|m| -((m as f64 - mu) / sigma).powi(2) / 2.0).collect())
}

fn small_dot() -> Scenario {
    let mut p = ScenarioParams::gaas_dot();
    p.cutoff = Some(150);
    Scenario::build(p).unwrap()
}

#[test]
fn family_bloch_vectors() {
    let s = sc(1000, 0.0);
    let up = bloch_field(&PreparationFamily::UpZ, &s);
    assert!(up.iter().all(|r| *r == [0.0, 0.0, 1.0]));
    let th = bloch_field(&PreparationFamily::ThetaCorrelated, &s);
    assert_eq!(th[s.grid.index(5)], [0.0, 0.0, -1.0]);
    assert_eq!(th[s.grid.index(-5)], [0.0, 0.0, 1.0]);
    assert_eq!(th[s.grid.index(0)], [0.0, 0.0, 0.0]);
    let lin = bloch_field(&PreparationFamily::RamseyLinear { alpha: 0.3, phi: 0.1 }, &s);
    assert!(lin.iter().all(|r| ((r[0] * r[0] + r[2] * r[2]).sqrt() - 1.0).abs() < 1e-15));
}

#[test]
fn sensing_angle_crosses_quarter_turn_near_25_pi() {
    let s = small_dot();
    let tau = 1.0 / (100.0 * s.params.a_c.abs());
    let r = bloch_field(&PreparationFamily::RamseySensing { tau }, &s);
    // 2|A_c| m τ = π/2 at m = 25π ≈ 78.54: the z-component changes sign between 78 and 79.
    for sign in [1i64, -1] {
        let a = r[s.grid.index(78 * sign)];
        let b = r[s.grid.index(79 * sign)];
        assert!(a[2] > 0.0 && b[2] < 0.0, "{a:?} {b:?}");
        assert!(a[2] < 0.02 && b[2] > -0.02);
    }
}

#[test]
fn preparation_examples() {
    let s = sc(100, 0.0);
    let p = thermal(&s);
    let st = prepare(&p, &PreparationFamily::UpZ, &s).unwrap();
    for (i, &x) in p.iter().enumerate() {
        assert_eq!((st.p_up(i), st.p_down(i), st.q[i].norm()), (x, 0.0, 0.0));
    }
    let st = prepare(&p, &PreparationFamily::ThetaCorrelated, &s).unwrap();
    let i0 = s.grid.index(0);
    assert_eq!((st.p_up(i0), st.p_down(i0), st.q[i0].norm()), (p[i0] / 2.0, p[i0] / 2.0, 0.0));

    let d = small_dot();
    let p = gaussian(&d.grid, 0.0, 30.0);
    let st = prepare(&p, &PreparationFamily::UpZ, &d).unwrap();
    let i0 = d.grid.index(0);
    assert!((st.p_up(i0) - p[i0] / 2.0).abs() < 1e-16);
    assert!((st.p_down(i0) - p[i0] / 2.0).abs() < 1e-16);
    assert!((st.q[i0].norm() - p[i0] / 2.0).abs() < 1e-16);
}

#[test]
fn preparation_rejects_unnormalized_input() {
    let s = sc(100, 0.0);
    let mut p = thermal(&s);
    p[3] += 1e-6;
    assert!(prepare(&p, &PreparationFamily::UpZ, &s).is_err());
    p[3] = -1e-3;
    assert!(prepare(&p, &PreparationFamily::UpZ, &s).is_err());
    assert!(prepare(&p[1..], &PreparationFamily::UpZ, &s).is_err());
}

#[test]
fn conserved_m_after_up_z_preparation() {
    let s = sc(1000, 0.001);
    let p = thermal(&s);
    let (mu, _) = moments(&s.grid, &p);
    let st = prepare(&p, &PreparationFamily::UpZ, &s).unwrap();
    assert!((conserved_m(&st) - (mu + 0.5)).abs() < 1e-12);
}

#[test]
fn tau_schedule_examples() {
    let c = 2.0 * std::f64::consts::PI * 0.13e6;
    let sch = TauSchedule { start: 0.025 / c, end: 0.1 / c, steps: 100 };
    assert!((tau_value(&sch, 0).unwrap() - 0.025 / c).abs() < 1e-24);
    assert!((tau_value(&sch, 99).unwrap() - 0.1 / c).abs() < 1e-22);
    assert_eq!(tau_value(&sch, 100).unwrap(), tau_value(&sch, 0).unwrap());
    assert!(tau_value(&TauSchedule { start: 1.0, end: 2.0, steps: 0 }, 3).is_err());
}

#[test]
fn zero_repetitions_return_the_initial_distribution() {
    let s = sc(1000, 0.001);
    let p = thermal(&s);
    let out = run_cycles_with_snapshots(&p, &ProtocolSpec::new(PreparationFamily::DownZ, Duration::Infinite, 0), &s, &[0])
        .unwrap();
    assert_eq!(out.final_p, p);
    assert_eq!(out.snapshots, vec![(0, p.clone())]);
    assert_eq!(out.series.len(), 1);
}

#[test]
fn cooling_and_heating_are_monotone() {
    let s = sc(1000, 0.001);
    let p = thermal(&s);
    for (family, sign) in [(PreparationFamily::DownZ, -1.0), (PreparationFamily::UpZ, 1.0)] {
        let mut spec = ProtocolSpec::new(family, Duration::Finite(3e4), 60);
        spec.record_every = RecordStride::Every(1);
        let out = run_cycles(&p, &spec, &s).unwrap();
        assert_eq!(out.series.len(), 61);
        for w in out.series.windows(2) {
            let step = w[1].mean_m - w[0].mean_m;
            assert!(sign * step >= -1e-12, "{family:?}: step {step}");
            assert!(step.abs() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn power_mode_matches_direct_stepping() {
    let s = small_dot();
    let c = s.params.a_c.abs();
    let mut spec = ProtocolSpec::new(PreparationFamily::RamseySensing { tau: 0.0 }, Duration::Finite(1e4 / c), 400);
    spec.tau_schedule = Some(TauSchedule { start: 0.025 / c, end: 0.1 / c, steps: 4 });
    let p = normalized(s.grid.log_volumes.clone());
    spec.acceleration = Acceleration::Direct;
    let direct = run_cycles(&p, &spec, &s).unwrap();
    spec.acceleration = Acceleration::Power;
    let power = run_cycles(&p, &spec, &s).unwrap();
    assert_eq!(power.mode, Acceleration::Power);
    let dev = direct.final_p.iter().zip(&power.final_p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-12, "{dev}");
    // Power mode records only at whole schedule periods.
    let cycles: Vec<u64> = power.series.iter().map(|r| r.cycle).collect();
    assert_eq!(cycles, vec![0, 4, 8, 16, 32, 64, 128, 256, 400]);
    for b in &power.series {
        let a = direct.series.iter().find(|a| a.cycle == b.cycle).expect("direct records every power record");
        assert!((a.var_m - b.var_m).abs() < 1e-9 && (a.s_obs - b.s_obs).abs() < 1e-9, "cycle {}", b.cycle);
    }
}

#[test]
fn validity_gate_and_override() {
    let mut p = ScenarioParams::gaas_dot();
    p.cutoff = Some(50);
    p.a_nc *= 100.0;
    let s = Scenario::build(p).unwrap();
    let init = normalized(s.grid.log_volumes.clone());
    let mut spec = ProtocolSpec::new(PreparationFamily::UpZ, Duration::Finite(1e-6), 3);
    assert!(run_cycles(&init, &spec, &s).is_err());
    spec.ignore_validity = true;
    assert!(run_cycles(&init, &spec, &s).is_ok());
}

#[test]
fn invalid_specs_are_rejected() {
    let s = sc(100, 0.0);
    let p = thermal(&s);
    let mut spec = ProtocolSpec::new(PreparationFamily::UpZ, Duration::Finite(1.0), 10);
    spec.tau_schedule = Some(TauSchedule { start: 1.0, end: 2.0, steps: 5 });
    assert!(run_cycles(&p, &spec, &s).is_err());
    let mut spec = ProtocolSpec::new(PreparationFamily::RamseySensing { tau: 1.0 }, Duration::Finite(1.0), 10);
    spec.tau_schedule = Some(TauSchedule { start: 1.0, end: 2.0, steps: 3 });
    assert!(run_cycles(&p, &spec, &s).is_err());
    let spec = ProtocolSpec::new(PreparationFamily::UpZ, Duration::Finite(-1.0), 10);
    assert!(run_cycles(&p, &spec, &s).is_err());
    let spec = ProtocolSpec::new(PreparationFamily::UpZ, Duration::Finite(1.0), 10);
    assert!(run_cycles_with_snapshots(&p, &spec, &s, &[11]).is_err());
}

#[test]
fn runs_are_deterministic() {
    let s = small_dot();
    let p = normalized(s.grid.log_volumes.clone());
    let spec = ProtocolSpec::new(PreparationFamily::ThetaCorrelated, Duration::Finite(1e4 / s.params.a_c.abs()), 50);
    let a = run_cycles(&p, &spec, &s).unwrap();
    let b = run_cycles(&p, &spec, &s).unwrap();
    assert_eq!(a.final_p, b.final_p);
    assert_eq!(a.series, b.series);
}

fn family() -> impl Strategy<Value = PreparationFamily> {
    prop_oneof![
        Just(PreparationFamily::UpZ),
        Just(PreparationFamily::DownZ),
        Just(PreparationFamily::ThetaCorrelated),
        (0.0f64..1.0, -3.2f64..3.2).prop_map(|(alpha, phi)| PreparationFamily::RamseyLinear { alpha, phi }),
        (0.0f64..1e3).prop_map(|tau| PreparationFamily::RamseySensing { tau }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_cycle_moves_the_mean_by_at_most_one(f in family(), mu in -100.0f64..100.0, sigma in 1.0f64..40.0, t in 0.0f64..1e6) {
        let s = sc(1000, 0.0);
        let p = gaussian(&s.grid, mu, sigma);
        let out = run_cycles(&p, &ProtocolSpec::new(f, Duration::Finite(t), 1), &s).unwrap();
        let (before, _) = moments(&s.grid, &p);
        let (after, _) = moments(&s.grid, &out.final_p);
        prop_assert!((after - before).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn preparation_preserves_the_marginal(f in family(), mu in -50.0f64..50.0, sigma in 0.5f64..60.0) {
        let s = sc(1000, 0.0);
        let p = gaussian(&s.grid, mu, sigma);
        let st = prepare(&p, &f, &s).unwrap();
        let back = marginal(&st);
        for (a, b) in back.iter().zip(&p) {
            prop_assert!((a - b).abs() <= 1e-15 * b);
        }
        let ((m1, v1), (m0, v0)) = (moments(&s.grid, &back), moments(&s.grid, &p));
        prop_assert!((m1 - m0).abs() < 1e-12 && (v1 - v0).abs() < 1e-12 * v0);
        let fr = up_fractions(&bloch_field(&f, &s), &s);
        prop_assert!(fr.iter().all(|x| (0.0..=1.0).contains(x)));
        for (r, x) in bloch_field(&f, &s).iter().zip(&fr) {
            let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            prop_assert!(norm <= 1.0 + 1e-15 && x.is_finite());
        }
    }
}
