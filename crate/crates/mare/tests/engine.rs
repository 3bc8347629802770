//! Analytic propagator against a dense matrix exponential and the RK4 oracle,
//! plus the structural properties of the block decomposition.

use std::sync::Arc;

use mare::engine::{build_propagator, evolve, ode_oracle, oracle_steps, BlockKernel, Duration, JointState};
use mare::observables::{conserved_distribution, conserved_m};
use mare::scenario::{jump_rate, Scenario, ScenarioParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn small_sc() -> Scenario {
    Scenario::build(ScenarioParams::superconducting(1.0, 0.02, 0.3, 0.0, 8)).unwrap()
}

fn random_state(s: &Scenario, seed: u64) -> JointState {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = s.grid.len();
    let mut up: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let mut dn: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let z: f64 = up.iter().chain(&dn).sum();
    up.iter_mut().chain(dn.iter_mut()).for_each(|x| *x /= z);
    let q: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar((up[i] * dn[i]).sqrt() * rng.gen::<f64>(), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    JointState::from_parts(s.grid.clone(), &up, &dn, &q).unwrap()
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Full population generator in the ordering `[p↑_0.., p↓_0..]`, assembled
/// from `Γ_m` and exact binomial volumes.
fn generator(s: &Scenario) -> DMatrix<f64> {
    let g = &s.grid;
    let n = g.len();
    let half = g.n_effective / 2;
    let vol = |m: i64| binomial(g.n_effective, (half as i64 + m) as u64);
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n - 1 {
        let m = g.m_at(i);
        // Γ_{m+1}, restored from its scaled form.
        let gamma = jump_rate(&s.params, g, m + 1).unwrap().per_volume * vol(m + 1);
        let (up, dn) = (i, n + i + 1);
        l[(up, up)] -= gamma / vol(m);
        l[(dn, up)] += gamma / vol(m);
        l[(dn, dn)] -= gamma / vol(m + 1);
        l[(up, dn)] += gamma / vol(m + 1);
    }
    l
}

fn as_vector(st: &JointState) -> Vec<f64> {
    st.p_up_vec().into_iter().chain(st.p_down_vec()).collect()
}

#[test]
fn propagator_matches_dense_matrix_exponential() {
    let s = small_sc();
    let st = random_state(&s, 1);
    let i0 = s.grid.index(0);
    let gamma_bar = s.gamma_over_v[i0 + 1] * (1.0 + s.grid.volume_ratio(0).unwrap());
    let t = 3.0 / gamma_bar;
    let expm = (generator(&s) * t).exp();
    let dense = expm * DMatrix::from_column_slice(2 * s.grid.len(), 1, &as_vector(&st));
    let analytic = as_vector(&evolve(&st, &build_propagator(&s, Duration::Finite(t)).unwrap()).unwrap());
    for (a, b) in analytic.iter().zip(dense.iter()) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn infinite_time_is_limit_of_dense_exponential() {
    let s = small_sc();
    let st = random_state(&s, 2);
    let dense = (generator(&s) * 1e4).exp() * DMatrix::from_column_slice(2 * s.grid.len(), 1, &as_vector(&st));
    let analytic = as_vector(&evolve(&st, &build_propagator(&s, Duration::Infinite).unwrap()).unwrap());
    for (a, b) in analytic.iter().zip(dense.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn propagator_matches_ode_oracle() {
    let s = small_sc();
    let t = 1.0 / s.params.kappa;
    for seed in 0..10 {
        let st = random_state(&s, seed);
        let a = evolve(&st, &build_propagator(&s, Duration::Finite(t)).unwrap()).unwrap();
        let b = ode_oracle(&s, &st, t, oracle_steps(&s, t)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-8, "seed {seed}: {}", a.max_abs_diff(&b));
    }
}

#[test]
fn ode_oracle_converges_under_step_doubling() {
    let s = small_sc();
    let st = random_state(&s, 5);
    let t = 2.0 / s.params.kappa;
    let exact = evolve(&st, &build_propagator(&s, Duration::Finite(t)).unwrap()).unwrap();
    let e1 = ode_oracle(&s, &st, t, 1000).unwrap().max_abs_diff(&exact);
    let e2 = ode_oracle(&s, &st, t, 2000).unwrap().max_abs_diff(&exact);
    assert!(e2 <= e1);
    assert!(e2 < 1e-10);
}

#[test]
fn ode_oracle_rejects_bad_requests() {
    let s = Scenario::build(ScenarioParams::superconducting(1.0, 1e-4, 1e-5, 0.0, 1000)).unwrap();
    let st = JointState::zeros(s.grid.clone());
    assert!(ode_oracle(&s, &st, 1.0, 1000).is_err());
    let small = small_sc();
    let st = JointState::zeros(small.grid.clone());
    assert!(ode_oracle(&small, &st, 1.0, 10).is_err());
}

#[test]
fn quantum_dot_propagator_matches_ode_oracle() {
    let mut p = ScenarioParams::gaas_dot();
    p.n = 40;
    p.s = 0.5;
    p.cutoff = None;
    p.a_c = p.omega_b / 15.0;
    p.a_nc = 0.05 * p.omega_b;
    p.gamma_deph = 1e5;
    let s = Scenario::build(p).unwrap();
    let rate = s.gamma_over_v.iter().cloned().fold(0.0, f64::max);
    let t = 2.0 / rate;
    let st = random_state(&s, 9);
    let a = evolve(&st, &build_propagator(&s, Duration::Finite(t)).unwrap()).unwrap();
    let b = ode_oracle(&s, &st, t, oracle_steps(&s, t).max(20_000)).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-8, "{}", a.max_abs_diff(&b));
}

#[test]
fn zero_duration_is_bitwise_identity() {
    let s = small_sc();
    let st = random_state(&s, 3);
    let out = evolve(&st, &build_propagator(&s, Duration::Finite(0.0)).unwrap()).unwrap();
    assert_eq!(out.pops, st.pops);
    assert_eq!(out.q, st.q);
}

#[test]
fn negative_duration_and_grid_mismatch_are_errors() {
    let s = small_sc();
    assert!(build_propagator(&s, Duration::Finite(-1.0)).is_err());
    assert!(build_propagator(&s, Duration::Finite(f64::NAN)).is_err());
    let other = Scenario::build(ScenarioParams::superconducting(1.0, 0.02, 0.3, 0.0, 10)).unwrap();
    let st = JointState::zeros(other.grid.clone());
    assert!(evolve(&st, &build_propagator(&s, Duration::Infinite).unwrap()).is_err());
}

#[test]
fn coherence_modulus_decays_at_block_rate() {
    let mut p = ScenarioParams::superconducting(1.0, 0.02, 0.3, 0.0, 8);
    p.gamma_deph = 0.1;
    let s = Scenario::build(p).unwrap();
    let st = random_state(&s, 4);
    let t = 1.7;
    let out = evolve(&st, &build_propagator(&s, Duration::Finite(t)).unwrap()).unwrap();
    let g = &s.grid;
    for i in 0..g.len() {
        let m = g.m_at(i);
        let down_out = if i > 0 { s.gamma_over_v[i] } else { 0.0 };
        let up_out = if i + 1 < g.len() { s.gamma_over_v[i + 1] * g.volume_ratio(m).unwrap() } else { 0.0 };
        let decay = 0.5 * (down_out + up_out) + s.dephasing[i];
        let expect = st.q[i].norm() * (-decay * t).exp();
        assert!((out.q[i].norm() - expect).abs() < 1e-14);
        let phase = (out.q[i] / st.q[i]).arg();
        let want = Complex64::from_polar(1.0, -2.0 * s.frames[i].xi * t).arg();
        assert!((phase - want).abs() < 1e-12);
    }
}

#[test]
fn boundary_bins_behave() {
    let s = small_sc();
    let n = s.grid.len();
    // p↓ at the bottom and p↑ at the top have no partner.
    let mut up = vec![0.0; n];
    let mut dn = vec![0.0; n];
    dn[0] = 0.5;
    up[n - 1] = 0.5;
    let st = JointState::from_parts(s.grid.clone(), &up, &dn, &vec![Complex64::new(0.0, 0.0); n]).unwrap();
    let out = evolve(&st, &build_propagator(&s, Duration::Infinite).unwrap()).unwrap();
    assert_eq!(out.pops, st.pops);
}

#[test]
fn steady_state_ratio_is_volume_ratio() {
    let s = Scenario::build(ScenarioParams::superconducting(1.0, 1e-4, 1e-5, 0.0, 1000)).unwrap();
    let st = random_state(&s, 8);
    let out = evolve(&st, &build_propagator(&s, Duration::Infinite).unwrap()).unwrap();
    for i in 0..s.grid.len() - 1 {
        let (u, d) = (out.p_up(i), out.p_down(i + 1));
        if u > 1e-30 && d > 1e-30 {
            let want = s.grid.volume_ratio(s.grid.m_at(i)).unwrap();
            assert!(((d / u) - want).abs() <= 1e-10 * want);
        }
    }
}

#[test]
fn parallel_path_matches_sequential_kernels() {
    let s = Scenario::build(ScenarioParams::superconducting(1.0, 1e-6, 1e-5, 0.0, 40_000)).unwrap();
    let st = random_state(&s, 6);
    let prop = build_propagator(&s, Duration::Finite(3e4)).unwrap();
    assert!(prop.blocks.len() >= 16_384);
    let out = evolve(&st, &prop).unwrap();
    let n = s.grid.len();
    for i in 0..n - 1 {
        let (u, d) = prop.blocks[i].apply(st.p_up(i), st.p_down(i + 1));
        assert_eq!(out.p_up(i).to_bits(), u.to_bits());
        assert_eq!(out.p_down(i + 1).to_bits(), d.to_bits());
    }
}

#[test]
fn evolve_leaves_input_untouched_and_is_deterministic() {
    let s = small_sc();
    let st = random_state(&s, 7);
    let copy = st.clone();
    let prop = build_propagator(&s, Duration::Finite(2.0)).unwrap();
    let a = evolve(&st, &prop).unwrap();
    let b = evolve(&st, &prop).unwrap();
    assert_eq!(st.pops, copy.pops);
    assert_eq!(a.pops, b.pops);
}

#[test]
fn kernel_matrix_and_apply_agree() {
    let k = BlockKernel { om: 0.3, w: 0.6, wbar: 0.4 };
    let m = k.matrix();
    let (u, d) = k.apply(0.2, 0.7);
    assert!((u - (m[0][0] * 0.2 + m[0][1] * 0.7)).abs() < 1e-16);
    assert!((d - (m[1][0] * 0.2 + m[1][1] * 0.7)).abs() < 1e-16);
}

#[test]
fn grid_reuse_shares_the_same_arc() {
    let s = small_sc();
    let st = JointState::zeros(s.grid.clone());
    assert!(Arc::ptr_eq(&st.grid, &s.grid));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup_trace_and_conservation(seed in 0u64..10_000, t1 in 0.0f64..20.0, t2 in 0.0f64..20.0) {
        let s = small_sc();
        let st = random_state(&s, seed);
        let p1 = build_propagator(&s, Duration::Finite(t1)).unwrap();
        let p2 = build_propagator(&s, Duration::Finite(t2)).unwrap();
        let p12 = build_propagator(&s, Duration::Finite(t1 + t2)).unwrap();
        let two = evolve(&evolve(&st, &p1).unwrap(), &p2).unwrap();
        let one = evolve(&st, &p12).unwrap();
        prop_assert!(one.max_abs_diff(&two) < 1e-12);
        prop_assert!((one.trace() - st.trace()).abs() < 1e-14);
        prop_assert!(one.positivity_violation() == 0.0);
        prop_assert!((conserved_m(&one) - conserved_m(&st)).abs() < 1e-12);
        for (a, b) in conserved_distribution(&one).iter().zip(conserved_distribution(&st)) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }
}
