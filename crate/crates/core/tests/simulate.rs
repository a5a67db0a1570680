use std::sync::Arc;

use hamport::discretize::{discretize_closed_loop, FiniteModel, Scheme};
use hamport::models::{controller_library, unit_string, ControllerParams, InitialFamily};
use hamport::phs::{Controller, FnPotential, LinearDamping};
use hamport::simulate::*;
use hamport::{Error, ModelF32};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;

fn string_model(controller: &str, n: usize) -> FiniteModel<f64> {
    let sys = unit_string::<f64>();
    let c = controller_library(controller, &ControllerParams::default(), 1).unwrap();
    discretize_closed_loop(&sys, Some(&c), n, Scheme::default()).unwrap()
}

fn sig(spec: SignalSpec) -> DisturbanceSignal<f64> {
    make_signal(&spec).unwrap()
}

#[test]
fn zero_data_give_zero_trajectory() {
    let m = string_model("quartic_pd", 30);
    let tr = simulate(&m, &DVector::zeros(m.dim()), &DisturbanceSignal::zero(1), 1.0, 0.05).into_result().unwrap();
    assert_eq!(tr.len(), 21);
    assert!(tr.states.iter().all(|x| x.amax() == 0.0));
    assert!(tr.energy.iter().all(|&e| e == 0.0));
    let one = step_implicit_midpoint(&m, &DVector::zeros(m.dim()), 0.0, 0.1, &DisturbanceSignal::zero(1)).unwrap();
    assert_eq!(one.amax(), 0.0);
}

#[test]
fn skew_system_conserves_norm() {
    // x' = J x with J skew in the unit-weight inner product
    let j = dmatrix![0.0, 2.0, -1.0; -2.0, 0.0, 0.5; 1.0, -0.5, 0.0];
    let m = FiniteModel::from_matrices(j, DMatrix::zeros(3, 1), DMatrix::zeros(1, 3), DVector::from_element(3, 1.0)).unwrap();
    let x0 = dvector![1.0, -0.3, 0.2];
    let tr = simulate(&m, &x0, &DisturbanceSignal::zero(1), 10.0, 0.05).into_result().unwrap();
    for w in tr.norm.windows(2) {
        let (a, b): (f64, f64) = (w[0], w[1]);
        assert!((b - a).abs() < 1e-12 * a);
    }
}

#[test]
fn decoupled_controller_rotates_with_second_order_phase_error() {
    let params = ControllerParams { b_c: 0.0, damping: 0.0, ..Default::default() };
    let c = controller_library::<f64>("linear_pd", &params, 1).unwrap();
    let m = discretize_closed_loop(&unit_string(), Some(&c), 20, Scheme::default()).unwrap();
    let mut x0 = DVector::zeros(m.dim());
    x0[m.nx()] = 1.0;
    let period = 2.0 * std::f64::consts::PI;
    let err = |steps: usize| {
        let dt = period / steps as f64;
        let tr = simulate(&m, &x0, &DisturbanceSignal::zero(1), period, dt).into_result().unwrap();
        (&tr.final_state - &x0).amax()
    };
    let (e1, e2) = (err(200), err(400));
    assert!(e1 < 1e-3);
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.1, "{order}");
}

#[test]
fn undisturbed_energy_never_increases() {
    let m = string_model("linear_pd", 60);
    let x0 = InitialFamily::default().sample(&m, 2);
    let tr = simulate(&m, &x0, &DisturbanceSignal::zero(1), 5.0, 0.01).into_result().unwrap();
    for w in tr.energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-15 * w[0]);
    }
}

#[test]
fn step_disturbance_respects_energy_budget() {
    let m = string_model("saturating_damper_pd", 60);
    let x0 = InitialFamily::default().sample(&m, 9);
    let d = sig(SignalSpec::TruncatedStep { amplitude: vec![1.5], duration: 3.0 });
    let tr = simulate(&m, &x0, &d, 6.0, 0.01).into_result().unwrap();
    for i in 0..tr.len() {
        assert!(tr.energy[i] <= tr.energy[0] + tr.d_norm_sq[i] / 4.0 + 1e-12);
    }
    assert!(tr.newton_iterations.iter().all(|&k| k <= 25));
}

#[test]
fn balance_residual_stays_at_roundoff() {
    for name in ["linear_pd", "quartic_pd", "saturating_damper_pd"] {
        let m = string_model(name, 40);
        let x0 = InitialFamily::default().sample(&m, 1);
        let d = sig(SignalSpec::ExpDecay { amplitude: vec![0.7], rate: 0.5 });
        let tr = simulate(&m, &x0, &d, 3.0, 0.01).into_result().unwrap();
        let worst = tr.balance_residual.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-12 * tr.energy[0].max(1.0), "{name} {worst}");
    }
}

#[test]
fn cocycle_property() {
    let m = string_model("quartic_pd", 40);
    let x0 = InitialFamily::default().sample(&m, 3);
    let d = sig(SignalSpec::TruncatedStep { amplitude: vec![0.4], duration: 1.5 });
    assert_eq!(cocycle_check(&m, &x0, &d, 0.0, 1.0, 1e-2).unwrap(), 0.0);
    let gap = cocycle_check(&m, &x0, &d, 1.0, 1.0, 1e-3).unwrap();
    assert!(gap < 1e-12, "{gap}");
    let noise = sig(SignalSpec::WindowedNoise { k: 1, amplitude: 0.3, dt: 1e-2, start: 0.0, end: 2.0, seed: 5 });
    let gap = cocycle_check(&m, &x0, &noise, 0.5, 1.0, 1e-2).unwrap();
    assert!(gap < 1e-12, "{gap}");
}

#[test]
fn cocycle_needs_aligned_times() {
    let m = string_model("linear_pd", 20);
    let x0 = DVector::zeros(m.dim());
    let r = cocycle_check(&m, &x0, &DisturbanceSignal::zero(1), 0.015, 1.0, 1e-2);
    assert!(matches!(r, Err(Error::Alignment(_))));
}

#[test]
fn truncation_does_not_change_the_past() {
    let m = string_model("saturating_damper_pd", 40);
    let x0 = InitialFamily::default().sample(&m, 4);
    let d = sig(SignalSpec::WindowedNoise { k: 1, amplitude: 0.5, dt: 1e-2, start: 0.0, end: 3.0, seed: 8 });
    let full = simulate(&m, &x0, &d, 3.0, 1e-2).into_result().unwrap();
    let cut = simulate(&m, &x0, &d.truncated(1.0), 3.0, 1e-2).into_result().unwrap();
    for i in 0..=100 {
        assert_eq!(full.states[i], cut.states[i]);
    }
    assert_ne!(full.final_state, cut.final_state);
}

#[test]
fn solution_map_is_continuous() {
    let m = string_model("quartic_pd", 40);
    let x0 = InitialFamily::default().sample(&m, 6);
    let dx = InitialFamily::default().sample(&m, 7);
    let d = sig(SignalSpec::TruncatedStep { amplitude: vec![0.5], duration: 1.0 });
    let dd = sig(SignalSpec::ExpDecay { amplitude: vec![1.0], rate: 1.0 });
    let base = simulate(&m, &x0, &d, 2.0, 1e-2).into_result().unwrap();
    let mut ratios = Vec::new();
    for eps in [1e-2, 1e-3] {
        let x1 = &x0 + &dx * eps;
        let tr = simulate(&m, &x1, &sum(&d, &dd, eps), 2.0, 1e-2).into_result().unwrap();
        let dist = (0..tr.len()).map(|i| m.norm(&(&tr.states[i] - &base.states[i]))).fold(0.0, f64::max);
        let size = m.norm(&(&dx * eps)) + eps * dd.norm_sq(2.0).sqrt();
        ratios.push(dist / size);
    }
    assert!(ratios.iter().all(|r| r.is_finite() && *r < 100.0), "{ratios:?}");
    assert!((ratios[0] / ratios[1] - 1.0).abs() < 0.5, "{ratios:?}");
}

/// `d + ε·e` as a table on the simulation grid midpoints.
fn sum(d: &DisturbanceSignal<f64>, e: &DisturbanceSignal<f64>, eps: f64) -> DisturbanceSignal<f64> {
    let dt = 5e-3;
    let values = (0..400).map(|i| {
        let t = (i as f64 + 0.5) * dt;
        (d.eval(t) + e.eval(t) * eps).iter().copied().collect()
    });
    make_signal(&SignalSpec::Tabulated { dt, values: values.collect() }).unwrap()
}

#[test]
fn step_halving_is_second_order() {
    let m = string_model("linear_pd", 60);
    let fam = InitialFamily { compatible: true, ..Default::default() };
    let x0 = fam.sample(&m, 2);
    let run = |dt: f64| simulate(&m, &x0, &DisturbanceSignal::zero(1), 1.0, dt).into_result().unwrap().final_state;
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let order = (m.norm(&(&a - &b)) / m.norm(&(&b - &c))).log2();
    assert!(order > 1.8, "{order}");
}

#[test]
fn bad_inputs_return_partial_trajectory() {
    let m = string_model("linear_pd", 20);
    let r = simulate(&m, &DVector::zeros(3), &DisturbanceSignal::zero(1), 1.0, 0.1);
    assert!(matches!(r.status, Err(Error::Input(_))));
    assert!(r.trajectory.is_empty());
    let mut x = DVector::zeros(m.dim());
    x[0] = f64::NAN;
    assert!(matches!(simulate(&m, &x, &DisturbanceSignal::zero(1), 1.0, 0.1).status, Err(Error::Input(_))));
    let r = simulate(&m, &DVector::zeros(m.dim()), &DisturbanceSignal::zero(2), 1.0, 0.1);
    assert!(matches!(r.status, Err(Error::Input(_))));
    let r = simulate(&m, &DVector::zeros(m.dim()), &DisturbanceSignal::zero(1), 1.0, 2.0);
    assert!(matches!(r.status, Err(Error::Input(_))));
}

#[test]
fn blow_up_is_a_step_failure_with_partial_trajectory() {
    // gradient turns non-finite beyond |v| = 0.5
    let pot = FnPotential::new(
        |v: &DVector<f64>| 0.5 * v.norm_squared(),
        |v: &DVector<f64>| if v.amax() > 0.5 { v * f64::NAN } else { v.clone() },
    );
    let c = Controller::new("edge", dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], Arc::new(pot), Arc::new(LinearDamping { d: dmatrix![0.0] })).unwrap();
    let m = discretize_closed_loop(&unit_string(), Some(&c), 20, Scheme::default()).unwrap();
    let mut x0 = DVector::zeros(m.dim());
    x0[m.nx() + 1] = 1.0;
    let r = simulate(&m, &x0, &DisturbanceSignal::zero(1), 10.0, 0.1);
    assert!(matches!(r.status, Err(Error::StepFailure { .. })), "{:?}", r.status);
    assert!(r.trajectory.len() > 1 && r.trajectory.len() < 101);
}

#[test]
fn single_precision_run() {
    let sys = unit_string::<f32>();
    let c = controller_library::<f32>("linear_pd", &ControllerParams::default(), 1).unwrap();
    let m: ModelF32 = discretize_closed_loop(&sys, Some(&c), 30, Scheme::default()).unwrap();
    let x0 = InitialFamily::default().sample(&m, 1);
    let tr = simulate(&m, &x0, &DisturbanceSignal::zero(1), 2.0f32, 0.01f32).into_result().unwrap();
    assert!(tr.energy[tr.len() - 1] < tr.energy[0]);
    assert!(tr.energy.iter().all(|e| e.is_finite()));
}

#[test]
fn state_stride_thins_stored_states() {
    let m = string_model("linear_pd", 20);
    let opts = SimOptions { state_stride: 10, ..Default::default() };
    let tr = simulate_with(&m, &DVector::zeros(m.dim()), &DisturbanceSignal::zero(1), 1.0, 0.01, &opts).into_result().unwrap();
    assert_eq!(tr.states.len(), 11);
    assert_eq!(tr.energy.len(), 101);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_closed_loop_superposes(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let m = string_model("linear_pd", 24);
        let fam = InitialFamily::default();
        let (x1, x2) = (fam.sample(&m, s1), fam.sample(&m, s2));
        let d1 = sig(SignalSpec::TruncatedStep { amplitude: vec![1.0], duration: 0.3 });
        let d2 = sig(SignalSpec::ExpDecay { amplitude: vec![1.0], rate: 2.0 });
        let run = |x: &DVector<f64>, d: &DisturbanceSignal<f64>| simulate(&m, x, d, 0.5, 0.05).into_result().unwrap().final_state;
        let lhs = run(&(&x1 * a + &x2 * b), &sum(&d1.scaled(a), &d2, b));
        let rhs = run(&(&x1 * a), &sum(&d1.scaled(a), &d1, 0.0)) + run(&(&x2 * b), &sum(&d2.scaled(b), &d2, 0.0));
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }
}

#[test]
fn step_averages_are_exact_and_norm_bounded() {
    let e = sig(SignalSpec::ExpDecay { amplitude: vec![2.0], rate: 0.5 });
    let avg = e.average(1.0, 3.0)[0];
    let exact = 2.0 * ((-0.5f64).exp() - (-1.5f64).exp()) / 0.5 / 2.0;
    assert!((avg - exact).abs() < 1e-14);
    let noise = sig(SignalSpec::WindowedNoise { k: 2, amplitude: 1.0, dt: 0.07, start: 0.1, end: 2.0, seed: 3 });
    let e2 = sig(SignalSpec::ExpDecay { amplitude: vec![2.0, -1.0], rate: 0.5 });
    let c = noise.clone().concat(e2.scaled(0.5).shifted(0.3), 1.3).truncated(2.5);
    for i in 0..60 {
        let (a, b) = (i as f64 * 0.05, (i + 1) as f64 * 0.05);
        for d in [&noise, &c] {
            let m = d.average(a, b);
            assert!(0.05 * m.norm_squared() <= d.norm_sq(b) - d.norm_sq(a) + 1e-14);
        }
    }
}
