use hamport::conditions::{check_strict_damping, check_structure, check_surjectivity, estimate_quasi_constants};
use hamport::discretize::{discretize_closed_loop, Scheme};
use hamport::models::*;
use hamport::Error;
use std::f64::consts::PI;

fn string_model(rho: Profile<f64>, tension: Profile<f64>) -> MechanicalModel<f64> {
    MechanicalModel::String { rho, tension }
}

fn beam_model(k: Profile<f64>) -> MechanicalModel<f64> {
    let c = || Profile::constant(1.0);
    MechanicalModel::Timoshenko {
        rho: c(),
        ei: c(),
        i_r: c(),
        k_shear: k,
    }
}

const TIMES: [f64; 3] = [0.0, 0.3, 1.1];

#[test]
fn string_polynomial_field_is_exact() {
    let rho = Profile::from_fn(1.0, 2.0, |z: f64| 1.0 + z * z);
    let ten = Profile::from_fn(1.0, 2.0, |z: f64| 1.0 + z);
    let sys = vibrating_string(rho.clone(), ten.clone(), 0.0, 1.0).unwrap();
    let field = ManufacturedField::new(|t, z| t * t * z.powi(3) + t * z - 2.0 * z * z, |_, _| 0.0);
    let r = pde_residual_check(&sys, &string_model(rho, ten), &field, &TIMES, 17, Differentiation::Exact).unwrap();
    assert!(r < 1e-10, "{r}");
}

#[test]
fn string_standing_wave_sampled_is_second_order() {
    let one = || Profile::constant(1.0);
    let sys = vibrating_string(one(), one(), 0.0, 1.0).unwrap();
    let field = ManufacturedField::new(|t: f64, z: f64| (PI * z).sin() * (PI * t).cos(), |_, _| 0.0);
    let exact = pde_residual_check(&sys, &string_model(one(), one()), &field, &TIMES, 17, Differentiation::Exact).unwrap();
    assert!(exact < 1e-9, "{exact}");
    let r = |h| pde_residual_check(&sys, &string_model(one(), one()), &field, &TIMES, 17, Differentiation::Sampled { h }).unwrap();
    let ratio = r(1e-2) / r(5e-3);
    assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
}

#[test]
fn constant_displacement_has_zero_residual() {
    let one = || Profile::constant(1.0);
    let sys = vibrating_string(one(), one(), 0.0, 1.0).unwrap();
    let field = ManufacturedField::new(|_, _| 3.0, |_, _| 0.0);
    let r = pde_residual_check(&sys, &string_model(one(), one()), &field, &TIMES, 9, Differentiation::Sampled { h: 1e-3 }).unwrap();
    assert_eq!(r, 0.0);
}

#[test]
fn beam_polynomial_fields_are_exact() {
    let sys = unit_timoshenko::<f64>();
    let field = ManufacturedField::new(|t, z| t * t * z * z + t * z.powi(3), |t, z| t.powi(3) * z - z * z * t);
    let r = pde_residual_check(&sys, &beam_model(Profile::constant(1.0)), &field, &TIMES, 17, Differentiation::Exact).unwrap();
    assert!(r < 1e-10, "{r}");
}

#[test]
fn beam_with_flipped_coupling_is_detected() {
    let mut sys = unit_timoshenko::<f64>();
    sys.p[0] = -sys.p[0].clone();
    let field = ManufacturedField::new(|t, z| t * t * z * z, |t, z| t * z);
    let r = pde_residual_check(&sys, &beam_model(Profile::constant(1.0)), &field, &TIMES, 17, Differentiation::Exact).unwrap();
    assert!(r > 1e-2, "{r}");
}

#[test]
fn beam_without_rotation_matches_string() {
    let k = 1e-6;
    let c = || Profile::constant(1.0);
    let beam = timoshenko_beam(c(), c(), c(), Profile::constant(k), 0.0, 1.0).unwrap();
    let string = vibrating_string(c(), Profile::constant(k), 0.0, 1.0).unwrap();
    let field = ManufacturedField::new(|t, z| t * t * z.powi(3) - z * t, |_, _| 0.0);
    let rb = pde_residual_check(&beam, &beam_model(Profile::constant(k)), &field, &TIMES, 17, Differentiation::Exact).unwrap();
    let rs = pde_residual_check(&string, &string_model(c(), Profile::constant(k)), &field, &TIMES, 17, Differentiation::Exact).unwrap();
    assert!(rb < 1e-10 && rs < 1e-10, "{rb} {rs}");
}

#[test]
fn nonpositive_coefficient_is_rejected() {
    let rho = Profile::from_fn(0.1, 1.0, |z: f64| z - 0.5);
    assert!(matches!(vibrating_string(rho, Profile::constant(1.0), 0.0, 1.0), Err(Error::Model(_))));
    let bad = Profile::constant(-1.0);
    let c = || Profile::constant(1.0);
    assert!(matches!(timoshenko_beam(c(), c(), bad, c(), 0.0, 1.0), Err(Error::Model(_))));
}

#[test]
fn every_preset_is_well_formed() {
    for name in PRESET_NAMES {
        let p = preset::<f64>(name, &ControllerParams::default()).unwrap();
        assert!(check_structure(&p.system).iter().all(|c| c.passed()), "{name}");
        assert!(check_surjectivity(&p.system).check.passed(), "{name}");
        assert!(discretize_closed_loop(&p.system, p.controller.as_ref(), p.n, Scheme::default()).is_ok());
    }
    assert!(matches!(preset::<f64>("membrane", &ControllerParams::default()), Err(Error::Spec(_))));
}

#[test]
fn library_regimes() {
    let params = ControllerParams::default();
    let lin = controller_library::<f64>("linear_pd", &params, 1).unwrap();
    let q = estimate_quasi_constants(&lin, 10.0, 1000, 1);
    assert!((q.c1_low - 0.5).abs() < 1e-3 && (q.c1_high - 0.5).abs() < 1e-3);
    let sat = controller_library::<f64>("saturating_damper_pd", &params, 1).unwrap();
    let s = check_strict_damping(&sat, &[1.0], 2000, 1, 10.0);
    assert!(s.c_low >= 0.5 - 1e-3 && s.c_high >= 0.5 - 1e-3);
    assert!(!estimate_quasi_constants(&sat, 10.0, 1000, 1).linear.passed());
    assert!(matches!(controller_library::<f64>("pid", &params, 1), Err(Error::Spec(_))));
}

#[test]
fn initial_family_is_seeded_and_respects_compatibility() {
    let p = preset::<f64>("string_linear_pd", &ControllerParams::default()).unwrap();
    let model = discretize_closed_loop(&p.system, p.controller.as_ref(), 50, Scheme::default()).unwrap();
    let a = p.initial.sample(&model, 4);
    assert_eq!(a, p.initial.sample(&model, 4));
    assert_ne!(a, p.initial.sample(&model, 5));
    let fam = InitialFamily { compatible: true, ..Default::default() };
    let x = fam.sample(&model, 4);
    assert_eq!(model.v2(&x).amax(), 0.0);
    // bump support lies inside the interval
    assert_eq!(x[0], 0.0);
    assert_eq!(x[model.nx() - 1], 0.0);
}
