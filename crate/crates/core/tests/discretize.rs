use hamport::discretize::{
    discrete_generator_spectrum, discretize_closed_loop, resolved_modes, verify_semidiscrete_balance, Scheme,
};
use hamport::models::{controller_library, unit_string, unit_timoshenko, ControllerParams, CONTROLLER_NAMES};
use hamport::Error;
use nalgebra::DVector;

#[test]
fn balance_identity_holds_for_every_library_controller() {
    for (sys, k) in [(unit_string::<f64>(), 1), (unit_timoshenko::<f64>(), 2)] {
        for name in CONTROLLER_NAMES {
            let c = controller_library(name, &ControllerParams::default(), k).unwrap();
            let model = discretize_closed_loop(&sys, Some(&c), 60, Scheme::default()).unwrap();
            let chk = verify_semidiscrete_balance(&model, 20, 1);
            assert!(chk.boundary_residual < 1e-10, "{name}: {chk:?}");
            assert!(chk.homogeneous_rate <= 1e-10, "{name}: {chk:?}");
        }
    }
}

#[test]
fn detached_string_frequencies() {
    let model = discretize_closed_loop(&unit_string::<f64>(), None, 200, Scheme::default()).unwrap();
    let spec = discrete_generator_spectrum(&model).unwrap();
    assert!(spec.abscissa() <= 1e-10);
    let modes = resolved_modes(&model, &spec, 5, 0.5).unwrap();
    assert_eq!(modes.len(), 5);
    for (j, m) in modes.iter().enumerate() {
        let exact = (2.0 * j as f64 + 1.0) * std::f64::consts::FRAC_PI_2;
        assert!((m.eigenvalue.im.abs() - exact).abs() < 0.01 * exact, "{j}: {}", m.eigenvalue);
    }
}

#[test]
fn closed_loop_is_dissipative_and_linear_at_rest() {
    let sys = unit_string::<f64>();
    let c = controller_library("linear_pd", &ControllerParams::default(), 1).unwrap();
    for n in [50, 100] {
        let model = discretize_closed_loop(&sys, Some(&c), n, Scheme::default()).unwrap();
        let spec = discrete_generator_spectrum(&model).unwrap();
        assert!(spec.abscissa() < 0.0, "n={n}: {}", spec.abscissa());
        assert_eq!(model.rhs(&DVector::zeros(model.dim()), &DVector::zeros(1)).norm(), 0.0);
    }
}

#[test]
fn coarse_grids_are_rejected() {
    let r = discretize_closed_loop(&unit_string::<f64>(), None, 8, Scheme::default());
    assert!(matches!(r, Err(Error::Resolution { nodes: 8, .. })));
}

#[test]
fn port_count_must_match_controller() {
    let c = controller_library::<f64>("linear_pd", &ControllerParams::default(), 2).unwrap();
    assert!(discretize_closed_loop(&unit_string(), Some(&c), 40, Scheme::default()).is_err());
}
