use std::sync::Arc;

use hamport::phs::*;
use hamport::models::unit_string;
use hamport::Error;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn scalar_system(order: usize) -> PortHamiltonianSystem<f64> {
    // m = 1, k = 1: all trace rows handed out as boundary conditions and ports
    let p: Vec<DMatrix<f64>> = (0..=order)
        .map(|l| if l == order { dmatrix![1.0] } else { dmatrix![0.0] })
        .collect();
    let len = 2 * order;
    let row = |i: usize| DMatrix::from_fn(1, len, |_, j| if i == j { 1.0 } else { 0.0 });
    let w_b1 = DMatrix::from_fn(order - 1, len, |r, j| if j == r + 2 { 1.0 } else { 0.0 });
    PortHamiltonianSystem::new(0.0, 1.0, p, w_b1, row(0), row(1), EnergyDensity::constant(dmatrix![1.0])).unwrap()
}

fn pd_controller(k: f64, b: f64, s: f64) -> Controller<f64> {
    Controller::new(
        "pd",
        dmatrix![k],
        dmatrix![b],
        dmatrix![s],
        Arc::new(QuadraticQuartic { q: dmatrix![1.0], alpha: 0.0 }),
        Arc::new(LinearDamping { d: dmatrix![1.0] }),
    )
    .unwrap()
}

#[test]
fn energy_of_zero_state_vanishes() {
    let sys = unit_string::<f64>();
    let x = GridFunction::zeros(Grid::new(0.0, 1.0, 41).unwrap(), 2);
    assert_eq!(sys.energy(&x, Quadrature::Trapezoid).unwrap(), 0.0);
}

#[test]
fn energy_of_constant_field_with_diagonal_density() {
    let density = EnergyDensity::constant(dmatrix![2.0, 0.0; 0.0, 3.0]);
    let p = vec![DMatrix::zeros(2, 2), dmatrix![0.0, 1.0; 1.0, 0.0]];
    let row = |i: usize| DMatrix::from_fn(1, 4, |_, j| if i == j { 1.0 } else { 0.0 });
    let sys = PortHamiltonianSystem::new(0.0, 1.0, p, row(2), row(1), row(0), density).unwrap();
    let grid = Grid::new(0.0, 1.0, 11).unwrap();
    let x = GridFunction::sample(grid, 2, |_| dvector![1.0, 1.0]);
    let e: f64 = sys.energy(&x, Quadrature::Trapezoid).unwrap();
    assert!((e - 2.5).abs() < 1e-14, "{e}");
}

#[test]
fn string_energy_of_sine_converges_at_second_order() {
    let sys = unit_string::<f64>();
    let err = |n: usize| {
        let x = GridFunction::sample(Grid::new(0.0, 1.0, n).unwrap(), 2, |z| {
            dvector![(std::f64::consts::PI * z).sin(), 0.0]
        });
        (sys.energy(&x, Quadrature::Simpson).unwrap() - 0.25).abs()
    };
    assert!(err(101) < 1e-8);
    // trapezoid is exact for sin² on a uniform grid over a full period; use a shifted field
    let shifted = |n: usize| {
        let x = GridFunction::sample(Grid::new(0.0, 1.0, n).unwrap(), 2, |z: f64| dvector![z * z, 0.0]);
        (sys.energy(&x, Quadrature::Trapezoid).unwrap() - 0.1).abs()
    };
    let ratio = shifted(41) / shifted(81);
    assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
}

#[test]
fn energy_rejects_dimension_mismatch() {
    let sys = unit_string::<f64>();
    let x = GridFunction::zeros(Grid::new(0.0, 1.0, 21).unwrap(), 3);
    assert!(matches!(sys.energy(&x, Quadrature::Trapezoid), Err(Error::Input(_))));
}

#[test]
fn energy_within_density_bounds() {
    let density = EnergyDensity::from_fn(1, 0.5, 2.0, true, |z: f64| dmatrix![1.25 + 0.75 * (7.0 * z).sin()]);
    let sys = PortHamiltonianSystem::new(
        0.0,
        1.0,
        vec![dmatrix![0.0], dmatrix![1.0]],
        DMatrix::zeros(0, 2),
        dmatrix![1.0, 0.0],
        dmatrix![0.0, 1.0],
        density,
    )
    .unwrap();
    let grid = Grid::new(0.0, 1.0, 101).unwrap();
    let w = grid.trapezoid_weights();
    for s in 0..5 {
        let x = GridFunction::sample(grid.clone(), 1, |z: f64| dvector![(3.0 * z + s as f64).cos() * (1.0 + z)]);
        let l2: f64 = (0..101).map(|i| w[i] * x.values[(0, i)].powi(2)).sum();
        let e = sys.energy(&x, Quadrature::Trapezoid).unwrap();
        assert!(e >= 0.25 * l2 - 1e-14 && e <= 1.0 * l2 + 1e-14);
    }
}

#[test]
fn trace_of_constant_field() {
    let sys = unit_string::<f64>();
    let x = GridFunction::sample(Grid::new(0.0, 1.0, 9).unwrap(), 2, |_| dvector![3.0, -2.0]);
    let z = sys.boundary_trace(&x).unwrap().z;
    assert!((z - dvector![3.0, -2.0, 3.0, -2.0]).amax() < 1e-14);
}

#[test]
fn trace_of_linear_field() {
    let sys = scalar_system(1);
    let x = GridFunction::sample(Grid::new(0.0, 1.0, 9).unwrap(), 1, |z| dvector![z]);
    let z = sys.boundary_trace(&x).unwrap().z;
    assert!((z - dvector![1.0, 0.0]).amax() < 1e-14);
}

#[test]
fn second_order_trace_of_quadratic() {
    let sys = scalar_system(2);
    let x = GridFunction::sample(Grid::new(0.0, 1.0, 11).unwrap(), 1, |z| dvector![z * z]);
    let z = sys.boundary_trace(&x).unwrap().z;
    assert!((&z - dvector![1.0, 2.0, 0.0, 0.0]).amax() < 1e-12, "{z}");
}

#[test]
fn trace_needs_enough_nodes() {
    let sys = scalar_system(2);
    let x = GridFunction::zeros(Grid::new(0.0, 1.0, 5).unwrap(), 1);
    assert!(matches!(sys.boundary_trace(&x), Err(Error::Resolution { .. })));
}

#[test]
fn string_boundary_operators() {
    let sys = unit_string::<f64>();
    let bv = sys.apply_boundary_ops(&BoundaryTrace { z: dvector![1.0, 5.0, 0.0, 7.0] }).unwrap();
    assert_eq!((bv.u[0], bv.y[0], bv.bc_residual[0]), (5.0, 1.0, 0.0));
    let bv = sys.apply_boundary_ops(&BoundaryTrace { z: dvector![0.0, 0.0, 3.0, 0.0] }).unwrap();
    assert_eq!(bv.bc_residual[0], 3.0);
    let bv = sys.apply_boundary_ops(&BoundaryTrace { z: DVector::zeros(4) }).unwrap();
    assert_eq!(bv.u.amax() + bv.y.amax() + bv.bc_residual.amax(), 0.0);
}

#[test]
fn boundary_pipeline_is_linear() {
    let sys = unit_string::<f64>();
    let grid = Grid::new(0.0, 1.0, 33).unwrap();
    let f1 = GridFunction::sample(grid.clone(), 2, |z: f64| dvector![z.sin(), z * z]);
    let f2 = GridFunction::sample(grid.clone(), 2, |z: f64| dvector![(2.0 * z).cos(), 1.0 - z]);
    let (al, be) = (0.7, -1.3);
    let comb = GridFunction::new(grid, &f1.values * al + &f2.values * be).unwrap();
    let ev = |f: &GridFunction<f64>| {
        let bv = sys.apply_boundary_ops(&sys.boundary_trace(f).unwrap()).unwrap();
        (bv.u, bv.y, bv.bc_residual)
    };
    let (a, b, c) = (ev(&f1), ev(&f2), ev(&comb));
    assert!((&c.0 - (&a.0 * al + &b.0 * be)).amax() < 1e-12);
    assert!((&c.1 - (&a.1 * al + &b.1 * be)).amax() < 1e-12);
    assert!((&c.2 - (&a.2 * al + &b.2 * be)).amax() < 1e-12);
}

#[test]
fn controller_rhs_examples() {
    let c = pd_controller(2.0, 1.0, 1.0);
    let (a, b) = c.rhs(&dvector![0.0], &dvector![0.0], &dvector![0.0]).unwrap();
    assert_eq!((a[0], b[0]), (0.0, 0.0));
    let (a, b) = c.rhs(&dvector![1.0], &dvector![1.0], &dvector![0.0]).unwrap();
    assert_eq!((a[0], b[0]), (2.0, -3.0));
    let (a, b) = c.rhs(&dvector![0.0], &dvector![0.0], &dvector![5.0]).unwrap();
    assert_eq!((a[0], b[0]), (0.0, 5.0));
}

#[test]
fn controller_rhs_rejects_non_finite_gradient() {
    let c = Controller::new(
        "bad",
        dmatrix![1.0],
        dmatrix![1.0],
        dmatrix![1.0],
        Arc::new(FnPotential::new(|v: &DVector<f64>| v[0] * v[0], |_: &DVector<f64>| dvector![f64::NAN])),
        Arc::new(LinearDamping { d: dmatrix![1.0] }),
    )
    .unwrap();
    assert!(matches!(c.rhs(&dvector![1.0], &dvector![0.0], &dvector![0.0]), Err(Error::Model(_))));
}

#[test]
fn controller_output_examples() {
    let c = pd_controller(2.0, 1.0, 3.0);
    assert_eq!(c.output(&dvector![0.0], &dvector![0.0])[0], 0.0);
    assert_eq!(c.output(&dvector![1.0], &dvector![1.0])[0], 5.0);
    assert_eq!(c.output(&dvector![-0.4], &dvector![0.0])[0], -0.8);
    assert_eq!(c.varsigma(), 3.0);
}

#[test]
fn controller_energy_rate_matches_passivity_identity() {
    // d/dt E_c = u_cᵀy_c − u_cᵀS_c u_c − (Kv₂)ᵀℛ(Kv₂) along a fine RK4 trajectory
    let c = Controller::new(
        "q",
        dmatrix![1.5],
        dmatrix![0.8],
        dmatrix![2.0],
        Arc::new(QuadraticQuartic { q: dmatrix![1.0], alpha: 0.3 }),
        Arc::new(SaturatingDamping { gain: 1.0 }),
    )
    .unwrap();
    let u = |t: f64| dvector![(2.0 * t).sin()];
    let f = |t: f64, v: &DVector<f64>| {
        let (a, b) = c.rhs(&v.rows(0, 1).into_owned(), &v.rows(1, 1).into_owned(), &u(t)).unwrap();
        DVector::from_iterator(2, a.iter().chain(b.iter()).copied())
    };
    let dt = 1e-4;
    let mut v = dvector![0.7, -0.2];
    let mut t = 0.0;
    let energy = |v: &DVector<f64>| c.energy(&v.rows(0, 1).into_owned(), &v.rows(1, 1).into_owned());
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let e0 = energy(&v);
        let k1 = f(t, &v);
        let k2 = f(t + dt / 2.0, &(&v + &k1 * (dt / 2.0)));
        let k3 = f(t + dt / 2.0, &(&v + &k2 * (dt / 2.0)));
        let k4 = f(t + dt, &(&v + &k3 * dt));
        let vn = &v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let vm = (&v + &vn) * 0.5;
        let (v1, v2) = (vm.rows(0, 1).into_owned(), vm.rows(1, 1).into_owned());
        let um = u(t + dt / 2.0);
        let kv2 = &c.k_mass * &v2;
        let rate = um.dot(&c.output(&v2, &um)) - um.dot(&(&c.s_c * &um)) - kv2.dot(&c.damping.eval(&kv2));
        let _ = v1;
        worst = worst.max(((energy(&vn) - e0) / dt - rate).abs());
        v = vn;
        t += dt;
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn closed_loop_energy_is_additive() {
    let sys = unit_string::<f64>();
    let c = pd_controller(2.0, 1.0, 1.0);
    let grid = Grid::new(0.0, 1.0, 101).unwrap();
    let zero = ClosedLoopState::new(GridFunction::zeros(grid.clone(), 2), dvector![0.0], dvector![0.0]).unwrap();
    assert_eq!(closed_loop_energy(&sys, &c, &zero, Quadrature::Trapezoid).unwrap(), 0.0);
    let ctrl_only = ClosedLoopState::new(GridFunction::zeros(grid.clone(), 2), dvector![2.0], dvector![1.0]).unwrap();
    assert!((closed_loop_energy(&sys, &c, &ctrl_only, Quadrature::Trapezoid).unwrap() - 3.0).abs() < 1e-15);
    let x = GridFunction::sample(grid, 2, |z| dvector![(std::f64::consts::PI * z).sin(), 0.0]);
    let plant = sys.energy(&x, Quadrature::Trapezoid).unwrap();
    let both = ClosedLoopState::new(x.clone(), dvector![2.0], dvector![1.0]).unwrap();
    assert!((plant - 0.25).abs() < 1e-12);
    assert_eq!(closed_loop_energy(&sys, &c, &both, Quadrature::Trapezoid).unwrap(), plant + 3.0);
    let plant_only = ClosedLoopState::new(x, dvector![0.0], dvector![0.0]).unwrap();
    assert_eq!(closed_loop_energy(&sys, &c, &plant_only, Quadrature::Trapezoid).unwrap(), plant);
}

#[test]
fn closed_loop_state_rejects_non_finite() {
    let grid = Grid::new(0.0, 1.0, 11).unwrap();
    let r = ClosedLoopState::new(GridFunction::zeros(grid, 2), dvector![f64::INFINITY], dvector![0.0]);
    assert!(r.is_err());
}

#[test]
fn interconnection_examples() {
    let sys = unit_string::<f64>();
    let c = pd_controller(2.0, 1.0, 3.0);
    let maps = interconnection_maps(&sys, &c).unwrap();
    let z = BoundaryTrace { z: dvector![1.0, 5.0, 0.0, 7.0] };
    assert_eq!(maps.b_tilde_from_trace(&z, &dvector![1.0]).unwrap()[0], 10.0);
    assert_eq!(maps.c_tilde_from_trace(&z).unwrap()[0], 1.0);
    let silent = BoundaryTrace { z: dvector![0.0, 5.0, 0.0, 7.0] };
    assert_eq!(maps.b_tilde_from_trace(&silent, &dvector![0.0]).unwrap()[0], 5.0);
}

#[test]
fn interconnection_rejects_port_mismatch() {
    let sys = unit_string::<f64>();
    let c = Controller::new(
        "two",
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        Arc::new(QuadraticQuartic { q: DMatrix::identity(2, 2), alpha: 0.0 }),
        Arc::new(LinearDamping { d: DMatrix::identity(2, 2) }),
    )
    .unwrap();
    assert!(matches!(interconnection_maps(&sys, &c), Err(Error::Interconnection { .. })));
}

#[test]
fn density_sampling_reports_asymmetry() {
    let d = EnergyDensity::from_fn(2, 1.0, 2.0, true, |z: f64| dmatrix![1.5, z; 0.0, 1.5]);
    let s = d.sample(0.0, 1.0, 1000);
    // relative Frobenius asymmetry, largest at ζ = 1
    let expected = 2f64.sqrt() / (2.0 * 1.5f64.powi(2) + 1.0).sqrt();
    assert!((s.max_asymmetry - expected).abs() < 1e-12);
    assert!((s.min_eigenvalue - 1.0).abs() < 1e-12);
}
