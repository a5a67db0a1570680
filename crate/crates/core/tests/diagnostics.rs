use hamport::diagnostics::*;
use hamport::discretize::{discretize_closed_loop, FiniteModel, Scheme};
use hamport::models::{controller_library, unit_string, ControllerParams, InitialFamily, CONTROLLER_NAMES};
use hamport::simulate::*;
use hamport::conditions::Verdict;
use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model_with(name: &str, params: &ControllerParams, n: usize) -> FiniteModel<f64> {
    let c = controller_library(name, params, 1).unwrap();
    discretize_closed_loop(&unit_string(), Some(&c), n, Scheme::default()).unwrap()
}

fn model(name: &str, n: usize) -> FiniteModel<f64> {
    model_with(name, &ControllerParams::default(), n)
}

fn sig(spec: SignalSpec) -> DisturbanceSignal<f64> {
    make_signal(&spec).unwrap()
}

#[test]
fn quadratic_energy_has_exact_half_envelopes() {
    let m = model("linear_pd", 20);
    let ne = norm_equivalence(&m, 500, &[0.5, 1.0, 4.0], 1).unwrap();
    for r in [0.1, 0.7, 2.0, 4.0] {
        assert!((ne.psi_low(r) - 0.5 * r * r).abs() < 1e-12 * r * r);
        assert!((ne.psi_high(r) - 0.5 * r * r).abs() < 1e-12 * r * r);
        assert!((ne.psi_low_inv(0.5 * r * r) - r).abs() < 1e-9 * r);
    }
    assert_eq!(ne.psi_low(0.0), 0.0);
    assert_eq!(ne.psi_high(0.0), 0.0);
}

#[test]
fn quartic_upper_envelope_grows_faster_than_square() {
    let m = model("quartic_pd", 20);
    let radii = [0.5, 1.0, 2.0, 4.0];
    let ne = norm_equivalence(&m, 2000, &radii, 2).unwrap();
    // 𝒫(v) = ½|v|² + α|v|⁴ gives the envelopes ½ and ½ + α r²
    for (i, r) in radii.iter().enumerate() {
        assert!((ne.low[i] - 0.5).abs() < 1e-12);
        assert!((ne.high[i] - (0.5 + 0.25 * r * r)).abs() < 1e-9);
    }
    assert!(ne.psi_high(4.0) / 16.0 > 4.0 * ne.psi_high(1.0));
    assert!(ne.psi_low(3.0) >= 0.5 * 9.0 - 1e-12);
}

#[test]
fn envelopes_bracket_sampled_full_states() {
    for name in CONTROLLER_NAMES {
        let m = model(name, 30);
        let ne = norm_equivalence(&m, 1000, &[0.5, 1.0, 2.0, 5.0], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in 0..200 {
            let fam = InitialFamily { amplitude: rng.gen_range(0.01..2.0), controller_scale: rng.gen_range(0.0..3.0), compatible: false };
            let x = fam.sample(&m, s);
            let (e, r) = (m.energy(&x), m.norm(&x));
            if r > 5.0 {
                continue;
            }
            assert!(ne.psi_low(r) <= e * (1.0 + 1e-12), "{name} {r} {e}");
            assert!(e <= ne.psi_high(r) * (1.0 + 1e-12), "{name} {r} {e}");
        }
    }
}

#[test]
fn comparison_functions_are_monotone() {
    let m = model("saturating_damper_pd", 20);
    let ne = norm_equivalence(&m, 1000, &[0.25, 0.5, 1.0, 2.0, 4.0], 4).unwrap();
    let rs: Vec<f64> = (1..200).map(|i| i as f64 * 0.02).collect();
    for w in rs.windows(2) {
        assert!(ne.psi_low(w[0]) <= ne.psi_low(w[1]));
        assert!(ne.psi_high(w[0]) <= ne.psi_high(w[1]));
        assert!(ne.sigma(w[0]) <= ne.sigma(w[1]));
        assert!(ne.gamma(w[0], 1.0) <= ne.gamma(w[1], 1.0));
    }
    for &r in &rs {
        assert!(ne.sigma(r) >= r);
    }
}

#[test]
fn ugs_budget_under_bounded_disturbance() {
    // ς = 1 and ‖d‖² = 12 allow at most 3 extra units of energy
    let m = model("linear_pd", 40);
    let x0 = InitialFamily::default().sample(&m, 5);
    let d = sig(SignalSpec::TruncatedStep { amplitude: vec![2.0], duration: 3.0 });
    assert!((d.total_norm_sq() - 12.0).abs() < 1e-12);
    let tr = simulate(&m, &x0, &d, 5.0, 0.01).into_result().unwrap();
    let e0 = tr.energy[0];
    assert!(tr.energy.iter().all(|&e| e <= e0 + 3.0 + 1e-12));
    let u = ugs_check(&tr, 1.0);
    assert_eq!(u.verdict, Verdict::Pass);
    assert!(u.margin >= -1e-12);
    assert!((d.scaled(2.0).total_norm_sq() - 48.0).abs() < 1e-12);
}

#[test]
fn ugs_margin_is_stable_under_refinement() {
    let m = model("quartic_pd", 40);
    let x0 = InitialFamily::default().sample(&m, 6);
    let d = sig(SignalSpec::ExpDecay { amplitude: vec![1.0], rate: 0.5 });
    let margins: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| ugs_check(&simulate(&m, &x0, &d, 4.0, dt).into_result().unwrap(), 1.0).margin)
        .collect();
    assert!(margins.iter().all(|&g| g >= -1e-12));
    assert!((margins[1] - margins[2]).abs() <= (margins[0] - margins[1]).abs() + 1e-9);
}

#[test]
fn ugs_holds_over_seeded_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for s in 0..50u64 {
        let name = CONTROLLER_NAMES[(s % 3) as usize];
        let m = model(name, 24);
        let x0 = InitialFamily::default().sample(&m, s);
        let d = match s % 3 {
            0 => sig(SignalSpec::TruncatedStep { amplitude: vec![rng.gen_range(-2.0..2.0)], duration: rng.gen_range(0.5..3.0) }),
            1 => sig(SignalSpec::ExpDecay { amplitude: vec![rng.gen_range(-2.0..2.0)], rate: rng.gen_range(0.1..2.0) }),
            _ => sig(SignalSpec::WindowedNoise { k: 1, amplitude: 1.0, dt: 0.05, start: 0.0, end: 3.0, seed: s }),
        };
        let tr = simulate(&m, &x0, &d, 4.0, 0.02).into_result().unwrap();
        let u = ugs_check(&tr, 1.0);
        assert_eq!(u.verdict, Verdict::Pass, "{s} {name} {}", u.margin);
        assert_eq!(dissipation_check(&tr).verdict, Verdict::Pass);
    }
}

#[test]
fn zero_trajectory_diagnostics() {
    let m = model("linear_pd", 20);
    let tr = simulate(&m, &DVector::zeros(m.dim()), &DisturbanceSignal::zero(1), 1.0, 0.1).into_result().unwrap();
    assert_eq!(dissipation_residual(&tr), 0.0);
    assert_eq!(convergence_time(&tr, 1e-3), Some(0.0));
    assert_eq!(ugs_check(&tr, 1.0).margin, 0.0);
}

#[test]
fn convergence_time_is_last_entry_into_ball() {
    let m = model("linear_pd", 40);
    let x0 = InitialFamily::default().sample(&m, 1);
    let tr = simulate(&m, &x0, &DisturbanceSignal::zero(1), 30.0, 0.02).into_result().unwrap();
    let eps = 1e-2 * tr.norm[0];
    let t = convergence_time(&tr, eps).unwrap();
    let i = tr.times.iter().position(|&s| s == t).unwrap();
    assert!(tr.norm[i..].iter().all(|&r| r < eps));
    assert!(i == 0 || tr.norm[i - 1] >= eps);
    assert_eq!(convergence_time(&tr, 1e-300), None);
}

#[test]
fn skew_model_is_flagged_as_non_contracting() {
    let j = dmatrix![0.0, 1.0; -1.0, 0.0];
    let m = FiniteModel::from_matrices(j, DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DVector::from_element(2, 1.0)).unwrap();
    let c = fit_contraction(&m, &[DVector::from_vec(vec![1.0, 0.0])], 20.0, 0.01, 2.0).unwrap();
    assert!((c.beta - 1.0).abs() < 1e-9, "{}", c.beta);
    assert!(c.flagged);
    assert_eq!(c.verdict, Verdict::Fail);
}

#[test]
fn contraction_improves_with_damping() {
    let betas: Vec<f64> = [0.25, 0.5, 1.0]
        .iter()
        .map(|&k| {
            let params = ControllerParams { damping: k, ..Default::default() };
            let m = model_with("linear_pd", &params, 40);
            let x0: Vec<_> = (0..3).map(|s| InitialFamily::default().sample(&m, s)).collect();
            fit_contraction(&m, &x0, 30.0, 0.02, 4.0).unwrap().beta
        })
        .collect();
    assert!(betas[0] > betas[1] && betas[1] > betas[2], "{betas:?}");
    assert!(betas[2] < 1.0);
}

#[test]
fn zero_states_are_excluded_from_contraction_fit() {
    let m = model("linear_pd", 20);
    let x0 = vec![DVector::zeros(m.dim()), InitialFamily::default().sample(&m, 1)];
    let c = fit_contraction(&m, &x0, 20.0, 0.02, 4.0).unwrap();
    assert_eq!(c.excluded, 1);
    assert_eq!(c.runs.len(), 1);
    assert!(fit_contraction(&m, &x0, 3.0, 0.02, 4.0).is_err());
}

#[test]
fn contraction_of_exact_exponential() {
    let t: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
    let e: Vec<f64> = t.iter().map(|&s| (-0.5 * s).exp()).collect();
    let r = contraction_from_energy(&t, &e, 2.0);
    assert!((r.beta - (-1.0f64).exp()).abs() < 1e-9);
    assert!((r.beta_slope - r.beta_window.unwrap()).abs() < 1e-9);
}

fn gain_opts(replicates: usize) -> GainOptions {
    GainOptions {
        horizon: 80.0,
        dt: 0.02,
        tail_window: 5.0,
        replicates,
        seed: 3,
        initial: InitialFamily::default(),
        c_gain: default_gain_constant(1.0),
        settle_tol: 1e-6,
    }
}

#[test]
fn gain_curve_scales_with_amplitude() {
    let m = model("linear_pd", 30);
    let ne = norm_equivalence(&m, 500, &[1.0, 10.0], 1).unwrap();
    let base = sig(SignalSpec::TruncatedStep { amplitude: vec![1.0], duration: 2.0 });
    let g = gain_curve(&m, &base, &[0.0, 1.0, 2.0], &gain_opts(1), &ne).unwrap();
    assert_eq!(g.samples.len(), 6);
    assert!(g.samples[0].tail_sup < 1e-6);
    assert_eq!(g.samples[0].d_norm, 0.0);
    let (s1, s2) = (&g.samples[2], &g.samples[4]);
    assert!((s2.d_norm - 2.0 * s1.d_norm).abs() < 1e-12);
    assert!((s1.d_norm - 2f64.sqrt()).abs() < 1e-12);
    // quadratic energy: γ̄(r) = √(4C)·r
    let c = default_gain_constant(1.0);
    assert!((s1.bound - (4.0 * c).sqrt() * s1.d_norm).abs() < 1e-9);
    assert!((s2.bound - 2.0 * s1.bound).abs() < 1e-9);
    assert!(g.samples.iter().all(|s| s.tail_sup <= s.bound + 1e-6 * s.x0_norm), "{:?}", g.samples);
    assert_eq!(g.verdict, Verdict::Pass);
    let csv = g.to_csv();
    assert!(csv.starts_with("d_norm,tail_sup,bound\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn iss_bound_holds_for_pulse() {
    let m = model("linear_pd", 40);
    let ne = norm_equivalence(&m, 500, &[1.0, 10.0], 1).unwrap();
    let x0s: Vec<_> = (0..3).map(|s| InitialFamily::default().sample(&m, s)).collect();
    let c = fit_contraction(&m, &x0s, 40.0, 0.02, 4.0).unwrap();
    let d = sig(SignalSpec::TruncatedStep { amplitude: vec![1.0], duration: 2.0 });
    let tr = simulate(&m, &x0s[0], &d, 20.0, 0.02).into_result().unwrap();
    let v = iss_violation(&tr, &ne, c.beta, c.tau, default_gain_constant(1.0));
    assert!(v <= 1e-6 * tr.norm[0], "{v}");
    let b0 = iss_bound(&ne, c.beta, c.tau, 0.26, 1.0, 0.0, 0.0);
    assert!(b0 >= 1.0);
}

#[test]
fn stability_report_aggregates_verdicts() {
    let m = model("linear_pd", 20);
    let x0 = InitialFamily::default().sample(&m, 1);
    let tr = simulate(&m, &x0, &DisturbanceSignal::zero(1), 5.0, 0.02).into_result().unwrap();
    let mut rep = StabilityReport { varsigma: Some(1.0), ..Default::default() };
    rep.runs.push(summarize_run(0, &tr, Some(1.0), Some(0.5)));
    assert!(rep.passed(), "{:?}", rep.runs);
    assert!(!rep.verdicts().is_empty());
    let json = serde_json::to_string(&rep).unwrap();
    assert!(json.contains("\"dissipation\""));
}
