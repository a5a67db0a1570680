use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hamport::conditions::{certify, ConditionReport, Verdict};
use hamport::diagnostics::{
    default_gain_constant, fit_contraction, gain_curve, norm_equivalence, summarize_run, GainOptions, StabilityReport,
};
use hamport::discretize::{discretize_closed_loop, FiniteModel};
use hamport::models::{controller_library, preset, unit_string, unit_timoshenko, InitialFamily};
use hamport::phs::{Controller, EnergyDensity, PortHamiltonianSystem};
use hamport::simulate::{make_signal, simulate_with, NewtonOptions, SignalSpec, SimOptions, Trajectory};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::ScenarioConfig;

/// One row of the stdout summary.
pub struct Row {
    pub analysis: String,
    pub check: String,
    pub verdict: Verdict,
    pub value: Option<f64>,
    /// Counts toward the exit status.
    pub gating: bool,
}

pub struct Outcome {
    pub rows: Vec<Row>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().filter(|r| r.gating).all(|r| r.verdict.passed())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:<40} {:<13} {:>12}", "analysis", "check", "verdict", "value");
        for r in &self.rows {
            let v = r.value.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
            let _ = writeln!(s, "{:<12} {:<40} {:<13} {:>12}", r.analysis, r.check, format!("{:?}", r.verdict), v);
        }
        s
    }
}

struct Scenario {
    system: PortHamiltonianSystem<f64>,
    controller: Option<Controller<f64>>,
    initial: InitialFamily,
    signal: SignalSpec,
    n: usize,
    dt: f64,
    t_end: f64,
}

fn matrix(name: &str, v: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        bail!("model.{name}: expected {rows}×{cols} = {} values, got {}", rows * cols, v.len());
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

fn custom_system(cfg: &ScenarioConfig) -> Result<PortHamiltonianSystem<f64>> {
    let s = &cfg.model;
    let Some(m) = s.m else { bail!("model.m: required for a custom system") };
    let k = s.w_b1.len() / (2 * m).max(1);
    let p0 = matrix("p0", &s.p0, m, m)?;
    let p1 = matrix("p1", &s.p1, m, m)?;
    let w = |name, v: &[f64]| matrix(name, v, k, 2 * m);
    let density = EnergyDensity::constant(matrix("density", &s.density, m, m)?);
    Ok(PortHamiltonianSystem::new(
        s.a,
        s.b,
        vec![p0, p1],
        w("w_b1", &s.w_b1)?,
        w("w_b2", &s.w_b2)?,
        w("w_c", &s.w_c)?,
        density,
    )?)
}

fn scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let params = cfg.controller.params();
    let (system, default_ctrl, mut sc) = match (&cfg.model.preset, cfg.model.system.as_deref()) {
        (Some(name), None) => {
            let p = preset::<f64>(name, &params).with_context(|| "model.preset")?;
            let ctrl = p.controller.as_ref().map(|c| c.name.clone());
            let sc = Scenario {
                system: p.system.clone(),
                controller: None,
                initial: p.initial.clone(),
                signal: p.signal.clone(),
                n: p.n,
                dt: p.dt,
                t_end: p.t_end,
            };
            (p.system, ctrl, sc)
        }
        (Some(_), Some(_)) => bail!("model: give either `preset` or `system`, not both"),
        (None, system) => {
            let sys = match system.unwrap_or("string") {
                "string" => unit_string(),
                "timoshenko" => unit_timoshenko(),
                "custom" => custom_system(cfg)?,
                other => bail!("model.system: unknown system `{other}`"),
            };
            let k = sys.k();
            let sc = Scenario {
                system: sys.clone(),
                controller: None,
                initial: InitialFamily::default(),
                signal: SignalSpec::Zero { k },
                n: 100,
                dt: 1e-2,
                t_end: 20.0,
            };
            (sys, Some("linear_pd".to_string()), sc)
        }
    };
    let kind = cfg.controller.kind.clone().or(default_ctrl);
    sc.controller = match kind.as_deref() {
        None | Some("none") => None,
        Some(name) => Some(controller_library(name, &params, system.k()).with_context(|| "controller.kind")?),
    };
    sc.n = cfg.model.n.unwrap_or(sc.n);
    sc.dt = cfg.simulation.dt.unwrap_or(sc.dt);
    sc.t_end = cfg.simulation.t_end.unwrap_or(sc.t_end);
    sc.initial = cfg.ensemble.family(&sc.initial);
    Ok(sc)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,E_total,E_plant,E_ctrl,norm_state,y_1..y_k,d_1..d_k,balance_residual`.
pub fn trajectory_csv(tr: &Trajectory<f64>, k: usize) -> String {
    let mut s = String::from("t,E_total,E_plant,E_ctrl,norm_state");
    for i in 1..=k {
        let _ = write!(s, ",y_{i}");
    }
    for i in 1..=k {
        let _ = write!(s, ",d_{i}");
    }
    s.push_str(",balance_residual\n");
    for i in 0..tr.len() {
        let mut row = vec![
            num(tr.times[i]),
            num(tr.energy[i]),
            num(tr.energy_plant[i]),
            num(tr.energy_ctrl[i]),
            num(tr.norm[i]),
        ];
        row.extend(tr.outputs[i].iter().map(|&v| num(v)));
        row.extend(tr.disturbances[i].iter().map(|&v| num(v)));
        row.push(num(tr.balance_residual[i]));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Row-major dense dump with a `# name rows cols` header per matrix.
fn model_dump(model: &FiniteModel<f64>) -> String {
    let mut s = String::from("# dense matrices of x' = A x + F(x) + G d, y = C x; row-major, one row per line\n");
    for (name, m) in [("A", &model.a_d), ("G", &model.g_d), ("C", &model.c_d)] {
        let _ = writeln!(s, "# {name} {} {}", m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            let row: Vec<String> = m.row(r).iter().map(|&v| num(v)).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn condition_rows(report: &ConditionReport, rows: &mut Vec<Row>) {
    for c in report.checks() {
        rows.push(Row {
            analysis: "conditions".into(),
            check: c.name.clone(),
            verdict: c.verdict,
            value: c.value,
            gating: false,
        });
    }
    let i = &report.implications;
    for (name, v) in [
        ("implies uniform ISS", i.uniform_iss),
        ("implies weak ISS", i.weak_iss),
    ] {
        rows.push(Row {
            analysis: "conditions".into(),
            check: name.into(),
            verdict: if v { Verdict::Pass } else { Verdict::Indeterminate },
            value: None,
            gating: false,
        });
    }
    rows.push(Row {
        analysis: "conditions".into(),
        check: "overall".into(),
        verdict: if report.passed() { Verdict::Pass } else { Verdict::Fail },
        value: None,
        gating: true,
    });
}

/// Runs the requested analyses and writes their artifacts into `out`.
pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let sc = scenario(cfg)?;
    let seed = cfg.ensemble.seed;
    let want = |a: &str| cfg.output.analyses.iter().any(|x| x == a);
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut rows = Vec::new();
    let mut written = Vec::new();

    if want("conditions") {
        let report = certify(&sc.system, sc.controller.as_ref(), &cfg.conditions.options(seed))?;
        write(out, "conditions.json", &json(&report)?, &mut written)?;
        condition_rows(&report, &mut rows);
    }

    let dynamic = ["simulate", "contraction", "gain_curve", "model_dump"].iter().any(|a| want(a));
    if !dynamic {
        return Ok(Outcome { rows, written });
    }
    let scheme = cfg.model.scheme()?;
    let model = discretize_closed_loop(&sc.system, sc.controller.as_ref(), sc.n, scheme)?;
    if want("model_dump") {
        write(out, "model.txt", &model_dump(&model), &mut written)?;
    }
    let k = model.k();
    let varsigma = cfg
        .stability
        .varsigma
        .or_else(|| sc.controller.as_ref().map(|c| c.varsigma()));
    let c_gain = cfg.stability.c_gain.or_else(|| varsigma.filter(|&s| s > 0.0).map(default_gain_constant));
    let mut report = StabilityReport {
        varsigma,
        c_gain,
        ..Default::default()
    };

    if want("simulate") {
        let opts = SimOptions {
            newton: NewtonOptions {
                tol: cfg.simulation.newton_tol.unwrap_or(NewtonOptions::default().tol),
                max_iter: cfg.simulation.newton_max_iter.unwrap_or(NewtonOptions::default().max_iter),
                ..NewtonOptions::default()
            },
            state_stride: usize::MAX,
        };
        let write_traj = cfg.simulation.write_trajectories.unwrap_or(true);
        let runs = (0..cfg.ensemble.count)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let run_seed = seed.wrapping_add(i as u64);
                let x0 = sc.initial.sample(&model, run_seed);
                let spec = cfg.disturbance.spec(&sc.signal, k, run_seed)?;
                let d = make_signal(&spec)?;
                let tr = simulate_with(&model, &x0, &d, sc.t_end, sc.dt, &opts)
                    .into_result()
                    .with_context(|| format!("run {i}"))?;
                let mut summary = summarize_run(i, &tr, varsigma.filter(|&s| s > 0.0), cfg.stability.convergence_eps);
                let name = format!("traj_{i}.csv");
                let csv = write_traj.then(|| trajectory_csv(&tr, k));
                if write_traj {
                    summary.trajectory = Some(name.clone());
                }
                Ok((summary, name, csv))
            })
            .collect::<Result<Vec<_>>>()?;
        for (summary, name, csv) in runs {
            if let Some(csv) = csv {
                write(out, &name, &csv, &mut written)?;
            }
            report.runs.push(summary);
        }
    }

    let needs_ne = want("contraction") || want("gain_curve");
    let st = &cfg.stability;
    if needs_ne {
        report.norm_equivalence = Some(norm_equivalence(&model, st.norm_samples, &st.norm_radii, seed)?);
    }
    if want("contraction") {
        let x0: Vec<_> = (0..st.contraction_runs)
            .map(|i| sc.initial.sample(&model, seed.wrapping_add(1000 + i as u64)))
            .collect();
        report.contraction = Some(fit_contraction(&model, &x0, st.horizon, sc.dt, st.tau)?);
    }
    if want("gain_curve") {
        let Some(c) = c_gain else {
            bail!("gain_curve needs stability.c_gain or a controller with positive feedthrough");
        };
        let opts = GainOptions {
            horizon: st.gain_horizon,
            dt: sc.dt,
            tail_window: st.tail_window,
            replicates: st.replicates,
            seed,
            initial: sc.initial.clone(),
            c_gain: c,
            settle_tol: st.settle_tol,
        };
        let base = make_signal(&cfg.disturbance.spec(&sc.signal, k, seed)?)?;
        let ne = report.norm_equivalence.as_ref().expect("computed above");
        let g = gain_curve(&model, &base, &st.gain_amplitudes, &opts, ne)?;
        write(out, "gain_curve.csv", &g.to_csv(), &mut written)?;
        report.gain_curve = Some(g);
    }
    if want("simulate") || want("contraction") || want("gain_curve") {
        write(out, "stability.json", &json(&report)?, &mut written)?;
        for (name, v) in report.verdicts() {
            let value = stability_value(&report, &name);
            let analysis = if name.starts_with("run") { "simulate" } else { name.as_str() };
            rows.push(Row {
                analysis: analysis.into(),
                check: name.clone(),
                verdict: v,
                value,
                gating: true,
            });
        }
    }
    Ok(Outcome { rows, written })
}

fn stability_value(report: &StabilityReport, name: &str) -> Option<f64> {
    if name == "contraction" {
        return report.contraction.as_ref().map(|c| c.beta);
    }
    let mut parts = name.split(' ');
    let (Some("run"), Some(i), Some(what)) = (parts.next(), parts.next(), parts.next()) else {
        return None;
    };
    let r = report.runs.iter().find(|r| r.index.to_string() == i)?;
    match what {
        "dissipation" => Some(r.dissipation.max_residual),
        "ugs" => r.ugs.as_ref().map(|u| u.margin),
        "convergence" => r.convergence_time,
        _ => None,
    }
}
