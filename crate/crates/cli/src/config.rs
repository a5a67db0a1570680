//! Scenario configuration: flat sections of `key = value` lines.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hamport::conditions::CertifyOptions;
use hamport::discretize::Scheme;
use hamport::models::{ControllerParams, InitialFamily};
use hamport::simulate::SignalSpec;
use serde::{Deserialize, Serialize};

pub const ANALYSES: [&str; 5] = ["conditions", "simulate", "contraction", "gain_curve", "model_dump"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub model: ModelSection,
    pub controller: ControllerSection,
    pub simulation: SimulationSection,
    pub disturbance: DisturbanceSection,
    pub ensemble: EnsembleSection,
    pub conditions: ConditionsSection,
    pub stability: StabilitySection,
    pub output: OutputSection,
}

/// Either a preset name, a library system, or a custom system given by
/// row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: Option<String>,
    /// `string`, `timoshenko` or `custom`.
    pub system: Option<String>,
    pub n: Option<usize>,
    /// `sbp-sat` or `central-experimental`.
    pub scheme: String,
    pub dissipation: f64,
    pub m: Option<usize>,
    pub a: f64,
    pub b: f64,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub w_b1: Vec<f64>,
    pub w_b2: Vec<f64>,
    pub w_c: Vec<f64>,
    /// Constant energy density, row-major `m×m`.
    pub density: Vec<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let Scheme::SbpSat { dissipation } = Scheme::default() else { unreachable!() };
        Self {
            preset: None,
            system: None,
            n: None,
            scheme: "sbp-sat".into(),
            dissipation,
            m: None,
            a: 0.0,
            b: 1.0,
            p0: Vec::new(),
            p1: Vec::new(),
            w_b1: Vec::new(),
            w_b2: Vec::new(),
            w_c: Vec::new(),
            density: Vec::new(),
        }
    }
}

impl ModelSection {
    pub fn scheme(&self) -> Result<Scheme> {
        match self.scheme.as_str() {
            "sbp-sat" => Ok(Scheme::SbpSat {
                dissipation: self.dissipation,
            }),
            "central-experimental" => Ok(Scheme::CentralExperimental),
            other => bail!("model.scheme: unknown scheme `{other}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    /// Library controller name or `none`; defaults to the preset's choice.
    pub kind: Option<String>,
    pub q: f64,
    pub damping: f64,
    pub alpha: f64,
    pub mass: f64,
    pub b_c: f64,
    pub s_c: f64,
    pub mc: Option<usize>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let p = ControllerParams::default();
        Self {
            kind: None,
            q: p.q,
            damping: p.damping,
            alpha: p.alpha,
            mass: p.mass,
            b_c: p.b_c,
            s_c: p.s_c,
            mc: p.mc,
        }
    }
}

impl ControllerSection {
    pub fn params(&self) -> ControllerParams {
        ControllerParams {
            q: self.q,
            damping: self.damping,
            alpha: self.alpha,
            mass: self.mass,
            b_c: self.b_c,
            s_c: self.s_c,
            mc: self.mc,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    /// Write `traj_<i>.csv` for every run.
    pub write_trajectories: Option<bool>,
}

/// `kind`: `preset`, `zero`, `truncated_step`, `exp_decay`, `windowed_noise`
/// or `tabulated`. Noise uses `amplitude[0]` as its standard deviation and
/// the run seed; tables hold `channels` values per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSection {
    pub kind: String,
    pub amplitude: Vec<f64>,
    pub duration: f64,
    pub rate: f64,
    pub step: f64,
    pub start: f64,
    pub end: f64,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self {
            kind: "preset".into(),
            amplitude: Vec::new(),
            duration: 1.0,
            rate: 1.0,
            step: 1e-2,
            start: 0.0,
            end: 1.0,
            channels: 1,
            values: Vec::new(),
        }
    }
}

impl DisturbanceSection {
    /// Signal for run `seed`; `fallback` is the preset signal and `k` the port count.
    pub fn spec(&self, fallback: &SignalSpec, k: usize, seed: u64) -> Result<SignalSpec> {
        let amp = || -> Result<Vec<f64>> {
            match self.amplitude.len() {
                0 => bail!("disturbance.amplitude: required for `{}`", self.kind),
                1 => Ok(vec![self.amplitude[0]; k]),
                n if n == k => Ok(self.amplitude.clone()),
                n => bail!("disturbance.amplitude: {n} values for {k} ports"),
            }
        };
        Ok(match self.kind.as_str() {
            "preset" => fallback.clone(),
            "zero" => SignalSpec::Zero { k },
            "truncated_step" => SignalSpec::TruncatedStep {
                amplitude: amp()?,
                duration: self.duration,
            },
            "exp_decay" => SignalSpec::ExpDecay {
                amplitude: amp()?,
                rate: self.rate,
            },
            "windowed_noise" => SignalSpec::WindowedNoise {
                k,
                amplitude: amp()?[0],
                dt: self.step,
                start: self.start,
                end: self.end,
                seed,
            },
            "tabulated" => {
                if self.channels != k || self.values.is_empty() || !self.values.len().is_multiple_of(k) {
                    bail!("disturbance.values: need a nonempty multiple of {k} entries with channels = {k}");
                }
                SignalSpec::Tabulated {
                    dt: self.step,
                    values: self.values.chunks(k).map(<[f64]>::to_vec).collect(),
                }
            }
            other => bail!("disturbance.kind: unknown kind `{other}`"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub count: usize,
    pub seed: u64,
    pub amplitude: Option<f64>,
    pub controller_scale: Option<f64>,
    pub compatible: Option<bool>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            count: 1,
            seed: 0,
            amplitude: None,
            controller_scale: None,
            compatible: None,
        }
    }
}

impl EnsembleSection {
    pub fn family(&self, base: &InitialFamily) -> InitialFamily {
        InitialFamily {
            amplitude: self.amplitude.unwrap_or(base.amplitude),
            controller_scale: self.controller_scale.unwrap_or(base.controller_scale),
            compatible: self.compatible.unwrap_or(base.compatible),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionsSection {
    pub passivity_tests: usize,
    pub passivity_cells: usize,
    pub radius: f64,
    pub samples: usize,
    pub delta_grid: Vec<f64>,
    pub starts: usize,
}

impl Default for ConditionsSection {
    fn default() -> Self {
        let o = CertifyOptions::default();
        Self {
            passivity_tests: o.passivity_tests,
            passivity_cells: o.passivity_cells,
            radius: o.radius,
            samples: o.samples,
            delta_grid: o.delta_grid,
            starts: o.starts,
        }
    }
}

impl ConditionsSection {
    pub fn options(&self, seed: u64) -> CertifyOptions {
        CertifyOptions {
            seed,
            passivity_tests: self.passivity_tests,
            passivity_cells: self.passivity_cells,
            radius: self.radius,
            samples: self.samples,
            delta_grid: self.delta_grid.clone(),
            starts: self.starts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Defaults to the smallest eigenvalue of the controller feedthrough.
    pub varsigma: Option<f64>,
    /// Relative radius `ε/‖x̃₀‖` for the convergence-time check.
    pub convergence_eps: Option<f64>,
    pub tau: f64,
    pub horizon: f64,
    pub contraction_runs: usize,
    pub norm_samples: usize,
    pub norm_radii: Vec<f64>,
    pub gain_amplitudes: Vec<f64>,
    pub gain_horizon: f64,
    pub tail_window: f64,
    pub replicates: usize,
    pub c_gain: Option<f64>,
    pub settle_tol: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            varsigma: None,
            convergence_eps: None,
            tau: 4.0,
            horizon: 50.0,
            contraction_runs: 8,
            norm_samples: 2000,
            norm_radii: vec![1.0, 10.0, 100.0],
            gain_amplitudes: vec![0.0, 0.5, 1.0, 2.0],
            gain_horizon: 80.0,
            tail_window: 10.0,
            replicates: 1,
            c_gain: None,
            settle_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub analyses: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            analyses: vec!["conditions".into()],
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses `text`, then applies `section.key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        // the first pass keeps line numbers in the diagnostics
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        if overrides.is_empty() {
            return cfg.validated();
        }
        let mut table: toml::Table = text.parse().map_err(|e| anyhow!("{e}"))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| anyhow!("after overrides: {e}"))?;
        cfg.validated()
    }

    fn validated(self) -> Result<Self> {
        for a in &self.output.analyses {
            if !ANALYSES.contains(&a.as_str()) {
                bail!("output.analyses: unknown analysis `{a}` (expected one of {})", ANALYSES.join(", "));
            }
        }
        if self.ensemble.count == 0 {
            bail!("ensemble.count: must be at least 1");
        }
        self.model.scheme()?;
        Ok(self)
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}`: expected section.key=value"))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| anyhow!("override `{spec}`: key must be section.key"))?;
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        bail!("override `{spec}`: `{section}` is not a section");
    };
    sec.insert(field.to_string(), value);
    Ok(())
}
