//! Scenario files: JSON documents describing an instance, a start profile,
//! the dynamics to run and the analyses to attach. Named presets cover the
//! standard instances, so most scenarios are one line:
//!
//! ```json
//! { "preset": "lemma5(d=16, x_min=1e-5)" }
//! ```
//!
//! Explicit `x0`, `dynamics` and `analysis` fields override the preset's.

use serde::Deserialize;
use tullock_core::dynamics::{DynamicsConfig, Schedule, Variant, DEFAULT_STEP};
use tullock_core::{ActionProfile, ContestInstance, CostFunction, CostTerm};

use crate::error::CliError;

pub const DEFAULT_HORIZON: f64 = 20.0;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub preset: Option<String>,
    pub instance: Option<InstanceSpec>,
    pub x0: Option<StartSpec>,
    pub dynamics: Option<DynamicsSpec>,
    pub analysis: Option<AnalysisSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    /// One list of cost terms per agent.
    pub agents: Vec<Vec<TermSpec>>,
    #[serde(default)]
    pub x_min: f64,
    pub warmup: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coeff: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Profile(Vec<f64>),
    Named(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub variant: Option<String>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    /// Iteration count of the fixed-step discrete dynamics (overrides `horizon`).
    pub steps: Option<u64>,
    pub record_every: Option<usize>,
    pub stop_below: Option<f64>,
    pub max_steps: Option<u64>,
    pub schedule: Option<ScheduleSpec>,
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Harmonic,
    Log,
    Power(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub detect_cycle: bool,
    /// `[t_start, t_end]` window of the exponential-rate fit.
    pub fit_rate: Option<[f64; 2]>,
    #[serde(default)]
    pub audit: bool,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub instance: ContestInstance,
    pub x0: ActionProfile,
    pub dynamics: DynamicsConfig,
    pub analysis: AnalysisSpec,
}

/// Instance, start, dynamics and analysis defaults of a preset.
struct Preset {
    instance: InstanceSpec,
    x0: StartSpec,
    dynamics: DynamicsSpec,
    analysis: AnalysisSpec,
}

fn linear_agents(slopes: &[f64]) -> Vec<Vec<TermSpec>> {
    slopes
        .iter()
        .map(|&a| vec![TermSpec { coeff: a, exponent: 1.0 }])
        .collect()
}

/// Splits `name(k=v, ...)` into the name and its arguments.
fn parse_call(text: &str) -> Result<(String, Vec<(String, String)>), String> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        return Ok((text.to_string(), Vec::new()));
    };
    if !text.ends_with(')') {
        return Err(format!("unbalanced parentheses in '{text}'"));
    }
    let name = text[..open].trim().to_string();
    let inner = &text[open + 1..text.len() - 1];
    let mut args = Vec::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some((k, v)) => args.push((k.trim().to_string(), v.trim().to_string())),
            None => args.push((String::new(), part.to_string())),
        }
    }
    Ok((name, args))
}

fn number(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("argument {key}={value} is not a number"))
}

fn expand_preset(text: &str) -> Result<Preset, String> {
    let (name, args) = parse_call(text)?;
    let get = |key: &str, default: f64| -> Result<f64, String> {
        match args.iter().position(|(k, _)| k == key) {
            Some(i) => number(key, &args[i].1),
            None => Ok(default),
        }
    };
    let known: &[&str] = match name.as_str() {
        "lower_bound" => &[],
        "lemma4" => &["n", "dt"],
        "lemma5" => &["d", "x_min", "dt"],
        _ => return Err(format!("unknown preset '{name}' (expected lower_bound, lemma4 or lemma5)")),
    };
    if let Some((k, _)) = args.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(format!("preset '{name}' has no argument '{k}'"));
    }
    let preset = match name.as_str() {
        "lower_bound" => Preset {
            instance: InstanceSpec {
                agents: linear_agents(&[0.25, 0.25]),
                x_min: 0.0,
                warmup: None,
            },
            x0: StartSpec::Profile(vec![4.0, 4.0]),
            dynamics: DynamicsSpec {
                variant: Some("continuous".into()),
                step: Some(1e-3),
                horizon: Some(5.0),
                ..Default::default()
            },
            analysis: AnalysisSpec {
                fit_rate: Some([0.0, 5.0]),
                audit: true,
                ..Default::default()
            },
        },
        "lemma4" => {
            let n = get("n", 2.0)?;
            if n.fract() != 0.0 || n < 2.0 {
                return Err(format!("lemma4: n = {n} must be an integer >= 2"));
            }
            let dt = get("dt", 3.0)?;
            let a = (n - 1.0) / (n * n);
            Preset {
                instance: InstanceSpec {
                    agents: linear_agents(&vec![a; n as usize]),
                    x_min: 0.0,
                    warmup: None,
                },
                x0: StartSpec::Named("uniform(0.3)".into()),
                dynamics: DynamicsSpec {
                    variant: Some("discrete_fixed".into()),
                    step: Some(dt),
                    steps: Some(2000),
                    ..Default::default()
                },
                analysis: AnalysisSpec {
                    detect_cycle: true,
                    ..Default::default()
                },
            }
        }
        _ => {
            let d = get("d", 16.0)?;
            if !(d >= 1.0) {
                return Err(format!("lemma5: d = {d} must be >= 1"));
            }
            Preset {
                instance: InstanceSpec {
                    agents: linear_agents(&[1.0, 1.0 / d]),
                    x_min: get("x_min", 0.0)?,
                    warmup: None,
                },
                x0: StartSpec::Profile(vec![0.1, 0.1]),
                dynamics: DynamicsSpec {
                    variant: Some("discrete_fixed".into()),
                    step: Some(get("dt", 0.5)?),
                    steps: Some(5000),
                    ..Default::default()
                },
                analysis: AnalysisSpec {
                    detect_cycle: true,
                    ..Default::default()
                },
            }
        }
    };
    Ok(preset)
}

fn build_instance(spec: &InstanceSpec, errors: &mut Vec<String>) -> Option<ContestInstance> {
    let mut costs = Vec::new();
    for (i, agent) in spec.agents.iter().enumerate() {
        let terms: Vec<CostTerm> = agent.iter().map(|t| CostTerm::new(t.coeff, t.exponent)).collect();
        match CostFunction::new(terms) {
            Ok(c) => costs.push(c),
            Err(e) => errors.push(format!("instance.agents[{i}]: {e}")),
        }
    }
    if !errors.is_empty() {
        return None;
    }
    let inst = match ContestInstance::new(costs, spec.x_min) {
        Ok(inst) => inst,
        Err(e) => {
            errors.push(format!("instance: {e}"));
            return None;
        }
    };
    match &spec.warmup {
        None => Some(inst),
        Some(w) => match inst.with_warmup(w.clone()) {
            Ok(inst) => Some(inst),
            Err(e) => {
                errors.push(format!("instance.warmup: {e}"));
                None
            }
        },
    }
}

fn build_start(spec: &StartSpec, inst: &ContestInstance) -> Result<ActionProfile, String> {
    let values = match spec {
        StartSpec::Profile(v) => v.clone(),
        StartSpec::Named(name) => {
            let (kind, args) = parse_call(name)?;
            match (kind.as_str(), args.as_slice()) {
                ("floor_corner", []) => return Ok(inst.floor_corner()),
                ("uniform", [(k, v)]) if k.is_empty() => vec![number("uniform", v)?; inst.n()],
                _ => return Err(format!("unknown start '{name}' (expected floor_corner or uniform(v))")),
            }
        }
    };
    inst.profile(values).map_err(|e| e.to_string())
}

fn merge(base: DynamicsSpec, over: DynamicsSpec) -> DynamicsSpec {
    DynamicsSpec {
        variant: over.variant.or(base.variant),
        step: over.step.or(base.step),
        horizon: over.horizon.or(base.horizon),
        steps: over.steps.or(base.steps),
        record_every: over.record_every.or(base.record_every),
        stop_below: over.stop_below.or(base.stop_below),
        max_steps: over.max_steps.or(base.max_steps),
        schedule: over.schedule.or(base.schedule),
        rates: over.rates.or(base.rates),
    }
}

fn build_dynamics(spec: &DynamicsSpec) -> Result<DynamicsConfig, String> {
    let variant = spec.variant.as_deref().unwrap_or("continuous");
    let step = spec.step.unwrap_or(match variant {
        "discrete_fixed" => 0.5,
        _ => DEFAULT_STEP,
    });
    let horizon = spec.horizon.unwrap_or(DEFAULT_HORIZON);
    let mut cfg = match variant {
        "continuous" => DynamicsConfig::continuous(step, horizon),
        "discrete_fixed" => match spec.steps {
            Some(k) => DynamicsConfig::discrete_fixed(step, k),
            None => {
                let k = (horizon / step).round().max(1.0) as u64;
                DynamicsConfig::discrete_fixed(step, k)
            }
        },
        "discrete_adaptive" => DynamicsConfig::discrete_adaptive(horizon),
        "empirical_average" => {
            let schedule = match spec.schedule.unwrap_or(ScheduleSpec::Harmonic) {
                ScheduleSpec::Harmonic => Schedule::Harmonic,
                ScheduleSpec::Log => Schedule::Log,
                ScheduleSpec::Power(r) => Schedule::Power(r),
            };
            let rounds = spec.steps.unwrap_or(horizon.round().max(1.0) as u64);
            DynamicsConfig::empirical_average(schedule, rounds)
        }
        "rate_scaled" => {
            let rates = spec
                .rates
                .clone()
                .ok_or_else(|| "dynamics.rates is required for rate_scaled".to_string())?;
            DynamicsConfig::rate_scaled(rates, step, horizon)
        }
        other => {
            return Err(format!(
                "dynamics.variant '{other}' is not one of continuous, discrete_fixed, discrete_adaptive, empirical_average, rate_scaled"
            ))
        }
    };
    if let Some(k) = spec.record_every {
        cfg = cfg.record_every(k);
    }
    if let Some(eps) = spec.stop_below {
        cfg = cfg.stop_below(eps);
    }
    if let Some(m) = spec.max_steps {
        cfg = cfg.max_steps(m);
    }
    cfg.validate().map_err(|e| format!("dynamics: {e}"))?;
    Ok(cfg)
}

/// Parses and validates a scenario document, collecting every field-level
/// problem it can find.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| CliError::Scenario(vec![format!("scenario: {e}")]))?;
    let mut errors = Vec::new();

    let preset = match &file.preset {
        Some(p) => match expand_preset(p) {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(format!("preset: {e}"));
                None
            }
        },
        None => None,
    };
    if file.preset.is_some() && file.instance.is_some() {
        errors.push("instance: give either a preset or an instance, not both".into());
    }
    let instance_spec = file.instance.clone().or_else(|| preset.as_ref().map(|p| p.instance.clone()));
    let instance = match &instance_spec {
        Some(spec) => build_instance(spec, &mut errors),
        None => {
            if file.preset.is_none() {
                errors.push("instance: missing (give an instance or a preset)".into());
            }
            None
        }
    };

    let start_spec = file
        .x0
        .clone()
        .or_else(|| preset.as_ref().map(|p| p.x0.clone()))
        .unwrap_or_else(|| StartSpec::Named("floor_corner".into()));
    let x0 = instance.as_ref().and_then(|inst| match build_start(&start_spec, inst) {
        Ok(x) => Some(x),
        Err(e) => {
            errors.push(format!("x0: {e}"));
            None
        }
    });

    let dyn_spec = merge(
        preset.as_ref().map(|p| p.dynamics.clone()).unwrap_or_default(),
        file.dynamics.clone().unwrap_or_default(),
    );
    let dynamics = match build_dynamics(&dyn_spec) {
        Ok(cfg) => Some(cfg),
        Err(e) => {
            errors.push(e);
            None
        }
    };
    if let (Some(cfg), Some(inst)) = (&dynamics, &instance) {
        if let Variant::RateScaled(r) = &cfg.variant {
            if r.len() != inst.n() {
                errors.push(format!("dynamics.rates: {} rates for {} agents", r.len(), inst.n()));
            }
        }
    }

    let analysis = file
        .analysis
        .clone()
        .or_else(|| preset.as_ref().map(|p| p.analysis.clone()))
        .unwrap_or_default();
    if let Some([a, b]) = analysis.fit_rate {
        if !(a < b) {
            errors.push(format!("analysis.fit_rate: window [{a}, {b}] is empty"));
        }
    }

    match (instance, x0, dynamics) {
        (Some(instance), Some(x0), Some(dynamics)) if errors.is_empty() => Ok(Scenario {
            instance,
            x0,
            dynamics,
            analysis,
        }),
        _ => Err(CliError::Scenario(errors)),
    }
}

/// Parses only the instance of a scenario (used by `find-equilibrium`).
pub fn parse_instance(text: &str) -> Result<ContestInstance, CliError> {
    parse_scenario(text).map(|s| s.instance)
}
