//! The `run`, `sweep-alpha` and `find-equilibrium` commands.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tullock_core::analysis::{
    audit_lyapunov, detect_cycle, find_critical_alpha, find_critical_alpha_for, fit_exponential_rate, CriticalSearchOptions,
    CriticalStepResult, CycleOptions, CycleReport, LyapunovAudit, ProbeOutcome, RateFit, DEFAULT_AUDIT_TOL,
};
use tullock_core::dynamics::{run, Termination, Variant};
use tullock_core::equilibrium::{compute_equilibrium, EquilibriumResult};
use tullock_core::{ActionProfile, ContestInstance};

use crate::error::CliError;
use crate::output::{ensure_dir, fmt_f64, trace_csv, write_json, write_text};
use crate::scenario::{parse_instance, parse_scenario};

pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const ALPHA_FILE: &str = "alpha_star.csv";
pub const SWEEP_FILE: &str = "sweep_report.json";

pub fn read_scenario(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> Block<T> {
    fn from_result(r: tullock_core::Result<T>) -> Self {
        match r {
            Ok(v) => Block {
                result: Some(v),
                error: None,
            },
            Err(e) => Block {
                result: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBlock {
    pub detected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<CycleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub termination: Termination,
    pub steps: u64,
    pub records: usize,
    pub final_t: f64,
    pub final_potential: f64,
    pub final_x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_fit: Option<Block<RateFit>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_audit: Option<Block<LyapunovAudit>>,
}

/// Runs a scenario and writes `trace.csv` and `report.json` into `out_dir`.
pub fn cmd_run(scenario_text: &str, out_dir: &Path) -> Result<RunReport, CliError> {
    let sc = parse_scenario(scenario_text)?;
    let trace = run(&sc.instance, &sc.x0, &sc.dynamics)?;
    let last = trace.last();

    let cycle = sc.analysis.detect_cycle.then(|| {
        let report = detect_cycle(&trace, &CycleOptions::default());
        CycleBlock {
            detected: report.is_some(),
            report,
        }
    });
    let rate_fit = sc
        .analysis
        .fit_rate
        .map(|[a, b]| Block::from_result(fit_exponential_rate(&trace, a, b)));
    let lyapunov_audit = sc.analysis.audit.then(|| {
        if matches!(sc.dynamics.variant, Variant::Continuous) {
            Block::from_result(audit_lyapunov(&sc.instance, &trace, DEFAULT_AUDIT_TOL))
        } else {
            Block {
                result: None,
                error: Some("the audit applies to continuous traces only".into()),
            }
        }
    });

    let report = RunReport {
        variant: sc.dynamics.variant.name().to_string(),
        termination: trace.termination.clone(),
        steps: trace.steps,
        records: trace.records.len(),
        final_t: last.t,
        final_potential: last.potential,
        final_x: last.x.clone(),
        cycle,
        rate_fit,
        lyapunov_audit,
    };
    ensure_dir(out_dir)?;
    write_text(&out_dir.join(TRACE_FILE), &trace_csv(&trace))?;
    write_json(&out_dir.join(REPORT_FILE), &report)?;
    if let Termination::NumericalError { message } = &trace.termination {
        return Err(CliError::Numerical(message.clone()));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let m = x.len() as f64;
    let xm = x.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - xm) * (a - xm)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym) * (b - ym)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept: ym - slope * xm,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingRatio {
    pub d: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<CriticalStepResult>,
    pub fit: Option<LinearFit>,
    /// `α*(2d)/α*(d)` for every `d` whose double is also in the sweep.
    pub doubling_ratios: Vec<DoublingRatio>,
    pub warnings: Vec<String>,
}

/// The start of every threshold search.
pub const SWEEP_START: [f64; 2] = [0.1, 0.1];

/// `α*` for one cost ratio. `d = 1` runs on the symmetric calibration
/// instance with cost `z/4`.
pub fn critical_alpha(d: f64, opts: &CriticalSearchOptions) -> tullock_core::Result<CriticalStepResult> {
    let x0 = ActionProfile::new(SWEEP_START.to_vec())?;
    if d == 1.0 {
        let inst = ContestInstance::symmetric_linear(2, 0.25, opts.x_min)?;
        let opts = CriticalSearchOptions {
            alpha_hi: Some(opts.alpha_hi.unwrap_or(64.0)),
            ..*opts
        };
        let mut res = find_critical_alpha_for(&inst, &x0, &opts)?;
        res.d = 1.0;
        Ok(res)
    } else {
        find_critical_alpha(d, &x0, opts)
    }
}

fn entry_status(e: &CriticalStepResult) -> &'static str {
    if !e.bracket_valid {
        "invalid_bracket"
    } else if e.inconclusive > 0 {
        "inconclusive_probes"
    } else {
        "ok"
    }
}

/// Threshold search per `d` on a worker pool of `jobs` threads; writes
/// `alpha_star.csv` and `sweep_report.json`.
pub fn cmd_sweep_alpha(
    ds: &[f64],
    out_dir: &Path,
    jobs: Option<usize>,
    opts: &CriticalSearchOptions,
) -> Result<SweepReport, CliError> {
    if ds.is_empty() {
        return Err(CliError::Usage("the list of cost ratios is empty".into()));
    }
    if let Some(d) = ds.iter().find(|d| !(**d >= 1.0) || !d.is_finite()) {
        return Err(CliError::Usage(format!("cost ratio {d} must be a finite number >= 1")));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let entries = pool.install(|| {
        ds.par_iter()
            .map(|&d| critical_alpha(d, opts))
            .collect::<tullock_core::Result<Vec<_>>>()
    })?;

    let mut warnings = Vec::new();
    for e in &entries {
        match entry_status(e) {
            "ok" => {}
            status => {
                let detail: Vec<String> = e
                    .probes
                    .iter()
                    .filter(|p| p.outcome == ProbeOutcome::Inconclusive || p.non_monotone)
                    .map(|p| format!("{}", p.alpha))
                    .collect();
                warnings.push(format!("d = {}: {status} (alpha {})", e.d, detail.join(", ")));
            }
        }
    }
    let xs: Vec<f64> = entries.iter().map(|e| e.d).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.alpha_star).collect();
    let fit = linear_fit(&xs, &ys);
    let doubling_ratios = entries
        .iter()
        .filter_map(|e| {
            entries.iter().find(|f| f.d == 2.0 * e.d).map(|f| DoublingRatio {
                d: e.d,
                ratio: f.alpha_star / e.alpha_star,
            })
        })
        .collect();

    let mut csv = String::from("d,alpha_star,bracket_lo,bracket_hi,runs,status\n");
    for e in &entries {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(e.d),
            fmt_f64(e.alpha_star),
            fmt_f64(e.bracket.0),
            fmt_f64(e.bracket.1),
            e.runs,
            entry_status(e)
        ));
    }
    let report = SweepReport {
        entries,
        fit,
        doubling_ratios,
        warnings,
    };
    ensure_dir(out_dir)?;
    write_text(&out_dir.join(ALPHA_FILE), &csv)?;
    write_json(&out_dir.join(SWEEP_FILE), &report)?;
    Ok(report)
}

/// Computes a certified ε-equilibrium of the scenario's instance and writes it as JSON.
pub fn cmd_find_equilibrium(scenario_text: &str, eps: f64, out_path: &Path) -> Result<EquilibriumResult, CliError> {
    let inst = parse_instance(scenario_text)?;
    let res = compute_equilibrium(&inst, eps)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_json(out_path, &res)?;
    Ok(res)
}
