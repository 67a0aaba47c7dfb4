//! Trajectory analysis: cycle detection and periodic-orbit refinement,
//! critical step-size search, exponential-rate fits and Lyapunov audits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contest::{ActionProfile, ContestInstance};
use crate::cost::CostFunction;
use crate::dynamics::{decrement_bound_from, run_discrete_with, DynamicsConfig, Termination, Trace};
use crate::error::{Error, Result};

pub const DEFAULT_CYCLE_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_PERIOD: usize = 64;
pub const DEFAULT_SKIP_FRACTION: f64 = 0.5;
/// Smallest potential kept by [`fit_exponential_rate`].
pub const RATE_FIT_FLOOR: f64 = 1e-300;
pub const DEFAULT_AUDIT_TOL: f64 = 5e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub tol: f64,
    pub max_period: usize,
    /// Leading fraction of the records ignored as transient.
    pub skip_fraction: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_CYCLE_TOL,
            max_period: DEFAULT_MAX_PERIOD,
            skip_fraction: DEFAULT_SKIP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub period: usize,
    /// One period of states, oldest first.
    pub states: Vec<Vec<f64>>,
    /// First record index from which the trace repeats with this period.
    pub onset_index: usize,
    /// Largest coordinate spread among records of the same phase.
    pub residual: f64,
}

/// Largest spread, over phases `k mod p` and coordinates, of the states in `window`.
fn phase_spread(window: &[&[f64]], p: usize) -> f64 {
    let n = window[0].len();
    let mut worst = 0.0f64;
    for phase in 0..p {
        for i in 0..n {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in window.iter().skip(phase).step_by(p) {
                lo = lo.min(x[i]);
                hi = hi.max(x[i]);
            }
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Searches the tail of an evenly recorded discrete trace for the smallest
/// period `p ≥ 2` at which every phase class of the last `4 · max_period`
/// records (after the transient) has spread at most `tol`. Convergent traces,
/// including ones that converge slowly with alternating sign, give `None`.
pub fn detect_cycle(trace: &Trace, opts: &CycleOptions) -> Option<CycleReport> {
    let states: Vec<&[f64]> = trace.states().collect();
    detect_cycle_in(&states, opts)
}

pub fn detect_cycle_in(states: &[&[f64]], opts: &CycleOptions) -> Option<CycleReport> {
    let skip = (states.len() as f64 * opts.skip_fraction.clamp(0.0, 1.0)).floor() as usize;
    let tail = &states[skip.min(states.len())..];
    let max_period = opts.max_period.min(tail.len() / 4);
    if max_period < 2 {
        return None;
    }
    let window = &tail[tail.len() - 4 * max_period..];
    if phase_spread(window, 1) <= opts.tol {
        return None;
    }
    let (period, residual) = (2..=max_period)
        .map(|p| (p, phase_spread(window, p)))
        .find(|&(_, r)| r <= opts.tol)?;

    let sup_gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let mut onset = states.len() - window.len();
    while onset > 0 && onset - 1 + period < states.len() && sup_gap(states[onset - 1], states[onset - 1 + period]) <= opts.tol {
        onset -= 1;
    }
    Some(CycleReport {
        period,
        states: states[states.len() - period..].iter().map(|x| x.to_vec()).collect(),
        onset_index: onset,
        residual,
    })
}

/// The two values `(low, high)` of the symmetric two-cycle of the two-agent
/// family at `β = nΔt > 4`:
/// `(β(β−2) ∓ β√(β(β−4))) / (2(β−2)²)`.
pub fn symmetric_two_cycle(beta: f64) -> Option<(f64, f64)> {
    if !(beta > 4.0) || !beta.is_finite() {
        return None;
    }
    let root = beta * (beta * (beta - 4.0)).sqrt();
    let base = beta * (beta - 2.0);
    let den = 2.0 * (beta - 2.0) * (beta - 2.0);
    Some(((base - root) / den, (base + root) / den))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: usize,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    /// `|F^p(x) − x|_∞` at the solution.
    pub residual: f64,
    /// Moduli of the Floquet multipliers, largest first.
    pub multipliers: Vec<f64>,
    pub newton_iterations: usize,
    /// Some state sits on the floor.
    pub floor_contact: bool,
}

impl PeriodicOrbit {
    pub fn spectral_radius(&self) -> f64 {
        self.multipliers.first().copied().unwrap_or(0.0)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }
}

/// One step of the discrete map and its Jacobian.
fn map_with_jacobian(inst: &ContestInstance, x: &[f64], dt: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = x.len();
    let p = ActionProfile::new(x.to_vec())?;
    let mut next = Vec::with_capacity(n);
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let s = p.s_minus(i);
        let y = inst.best_response(i, s)?;
        let v = x[i] + dt * (y - x[i]);
        if v < inst.x_min() {
            next.push(inst.x_min());
            continue;
        }
        next.push(v);
        let slope = if s > 0.0 { inst.br_derivative(i, s)?.value } else { 0.0 };
        for j in 0..n {
            jac[(i, j)] = if i == j { 1.0 - dt } else { dt * slope };
        }
    }
    Ok((next, jac))
}

fn iterate_map(inst: &ContestInstance, x: &[f64], dt: f64, steps: usize) -> Result<Vec<f64>> {
    let mut z = x.to_vec();
    for _ in 0..steps {
        z = map_with_jacobian(inst, &z, dt)?.0;
    }
    Ok(z)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `F^p(x) = x` for the discrete map `F` with step `dt` by damped
/// Newton iteration from `seed`, then reports the orbit's multipliers.
/// Unstable orbits are found as readily as stable ones.
pub fn refine_periodic_orbit(inst: &ContestInstance, dt: f64, seed: &[f64], period: usize) -> Result<PeriodicOrbit> {
    if period == 0 {
        return Err(Error::Domain("period must be positive".into()));
    }
    if seed.len() != inst.n() {
        return Err(Error::InvalidProfile(format!("seed has {} entries for {} agents", seed.len(), inst.n())));
    }
    let n = inst.n();
    let orbit = |x: &[f64]| -> Result<(Vec<f64>, DMatrix<f64>)> {
        let mut z = x.to_vec();
        let mut m = DMatrix::identity(n, n);
        for _ in 0..period {
            let (next, j) = map_with_jacobian(inst, &z, dt)?;
            m = j * m;
            z = next;
        }
        Ok((z, m))
    };
    let residual_of = |x: &[f64], fx: &[f64]| -> Vec<f64> { fx.iter().zip(x).map(|(a, b)| a - b).collect() };

    let mut x = seed.iter().map(|v| v.max(inst.x_min())).collect::<Vec<_>>();
    let (fx, mut m) = orbit(&x)?;
    let mut g = residual_of(&x, &fx);
    let mut iterations = 0;
    while sup_norm(&g) > 1e-14 * sup_norm(&x).max(1.0) {
        if iterations >= 100 {
            return Err(Error::NonConvergence(format!(
                "periodic orbit residual {} after {iterations} Newton steps",
                sup_norm(&g)
            )));
        }
        iterations += 1;
        let a = &m - DMatrix::identity(n, n);
        let rhs = nalgebra::DVector::from_iterator(n, g.iter().map(|v| -v));
        let Some(delta) = a.lu().solve(&rhs) else {
            return Err(Error::Numerical("singular periodic-orbit Jacobian".into()));
        };
        let current = sup_norm(&g);
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x
                .iter()
                .zip(delta.iter())
                .map(|(xi, di)| (xi + lambda * di).max(inst.x_min()))
                .collect();
            let (tfx, tm) = orbit(&trial)?;
            let tg = residual_of(&trial, &tfx);
            if sup_norm(&tg) < current {
                x = trial;
                m = tm;
                g = tg;
                break true;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                break false;
            }
        };
        if !accepted {
            // No further progress: accept a residual at round-off level.
            if current <= 1e-11 * sup_norm(&x).max(1.0) {
                break;
            }
            return Err(Error::NonConvergence(format!("line search stalled at residual {current}")));
        }
    }
    for q in (1..period).filter(|q| period % q == 0) {
        let back = iterate_map(inst, &x, dt, q)?;
        if sup_norm(&residual_of(&x, &back)) <= 1e-9 {
            return Err(Error::Precondition(format!(
                "solution has period {q}, not {period}"
            )));
        }
    }

    let mut states = vec![x.clone()];
    for _ in 1..period {
        let next = iterate_map(inst, states.last().unwrap(), dt, 1)?;
        states.push(next);
    }
    let mut multipliers: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    multipliers.sort_by(|a, b| b.total_cmp(a));
    let floor_contact = states.iter().flatten().any(|v| *v <= inst.x_min());
    Ok(PeriodicOrbit {
        floor_contact,
        period,
        dt,
        states,
        residual: sup_norm(&g),
        multipliers,
        newton_iterations: iterations,
    })
}

/// Runs [`refine_periodic_orbit`] from every seed and keeps the distinct
/// orbits of exact period `period` that were found.
pub fn search_periodic_orbits(inst: &ContestInstance, dt: f64, period: usize, seeds: &[Vec<f64>]) -> Vec<PeriodicOrbit> {
    let mut found: Vec<PeriodicOrbit> = Vec::new();
    for seed in seeds {
        let Ok(orbit) = refine_periodic_orbit(inst, dt, seed, period) else {
            continue;
        };
        let same = |other: &PeriodicOrbit| {
            other.states.iter().any(|s| {
                s.iter().zip(&orbit.states[0]).all(|(a, b)| (a - b).abs() <= 1e-8)
            })
        };
        if !found.iter().any(same) {
            found.push(orbit);
        }
    }
    found
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearchOptions {
    pub alpha_lo: f64,
    /// Upper end of the search; `64 d` when absent.
    pub alpha_hi: Option<f64>,
    /// Relative bracket width at which the search stops.
    pub search_tol: f64,
    /// Step budget of one probe.
    pub budget: u64,
    pub converge_below: f64,
    pub cycle: CycleOptions,
    /// Floor of the two-agent instance.
    pub x_min: f64,
    /// Extra probes above the bracket to confirm monotone classification.
    pub verify: bool,
}

impl Default for CriticalSearchOptions {
    fn default() -> Self {
        Self {
            alpha_lo: 0.5,
            alpha_hi: None,
            search_tol: 1e-2,
            budget: 100_000,
            converge_below: 1e-9,
            cycle: CycleOptions::default(),
            x_min: 0.0,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeOutcome {
    Converged { steps: u64 },
    Cycling { period: usize },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub outcome: ProbeOutcome,
    /// Contradicts a converged probe at a smaller `α`.
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalStepResult {
    pub d: f64,
    pub alpha_star: f64,
    pub bracket: (f64, f64),
    pub runs: usize,
    pub probes: Vec<Probe>,
    /// The initial bracket ends classified as expected (`lo` not converging, `hi` converging).
    pub bracket_valid: bool,
    pub inconclusive: usize,
}

/// `c1(z) = z`, `c2(z) = z/d`.
pub fn two_agent_instance(d: f64, x_min: f64) -> Result<ContestInstance> {
    if !(d >= 1.0) || !d.is_finite() {
        return Err(Error::Domain(format!("cost ratio d = {d} must be >= 1")));
    }
    ContestInstance::new(vec![CostFunction::linear(1.0)?, CostFunction::linear(1.0 / d)?], x_min)
}

/// Runs the fixed-step discrete dynamics with `Δt = 1/α` for at most
/// `opts.budget` steps and classifies the outcome.
pub fn classify_step(inst: &ContestInstance, x0: &ActionProfile, alpha: f64, opts: &CriticalSearchOptions) -> Result<ProbeOutcome> {
    let window = 8 * opts.cycle.max_period;
    let cfg = DynamicsConfig::discrete_fixed(1.0 / alpha, opts.budget)
        .stop_below(opts.converge_below)
        .retain(window);
    let online = CycleOptions {
        skip_fraction: 0.0,
        ..opts.cycle
    };
    let mut calls = 0u64;
    let trace = run_discrete_with(inst, x0, &cfg, |records| {
        calls += 1;
        if calls % 4096 != 0 || records.len() < 4 * online.max_period {
            return false;
        }
        let states: Vec<&[f64]> = records.iter().map(|r| r.x.as_slice()).collect();
        detect_cycle_in(&states, &online).is_some()
    })?;
    Ok(match trace.termination {
        Termination::Converged { .. } => ProbeOutcome::Converged { steps: trace.steps },
        Termination::NumericalError { .. } => ProbeOutcome::Inconclusive,
        Termination::CycleDetected | Termination::Horizon => match detect_cycle(&trace, &online) {
            Some(c) => ProbeOutcome::Cycling { period: c.period },
            None => ProbeOutcome::Inconclusive,
        },
    })
}

/// Bisection on `α = 1/Δt` for the two-agent instance with cost ratio `d`.
pub fn find_critical_alpha(d: f64, x0: &ActionProfile, opts: &CriticalSearchOptions) -> Result<CriticalStepResult> {
    let inst = two_agent_instance(d, opts.x_min)?;
    let mut opts = *opts;
    opts.alpha_hi = Some(opts.alpha_hi.unwrap_or(64.0 * d));
    let mut res = find_critical_alpha_for(&inst, x0, &opts)?;
    res.d = d;
    Ok(res)
}

/// Bisection on `α = 1/Δt` for any instance. Inconclusive probes count as
/// not converged and are flagged.
pub fn find_critical_alpha_for(inst: &ContestInstance, x0: &ActionProfile, opts: &CriticalSearchOptions) -> Result<CriticalStepResult> {
    let mut lo = opts.alpha_lo;
    let mut hi = opts.alpha_hi.unwrap_or(64.0);
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("invalid alpha range [{lo}, {hi}]")));
    }
    if !(opts.search_tol > 0.0) {
        return Err(Error::Config(format!("search_tol {} must be positive", opts.search_tol)));
    }
    let x0 = inst.profile(x0.as_slice().to_vec())?;
    let mut probes = Vec::new();
    let probe = |alpha: f64, probes: &mut Vec<Probe>| -> Result<ProbeOutcome> {
        let outcome = classify_step(inst, &x0, alpha, opts)?;
        probes.push(Probe {
            alpha,
            outcome,
            non_monotone: false,
        });
        Ok(outcome)
    };
    let converges = |o: ProbeOutcome| matches!(o, ProbeOutcome::Converged { .. });

    let hi_ok = converges(probe(hi, &mut probes)?);
    let lo_ok = !converges(probe(lo, &mut probes)?);
    while hi - lo > opts.search_tol * hi {
        let mid = 0.5 * (lo + hi);
        if converges(probe(mid, &mut probes)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if opts.verify {
        for f in [1.1, 1.5, 2.0] {
            probe(hi * f, &mut probes)?;
        }
    }
    let smallest_converged = probes
        .iter()
        .filter(|p| converges(p.outcome))
        .map(|p| p.alpha)
        .fold(f64::INFINITY, f64::min);
    for p in probes.iter_mut() {
        p.non_monotone = p.alpha > smallest_converged && !converges(p.outcome);
    }
    let inconclusive = probes
        .iter()
        .filter(|p| p.outcome == ProbeOutcome::Inconclusive || p.non_monotone)
        .count();
    Ok(CriticalStepResult {
        d: f64::NAN,
        alpha_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        runs: probes.len(),
        probes,
        bracket_valid: hi_ok && lo_ok,
        inconclusive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln v = a − λ t`.
pub fn fit_log_linear(t: &[f64], v: &[f64]) -> Result<RateFit> {
    if t.len() != v.len() {
        return Err(Error::Domain("time and value series differ in length".into()));
    }
    if t.len() < 3 {
        return Err(Error::Precondition(format!("need at least 3 points, have {}", t.len())));
    }
    if let Some(bad) = v.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!("value {bad} is not positive")));
    }
    let m = t.len() as f64;
    let ly: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let tm = t.iter().sum::<f64>() / m;
    let ym = ly.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(&ly) {
        sxx += (ti - tm) * (ti - tm);
        sxy += (ti - tm) * (yi - ym);
        syy += (yi - ym) * (yi - ym);
    }
    if !(sxx > 0.0) {
        return Err(Error::Precondition("all points share one time".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit {
        rate: -slope,
        r_squared,
        points: t.len(),
    })
}

/// Decay rate of `V` over `[t_start, t_end]`; the window is cut at the first
/// record with `V ≤ 1e−300`.
pub fn fit_exponential_rate(trace: &Trace, t_start: f64, t_end: f64) -> Result<RateFit> {
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for r in trace.records.iter().filter(|r| r.t >= t_start && r.t <= t_end) {
        if !(r.potential > RATE_FIT_FLOOR) {
            break;
        }
        t.push(r.t);
        v.push(r.potential);
    }
    if t.len() < 3 {
        return Err(Error::Precondition(format!(
            "potential is at or below {RATE_FIT_FLOOR:e} on the window [{t_start}, {t_end}]"
        )));
    }
    fit_log_linear(&t, &v)
}

/// Largest excess of `V(t)` over `V(t_w) e^{−rate (t − t_w)}`, where `t_w` is
/// the first record at which two agents produce.
pub fn envelope_violation(trace: &Trace, rate: f64) -> Option<f64> {
    let start = trace.records.iter().position(|r| !r.warmup)?;
    let base = &trace.records[start];
    Some(
        trace.records[start..]
            .iter()
            .map(|r| r.potential - base.potential * (-rate * (r.t - base.t)).exp())
            .fold(f64::NEG_INFINITY, f64::max),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovAudit {
    /// Largest `dV/dt + V − bound` over checked records (`−∞` if none).
    pub worst_violation: f64,
    pub checked: usize,
    pub skipped_warmup: usize,
    /// Records at trace ends, at clamps, or whose stencil crosses a change of
    /// the set of agents above the floor.
    pub skipped_other: usize,
    pub tol: f64,
    pub passes: bool,
}

/// Checks `dV/dt + V ≤ bound` along a continuous trace, estimating `dV/dt`
/// by central differences of the recorded potential.
pub fn audit_lyapunov(inst: &ContestInstance, trace: &Trace, tol: f64) -> Result<LyapunovAudit> {
    let recs = &trace.records;
    let mut snaps = Vec::with_capacity(recs.len());
    for r in recs {
        snaps.push(inst.snapshot(&inst.profile(r.x.clone())?)?);
    }
    let active = |k: usize| -> Vec<bool> { snaps[k].best_response.iter().map(|y| *y > inst.x_min()).collect() };
    let mut audit = LyapunovAudit {
        worst_violation: f64::NEG_INFINITY,
        checked: 0,
        skipped_warmup: 0,
        skipped_other: 0,
        tol,
        passes: true,
    };
    for k in 0..recs.len() {
        if recs[k].warmup {
            audit.skipped_warmup += 1;
            continue;
        }
        if k == 0 || k + 1 == recs.len() || recs[k].clamped || recs[k + 1].clamped {
            audit.skipped_other += 1;
            continue;
        }
        let set = active(k);
        if recs[k - 1].warmup || recs[k + 1].warmup || active(k - 1) != set || active(k + 1) != set {
            audit.skipped_other += 1;
            continue;
        }
        let dv = (recs[k + 1].potential - recs[k - 1].potential) / (recs[k + 1].t - recs[k - 1].t);
        let excess = dv + recs[k].potential - decrement_bound_from(&snaps[k]);
        audit.worst_violation = audit.worst_violation.max(excess);
        audit.checked += 1;
    }
    audit.passes = !(audit.worst_violation > tol);
    Ok(audit)
}
