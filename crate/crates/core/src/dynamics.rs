//! Time evolution of action profiles.
//!
//! * continuous best-response dynamics `dx_i/dt = BR_i(s_{-i}) − x_i`, integrated
//!   with a classical fixed-step fourth-order Runge-Kutta scheme;
//! * discrete dynamics `x ← x + Δt (BR(x) − x)` with a fixed step or the
//!   profile-dependent safe step `1/max(2, H(x))`;
//! * best response to a weighted running average with a vanishing step schedule;
//! * the agent-rate-scaled field `dx_i/dt = η_i (BR_i − x_i)`.

use serde::{Deserialize, Serialize};

use crate::contest::{gradient_from, ActionProfile, ContestInstance, Snapshot};
use crate::error::{Error, Result};

/// Default stop threshold on `V`.
pub const DEFAULT_STOP_BELOW: f64 = 1e-9;
/// Hard cap on the number of steps of any run.
pub const MAX_STEPS: u64 = 10_000_000;
/// Default integration step of the continuous dynamics.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Step weights `η_k` of the running-average dynamics, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `1/k`: the plain empirical average.
    Harmonic,
    /// `1/k^r` with `r ∈ (0, 1]`.
    Power(f64),
    /// `1/ln(1 + k)`.
    Log,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Power(r) if !(r > 0.0 && r <= 1.0) => Err(Error::Config(format!(
                "power schedule exponent {r} must lie in (0, 1]"
            ))),
            _ => Ok(()),
        }
    }

    pub fn weight(&self, k: u64) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            Schedule::Harmonic => 1.0 / k,
            Schedule::Power(r) => k.powf(-r),
            Schedule::Log => 1.0 / (1.0 + k).ln(),
        }
    }

    /// `η_k → 0`.
    pub fn vanishes(&self) -> bool {
        match *self {
            Schedule::Harmonic | Schedule::Log => true,
            Schedule::Power(r) => r > 0.0,
        }
    }

    /// `Σ_k η_k = ∞`: `Σ 1/k^r` diverges for `r ≤ 1`, and `1/ln(1+k) ≥ 1/k`.
    pub fn series_diverges(&self) -> bool {
        match *self {
            Schedule::Harmonic | Schedule::Log => true,
            Schedule::Power(r) => r <= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Continuous,
    DiscreteFixed,
    DiscreteAdaptive,
    EmpiricalAverage(Schedule),
    /// Per-agent rates `η_i > 0` multiplying the continuous field.
    RateScaled(Vec<f64>),
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Continuous => "continuous",
            Variant::DiscreteFixed => "discrete_fixed",
            Variant::DiscreteAdaptive => "discrete_adaptive",
            Variant::EmpiricalAverage(_) => "empirical_average",
            Variant::RateScaled(_) => "rate_scaled",
        }
    }
}

/// How a run is driven. `horizon` is simulated time; for the running-average
/// dynamics one round is one unit of time.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub variant: Variant,
    /// Integration step (continuous, rate-scaled) or `Δt` (fixed discrete).
    pub step: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub stop_below: Option<f64>,
    pub max_steps: u64,
    /// Keep only the last `n` records.
    pub retain: Option<usize>,
    /// Lower bound on adaptive steps; any step that is safe everywhere (such
    /// as [`worst_case_step`]) may be used.
    pub min_step: f64,
}

impl DynamicsConfig {
    fn base(variant: Variant, step: f64, horizon: f64) -> Self {
        Self {
            variant,
            step,
            horizon,
            record_every: 1,
            stop_below: None,
            max_steps: MAX_STEPS,
            retain: None,
            min_step: 0.0,
        }
    }

    pub fn continuous(step: f64, horizon: f64) -> Self {
        Self::base(Variant::Continuous, step, horizon)
    }

    /// `steps` iterations of the fixed-step discrete dynamics.
    pub fn discrete_fixed(dt: f64, steps: u64) -> Self {
        let mut c = Self::base(Variant::DiscreteFixed, dt, dt * steps as f64);
        c.max_steps = steps;
        c
    }

    pub fn discrete_adaptive(horizon: f64) -> Self {
        Self::base(Variant::DiscreteAdaptive, 0.5, horizon)
    }

    pub fn empirical_average(schedule: Schedule, rounds: u64) -> Self {
        Self::base(Variant::EmpiricalAverage(schedule), 1.0, rounds as f64)
    }

    pub fn rate_scaled(rates: Vec<f64>, step: f64, horizon: f64) -> Self {
        Self::base(Variant::RateScaled(rates), step, horizon)
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn stop_below(mut self, eps: f64) -> Self {
        self.stop_below = Some(eps);
        self
    }

    pub fn max_steps(mut self, steps: u64) -> Self {
        self.max_steps = steps;
        self
    }

    pub fn retain(mut self, n: usize) -> Self {
        self.retain = Some(n);
        self
    }

    pub fn min_step(mut self, step: f64) -> Self {
        self.min_step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!("step {} must be positive", self.step)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if matches!(self.variant, Variant::Continuous | Variant::RateScaled(_) | Variant::DiscreteFixed)
            && self.horizon < self.step
        {
            return Err(Error::Config(format!(
                "horizon {} is shorter than one step {}",
                self.horizon, self.step
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be positive".into()));
        }
        if self.max_steps == 0 || self.max_steps > MAX_STEPS {
            return Err(Error::Config(format!(
                "max_steps must lie in [1, {MAX_STEPS}], got {}",
                self.max_steps
            )));
        }
        if let Some(eps) = self.stop_below {
            if !(eps >= 0.0) {
                return Err(Error::Config(format!("stop threshold {eps} must be >= 0")));
            }
        }
        if !(self.min_step >= 0.0) || self.min_step > 0.5 {
            return Err(Error::Config(format!("min_step {} must lie in [0, 1/2]", self.min_step)));
        }
        match &self.variant {
            Variant::EmpiricalAverage(s) => s.validate()?,
            Variant::RateScaled(rates) => {
                if let Some(r) = rates.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
                    return Err(Error::Config(format!("rate {r} must be positive")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub potential: f64,
    pub regret: Vec<f64>,
    /// Step taken to reach this record (0 for the initial state).
    pub step_used: f64,
    /// `H(x)` at this record (adaptive runs only).
    pub h_value: Option<f64>,
    /// Action played this round (running-average dynamics only).
    pub play: Option<Vec<f64>>,
    /// Fewer than two agents have positive output.
    pub warmup: bool,
    /// Some coordinate was clamped back to the floor on the step into this record.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Converged { threshold: f64 },
    CycleDetected,
    NumericalError { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    pub steps: u64,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds its initial record")
    }

    pub fn final_potential(&self) -> f64 {
        self.last().potential
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.x.as_slice())
    }
}

/// `(BR_i(s_{-i}) − x_i)_i`.
pub fn vector_field(inst: &ContestInstance, x: &ActionProfile) -> Result<Vec<f64>> {
    let snap = inst.snapshot(x)?;
    Ok(field_from(x, &snap))
}

fn field_from(x: &ActionProfile, snap: &Snapshot) -> Vec<f64> {
    snap.best_response
        .iter()
        .zip(x.as_slice())
        .map(|(y, xi)| y - xi)
        .collect()
}

/// `dV/dt = ∇V · (BR(x) − x)` along the continuous dynamics.
pub fn potential_rate(inst: &ContestInstance, x: &ActionProfile) -> Result<f64> {
    let snap = inst.snapshot(x)?;
    if (0..x.len()).any(|i| !(snap.s_minus[i] > 0.0)) {
        return Err(Error::Precondition("potential rate needs every s_minus > 0".into()));
    }
    let grad = gradient_from(inst, x, &snap);
    Ok(grad.iter().zip(field_from(x, &snap)).map(|(g, f)| g * f).sum())
}

/// `−Σ_i p_i (1 − 1/(p_i + q_i))²` with `p_i = y_i/σ`, `q_i = s_{-i}/σ`,
/// `σ = Σ_j y_j`: the bound on `dV/dt + V` when two agents produce.
pub fn lyapunov_decrement_bound(inst: &ContestInstance, x: &ActionProfile) -> Result<f64> {
    if x.positive_count() < 2 {
        return Err(Error::Precondition(format!(
            "need at least two agents with positive output, found {}",
            x.positive_count()
        )));
    }
    let snap = inst.snapshot(x)?;
    Ok(decrement_bound_from(&snap))
}

pub(crate) fn decrement_bound_from(snap: &Snapshot) -> f64 {
    let sigma = snap.br_total();
    if sigma == 0.0 {
        return 0.0;
    }
    -snap
        .best_response
        .iter()
        .zip(&snap.s_minus)
        .filter(|(y, _)| **y > 0.0)
        .map(|(&y, &s)| {
            let p = y / sigma;
            let r = 1.0 - sigma / (y + s);
            p * r * r
        })
        .sum::<f64>()
}

/// One simultaneous update `x + Δt (BR(x) − x)`.
///
/// Steps with `Δt ≤ 1` stay above the floor; larger (over-relaxed) steps are
/// clamped back to `x_min`.
pub fn step_discrete(inst: &ContestInstance, x: &ActionProfile, dt: f64) -> Result<ActionProfile> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("step {dt} must be positive")));
    }
    let snap = inst.snapshot(x)?;
    Ok(advance(inst, x, &snap.best_response, dt).0)
}

fn advance(inst: &ContestInstance, x: &ActionProfile, target: &[f64], dt: f64) -> (ActionProfile, bool) {
    let floor = inst.x_min();
    let mut clamped = false;
    let next = x
        .as_slice()
        .iter()
        .zip(target)
        .map(|(xi, yi)| {
            let v = xi + dt * (yi - xi);
            if v < floor {
                // Convex combinations only dip below by rounding.
                if floor - v > 1e-15 * floor.max(1.0) {
                    clamped = true;
                }
                floor
            } else {
                v
            }
        })
        .collect();
    (ActionProfile::from_valid(next), clamped)
}

/// `H(x)`: the ratio whose reciprocal (capped at 1/2) bounds a step that
/// contracts `V` by at least the factor `1 − Δt`. `+∞` when the denominator
/// vanishes.
pub fn step_bound_h(inst: &ContestInstance, x: &ActionProfile) -> Result<f64> {
    let snap = inst.snapshot(x)?;
    Ok(h_from(inst, x, &snap, inst.bounds().b2))
}

fn h_from(inst: &ContestInstance, x: &ActionProfile, snap: &Snapshot, b2: f64) -> f64 {
    let sigma = snap.br_total();
    if !(sigma > 0.0) {
        return f64::INFINITY;
    }
    let mut move_sq = 0.0;
    let mut curvature = 0.0;
    let mut progress = 0.0;
    for i in 0..x.len() {
        let y = snap.best_response[i];
        let s = snap.s_minus[i];
        let d = y - x[i];
        move_sq += d * d;
        // σ − y_i − s_{-i} = Σ_{j≠i} (y_j − x_j)
        let g = sigma - y - s;
        if y > inst.x_min() && s > 0.0 {
            curvature += g * g / (s * s);
        }
        let t = y + s;
        if t > 0.0 {
            progress += y * g * g / (sigma * t * t);
        }
    }
    if move_sq.sqrt() <= 1e-14 * sigma.max(1.0) {
        return f64::INFINITY;
    }
    let num = 0.5 * b2 * move_sq + curvature;
    if !(progress > 0.0) {
        return f64::INFINITY;
    }
    num / progress
}

/// `1/max(2, H(x))`, or `1/2` when `H = +∞` (only at or next to the fixed point).
pub fn safe_step(inst: &ContestInstance, x: &ActionProfile) -> Result<f64> {
    Ok(safe_step_from_h(step_bound_h(inst, x)?))
}

pub fn safe_step_from_h(h: f64) -> f64 {
    if h.is_infinite() {
        0.5
    } else {
        1.0 / h.max(2.0)
    }
}

/// A step that is safe at every profile when `x_min > 0`:
/// `1/max(2, B2 n³/(2 x_min) + n³/((n−1)² x_min³))`.
pub fn worst_case_step(inst: &ContestInstance) -> Result<f64> {
    let x_min = inst.x_min();
    if x_min <= 0.0 {
        return Err(Error::Unsupported(
            "no profile-independent safe step is known for x_min = 0".into(),
        ));
    }
    Ok(worst_case_step_for(inst.n(), inst.bounds().b2, x_min))
}

pub fn worst_case_step_for(n: usize, b2: f64, x_min: f64) -> f64 {
    let n = n as f64;
    let n3 = n * n * n;
    let h = b2 * n3 / (2.0 * x_min) + n3 / ((n - 1.0) * (n - 1.0) * x_min * x_min * x_min);
    1.0 / h.max(2.0)
}

/// Collects records, honoring `record_every` and `retain`.
struct Recorder {
    records: Vec<TraceRecord>,
    retain: Option<usize>,
}

impl Recorder {
    fn new(retain: Option<usize>) -> Self {
        Self {
            records: Vec::new(),
            retain,
        }
    }

    fn push(&mut self, rec: TraceRecord) {
        self.records.push(rec);
        if let Some(n) = self.retain {
            if self.records.len() >= 2 * n.max(1) {
                let excess = self.records.len() - n.max(1);
                self.records.drain(..excess);
            }
        }
    }

    fn finish(mut self, termination: Termination, steps: u64) -> Trace {
        if let Some(n) = self.retain {
            if self.records.len() > n.max(1) {
                let excess = self.records.len() - n.max(1);
                self.records.drain(..excess);
            }
        }
        Trace {
            records: self.records,
            termination,
            steps,
        }
    }
}

fn record(t: f64, x: &ActionProfile, snap: &Snapshot, step_used: f64, clamped: bool) -> TraceRecord {
    TraceRecord {
        t,
        x: x.as_slice().to_vec(),
        potential: snap.potential,
        regret: snap.regret.clone(),
        step_used,
        h_value: None,
        play: None,
        warmup: x.positive_count() < 2,
        clamped,
    }
}

fn check_start(inst: &ContestInstance, x0: &ActionProfile) -> Result<()> {
    inst.profile(x0.as_slice().to_vec()).map(|_| ())
}

fn converged(cfg: &DynamicsConfig, v: f64) -> Option<Termination> {
    cfg.stop_below
        .filter(|eps| v <= *eps)
        .map(|threshold| Termination::Converged { threshold })
}

/// Integrates the continuous dynamics with fixed-step RK4.
pub fn integrate_continuous(inst: &ContestInstance, x0: &ActionProfile, cfg: &DynamicsConfig) -> Result<Trace> {
    if cfg.variant != Variant::Continuous {
        return Err(Error::Config(format!(
            "integrate_continuous needs the continuous variant, got {}",
            cfg.variant.name()
        )));
    }
    integrate(inst, x0, cfg, None)
}

/// Integrates `dx_i/dt = η_i (BR_i − x_i)`. No convergence claim is attached.
pub fn run_rate_scaled(inst: &ContestInstance, x0: &ActionProfile, cfg: &DynamicsConfig) -> Result<Trace> {
    let Variant::RateScaled(rates) = &cfg.variant else {
        return Err(Error::Config(format!(
            "run_rate_scaled needs the rate_scaled variant, got {}",
            cfg.variant.name()
        )));
    };
    if rates.len() != inst.n() {
        return Err(Error::Config(format!(
            "{} rates for {} agents",
            rates.len(),
            inst.n()
        )));
    }
    integrate(inst, x0, cfg, Some(rates))
}

fn integrate(
    inst: &ContestInstance,
    x0: &ActionProfile,
    cfg: &DynamicsConfig,
    rates: Option<&[f64]>,
) -> Result<Trace> {
    cfg.validate()?;
    check_start(inst, x0)?;
    let h = cfg.step;
    let steps = ((cfg.horizon / h).round() as u64).min(cfg.max_steps);
    let n = inst.n();
    let floor = inst.x_min();

    let field = |x: &[f64]| -> Result<Vec<f64>> {
        let p = ActionProfile::from_valid(x.iter().map(|v| v.max(0.0)).collect());
        let mut f = vector_field(inst, &p)?;
        if let Some(r) = rates {
            f.iter_mut().zip(r).for_each(|(fi, ri)| *fi *= ri);
        }
        Ok(f)
    };
    let axpy = |x: &[f64], k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };

    let mut rec = Recorder::new(cfg.retain);
    let mut x = x0.clone();
    let mut snap = inst.snapshot(&x)?;
    rec.push(record(0.0, &x, &snap, 0.0, false));
    if let Some(term) = converged(cfg, snap.potential) {
        return Ok(rec.finish(term, 0));
    }

    for k in 1..=steps {
        let xs = x.as_slice();
        let mut k1 = field_from(&x, &snap);
        if let Some(r) = rates {
            k1.iter_mut().zip(r).for_each(|(fi, ri)| *fi *= ri);
        }
        let k2 = field(&axpy(xs, &k1, 0.5 * h))?;
        let k3 = field(&axpy(xs, &k2, 0.5 * h))?;
        let k4 = field(&axpy(xs, &k3, h))?;
        let mut clamped = false;
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let v = xs[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !v.is_finite() {
                return Ok(rec.finish(
                    Termination::NumericalError {
                        message: format!("non-finite state at step {k}"),
                    },
                    k,
                ));
            }
            if v < floor {
                clamped = true;
                next.push(floor);
            } else {
                next.push(v);
            }
        }
        x = ActionProfile::from_valid(next);
        snap = inst.snapshot(&x)?;
        let t = k as f64 * h;
        let term = converged(cfg, snap.potential);
        if k % cfg.record_every as u64 == 0 || k == steps || term.is_some() || clamped {
            rec.push(record(t, &x, &snap, h, clamped));
        }
        if let Some(term) = term {
            return Ok(rec.finish(term, k));
        }
    }
    Ok(rec.finish(Termination::Horizon, steps))
}

/// Runs the fixed or adaptive discrete dynamics.
pub fn run_discrete(inst: &ContestInstance, x0: &ActionProfile, cfg: &DynamicsConfig) -> Result<Trace> {
    run_discrete_with(inst, x0, cfg, |_| false)
}

/// As [`run_discrete`], calling `hook` with the records so far after every
/// new record; returning `true` stops the run with [`Termination::CycleDetected`].
pub fn run_discrete_with<F>(inst: &ContestInstance, x0: &ActionProfile, cfg: &DynamicsConfig, mut hook: F) -> Result<Trace>
where
    F: FnMut(&[TraceRecord]) -> bool,
{
    cfg.validate()?;
    check_start(inst, x0)?;
    let adaptive = match cfg.variant {
        Variant::DiscreteFixed => false,
        Variant::DiscreteAdaptive => true,
        ref other => {
            return Err(Error::Config(format!(
                "run_discrete needs a discrete variant, got {}",
                other.name()
            )))
        }
    };
    let b2 = inst.bounds().b2;

    let mut rec = Recorder::new(cfg.retain);
    let mut x = x0.clone();
    let mut snap = inst.snapshot(&x)?;
    let mut first = record(0.0, &x, &snap, 0.0, false);
    if adaptive {
        first.h_value = Some(h_from(inst, &x, &snap, b2));
    }
    rec.push(first);
    if let Some(term) = converged(cfg, snap.potential) {
        return Ok(rec.finish(term, 0));
    }

    let mut t = 0.0;
    let mut k = 0u64;
    while k < cfg.max_steps && t < cfg.horizon * (1.0 - 1e-12) {
        let (dt, h) = if adaptive {
            let h = h_from(inst, &x, &snap, b2);
            (safe_step_from_h(h).max(cfg.min_step), Some(h))
        } else {
            (cfg.step, None)
        };
        let (next, clamped) = advance(inst, &x, &snap.best_response, dt);
        x = next;
        k += 1;
        t = if adaptive { t + dt } else { k as f64 * dt };
        snap = match inst.snapshot(&x) {
            Ok(s) => s,
            Err(Error::Numerical(message)) => {
                return Ok(rec.finish(Termination::NumericalError { message }, k));
            }
            Err(e) => return Err(e),
        };
        if !snap.potential.is_finite() {
            return Ok(rec.finish(
                Termination::NumericalError {
                    message: format!("non-finite potential at step {k}"),
                },
                k,
            ));
        }
        let term = converged(cfg, snap.potential);
        if k % cfg.record_every as u64 == 0 || term.is_some() || clamped {
            let mut r = record(t, &x, &snap, dt, clamped);
            r.h_value = h;
            rec.push(r);
            if hook(&rec.records) {
                return Ok(rec.finish(Termination::CycleDetected, k));
            }
        }
        if let Some(term) = term {
            return Ok(rec.finish(term, k));
        }
    }
    if rec.records.last().map(|r| r.t) != Some(t) {
        rec.push(record(t, &x, &snap, 0.0, false));
    }
    Ok(rec.finish(Termination::Horizon, k))
}

/// Best response to the running average `x̄`:
/// `x(t+1) = BR(s̄_{-i}(t))`, `x̄(t+1) = x̄(t) + η_{t+1} (x(t+1) − x̄(t))`.
///
/// Records are indexed by round `t ≥ 1` with `x̄(1) = x(1) = x0`; each record
/// carries the average, the action played that round, and `V(x̄)`.
pub fn run_empirical_average(inst: &ContestInstance, x0: &ActionProfile, cfg: &DynamicsConfig) -> Result<Trace> {
    cfg.validate()?;
    check_start(inst, x0)?;
    let Variant::EmpiricalAverage(schedule) = cfg.variant else {
        return Err(Error::Config(format!(
            "run_empirical_average needs the empirical_average variant, got {}",
            cfg.variant.name()
        )));
    };
    let rounds = (cfg.horizon.round() as u64).min(cfg.max_steps).max(1);

    let mut rec = Recorder::new(cfg.retain);
    let mut avg = x0.clone();
    let mut snap = inst.snapshot(&avg)?;
    let mut first = record(1.0, &avg, &snap, 1.0, false);
    first.play = Some(x0.as_slice().to_vec());
    rec.push(first);

    for t in 1..rounds {
        let play = snap.best_response.clone();
        let eta = schedule.weight(t + 1);
        let (next, clamped) = advance(inst, &avg, &play, eta);
        avg = next;
        snap = inst.snapshot(&avg)?;
        let round = (t + 1) as f64;
        let term = converged(cfg, snap.potential);
        if (t + 1) % cfg.record_every as u64 == 0 || t + 1 == rounds || term.is_some() {
            let mut r = record(round, &avg, &snap, eta, clamped);
            r.play = Some(play);
            rec.push(r);
        }
        if let Some(term) = term {
            return Ok(rec.finish(term, t));
        }
    }
    Ok(rec.finish(Termination::Horizon, rounds - 1))
}

/// Dispatches on the configured variant.
pub fn run(inst: &ContestInstance, x0: &ActionProfile, cfg: &DynamicsConfig) -> Result<Trace> {
    match cfg.variant {
        Variant::Continuous => integrate_continuous(inst, x0, cfg),
        Variant::DiscreteFixed | Variant::DiscreteAdaptive => run_discrete(inst, x0, cfg),
        Variant::EmpiricalAverage(_) => run_empirical_average(inst, x0, cfg),
        Variant::RateScaled(_) => run_rate_scaled(inst, x0, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lower_bound() -> ContestInstance {
        ContestInstance::symmetric_linear(2, 0.25, 0.0).unwrap()
    }

    #[test]
    fn field_on_symmetric_line() {
        let inst = lower_bound();
        for y in [0.3, 2.0, 3.5] {
            let f = vector_field(&inst, &inst.profile(vec![y, y]).unwrap()).unwrap();
            let expected = 2.0 * (y.sqrt() - y);
            assert!(f.iter().all(|v| (v - expected).abs() < 1e-11));
        }
        let f = vector_field(&inst, &inst.profile(vec![1.0, 1.0]).unwrap()).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn field_at_origin_is_warmup() {
        let inst = lower_bound();
        let f = vector_field(&inst, &inst.profile(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(f, vec![0.5, 0.5]);
    }

    #[test]
    fn full_step_jumps_to_best_response() {
        let inst = lower_bound();
        let x = step_discrete(&inst, &inst.profile(vec![4.0, 4.0]).unwrap(), 1.0).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn half_step_heterogeneous_pair() {
        // c1 = z, c2 = z/16: BR_1 = √x2 − x2, BR_2 = √(16 x1) − x1.
        let inst = ContestInstance::linear(&[1.0, 1.0 / 16.0], 0.0).unwrap();
        let x = step_discrete(&inst, &inst.profile(vec![0.1, 0.1]).unwrap(), 0.5).unwrap();
        let b1 = 0.1f64.sqrt() - 0.1;
        let b2 = (1.6f64).sqrt() - 0.1;
        assert!((x[0] - (0.1 + 0.5 * (b1 - 0.1))).abs() < 1e-12);
        assert!((x[1] - (0.1 + 0.5 * (b2 - 0.1))).abs() < 1e-12);
    }

    #[test]
    fn small_step_matches_field() {
        let inst = ContestInstance::linear(&[1.0, 2.0, 3.0], 0.0).unwrap();
        let x = inst.profile(vec![0.2, 0.05, 0.3]).unwrap();
        let dt = 1e-6;
        let next = step_discrete(&inst, &x, dt).unwrap();
        let f = vector_field(&inst, &x).unwrap();
        for i in 0..3 {
            assert!(((next[i] - x[i]) / dt - f[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn decrement_bound_examples() {
        let inst = lower_bound();
        let eq = inst.profile(vec![1.0, 1.0]).unwrap();
        assert!(lyapunov_decrement_bound(&inst, &eq).unwrap().abs() < 1e-12);
        let far = inst.profile(vec![4.0, 4.0]).unwrap();
        assert_eq!(lyapunov_decrement_bound(&inst, &far).unwrap(), 0.0);
        let single = inst.profile(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            lyapunov_decrement_bound(&inst, &single),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn decrement_bound_dominates_potential_rate() {
        let inst = ContestInstance::linear(&[1.0, 3.0], 0.0).unwrap();
        let x = inst.profile(vec![0.2, 0.1]).unwrap();
        let bound = lyapunov_decrement_bound(&inst, &x).unwrap();
        let v = inst.potential(&x).unwrap().total;
        let rate = potential_rate(&inst, &x).unwrap();
        assert!(bound <= 0.0);
        // Linear costs make the convexity slack vanish: equality.
        assert!((rate + v - bound).abs() < 1e-12, "{} vs {bound}", rate + v);
    }

    #[test]
    fn h_conventions() {
        let inst = lower_bound();
        let eq = inst.profile(vec![1.0, 1.0]).unwrap();
        assert!(step_bound_h(&inst, &eq).unwrap().is_infinite());
        assert_eq!(safe_step(&inst, &eq).unwrap(), 0.5);
        let far = inst.profile(vec![4.0, 4.0]).unwrap();
        assert!(step_bound_h(&inst, &far).unwrap().is_infinite());
        assert_eq!(safe_step_from_h(1.0), 0.5);
        assert_eq!(safe_step_from_h(10.0), 0.1);
    }

    #[test]
    fn h_step_contracts_potential() {
        let inst = ContestInstance::linear(&[1.0, 2.0, 3.0], 0.05).unwrap();
        let x = inst.profile(vec![0.2, 0.2, 0.2]).unwrap();
        let h = step_bound_h(&inst, &x).unwrap();
        assert!(h.is_finite() && h > 0.0);
        let alpha = 1.0 / h.max(2.0);
        let v0 = inst.potential(&x).unwrap().total;
        let v1 = inst.potential(&step_discrete(&inst, &x, alpha).unwrap()).unwrap().total;
        assert!(v1 <= (1.0 - alpha) * v0 + 1e-12);
    }

    #[test]
    fn worst_case_examples() {
        assert!((worst_case_step_for(2, 0.0, 0.1) - 1.25e-4).abs() < 1e-15);
        assert_eq!(worst_case_step_for(2, 0.0, 1.0), 0.125);
        let expected = 1.0 / (27.0 * 2.0 / (2.0 * 0.2) + 27.0 / (4.0 * 0.008));
        assert!((worst_case_step_for(3, 2.0, 0.2) - expected).abs() < 1e-15);
        let inst = lower_bound();
        assert!(matches!(worst_case_step(&inst), Err(Error::Unsupported(_))));
    }

    #[test]
    fn schedules_vanish_and_diverge() {
        for s in [Schedule::Harmonic, Schedule::Power(0.5), Schedule::Power(1.0), Schedule::Log] {
            assert!(s.vanishes() && s.series_diverges());
            assert!(s.weight(1_000_000) < s.weight(10));
        }
        assert!(Schedule::Power(1.5).validate().is_err());
        assert_eq!(Schedule::Harmonic.weight(4), 0.25);
    }

    #[test]
    fn equilibrium_start_is_constant() {
        let inst = lower_bound();
        let x0 = inst.profile(vec![1.0, 1.0]).unwrap();
        let tr = integrate_continuous(&inst, &x0, &DynamicsConfig::continuous(1e-3, 1.0)).unwrap();
        assert!(tr.records.iter().all(|r| r.potential.abs() < 1e-12));
        assert!(tr.records.iter().all(|r| (r.x[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn converged_stop_rule() {
        let inst = ContestInstance::linear(&[1.0, 2.0], 0.0).unwrap();
        let x0 = inst.profile(vec![0.3, 0.3]).unwrap();
        let cfg = DynamicsConfig::discrete_fixed(0.5, 10_000).stop_below(1e-9);
        let tr = run_discrete(&inst, &x0, &cfg).unwrap();
        assert!(matches!(tr.termination, Termination::Converged { .. }));
        assert!(tr.final_potential() <= 1e-9);
    }

    #[test]
    fn records_strictly_increase_in_time() {
        let inst = ContestInstance::linear(&[1.0, 2.0], 0.05).unwrap();
        let x0 = inst.profile(vec![0.6, 0.05]).unwrap();
        let tr = run_discrete(&inst, &x0, &DynamicsConfig::discrete_adaptive(5.0)).unwrap();
        assert!(tr.records.windows(2).all(|w| w[1].t > w[0].t));
        let tr = integrate_continuous(&inst, &x0, &DynamicsConfig::continuous(1e-2, 1.0).record_every(7)).unwrap();
        assert!(tr.records.windows(2).all(|w| w[1].t > w[0].t));
        assert!((tr.last().t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn retain_keeps_tail() {
        let inst = ContestInstance::linear(&[1.0, 2.0], 0.0).unwrap();
        let x0 = inst.profile(vec![0.3, 0.3]).unwrap();
        let full = run_discrete(&inst, &x0, &DynamicsConfig::discrete_fixed(0.1, 500)).unwrap();
        let tail = run_discrete(&inst, &x0, &DynamicsConfig::discrete_fixed(0.1, 500).retain(20)).unwrap();
        assert_eq!(tail.records.len(), 20);
        assert_eq!(tail.records[..], full.records[full.records.len() - 20..]);
    }

    #[test]
    fn wrong_variant_is_rejected() {
        let inst = lower_bound();
        let x0 = inst.profile(vec![1.0, 1.0]).unwrap();
        assert!(integrate_continuous(&inst, &x0, &DynamicsConfig::discrete_fixed(0.5, 3)).is_err());
        assert!(run_discrete(&inst, &x0, &DynamicsConfig::continuous(1e-3, 1.0)).is_err());
        assert!(run_rate_scaled(&inst, &x0, &DynamicsConfig::rate_scaled(vec![1.0], 1e-3, 1.0)).is_err());
    }

    #[test]
    fn symmetric_potential_decays_at_rate_two() {
        let inst = lower_bound();
        let x0 = inst.profile(vec![4.0, 4.0]).unwrap();
        let tr = integrate_continuous(&inst, &x0, &DynamicsConfig::continuous(1e-3, 5.0).record_every(100)).unwrap();
        let v0 = tr.records[0].potential;
        for r in &tr.records {
            let expected = (-2.0 * r.t).exp();
            assert!((r.potential / v0 - expected).abs() <= 1e-4 * expected, "t = {}", r.t);
        }
    }

    #[test]
    fn integration_is_step_consistent() {
        let inst = ContestInstance::linear(&[1.0, 2.0, 3.0], 0.0).unwrap();
        let x0 = inst.profile(vec![0.5, 0.01, 0.2]).unwrap();
        let a = integrate_continuous(&inst, &x0, &DynamicsConfig::continuous(1e-3, 3.0)).unwrap();
        let b = integrate_continuous(&inst, &x0, &DynamicsConfig::continuous(5e-4, 3.0)).unwrap();
        let (xa, xb) = (&a.last().x, &b.last().x);
        assert!(xa.iter().zip(xb).all(|(p, q)| (p - q).abs() < 1e-6));
    }

    #[test]
    fn harmonic_average_is_mean_of_plays() {
        let inst = ContestInstance::linear(&[1.0, 2.0], 0.05).unwrap();
        let x0 = inst.profile(vec![0.6, 0.05]).unwrap();
        let tr = run_empirical_average(&inst, &x0, &DynamicsConfig::empirical_average(Schedule::Harmonic, 200)).unwrap();
        let mut sum = vec![0.0; 2];
        for (k, r) in tr.records.iter().enumerate() {
            let play = r.play.as_ref().unwrap();
            sum.iter_mut().zip(play).for_each(|(s, p)| *s += p);
            for i in 0..2 {
                assert!((r.x[i] - sum[i] / (k + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_rates_reproduce_continuous() {
        let inst = ContestInstance::linear(&[1.0, 2.0], 0.0).unwrap();
        let x0 = inst.profile(vec![0.3, 0.05]).unwrap();
        let a = integrate_continuous(&inst, &x0, &DynamicsConfig::continuous(1e-2, 2.0)).unwrap();
        let b = run_rate_scaled(&inst, &x0, &DynamicsConfig::rate_scaled(vec![1.0, 1.0], 1e-2, 2.0)).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn over_relaxed_step_is_clamped_and_flagged() {
        let inst = ContestInstance::linear(&[1.0, 1.0], 0.01).unwrap();
        let x0 = inst.profile(vec![0.9, 0.9]).unwrap();
        let tr = run_discrete(&inst, &x0, &DynamicsConfig::discrete_fixed(1.8, 1)).unwrap();
        let r = tr.last();
        assert!(r.clamped);
        assert!(r.x.iter().all(|v| *v >= 0.01));
    }
}
