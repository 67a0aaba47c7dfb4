//! Closed-form equilibria, the ε-equilibrium check and an ε-equilibrium solver.

use serde::{Deserialize, Serialize};

use crate::contest::{ActionProfile, ContestInstance};
use crate::dynamics::{safe_step_from_h, step_bound_h, worst_case_step};
use crate::error::{Error, Result};

/// Step cap of [`compute_equilibrium`].
pub const MAX_SOLVER_STEPS: u64 = 10_000_000;

/// Pure equilibrium of the two-agent contest with costs `z` and `β z`:
/// `(β/(1+β)², 1/(1+β)²)`.
pub fn closed_form_two_agent_linear(beta: f64) -> Result<ActionProfile> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta = {beta} must be positive")));
    }
    let d = (1.0 + beta) * (1.0 + beta);
    ActionProfile::new(vec![beta / d, 1.0 / d])
}

/// Symmetric equilibrium `(n−1)/(n² a)` of `n` agents with cost `a z`.
pub fn closed_form_symmetric_linear(n: usize, a: f64) -> Result<ActionProfile> {
    if n < 2 {
        return Err(Error::InvalidInstance(format!("need n >= 2 agents, got {n}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("cost slope {a} must be positive")));
    }
    let nf = n as f64;
    ActionProfile::uniform(n, (nf - 1.0) / (nf * nf * a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCheck {
    pub holds: bool,
    pub max_regret: f64,
    pub regret: Vec<f64>,
}

/// Whether no agent gains more than `eps` by deviating anywhere in `[0, ∞)`.
pub fn check_eps_equilibrium(inst: &ContestInstance, x: &ActionProfile, eps: f64) -> Result<EpsCheck> {
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("eps = {eps} must be >= 0")));
    }
    let open = inst.unrestricted();
    let pot = open.potential(x)?;
    let max_regret = pot.per_agent.iter().copied().fold(0.0, f64::max);
    Ok(EpsCheck {
        holds: max_regret <= eps,
        max_regret,
        regret: pot.per_agent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub x_star: Vec<f64>,
    pub epsilon: f64,
    /// Largest unrestricted regret at `x_star`.
    pub max_regret: f64,
    pub iterations: u64,
    /// Step taken by the last iteration (0 when the start already qualifies).
    pub step_used: f64,
    /// The artificial floor `x̂ = ε/(4 B1)`.
    pub pseudo_floor: f64,
    pub b1: f64,
    pub b2: f64,
    pub worst_case_step: f64,
    /// Potential of the floored instance at `x_star`.
    pub floored_potential: f64,
}

/// `x̂ = ε/(4 B1(x̂))`, with `B1` measured on `[x̂, 1]`. `B1(lo)` grows as
/// `lo` shrinks, so the iteration from `ε/4` decreases monotonically.
fn pseudo_floor(inst: &ContestInstance, eps: f64) -> Result<(f64, f64)> {
    let mut lo = eps / 4.0;
    for _ in 0..200 {
        let b1 = inst.bounds_on(lo).b1;
        if !b1.is_finite() {
            break;
        }
        let next = eps / (4.0 * b1);
        if next >= lo * (1.0 - 1e-12) {
            let mut floor = lo.min(next);
            let b1 = inst.bounds_on(floor).b1;
            while 2.0 * b1 * floor > eps / 2.0 {
                floor = f64::from_bits(floor.to_bits() - 1);
            }
            return Ok((floor, b1));
        }
        lo = next;
    }
    Err(Error::Unsupported(
        "B1 is unbounded as the floor shrinks (zero marginal cost at the origin)".into(),
    ))
}

/// An ε-equilibrium of the unrestricted game, starting from the floor corner.
pub fn compute_equilibrium(inst: &ContestInstance, eps: f64) -> Result<EquilibriumResult> {
    compute_equilibrium_from(inst, eps, None)
}

/// As [`compute_equilibrium`] from a chosen start (raised to the artificial floor).
///
/// Runs the adaptive discrete dynamics on the instance floored at `x̂` until
/// its potential is at most `ε/2`, never using a step below the worst-case
/// safe step, then certifies the result on the unrestricted game.
pub fn compute_equilibrium_from(
    inst: &ContestInstance,
    eps: f64,
    x0: Option<&ActionProfile>,
) -> Result<EquilibriumResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} must lie in (0, 1)")));
    }
    if !inst.is_normalized() {
        return Err(Error::Normalization(inst.normalization()));
    }
    let (floor, b1) = pseudo_floor(inst, eps)?;
    if let Some(i) = (0..inst.n()).find(|&i| inst.cost(i).value(floor) > eps / 2.0) {
        return Err(Error::Numerical(format!(
            "floor correction c_{i}({floor}) exceeds eps/2"
        )));
    }
    let floored = inst.with_floor(floor)?;
    let b2 = floored.bounds().b2;
    let alpha_wc = worst_case_step(&floored)?;

    let mut x = match x0 {
        None => floored.floor_corner(),
        Some(p) => {
            if p.len() != inst.n() {
                return Err(Error::InvalidProfile(format!(
                    "start has {} entries for {} agents",
                    p.len(),
                    inst.n()
                )));
            }
            ActionProfile::new(p.as_slice().iter().map(|v| v.max(floor)).collect())?
        }
    };

    let target = eps / 2.0;
    let mut iterations = 0u64;
    let mut step_used = 0.0;
    let mut snap = floored.snapshot(&x)?;
    while snap.potential > target {
        if iterations >= MAX_SOLVER_STEPS {
            return Err(Error::NonConvergence(format!(
                "potential {} after {iterations} steps",
                snap.potential
            )));
        }
        let dt = safe_step_from_h(step_bound_h(&floored, &x)?).max(alpha_wc);
        let next: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(&snap.best_response)
            .map(|(xi, yi)| (xi + dt * (yi - xi)).max(floor))
            .collect();
        x = ActionProfile::new(next)?;
        snap = floored.snapshot(&x)?;
        iterations += 1;
        step_used = dt;
    }

    let check = check_eps_equilibrium(inst, &x, eps)?;
    if !check.holds {
        return Err(Error::NonConvergence(format!(
            "certification failed: max regret {} exceeds {eps}",
            check.max_regret
        )));
    }
    Ok(EquilibriumResult {
        x_star: x.into_vec(),
        epsilon: eps,
        max_regret: check.max_regret,
        iterations,
        step_used,
        pseudo_floor: floor,
        b1,
        b2,
        worst_case_step: alpha_wc,
        floored_potential: snap.potential,
    })
}
