//! The contest model: instances, action profiles, utilities, best responses
//! and the regret potential `V(x) = Σ_i [u_i(BR_i(s_{-i}), s_{-i}) − u_i(x_i, s_{-i})]`
//! together with its gradient and Hessian structure.

use serde::{Deserialize, Serialize};

use crate::cost::{CostFunction, CostTerm};
use crate::error::{Error, Result};

/// Maximum number of bracket doublings before the best-response solver gives up.
const MAX_BRACKET_DOUBLINGS: usize = 64;

/// `|∂u/∂z|` at the floor below which a best response sits on the kink.
const KINK_TOL: f64 = 1e-12;

/// A nonnegative output vector with cached aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile {
    x: Vec<f64>,
    total: f64,
    others: Vec<f64>,
}

impl ActionProfile {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidProfile("empty profile".into()));
        }
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidProfile(format!("x[{i}] = {v} is not a finite nonnegative number")));
        }
        Ok(Self::from_valid(x))
    }

    pub(crate) fn from_valid(x: Vec<f64>) -> Self {
        let total = x.iter().sum();
        // Summing the others directly avoids the cancellation in `total − x_i`
        // when one agent dominates the aggregate.
        let others = (0..x.len())
            .map(|i| {
                x.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| *v)
                    .sum()
            })
            .collect();
        Self { x, total, others }
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    /// `s = Σ_j x_j`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `s_{-i} = Σ_{j≠i} x_j`.
    pub fn s_minus(&self, i: usize) -> f64 {
        self.others[i]
    }

    pub fn positive_count(&self) -> usize {
        self.x.iter().filter(|v| **v > 0.0).count()
    }

    /// Sup-norm distance to another profile of the same length.
    pub fn distance(&self, other: &ActionProfile) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ActionProfile {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.x[i]
    }
}

/// Derivative bounds over `[x_min, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceBounds {
    /// `max_{i,z} c_i'(z) / min_{i,z} c_i'(z)`.
    pub b1: f64,
    /// `max_{i,z} c_i''(z)`.
    pub b2: f64,
}

/// Regret potential split by agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub total: f64,
    pub per_agent: Vec<f64>,
}

/// Everything the dynamics needs about one profile: aggregates, best
/// responses and regrets, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub s_minus: Vec<f64>,
    pub best_response: Vec<f64>,
    pub regret: Vec<f64>,
    pub potential: f64,
}

impl Snapshot {
    /// `σ = Σ_i y_i`.
    pub fn br_total(&self) -> f64 {
        self.best_response.iter().sum()
    }
}

/// Slope of a best response with respect to the others' aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrSlope {
    pub value: f64,
    /// Set when `s_{-i}` sits on the non-differentiable boundary point; the
    /// value is then the limit from the interior side.
    pub at_kink: bool,
}

/// A Tullock contest with `n ≥ 2` agents, an action floor and warm-up actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContestInstance {
    costs: Vec<CostFunction>,
    x_min: f64,
    warmup: Vec<f64>,
}

impl ContestInstance {
    /// Builds an instance with the default warm-up action
    /// `η_i = min(1/2, 1/(2 max_j c_j'(0)))` for every agent.
    pub fn new(costs: Vec<CostFunction>, x_min: f64) -> Result<Self> {
        if costs.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "need at least two agents, got {}",
                costs.len()
            )));
        }
        if !x_min.is_finite() || x_min < 0.0 {
            return Err(Error::InvalidInstance(format!("x_min = {x_min} must be finite and >= 0")));
        }
        if x_min == 0.0 {
            if let Some(i) = costs.iter().position(CostFunction::has_singular_curvature) {
                return Err(Error::InvalidInstance(format!(
                    "agent {i}: exponents in (1, 2) have unbounded c'' at 0 and need x_min > 0"
                )));
            }
        }
        let eta = default_warmup(&costs);
        let n = costs.len();
        let inst = Self {
            costs,
            x_min,
            warmup: vec![eta; n],
        };
        inst.validate_warmup()?;
        Ok(inst)
    }

    /// Homogeneous instance with `c_i(z) = a z` for every agent.
    pub fn symmetric_linear(n: usize, a: f64, x_min: f64) -> Result<Self> {
        let c = CostFunction::linear(a)?;
        Self::new(vec![c; n], x_min)
    }

    /// Instance with `c_i(z) = a_i z`.
    pub fn linear(slopes: &[f64], x_min: f64) -> Result<Self> {
        let costs = slopes
            .iter()
            .map(|&a| CostFunction::linear(a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(costs, x_min)
    }

    pub fn with_warmup(mut self, warmup: Vec<f64>) -> Result<Self> {
        if warmup.len() != self.n() {
            return Err(Error::InvalidInstance(format!(
                "warm-up vector has length {}, expected {}",
                warmup.len(),
                self.n()
            )));
        }
        self.warmup = warmup;
        self.validate_warmup()?;
        Ok(self)
    }

    fn validate_warmup(&self) -> Result<()> {
        let cap = warmup_cap(&self.costs);
        for (i, &eta) in self.warmup.iter().enumerate() {
            if !(eta > 0.0) || eta > cap {
                return Err(Error::InvalidInstance(format!(
                    "warm-up action {eta} of agent {i} must lie in (0, {cap}]"
                )));
            }
            if eta < self.x_min {
                return Err(Error::InvalidInstance(format!(
                    "warm-up action {eta} of agent {i} is below x_min = {}",
                    self.x_min
                )));
            }
        }
        Ok(())
    }

    /// Same costs and warm-up actions with the floor lifted to 0, used to
    /// measure regret over the unrestricted action set.
    pub fn unrestricted(&self) -> Self {
        Self {
            costs: self.costs.clone(),
            x_min: 0.0,
            warmup: self.warmup.clone(),
        }
    }

    /// Same costs with a different floor; warm-up actions are reset to the default.
    pub fn with_floor(&self, x_min: f64) -> Result<Self> {
        Self::new(self.costs.clone(), x_min)
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn cost(&self, i: usize) -> &CostFunction {
        &self.costs[i]
    }

    pub fn costs(&self) -> &[CostFunction] {
        &self.costs
    }

    pub fn warmup(&self) -> &[f64] {
        &self.warmup
    }

    /// Checks length and the floor, then wraps `x`.
    pub fn profile(&self, x: Vec<f64>) -> Result<ActionProfile> {
        if x.len() != self.n() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries, instance has {} agents",
                x.len(),
                self.n()
            )));
        }
        let p = ActionProfile::new(x)?;
        if let Some(i) = (0..p.len()).find(|&i| p[i] < self.x_min) {
            return Err(Error::InvalidProfile(format!(
                "x[{i}] = {} is below x_min = {}",
                p[i], self.x_min
            )));
        }
        Ok(p)
    }

    /// Every agent at the floor.
    pub fn floor_corner(&self) -> ActionProfile {
        ActionProfile::from_valid(vec![self.x_min; self.n()])
    }

    /// `min_i c_i(1)`; the equilibrium algorithm requires this to equal 1.
    pub fn normalization(&self) -> f64 {
        self.costs
            .iter()
            .map(|c| c.value(1.0))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_normalized(&self) -> bool {
        (self.normalization() - 1.0).abs() <= 1e-9
    }

    /// `B1`, `B2` on `[x_min, 1]`.
    pub fn bounds(&self) -> InstanceBounds {
        self.bounds_on(self.x_min)
    }

    /// `B1`, `B2` on `[lo, 1]`. `c'` is nondecreasing, so its extremes sit at
    /// the endpoints.
    pub fn bounds_on(&self, lo: f64) -> InstanceBounds {
        let hi = 1.0_f64.max(lo);
        let max_slope = self.costs.iter().map(|c| c.slope(hi)).fold(0.0, f64::max);
        let min_slope = self
            .costs
            .iter()
            .map(|c| c.slope(lo))
            .fold(f64::INFINITY, f64::min);
        let b1 = if min_slope > 0.0 {
            (max_slope / min_slope).max(1.0)
        } else {
            f64::INFINITY
        };
        let b2 = self
            .costs
            .iter()
            .map(|c| c.max_curvature_on(lo, hi))
            .fold(0.0, f64::max);
        InstanceBounds { b1, b2 }
    }

    /// `u_i(x_i, s_{-i}) = x_i/(x_i + s_{-i}) − c_i(x_i)`, with a prize share
    /// of `1/n` when nobody produces.
    pub fn utility(&self, i: usize, x_i: f64, s_minus: f64) -> Result<f64> {
        check_nonneg("x_i", x_i)?;
        check_nonneg("s_minus", s_minus)?;
        Ok(self.utility_unchecked(i, x_i, s_minus))
    }

    #[inline]
    fn utility_unchecked(&self, i: usize, x_i: f64, s_minus: f64) -> f64 {
        let share = if x_i + s_minus > 0.0 {
            x_i / (x_i + s_minus)
        } else {
            1.0 / self.n() as f64
        };
        share - self.costs[i].value(x_i)
    }

    /// `∂u_i/∂z = s_{-i}/(z + s_{-i})² − c_i'(z)`.
    pub fn marginal_utility(&self, i: usize, z: f64, s_minus: f64) -> Result<f64> {
        check_nonneg("z", z)?;
        if !(s_minus > 0.0) || !s_minus.is_finite() {
            return Err(Error::UndefinedBestResponse);
        }
        Ok(self.marginal_unchecked(i, z, s_minus))
    }

    #[inline]
    fn marginal_unchecked(&self, i: usize, z: f64, s: f64) -> f64 {
        let t = z + s;
        s / (t * t) - self.costs[i].slope(z)
    }

    /// True when the best response to `s_minus` is pinned at the floor.
    fn pinned(&self, i: usize, s_minus: f64) -> bool {
        self.marginal_unchecked(i, self.x_min, s_minus) <= 0.0
    }

    /// The unique maximizer of `u_i(·, s_{-i})` over `[x_min, ∞)`; the
    /// warm-up action when `s_{-i} = 0`.
    pub fn best_response(&self, i: usize, s_minus: f64) -> Result<f64> {
        check_nonneg("s_minus", s_minus)?;
        if s_minus == 0.0 {
            return Ok(self.warmup[i]);
        }
        let lo = self.x_min;
        if self.pinned(i, s_minus) {
            return Ok(lo);
        }
        let mu = |z: f64| self.marginal_unchecked(i, z, s_minus);

        // ∂u/∂z > 0 at `a`, < 0 at `b`.
        let mut a = lo;
        let mut b = 1.0_f64.max(2.0 * s_minus).max(2.0 * lo);
        let mut doublings = 0;
        while mu(b) >= 0.0 {
            a = b;
            b *= 2.0;
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS || !b.is_finite() {
                return Err(Error::Numerical(format!(
                    "best response of agent {i} not bracketed for s_minus = {s_minus}"
                )));
            }
        }
        // Safeguarded Newton: bisect whenever the Newton iterate leaves the bracket.
        let mut z = 0.5 * (a + b);
        for _ in 0..200 {
            let f = mu(z);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                a = z;
            } else {
                b = z;
            }
            let t = z + s_minus;
            let fp = -2.0 * s_minus / (t * t * t) - self.costs[i].curvature(z);
            let newton = z - f / fp;
            let next = if fp < 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - z).abs() <= 2.0 * f64::EPSILON * z.abs() || b - a <= 2.0 * f64::EPSILON * b {
                z = next;
                break;
            }
            z = next;
        }
        Ok(z)
    }

    /// `dy_i/ds_{-i} = (y_i − s_{-i}) / (2 s_{-i} + (y_i + s_{-i})³ c_i''(y_i))`,
    /// zero while the best response is pinned at the floor.
    pub fn br_derivative(&self, i: usize, s_minus: f64) -> Result<BrSlope> {
        if !(s_minus > 0.0) || !s_minus.is_finite() {
            return Err(Error::UndefinedBestResponse);
        }
        let at_floor = self.marginal_unchecked(i, self.x_min, s_minus);
        if at_floor.abs() <= KINK_TOL {
            return Ok(BrSlope {
                value: self.interior_slope(i, self.x_min, s_minus),
                at_kink: true,
            });
        }
        if at_floor < 0.0 {
            return Ok(BrSlope {
                value: 0.0,
                at_kink: false,
            });
        }
        let y = self.best_response(i, s_minus)?;
        Ok(BrSlope {
            value: self.interior_slope(i, y, s_minus),
            at_kink: false,
        })
    }

    fn interior_slope(&self, i: usize, y: f64, s: f64) -> f64 {
        let t = y + s;
        (y - s) / (2.0 * s + t * t * t * self.costs[i].curvature(y))
    }

    /// True when no agent's aggregate sits on its best-response kink.
    pub fn is_generic(&self, x: &ActionProfile) -> bool {
        (0..self.n()).all(|i| {
            let s = x.s_minus(i);
            s == 0.0 || self.marginal_unchecked(i, self.x_min, s).abs() > KINK_TOL
        })
    }

    /// Best responses, per-agent regrets and the total potential at `x`.
    pub fn snapshot(&self, x: &ActionProfile) -> Result<Snapshot> {
        self.check_len(x)?;
        let n = self.n();
        let mut s_minus = Vec::with_capacity(n);
        let mut best_response = Vec::with_capacity(n);
        let mut regret = Vec::with_capacity(n);
        for i in 0..n {
            let s = x.s_minus(i);
            let y = self.best_response(i, s)?;
            let v = self.utility_unchecked(i, y, s) - self.utility_unchecked(i, x[i], s);
            s_minus.push(s);
            best_response.push(y);
            regret.push(v);
        }
        let potential = regret.iter().sum();
        Ok(Snapshot {
            s_minus,
            best_response,
            regret,
            potential,
        })
    }

    /// `V(x)` and its per-agent terms `V_i(x)`.
    pub fn potential(&self, x: &ActionProfile) -> Result<Potential> {
        let snap = self.snapshot(x)?;
        Ok(Potential {
            total: snap.potential,
            per_agent: snap.regret,
        })
    }

    /// `V = Σ y_i/(y_i + s_{-i}) − Σ c_i(y_i) + Σ c_i(x_i) − 1`, valid when
    /// every `s_{-i} > 0`.
    pub fn potential_aggregate(&self, x: &ActionProfile) -> Result<f64> {
        self.require_positive_aggregates(x)?;
        let mut v = -1.0;
        for i in 0..self.n() {
            let s = x.s_minus(i);
            let y = self.best_response(i, s)?;
            v += y / (y + s) - self.costs[i].value(y) + self.costs[i].value(x[i]);
        }
        Ok(v)
    }

    /// `∂V/∂x_k = c_k'(x_k) − Σ_{i≠k} y_i/(y_i + s_{-i})²`.
    pub fn potential_gradient(&self, x: &ActionProfile) -> Result<Vec<f64>> {
        self.require_positive_aggregates(x)?;
        let snap = self.snapshot(x)?;
        Ok(gradient_from(self, x, &snap))
    }

    /// `wᵀ ∇²V(x) w = Σ_i b_i (Σ_{j≠i} w_j)² + Σ_i a_i w_i²` with
    /// `a_i = c_i''(x_i)` and `b_i` nonzero only for agents above the floor.
    pub fn potential_hessian_quadform(&self, x: &ActionProfile, w: &[f64]) -> Result<f64> {
        self.require_positive_aggregates(x)?;
        if w.len() != self.n() {
            return Err(Error::Precondition(format!(
                "direction has {} entries, expected {}",
                w.len(),
                self.n()
            )));
        }
        let w_total: f64 = w.iter().sum();
        let mut q = 0.0;
        for i in 0..self.n() {
            let s = x.s_minus(i);
            let y = self.best_response(i, s)?;
            let a = self.costs[i].curvature(x[i]);
            if a != 0.0 {
                q += a * w[i] * w[i];
            }
            if y > self.x_min {
                let t = y + s;
                let eta = t * t * t * self.costs[i].curvature(y);
                let b = (t * t + 2.0 * y * eta) / (t * t * t * (2.0 * s + eta));
                let others = w_total - w[i];
                q += b * others * others;
            }
        }
        Ok(q)
    }

    fn check_len(&self, x: &ActionProfile) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries, instance has {} agents",
                x.len(),
                self.n()
            )));
        }
        Ok(())
    }

    fn require_positive_aggregates(&self, x: &ActionProfile) -> Result<()> {
        self.check_len(x)?;
        if let Some(i) = (0..self.n()).find(|&i| !(x.s_minus(i) > 0.0)) {
            return Err(Error::Precondition(format!(
                "s_minus({i}) = 0; the potential is not differentiable there"
            )));
        }
        Ok(())
    }
}

pub(crate) fn gradient_from(inst: &ContestInstance, x: &ActionProfile, snap: &Snapshot) -> Vec<f64> {
    let weights: Vec<f64> = snap
        .best_response
        .iter()
        .zip(&snap.s_minus)
        .map(|(&y, &s)| {
            let t = y + s;
            if t > 0.0 {
                y / (t * t)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    (0..inst.n())
        .map(|k| inst.costs[k].slope(x[k]) - (total - weights[k]))
        .collect()
}

/// Rewrites a contest with success function `x̂^r` into the proportional form:
/// each cost term `(a, p)` of `ĉ_i` becomes `(a, p/r)` so that `c_i(x) = ĉ_i(x^{1/r})`.
pub fn logit_transform(
    success_exponent: f64,
    hat_costs: &[Vec<CostTerm>],
    x_min: f64,
) -> Result<ContestInstance> {
    let r = success_exponent;
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidCost(format!("success exponent r = {r} must lie in (0, 1]")));
    }
    let costs = hat_costs
        .iter()
        .map(|terms| CostFunction::reparametrized(terms, r))
        .collect::<Result<Vec<_>>>()?;
    ContestInstance::new(costs, x_min)
}

fn warmup_cap(costs: &[CostFunction]) -> f64 {
    let max_slope0 = costs.iter().map(|c| c.slope(0.0)).fold(0.0, f64::max);
    if max_slope0 > 0.0 {
        1.0 / (2.0 * max_slope0)
    } else {
        f64::INFINITY
    }
}

fn default_warmup(costs: &[CostFunction]) -> f64 {
    warmup_cap(costs).min(0.5)
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be finite and >= 0")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lottery(a: &[f64]) -> ContestInstance {
        ContestInstance::linear(a, 0.0).unwrap()
    }

    #[test]
    fn utility_examples() {
        let inst = lottery(&[0.25, 0.25]);
        assert_eq!(inst.utility(0, 1.0, 1.0).unwrap(), 0.25);
        assert_eq!(inst.utility(0, 0.0, 0.0).unwrap(), 0.5);
        let inst = lottery(&[1.0, 1.0]);
        assert_eq!(inst.utility(0, 0.25, 0.25).unwrap(), 0.25);
        assert!(inst.utility(0, -1.0, 0.25).is_err());
    }

    #[test]
    fn marginal_utility_examples() {
        assert_eq!(lottery(&[0.25, 0.25]).marginal_utility(0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(lottery(&[1.0, 1.0]).marginal_utility(0, 0.0, 4.0).unwrap(), -0.75);
        let quad = ContestInstance::new(vec![CostFunction::power(1.0, 2.0).unwrap(); 2], 0.0).unwrap();
        assert_eq!(quad.marginal_utility(0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(
            quad.marginal_utility(0, 0.0, 0.0),
            Err(Error::UndefinedBestResponse)
        );
    }

    #[test]
    fn best_response_closed_forms() {
        let inst = lottery(&[0.25, 0.25]);
        assert!((inst.best_response(0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let inst = lottery(&[1.0, 1.0]);
        assert!((inst.best_response(0, 0.25).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(inst.best_response(0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn best_response_quadratic_against_newton() {
        let inst = ContestInstance::new(vec![CostFunction::power(1.0, 2.0).unwrap(); 2], 0.0).unwrap();
        let y = inst.best_response(0, 1.0).unwrap();
        // Independent Newton iteration on 1/(1+z)² − 2z = 0 from two starts.
        for start in [0.1, 0.9] {
            let mut z: f64 = start;
            for _ in 0..60 {
                let f = 1.0 / (1.0 + z).powi(2) - 2.0 * z;
                let fp = -2.0 / (1.0 + z).powi(3) - 2.0;
                z -= f / fp;
            }
            assert!((y - z).abs() < 1e-12, "bisection {y} vs newton {z}");
        }
    }

    #[test]
    fn best_response_to_nothing_is_warmup() {
        let inst = lottery(&[1.0, 3.0]);
        // min(1/2, 1/(2·3))
        assert_eq!(inst.warmup(), &[1.0 / 6.0, 1.0 / 6.0]);
        assert_eq!(inst.best_response(1, 0.0).unwrap(), 1.0 / 6.0);
    }

    #[test]
    fn best_response_respects_floor() {
        let inst = ContestInstance::linear(&[1.0, 1.0], 0.05).unwrap();
        // Unconstrained √s − s = 0 at s = 1; floor binds.
        assert_eq!(inst.best_response(0, 1.0).unwrap(), 0.05);
        let y = inst.best_response(0, 0.25).unwrap();
        assert!((y - 0.25).abs() < 1e-12);
    }

    #[test]
    fn br_derivative_examples() {
        let inst = lottery(&[0.25, 0.25]);
        let d = inst.br_derivative(0, 1.0).unwrap();
        assert!(d.value.abs() < 1e-12 && !d.at_kink);
        let inst = lottery(&[1.0, 1.0]);
        assert_eq!(inst.br_derivative(0, 4.0).unwrap().value, 0.0);
        // Kink at s = 1/c'(0) = 1: left limit of d(√s − s)/ds is −1/2.
        let k = inst.br_derivative(0, 1.0).unwrap();
        assert!(k.at_kink);
        assert!((k.value + 0.5).abs() < 1e-12);
    }

    #[test]
    fn br_derivative_matches_finite_difference_quadratic() {
        let inst = ContestInstance::new(vec![CostFunction::power(1.0, 2.0).unwrap(); 2], 0.0).unwrap();
        let h = 1e-6;
        let fd = (inst.best_response(0, 1.0 + h).unwrap() - inst.best_response(0, 1.0 - h).unwrap()) / (2.0 * h);
        let an = inst.br_derivative(0, 1.0).unwrap().value;
        assert!((fd - an).abs() < 1e-5, "fd {fd} analytic {an}");
    }

    #[test]
    fn potential_lower_bound_instance() {
        let inst = lottery(&[0.25, 0.25]);
        let p = inst.potential(&inst.profile(vec![4.0, 4.0]).unwrap()).unwrap();
        assert!((p.total - 1.0).abs() < 1e-12);
        assert!((p.per_agent[0] - 0.5).abs() < 1e-12);
        let eq = inst.potential(&inst.profile(vec![1.0, 1.0]).unwrap()).unwrap();
        assert!(eq.total.abs() < 1e-12);
    }

    #[test]
    fn potential_two_routes_agree() {
        let inst = lottery(&[1.0, 3.0]);
        let x = inst.profile(vec![0.1, 0.1]).unwrap();
        let p = inst.potential(&x).unwrap();
        // Direct regret: each agent best-responds to s = 0.1.
        let direct: f64 = (0..2)
            .map(|i| {
                let a = [1.0, 3.0][i];
                let y = ((0.1f64 / a).sqrt() - 0.1).max(0.0);
                (y / (y + 0.1) - a * y) - (0.5 - a * 0.1)
            })
            .sum();
        assert!((p.total - direct).abs() < 1e-10);
        let agg = inst.potential_aggregate(&x).unwrap();
        assert!((p.total - agg).abs() <= 1e-10 * p.total.abs().max(1.0));
    }

    #[test]
    fn gradient_examples() {
        let inst = lottery(&[0.25, 0.25]);
        let g = inst.potential_gradient(&inst.profile(vec![1.0, 1.0]).unwrap()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        let g = inst.potential_gradient(&inst.profile(vec![4.0, 4.0]).unwrap()).unwrap();
        assert!(g.iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert!(matches!(
            inst.potential_gradient(&inst.profile(vec![1.0, 0.0]).unwrap()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn hessian_examples() {
        let inst = lottery(&[1.0, 2.0]);
        let x = inst.profile(vec![0.2, 0.3]).unwrap();
        assert_eq!(inst.potential_hessian_quadform(&x, &[0.0, 0.0]).unwrap(), 0.0);
        let inst = lottery(&[0.25, 0.25]);
        let x = inst.profile(vec![4.0, 4.0]).unwrap();
        assert_eq!(inst.potential_hessian_quadform(&x, &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn hessian_quadratic_matches_second_difference() {
        let inst = ContestInstance::new(vec![CostFunction::power(1.0, 2.0).unwrap(); 2], 0.0).unwrap();
        let x = [0.3, 0.3];
        let w = [1.0, 1.0];
        let h = 1e-4;
        let v = |t: f64| {
            let p = inst.profile(vec![x[0] + t * w[0], x[1] + t * w[1]]).unwrap();
            inst.potential(&p).unwrap().total
        };
        let fd = (v(h) - 2.0 * v(0.0) + v(-h)) / (h * h);
        let an = inst
            .potential_hessian_quadform(&inst.profile(x.to_vec()).unwrap(), &w)
            .unwrap();
        assert!((fd - an).abs() < 1e-4, "fd {fd} analytic {an}");
    }

    #[test]
    fn logit_transform_examples() {
        let hat = vec![vec![CostTerm::new(1.0, 1.0)], vec![CostTerm::new(1.0, 1.0), CostTerm::new(1.0, 2.0)]];
        let same = logit_transform(1.0, &hat, 0.0).unwrap();
        assert_eq!(same.cost(0).terms(), hat[0].as_slice());
        let half = logit_transform(0.5, &hat, 0.0).unwrap();
        assert_eq!(half.cost(0).terms(), &[CostTerm::new(1.0, 2.0)]);
        assert_eq!(
            half.cost(1).terms(),
            &[CostTerm::new(1.0, 2.0), CostTerm::new(1.0, 4.0)]
        );
        let concave = vec![vec![CostTerm::new(1.0, 0.4)], vec![CostTerm::new(1.0, 1.0)]];
        assert!(matches!(logit_transform(0.5, &concave, 0.0), Err(Error::InvalidCost(_))));
        assert!(logit_transform(1.5, &hat, 0.0).is_err());
    }

    #[test]
    fn instance_validation() {
        assert!(ContestInstance::linear(&[1.0], 0.0).is_err());
        assert!(ContestInstance::linear(&[1.0, 1.0], -0.1).is_err());
        let singular = CostFunction::power(1.0, 1.5).unwrap();
        assert!(ContestInstance::new(vec![singular.clone(); 2], 0.0).is_err());
        assert!(ContestInstance::new(vec![singular; 2], 0.01).is_ok());
        let inst = lottery(&[1.0, 1.0]);
        assert!(inst.clone().with_warmup(vec![0.6, 0.1]).is_err());
        assert!(inst.clone().with_warmup(vec![0.5, 0.1]).is_ok());
        assert!(ContestInstance::linear(&[1.0, 1.0], 0.7).is_err());
    }

    #[test]
    fn bounds_for_linear_pair() {
        let inst = ContestInstance::linear(&[1.0, 3.0], 0.01).unwrap();
        let b = inst.bounds();
        assert_eq!(b.b1, 3.0);
        assert_eq!(b.b2, 0.0);
        assert!(inst.is_normalized());
        assert!(!lottery(&[0.25, 0.25]).is_normalized());
    }
}
