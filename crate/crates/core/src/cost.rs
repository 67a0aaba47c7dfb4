//! Convex power-sum cost functions `c(z) = Σ_k a_k z^{p_k}` with `a_k ≥ 0`, `p_k ≥ 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One monomial `coeff · z^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub coeff: f64,
    pub exponent: f64,
}

impl CostTerm {
    pub fn new(coeff: f64, exponent: f64) -> Self {
        Self { coeff, exponent }
    }

    fn value(&self, z: f64) -> f64 {
        self.coeff * pow(z, self.exponent)
    }

    fn slope(&self, z: f64) -> f64 {
        let p = self.exponent;
        if p == 1.0 {
            self.coeff
        } else {
            self.coeff * p * pow(z, p - 1.0)
        }
    }

    fn curvature(&self, z: f64) -> f64 {
        let p = self.exponent;
        if p == 1.0 || self.coeff == 0.0 {
            0.0
        } else if p == 2.0 {
            2.0 * self.coeff
        } else if z == 0.0 && p < 2.0 {
            f64::INFINITY
        } else {
            self.coeff * p * (p - 1.0) * pow(z, p - 2.0)
        }
    }
}

/// `z^p` with the integer cases kept exact (and fast).
#[inline]
fn pow(z: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        z
    } else if p == 2.0 {
        z * z
    } else if p.fract() == 0.0 && p.abs() <= 16.0 {
        z.powi(p as i32)
    } else {
        z.powf(p)
    }
}

/// Which derivative [`CostFunction::eval`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

/// An increasing, weakly convex cost with `c(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CostTerm>", into = "Vec<CostTerm>")]
pub struct CostFunction {
    terms: Vec<CostTerm>,
}

impl CostFunction {
    pub fn new(terms: Vec<CostTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidCost("no terms".into()));
        }
        for (k, t) in terms.iter().enumerate() {
            if !t.coeff.is_finite() || t.coeff < 0.0 {
                return Err(Error::InvalidCost(format!(
                    "term {k}: coefficient {} must be finite and >= 0",
                    t.coeff
                )));
            }
            if !t.exponent.is_finite() || t.exponent < 1.0 {
                return Err(Error::InvalidCost(format!(
                    "term {k}: exponent {} < 1 violates convexity (exponents must be >= 1)",
                    t.exponent
                )));
            }
        }
        if !terms.iter().any(|t| t.coeff > 0.0) {
            return Err(Error::InvalidCost(
                "at least one coefficient must be positive".into(),
            ));
        }
        Ok(Self { terms })
    }

    /// `c(z) = a z`.
    pub fn linear(a: f64) -> Result<Self> {
        Self::new(vec![CostTerm::new(a, 1.0)])
    }

    /// `c(z) = a z^p`.
    pub fn power(a: f64, p: f64) -> Result<Self> {
        Self::new(vec![CostTerm::new(a, p)])
    }

    pub fn terms(&self) -> &[CostTerm] {
        &self.terms
    }

    /// Evaluates `c`, `c'` or `c''` at `z ≥ 0`. Derivatives at `z = 0` are
    /// one-sided limits; `c''(0⁺)` is `+∞` for a term with exponent in `(1, 2)`.
    pub fn eval(&self, z: f64, order: Order) -> Result<f64> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::Domain(format!("cost evaluated at z = {z}")));
        }
        Ok(match order {
            Order::Value => self.value(z),
            Order::First => self.slope(z),
            Order::Second => self.curvature(z),
        })
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        self.terms.iter().map(|t| t.value(z)).sum()
    }

    #[inline]
    pub fn slope(&self, z: f64) -> f64 {
        self.terms.iter().map(|t| t.slope(z)).sum()
    }

    #[inline]
    pub fn curvature(&self, z: f64) -> f64 {
        self.terms.iter().map(|t| t.curvature(z)).sum()
    }

    /// True when some term has `c''` unbounded near zero.
    pub fn has_singular_curvature(&self) -> bool {
        self.terms
            .iter()
            .any(|t| t.coeff > 0.0 && t.exponent > 1.0 && t.exponent < 2.0)
    }

    pub fn is_linear(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.coeff == 0.0 || t.exponent == 1.0)
    }

    /// Upper bound of `c''` on `[lo, hi]`. Each term's `c''` is monotone, so the
    /// per-term endpoint maximum bounds the sum (exact when all terms agree).
    pub fn max_curvature_on(&self, lo: f64, hi: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.curvature(lo).max(t.curvature(hi)))
            .sum()
    }

    /// Substitutes `z ↦ z^{1/r}` termwise.
    pub(crate) fn reparametrized(terms: &[CostTerm], r: f64) -> Result<Self> {
        Self::new(
            terms
                .iter()
                .map(|t| CostTerm::new(t.coeff, t.exponent / r))
                .collect(),
        )
    }
}

impl TryFrom<Vec<CostTerm>> for CostFunction {
    type Error = Error;

    fn try_from(terms: Vec<CostTerm>) -> Result<Self> {
        Self::new(terms)
    }
}

impl From<CostFunction> for Vec<CostTerm> {
    fn from(c: CostFunction) -> Self {
        c.terms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_slope_is_constant() {
        let c = CostFunction::linear(0.25).unwrap();
        assert_eq!(c.eval(0.7, Order::First).unwrap(), 0.25);
        assert_eq!(c.eval(0.0, Order::First).unwrap(), 0.25);
        assert_eq!(c.eval(0.7, Order::Second).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_curvature() {
        let c = CostFunction::power(1.0, 2.0).unwrap();
        assert_eq!(c.eval(3.0, Order::Second).unwrap(), 2.0);
        assert_eq!(c.eval(3.0, Order::Value).unwrap(), 9.0);
    }

    #[test]
    fn cubic_sum_slope() {
        let c = CostFunction::new(vec![CostTerm::new(1.0, 1.0), CostTerm::new(0.5, 3.0)]).unwrap();
        assert_eq!(c.eval(2.0, Order::First).unwrap(), 7.0);
    }

    #[test]
    fn zero_cost_at_origin() {
        let c = CostFunction::new(vec![CostTerm::new(2.0, 1.5), CostTerm::new(0.1, 4.0)]).unwrap();
        assert_eq!(c.value(0.0), 0.0);
        assert_eq!(c.eval(0.0, Order::Second).unwrap(), f64::INFINITY);
        assert!(c.has_singular_curvature());
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(matches!(
            CostFunction::power(1.0, 0.5),
            Err(Error::InvalidCost(msg)) if msg.contains("convexity")
        ));
        assert!(CostFunction::linear(-1.0).is_err());
        assert!(CostFunction::new(vec![CostTerm::new(0.0, 2.0)]).is_err());
        assert!(CostFunction::new(vec![]).is_err());
    }

    #[test]
    fn negative_argument_is_domain_error() {
        let c = CostFunction::linear(1.0).unwrap();
        assert!(matches!(c.eval(-0.1, Order::Value), Err(Error::Domain(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = CostFunction::new(vec![
            CostTerm::new(0.3, 1.0),
            CostTerm::new(0.7, 2.5),
            CostTerm::new(0.2, 4.0),
        ])
        .unwrap();
        let h = 1e-6;
        for &z in &[0.1, 0.5, 1.3] {
            let d1 = (c.value(z + h) - c.value(z - h)) / (2.0 * h);
            let d2 = (c.slope(z + h) - c.slope(z - h)) / (2.0 * h);
            assert!((d1 - c.slope(z)).abs() < 1e-7);
            assert!((d2 - c.curvature(z)).abs() < 1e-6);
        }
    }
}
