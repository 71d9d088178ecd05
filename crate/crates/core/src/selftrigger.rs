//! Guaranteed inter-execution time bounds from a comparison model.

use serde::Serialize;

use crate::comparison::{ComparisonModel, Sense};
use crate::error::{Error, Result};
use crate::model::LieChain;
use crate::poly;
use crate::sim::IntervalPolicy;

/// Relative factor applied to every root: down for lower bounds, up for upper bounds.
pub const ROOT_ROUNDING: f64 = 1e-9;

/// β_i = exp(A_p t*)_{1,i+1} · L^iΓ(z).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedFormP3,
    PolyRoot,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Ray scaling λ_j of this step.
    pub lambda: f64,
    /// q_j = λ_j^ξ.
    pub q: f64,
    /// Bound accumulated after this step (s).
    pub partial_sum: f64,
    /// High-order bound state o_{j−1} the step started from.
    pub o: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerBound {
    /// Lower bound in seconds; `f64::INFINITY` when the trigger never fires.
    pub tau_lower: f64,
    pub tau_upper: Option<f64>,
    pub iterations: Vec<IterationRecord>,
    pub method: Method,
}

impl TriggerBound {
    fn single(tau_lower: f64, method: Method) -> Self {
        TriggerBound { tau_lower, tau_upper: None, iterations: vec![], method }
    }
}

fn round_down(q: f64) -> f64 {
    q * (1.0 - ROOT_ROUNDING)
}

fn round_up(q: f64) -> f64 {
    q * (1.0 + ROOT_ROUNDING)
}

fn check_beta0(b: &BetaVector) -> Result<()> {
    match b.0.first() {
        Some(&b0) if b0 < 0.0 => Ok(()),
        Some(&b0) => Err(Error::ImmediateTrigger { gamma: b0 }),
        None => Err(Error::Invalid("empty β vector".into())),
    }
}

/// β from a precomputed exponential and a bound state.
pub fn beta_from(cm: &ComparisonModel, y: &[f64]) -> BetaVector {
    let row = cm.exp_at.row(0);
    BetaVector((0..cm.p).map(|i| row[i] * y[i]).collect())
}

pub fn beta(cm: &ComparisonModel, chain: &LieChain, z: &[f64]) -> Result<BetaVector> {
    if chain.order() + 1 < cm.p {
        return Err(Error::Invalid(format!("chain of order {} too short for p = {}", chain.order(), cm.p)));
    }
    let mu = chain.mu(z, cm.p)?;
    if mu[0] >= 0.0 {
        return Err(Error::ImmediateTrigger { gamma: mu[0] });
    }
    Ok(beta_from(cm, &mu))
}

/// Minimal positive root of β_0 + β_1 q + β_2 q² by the explicit quadratic formula.
pub fn tau_closed_form_p3(beta: &BetaVector, _xi: f64, t_star: f64) -> Result<TriggerBound> {
    if beta.0.len() != 3 {
        return Err(Error::Invalid(format!("closed form needs p = 3, got {}", beta.0.len())));
    }
    check_beta0(beta)?;
    let (b0, b1, b2) = (beta.0[0], beta.0[1], beta.0[2]);
    let disc = b1 * b1 - 4.0 * b2 * b0;
    // sign(β0) = −1 here, so the denominator is −β1 − √disc
    let tau = if disc < 0.0 {
        f64::INFINITY
    } else {
        let den = -b1 + b0.signum() * disc.sqrt();
        if den >= 0.0 {
            f64::INFINITY
        } else {
            round_down(2.0 * b0 / den) * t_star
        }
    };
    Ok(TriggerBound::single(tau, Method::ClosedFormP3))
}

/// Minimal positive root of Σ β_i q^i via Sturm isolation, rounded down.
pub fn tau_poly_root(beta: &BetaVector, _xi: f64, t_star: f64) -> Result<TriggerBound> {
    check_beta0(beta)?;
    let tau = match poly::min_positive_root(&beta.0) {
        Some(q) => round_down(q) * t_star,
        None => f64::INFINITY,
    };
    Ok(TriggerBound::single(tau, Method::PolyRoot))
}

/// Componentwise λ^{ϑ + iξ} scaling of a bound state.
fn dilate(o: &[f64], lambda: f64, theta: f64, xi: f64) -> Vec<f64> {
    o.iter().enumerate().map(|(i, v)| v * lambda.powf(theta + i as f64 * xi)).collect()
}

fn degrees(chain: &LieChain) -> Result<(f64, f64)> {
    match (chain.xi, chain.gamma_degree) {
        (Some(xi), Some(theta)) if xi > 0.0 => Ok((xi, theta)),
        _ => Err(Error::Invalid("iterative bound needs a homogeneous field and trigger".into())),
    }
}

/// Anytime refinement using a low-order model for the root and a high-order
/// model to propagate the bound state between steps.
pub fn tau_iterative(
    cm_low: &ComparisonModel,
    cm_high: &ComparisonModel,
    chain: &LieChain,
    z: &[f64],
    n_iter: usize,
) -> Result<TriggerBound> {
    if n_iter == 0 {
        return Err(Error::Invalid("n_iter must be at least 1".into()));
    }
    if cm_low.p > cm_high.p {
        return Err(Error::Invalid("low-order model must not exceed the high-order one".into()));
    }
    if (cm_low.t_star - cm_high.t_star).abs() > 1e-15 * cm_low.t_star {
        return Err(Error::Invalid("both comparison models must share t*".into()));
    }
    let (xi, theta) = degrees(chain)?;
    let t_star = cm_low.t_star;
    let mut o = chain.mu(z, cm_high.p)?;
    if o[0] >= 0.0 {
        return Err(Error::ImmediateTrigger { gamma: o[0] });
    }
    let mut iterations = Vec::new();
    let (mut total, mut prod) = (0.0, 1.0);
    for j in 0..n_iter {
        if j > 0 && o[0] > 0.0 {
            break;
        }
        let b = beta_from(cm_low, &o[..cm_low.p]);
        let Some(q_raw) = (if b.0[0] < 0.0 { poly::min_positive_root(&b.0) } else { None }) else {
            if j == 0 {
                return Ok(TriggerBound { tau_lower: f64::INFINITY, tau_upper: None, iterations, method: Method::Iterative });
            }
            break;
        };
        let q = round_down(q_raw);
        prod *= q;
        total += prod;
        let lambda = q.powf(1.0 / xi);
        iterations.push(IterationRecord { lambda, q, partial_sum: total * t_star, o: o.clone() });
        if j + 1 < n_iter {
            let scaled = nalgebra::DVector::from_vec(dilate(&o, lambda, theta, xi));
            o = (&cm_high.exp_at * scaled).iter().copied().collect();
        }
    }
    Ok(TriggerBound { tau_lower: total * t_star, tau_upper: None, iterations, method: Method::Iterative })
}

/// Upper bound from a model synthesized with the reversed inequality.
pub fn tau_upper(cm_upper: &ComparisonModel, chain: &LieChain, z: &[f64]) -> Result<f64> {
    if cm_upper.sense != Sense::Upper {
        return Err(Error::Invalid("tau_upper needs a comparison model of upper sense".into()));
    }
    let b = beta(cm_upper, chain, z)?;
    Ok(match poly::min_positive_root(&b.0) {
        Some(q) => round_up(q) * cm_upper.t_star,
        None => f64::INFINITY,
    })
}

/// Which lower-bound formula to use.
#[derive(Debug, Clone)]
pub enum BoundSpec {
    ClosedFormP3(ComparisonModel),
    PolyRoot(ComparisonModel),
    Iterative { low: ComparisonModel, high: ComparisonModel, n_iter: usize },
}

/// Self-trigger policy evaluated on fresh samples (e = 0, w = 1).
#[derive(Debug, Clone)]
pub struct SelfTrigger {
    pub chain: LieChain,
    pub spec: BoundSpec,
}

impl SelfTrigger {
    pub fn fresh_state(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.chain.vars.len()];
        z[..x.len()].copy_from_slice(x);
        if self.chain.homogenized {
            *z.last_mut().unwrap() = 1.0;
        }
        z
    }

    pub fn bound_at(&self, z: &[f64]) -> Result<TriggerBound> {
        match &self.spec {
            BoundSpec::ClosedFormP3(cm) => {
                let b = beta(cm, &self.chain, z)?;
                tau_closed_form_p3(&b, self.chain.xi.unwrap_or(1.0), cm.t_star)
            }
            BoundSpec::PolyRoot(cm) => {
                let b = beta(cm, &self.chain, z)?;
                tau_poly_root(&b, self.chain.xi.unwrap_or(1.0), cm.t_star)
            }
            BoundSpec::Iterative { low, high, n_iter } => tau_iterative(low, high, &self.chain, z, *n_iter),
        }
    }

    pub fn bound(&self, x: &[f64]) -> Result<TriggerBound> {
        self.bound_at(&self.fresh_state(x))
    }
}

impl IntervalPolicy for SelfTrigger {
    fn interval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.bound(x)?.tau_lower)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: &[f64]) -> BetaVector {
        BetaVector(v.to_vec())
    }

    #[test]
    fn closed_form_examples() {
        let t = 2e-3;
        let r = tau_closed_form_p3(&b(&[-1.0, 0.0, 1.0]), 2.0, t).unwrap();
        assert!((r.tau_lower / t - 1.0).abs() < 2e-9);
        let r = tau_closed_form_p3(&b(&[-1.0, 2.0, 0.0]), 2.0, t).unwrap();
        assert!((r.tau_lower / t - 0.5).abs() < 2e-9);
        let r = tau_closed_form_p3(&b(&[-1.0, 0.0, -1.0]), 2.0, t).unwrap();
        assert!(r.tau_lower.is_infinite());
    }

    #[test]
    fn closed_form_rejects_non_negative_beta0() {
        assert!(tau_closed_form_p3(&b(&[0.0, 1.0, 1.0]), 1.0, 1.0).is_err());
        assert!(tau_poly_root(&b(&[0.5, 1.0, 1.0]), 1.0, 1.0).is_err());
    }

    #[test]
    fn poly_root_on_factored_cubic() {
        let r = tau_poly_root(&b(&[-6.0, 11.0, -6.0, 1.0]), 1.0, 1.0).unwrap();
        assert!(r.tau_lower <= 1.0 && r.tau_lower > 1.0 - 2e-9);
    }

    #[test]
    fn rounding_is_one_sided() {
        let r = tau_poly_root(&b(&[-1.0, 0.0, 1.0]), 1.0, 1.0).unwrap();
        assert!(r.tau_lower < 1.0);
    }
}
