//! Closed-loop models, homogenization and Lie-derivative chains.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse, EvalError, Expr, Tape};
use crate::sampling;

/// Name of the homogenizing coordinate.
pub const W: &str = "w";

/// Smallest |w| accepted when evaluating homogenized expressions.
pub const W_GUARD: f64 = 1e-12;

pub fn x_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

pub fn e_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("e{i}")).collect()
}

pub fn u_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("u{i}")).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Plant ẋ = f(x, u), controller u = k(x) and triggering condition Γ(x, e).
#[derive(Debug, Clone)]
pub struct ControlModel {
    pub n: usize,
    pub m: usize,
    pub f: Vec<Expr>,
    pub k: Vec<Expr>,
    pub gamma: Expr,
    /// Radius of the origin-centred validity ball in extended-state space.
    pub region_radius: f64,
}

impl ControlModel {
    pub fn new(n: usize, m: usize, f: Vec<Expr>, k: Vec<Expr>, gamma: Expr, region_radius: f64) -> Result<Self> {
        if f.len() != n {
            return Err(Error::Dimension(format!("f has {} components, expected n = {n}", f.len())));
        }
        if k.len() != m {
            return Err(Error::Dimension(format!("k has {} components, expected m = {m}", k.len())));
        }
        if !(region_radius > 0.0) {
            return Err(Error::Invalid(format!("region radius must be positive, got {region_radius}")));
        }
        let (xs, us, es) = (x_names(n), u_names(m), e_names(n));
        let check = |e: &Expr, allowed: &[&Vec<String>], what: &str| -> Result<()> {
            for v in e.free_vars() {
                if !allowed.iter().any(|set| set.contains(&v)) && !(what == "gamma" && v == W) {
                    return Err(Error::Dimension(format!("{what} refers to unexpected variable '{v}'")));
                }
            }
            Ok(())
        };
        for fi in &f {
            check(fi, &[&xs, &us], "f")?;
        }
        for ki in &k {
            check(ki, &[&xs], "k")?;
        }
        check(&gamma, &[&xs, &es], "gamma")?;
        Ok(ControlModel { n, m, f, k, gamma, region_radius })
    }

    /// Build from expression strings, with `params` folded into constants.
    pub fn parse(
        n: usize,
        m: usize,
        f: &[impl AsRef<str>],
        k: &[impl AsRef<str>],
        gamma: &str,
        params: &HashMap<String, f64>,
        region_radius: f64,
    ) -> Result<Self> {
        let xs = x_names(n);
        let us = u_names(m);
        let es = e_names(n);
        let xu: Vec<&str> = xs.iter().chain(&us).map(String::as_str).collect();
        let mut xew: Vec<&str> = xs.iter().chain(&es).map(String::as_str).collect();
        xew.push(W);
        let f = f.iter().map(|s| parse(s.as_ref(), &xu, params)).collect::<std::result::Result<Vec<_>, _>>()?;
        let k = k.iter().map(|s| parse(s.as_ref(), &refs(&xs), params)).collect::<std::result::Result<Vec<_>, _>>()?;
        let gamma = parse(gamma, &xew, params)?;
        ControlModel::new(n, m, f, k, gamma, region_radius)
    }
}

/// The extended closed loop ż = Z(z) with z = (x, e) or z = (x, e, w).
#[derive(Debug, Clone)]
pub struct ExtendedField {
    pub n: usize,
    pub vars: Vec<String>,
    pub z: Vec<Expr>,
    /// Homogeneity degree, once verified or assigned by homogenization.
    pub xi: Option<f64>,
    pub homogenized: bool,
    tape: Tape,
}

impl ExtendedField {
    fn assemble(n: usize, vars: Vec<String>, z: Vec<Expr>, xi: Option<f64>, homogenized: bool) -> Result<Self> {
        let tape = Tape::compile(&z, &refs(&vars))?;
        Ok(ExtendedField { n, vars, z, xi, homogenized, tape })
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn var_refs(&self) -> Vec<&str> {
        refs(&self.vars)
    }

    /// Evaluate Z(z) into `out`.
    pub fn eval_into(&self, z: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> std::result::Result<(), EvalError> {
        if self.homogenized && z[self.dim() - 1].abs() <= W_GUARD {
            return Err(EvalError::Domain("homogenized field evaluated at w = 0".into()));
        }
        self.tape.eval_with(z, out, scratch)
    }

    pub fn eval(&self, z: &[f64]) -> std::result::Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(z, &mut out, &mut Vec::new())?;
        Ok(out)
    }

    /// Record a homogeneity degree after checking it numerically.
    pub fn with_degree(mut self, xi: f64, samples: usize, seed: u64) -> Result<Self> {
        let report = verify_homogeneity(&self, xi, samples, 1.0, seed);
        if !report.passed {
            return Err(Error::Invalid(format!(
                "field is not homogeneous of degree {xi} (max relative residual {:e})",
                report.max_residual
            )));
        }
        self.xi = Some(xi);
        Ok(self)
    }

    /// Extended state for a fresh sample: (x, 0) or (x, 0, 1).
    pub fn fresh_state(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        z[..self.n].copy_from_slice(x);
        if self.homogenized {
            z[2 * self.n] = 1.0;
        }
        z
    }
}

/// Z_x = f(x, k(x + e)), Z_e = −Z_x.
pub fn build_extended(model: &ControlModel) -> Result<ExtendedField> {
    let n = model.n;
    let (xs, es, us) = (x_names(n), e_names(n), u_names(model.m));
    let shift: HashMap<String, Expr> = xs
        .iter()
        .zip(&es)
        .map(|(x, e)| (x.clone(), Expr::add(&Expr::var(x), &Expr::var(e))))
        .collect();
    let u_sub: HashMap<String, Expr> = us
        .iter()
        .zip(&model.k)
        .map(|(u, k)| (u.clone(), k.substitute(&shift)))
        .collect();
    let zx: Vec<Expr> = model.f.iter().map(|fi| fi.substitute(&u_sub)).collect();
    let ze: Vec<Expr> = zx.iter().map(Expr::neg).collect();
    let vars: Vec<String> = xs.into_iter().chain(es).collect();
    ExtendedField::assemble(n, vars, zx.into_iter().chain(ze).collect(), None, false)
}

fn scale_power(w: &Expr, exponent: f64) -> Expr {
    Expr::powf(w, exponent)
}

/// Components w^{ξ+1}·Z_i(z/w) plus ẇ = 0.
pub fn homogenize_field(field: &ExtendedField, target_xi: f64) -> Result<ExtendedField> {
    if !(target_xi > 0.0) {
        return Err(Error::Invalid(format!("homogenization degree must be positive, got {target_xi}")));
    }
    if field.homogenized {
        return Err(Error::Invalid("field is already homogenized".into()));
    }
    let w = Expr::var(W);
    let bindings: HashMap<String, Expr> = field
        .vars
        .iter()
        .map(|v| (v.clone(), Expr::div(&Expr::var(v), &w)))
        .collect();
    let factor = scale_power(&w, target_xi + 1.0);
    let mut z: Vec<Expr> = field.z.iter().map(|zi| Expr::mul(&factor, &zi.substitute(&bindings))).collect();
    z.push(Expr::zero());
    let mut vars = field.vars.clone();
    vars.push(W.to_string());
    ExtendedField::assemble(field.n, vars, z, Some(target_xi), true)
}

/// w^{ϑ+1}·Γ(z/w). The result is homogeneous of degree ϑ+1 in (z, w).
pub fn homogenize_trigger(gamma: &Expr, target_theta: f64) -> Expr {
    let w = Expr::var(W);
    let bindings: HashMap<String, Expr> = gamma
        .free_vars()
        .into_iter()
        .filter(|v| v != W)
        .map(|v| {
            let e = Expr::div(&Expr::var(&v), &w);
            (v, e)
        })
        .collect();
    Expr::mul(&scale_power(&w, target_theta + 1.0), &gamma.substitute(&bindings))
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityReport {
    pub degree: f64,
    pub samples: usize,
    pub max_residual: f64,
    pub passed: bool,
}

pub const HOMOGENEITY_TOL: f64 = 1e-9;

fn random_state(rng: &mut impl Rng, dim: usize, radius: f64, w_last: bool) -> Vec<f64> {
    let u: Vec<f64> = (0..=dim).map(|_| rng.gen_range(1e-9..1.0)).collect();
    let mut z = sampling::cube_to_ball(&u, radius);
    if w_last {
        // keep w away from the excluded hyperplane
        let w = &mut z[dim - 1];
        *w = w.abs().max(0.05 * radius);
    }
    z
}

/// Check Z(λz) = λ^{ξ+1}·Z(z) for λ ∈ {0.5, 2} at random points of the ball.
pub fn verify_homogeneity(field: &ExtendedField, xi: f64, samples: usize, radius: f64, seed: u64) -> HomogeneityReport {
    let dim = field.dim();
    let mut rng = sampling::rng(seed);
    let mut max_residual: f64 = 0.0;
    let mut scratch = Vec::new();
    let (mut a, mut b) = (vec![0.0; dim], vec![0.0; dim]);
    let mut evaluated = 0;
    for _ in 0..samples.max(1) {
        let z = random_state(&mut rng, dim, radius, field.homogenized);
        if field.eval_into(&z, &mut a, &mut scratch).is_err() {
            continue;
        }
        for lambda in [0.5, 2.0] {
            let zl: Vec<f64> = z.iter().map(|v| v * lambda).collect();
            if field.eval_into(&zl, &mut b, &mut scratch).is_err() {
                max_residual = f64::INFINITY;
                continue;
            }
            let s = lambda.powf(xi + 1.0);
            let scale = a.iter().map(|v| (v * s).abs()).fold(0.0, f64::max);
            let diff = a.iter().zip(&b).map(|(av, bv)| (bv - s * av).abs()).fold(0.0, f64::max);
            let r = if scale > 0.0 { diff / scale } else if diff > 0.0 { f64::INFINITY } else { 0.0 };
            max_residual = max_residual.max(r);
        }
        evaluated += 1;
    }
    HomogeneityReport {
        degree: xi,
        samples: evaluated,
        max_residual,
        passed: evaluated > 0 && max_residual <= HOMOGENEITY_TOL,
    }
}

/// Estimate the scaling degree d of a scalar function with g(λz) = λ^d g(z),
/// returning `None` when no single degree fits.
pub fn scalar_degree(g: &Expr, vars: &[&str], w_last: bool, seed: u64) -> Option<f64> {
    let tape = Tape::compile(std::slice::from_ref(g), vars).ok()?;
    let mut rng = sampling::rng(seed);
    let mut estimate: Option<f64> = None;
    for _ in 0..32 {
        let z = random_state(&mut rng, vars.len(), 1.0, w_last);
        let g1 = tape.eval(&z).ok()?[0];
        if g1.abs() < 1e-12 {
            continue;
        }
        let z2: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        let g2 = tape.eval(&z2).ok()?[0];
        if g2 / g1 <= 0.0 {
            return None;
        }
        let d = (g2 / g1).log2();
        let d = if (d - d.round()).abs() < 1e-9 { d.round() } else { d };
        match estimate {
            None => estimate = Some(d),
            Some(e) if (e - d).abs() > 1e-7 * (1.0 + e.abs()) => return None,
            _ => {}
        }
    }
    estimate
}

/// Γ together with its first p Lie derivatives along a field.
#[derive(Debug, Clone)]
pub struct LieChain {
    pub entries: Vec<Expr>,
    pub vars: Vec<String>,
    /// Homogeneity degree of the field, if any.
    pub xi: Option<f64>,
    /// Scaling degree of Γ: Γ(λz) = λ^{gamma_degree}·Γ(z).
    pub gamma_degree: Option<f64>,
    pub homogenized: bool,
    tape: Tape,
}

impl LieChain {
    /// Highest derivative order available.
    pub fn order(&self) -> usize {
        self.entries.len() - 1
    }

    /// (Γ, L Γ, ..., L^p Γ) at z.
    pub fn eval(&self, z: &[f64]) -> std::result::Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.entries.len()];
        self.eval_into(z, &mut out, &mut Vec::new())?;
        Ok(out)
    }

    pub fn eval_into(&self, z: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> std::result::Result<(), EvalError> {
        if self.homogenized && z[z.len() - 1].abs() <= W_GUARD {
            return Err(EvalError::Domain("homogenized chain evaluated at w = 0".into()));
        }
        self.tape.eval_with(z, out, scratch)
    }

    /// μ^p(z): the first p entries.
    pub fn mu(&self, z: &[f64], p: usize) -> std::result::Result<Vec<f64>, EvalError> {
        assert!(p <= self.entries.len());
        let mut v = self.eval(z)?;
        v.truncate(p);
        Ok(v)
    }

    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }

    /// Scaling degree of entry k: ϑ + kξ.
    pub fn entry_degree(&self, k: usize) -> Option<f64> {
        Some(self.gamma_degree? + k as f64 * self.xi?)
    }
}

/// L_Z g = Σ_i ∂g/∂z_i · Z_i.
pub fn lie_derivative(g: &Expr, field: &ExtendedField) -> Expr {
    let terms: Vec<Expr> = field
        .vars
        .iter()
        .zip(&field.z)
        .filter(|(_, zi)| !zi.is_zero())
        .map(|(v, zi)| Expr::mul(&g.differentiate(v), zi))
        .collect();
    Expr::sum(&terms)
}

pub fn lie_chain(field: &ExtendedField, gamma: &Expr, p: usize) -> Result<LieChain> {
    if p < 1 {
        return Err(Error::Invalid("Lie chain order must be at least 1".into()));
    }
    let mut entries = vec![gamma.clone()];
    for _ in 0..p {
        let next = lie_derivative(entries.last().unwrap(), field);
        entries.push(next);
    }
    let vars = field.vars.clone();
    let tape = Tape::compile(&entries, &refs(&vars))?;
    let gamma_degree = field
        .xi
        .and_then(|_| scalar_degree(gamma, &refs(&vars), field.homogenized, 0x5eed));
    Ok(LieChain { entries, vars, xi: field.xi, gamma_degree, homogenized: field.homogenized, tape })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> HashMap<String, f64> {
        HashMap::new()
    }

    #[test]
    fn dimension_mismatch() {
        let r = ControlModel::parse(2, 1, &["x1"], &["x1"], "e1", &params(), 1.0);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn null_dynamics() {
        let m = ControlModel::parse(1, 1, &["u1"], &["0"], "e1^2 - x1^2", &params(), 1.0).unwrap();
        let z = build_extended(&m).unwrap();
        assert!(z.z.iter().all(Expr::is_zero));
    }

    #[test]
    fn constant_trigger_homogenizes_to_multiple_of_w() {
        let g = parse("2.5", &[], &params()).unwrap();
        let h = homogenize_trigger(&g, 0.0);
        assert_eq!(h.free_vars().into_iter().collect::<Vec<_>>(), vec![W.to_string()]);
        let at = crate::expr::VarAssignment::new().with(W, 3.0);
        assert_eq!(h.evaluate(&at).unwrap(), 7.5);
    }

    #[test]
    fn constant_gamma_has_zero_chain() {
        let m = ControlModel::parse(1, 1, &["-x1 + u1"], &["-x1"], "-1", &params(), 1.0).unwrap();
        let z = build_extended(&m).unwrap();
        let c = lie_chain(&z, &m.gamma, 3).unwrap();
        assert!(c.entries[1..].iter().all(Expr::is_zero));
    }
}
