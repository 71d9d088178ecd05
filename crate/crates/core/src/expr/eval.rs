use std::collections::HashMap;

use thiserror::Error;

use super::{Expr, Node};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable '{0}' has no value")]
    MissingVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Variable name to value map.
#[derive(Debug, Clone, Default)]
pub struct VarAssignment(HashMap<String, f64>);

impl VarAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    /// Pair names with values positionally.
    pub fn from_slices(names: &[impl AsRef<str>], values: &[f64]) -> Self {
        let mut a = Self::new();
        for (n, v) in names.iter().zip(values) {
            a.set(n.as_ref(), *v);
        }
        a
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for VarAssignment {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        VarAssignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

pub(crate) fn real_pow(base: f64, c: f64) -> Result<f64, EvalError> {
    if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
        if base == 0.0 && c < 0.0 {
            return Err(EvalError::Domain("zero raised to a negative power".into()));
        }
        return Ok(base.powi(c as i32));
    }
    if base < 0.0 {
        return Err(EvalError::Domain(format!("negative base {base} with non-integer exponent {c}")));
    }
    if base == 0.0 && c < 0.0 {
        return Err(EvalError::Domain("zero raised to a negative power".into()));
    }
    Ok(base.powf(c))
}

pub(crate) fn checked_div(a: f64, b: f64) -> Result<f64, EvalError> {
    if b == 0.0 {
        Err(EvalError::Domain("division by zero".into()))
    } else {
        Ok(a / b)
    }
}

pub(super) fn evaluate(f: &Expr, at: &VarAssignment) -> Result<f64, EvalError> {
    let mut memo = HashMap::new();
    ev(f, at, &mut memo)
}

fn ev(e: &Expr, at: &VarAssignment, memo: &mut HashMap<*const Node, f64>) -> Result<f64, EvalError> {
    if let Some(v) = memo.get(&e.ptr()) {
        return Ok(*v);
    }
    let v = match e.node() {
        Node::Const(c) => *c,
        Node::Var(name) => at.get(name).ok_or_else(|| EvalError::MissingVariable(name.to_string()))?,
        Node::Add(a, b) => ev(a, at, memo)? + ev(b, at, memo)?,
        Node::Mul(a, b) => ev(a, at, memo)? * ev(b, at, memo)?,
        Node::Div(a, b) => {
            let x = ev(a, at, memo)?;
            checked_div(x, ev(b, at, memo)?)?
        }
        Node::Neg(a) => -ev(a, at, memo)?,
        Node::Pow(a, n) => ev(a, at, memo)?.powi(*n as i32),
        Node::PowF(a, c) => real_pow(ev(a, at, memo)?, *c)?,
        Node::Sin(a) => ev(a, at, memo)?.sin(),
        Node::Cos(a) => ev(a, at, memo)?.cos(),
        Node::Exp(a) => ev(a, at, memo)?.exp(),
    };
    memo.insert(e.ptr(), v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn simple_product() {
        let f = parse("x1*x2", &["x1", "x2"], &HashMap::new()).unwrap();
        let at = VarAssignment::new().with("x1", 2.0).with("x2", 3.0);
        assert_eq!(f.evaluate(&at).unwrap(), 6.0);
    }

    #[test]
    fn pole_is_domain_error() {
        let f = parse("w^(-1)*x1", &["w", "x1"], &HashMap::new()).unwrap();
        let at = VarAssignment::new().with("w", 0.0).with("x1", 1.0);
        assert!(matches!(f.evaluate(&at), Err(EvalError::Domain(_))));
        let g = parse("x1/w", &["w", "x1"], &HashMap::new()).unwrap();
        assert!(matches!(g.evaluate(&at), Err(EvalError::Domain(_))));
    }

    #[test]
    fn missing_variable() {
        let f = parse("x1 + x2", &["x1", "x2"], &HashMap::new()).unwrap();
        let at = VarAssignment::new().with("x1", 1.0);
        assert_eq!(f.evaluate(&at), Err(EvalError::MissingVariable("x2".into())));
    }
}
