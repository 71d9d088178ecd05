//! Immutable scalar expressions over named variables.
//!
//! Trees are reference counted so that subexpressions produced by
//! differentiation and substitution are shared rather than copied. All
//! constructors fold constants and apply the annihilator/identity rules
//! (`0·a → 0`, `1·a → a`, `a + 0 → a`, ...). Nothing else is simplified.

mod diff;
mod eval;
mod parse;
mod tape;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

pub use eval::{EvalError, VarAssignment};
pub use parse::{parse, ParseError};
pub use tape::Tape;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Arc<str>),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    /// Non-negative integer power.
    Pow(Expr, u32),
    /// Constant real exponent; the base must stay positive unless the exponent is integral.
    PowF(Expr, f64),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

fn finite_or(v: f64, fallback: impl FnOnce() -> Expr) -> Expr {
    if v.is_finite() {
        Expr::constant(v)
    } else {
        fallback()
    }
}

impl Expr {
    fn wrap(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn constant(c: f64) -> Expr {
        // normalise -0.0 so printing and hashing agree
        Expr::wrap(Node::Const(if c == 0.0 { 0.0 } else { c }))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(name: &str) -> Expr {
        Expr::wrap(Node::Var(Arc::from(name)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => finite_or(x + y, || Expr::wrap(Node::Add(a.clone(), b.clone()))),
            (Some(x), _) if x == 0.0 => b.clone(),
            (_, Some(y)) if y == 0.0 => a.clone(),
            _ => Expr::wrap(Node::Add(a.clone(), b.clone())),
        }
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        Expr::add(a, &Expr::neg(b))
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => finite_or(x * y, || Expr::wrap(Node::Mul(a.clone(), b.clone()))),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b.clone(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::wrap(Node::Mul(a.clone(), b.clone())),
        }
    }

    /// Quotient. A constant-zero denominator is kept as a node so evaluation
    /// reports the pole; the parser rejects it up front.
    pub fn div(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (_, Some(y)) if y == 0.0 => Expr::wrap(Node::Div(a.clone(), b.clone())),
            (Some(x), Some(y)) => finite_or(x / y, || Expr::wrap(Node::Div(a.clone(), b.clone()))),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            _ => Expr::wrap(Node::Div(a.clone(), b.clone())),
        }
    }

    pub fn neg(a: &Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::wrap(Node::Neg(a.clone())),
        }
    }

    pub fn powi(a: &Expr, n: u32) -> Expr {
        match (n, a.as_const()) {
            (0, _) => Expr::one(),
            (1, _) => a.clone(),
            (_, Some(c)) => finite_or(c.powi(n as i32), || Expr::wrap(Node::Pow(a.clone(), n))),
            _ => Expr::wrap(Node::Pow(a.clone(), n)),
        }
    }

    /// Power with a constant real exponent. Integral non-negative exponents
    /// become [`Node::Pow`].
    pub fn powf(a: &Expr, c: f64) -> Expr {
        if c >= 0.0 && c.fract() == 0.0 && c <= u32::MAX as f64 {
            return Expr::powi(a, c as u32);
        }
        if let Some(b) = a.as_const() {
            if let Some(v) = eval::real_pow(b, c).ok().filter(|v| v.is_finite()) {
                return Expr::constant(v);
            }
        }
        Expr::wrap(Node::PowF(a.clone(), c))
    }

    pub fn sin(a: &Expr) -> Expr {
        match a.as_const() {
            Some(c) => Expr::constant(c.sin()),
            None => Expr::wrap(Node::Sin(a.clone())),
        }
    }

    pub fn cos(a: &Expr) -> Expr {
        match a.as_const() {
            Some(c) => Expr::constant(c.cos()),
            None => Expr::wrap(Node::Cos(a.clone())),
        }
    }

    pub fn exp(a: &Expr) -> Expr {
        match a.as_const() {
            Some(c) => finite_or(c.exp(), || Expr::wrap(Node::Exp(a.clone()))),
            None => Expr::wrap(Node::Exp(a.clone())),
        }
    }

    /// Sum of a sequence, folding as it goes.
    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a Expr>) -> Expr {
        terms.into_iter().fold(Expr::zero(), |acc, t| Expr::add(&acc, t))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Var(v) => {
                    out.insert(v.to_string());
                }
                Node::Const(_) => {}
                _ => stack.extend(e.children().into_iter().cloned()),
            }
        }
        out
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) => vec![],
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => vec![a, b],
            Node::Neg(a)
            | Node::Pow(a, _)
            | Node::PowF(a, _)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Exp(a) => vec![a],
        }
    }

    /// Number of distinct nodes in the shared DAG.
    pub fn dag_size(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if seen.insert(e.ptr()) {
                stack.extend(e.children().into_iter().cloned());
            }
        }
        seen.len()
    }

    pub fn differentiate(&self, var: &str) -> Expr {
        diff::differentiate(self, var)
    }

    pub fn evaluate(&self, at: &VarAssignment) -> Result<f64, EvalError> {
        eval::evaluate(self, at)
    }

    /// Simultaneous substitution of variables by expressions.
    pub fn substitute(&self, bindings: &HashMap<String, Expr>) -> Expr {
        if bindings.is_empty() {
            return self.clone();
        }
        let mut memo: HashMap<*const Node, Expr> = HashMap::new();
        substitute_rec(self, bindings, &mut memo)
    }
}

fn substitute_rec(
    e: &Expr,
    bindings: &HashMap<String, Expr>,
    memo: &mut HashMap<*const Node, Expr>,
) -> Expr {
    if let Some(r) = memo.get(&e.ptr()) {
        return r.clone();
    }
    let mut go = |x: &Expr| substitute_rec(x, bindings, memo);
    let out = match e.node() {
        Node::Const(_) => e.clone(),
        Node::Var(v) => bindings.get(&**v).cloned().unwrap_or_else(|| e.clone()),
        Node::Add(a, b) => {
            let (a, b) = (go(a), go(b));
            Expr::add(&a, &b)
        }
        Node::Mul(a, b) => {
            let (a, b) = (go(a), go(b));
            Expr::mul(&a, &b)
        }
        Node::Div(a, b) => {
            let (a, b) = (go(a), go(b));
            Expr::div(&a, &b)
        }
        Node::Neg(a) => Expr::neg(&go(a)),
        Node::Pow(a, n) => Expr::powi(&go(a), *n),
        Node::PowF(a, c) => Expr::powf(&go(a), *c),
        Node::Sin(a) => Expr::sin(&go(a)),
        Node::Cos(a) => Expr::cos(&go(a)),
        Node::Exp(a) => Expr::exp(&go(a)),
    };
    memo.insert(e.ptr(), out.clone());
    out
}

// Printing. Precedence levels mirror the parser: sums 1, products 2,
// unary minus 3, powers 4, atoms 5.

fn prec(e: &Expr) -> u8 {
    match e.node() {
        Node::Add(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        Node::Const(c) if *c < 0.0 => 3,
        Node::Pow(..) | Node::PowF(..) => 4,
        _ => 5,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    // Debug gives the shortest round-trip form and switches to exponent
    // notation for very large or small magnitudes.
    write!(f, "{c:?}")
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e.node() {
        Node::Const(c) => write_num(f, *c),
        Node::Var(v) => write!(f, "{v}"),
        Node::Add(a, b) => {
            write_at(f, a, 1)?;
            match b.node() {
                Node::Neg(inner) => {
                    write!(f, " - ")?;
                    write_at(f, inner, 2)
                }
                Node::Const(c) if *c < 0.0 => {
                    write!(f, " - ")?;
                    write_num(f, -c)
                }
                _ => {
                    write!(f, " + ")?;
                    write_at(f, b, 2)
                }
            }
        }
        Node::Mul(a, b) => {
            write_at(f, a, 2)?;
            write!(f, " * ")?;
            write_at(f, b, 3)
        }
        Node::Div(a, b) => {
            write_at(f, a, 2)?;
            write!(f, " / ")?;
            write_at(f, b, 3)
        }
        Node::Neg(a) => {
            write!(f, "-")?;
            write_at(f, a, 3)
        }
        Node::Pow(a, n) => {
            write_at(f, a, 5)?;
            write!(f, "^{n}")
        }
        Node::PowF(a, c) => {
            write_at(f, a, 5)?;
            if *c < 0.0 {
                write!(f, "^(")?;
                write_num(f, *c)?;
                write!(f, ")")
            } else {
                write!(f, "^")?;
                write_num(f, *c)
            }
        }
        Node::Sin(a) => {
            write!(f, "sin(")?;
            write_expr(f, a)?;
            write!(f, ")")
        }
        Node::Cos(a) => {
            write!(f, "cos(")?;
            write_expr(f, a)?;
            write!(f, ")")
        }
        Node::Exp(a) => {
            write!(f, "exp(")?;
            write_expr(f, a)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, vars: &[&str]) -> Expr {
        parse(s, vars, &HashMap::new()).unwrap()
    }

    #[test]
    fn folding_rules() {
        let x = Expr::var("x");
        assert_eq!(Expr::mul(&Expr::zero(), &x), Expr::zero());
        assert_eq!(Expr::mul(&Expr::one(), &x), x);
        assert_eq!(Expr::add(&Expr::constant(2.0), &Expr::constant(3.5)), Expr::constant(5.5));
        assert_eq!(Expr::neg(&Expr::neg(&x)), x);
        assert_eq!(Expr::powf(&x, 2.0), Expr::powi(&x, 2));
    }

    #[test]
    fn printing_is_parenthesised_minimally() {
        let e = p("(x1 + x2) * x3 - x1 / (x2 * x3)", &["x1", "x2", "x3"]);
        assert_eq!(e.to_string(), "(x1 + x2) * x3 - x1 / (x2 * x3)");
        let e = p("-x1^2 + (-x1)^2 + x1^(-1.5)", &["x1"]);
        assert_eq!(e.to_string(), "-x1^2 + (-x1)^2 + x1^(-1.5)");
    }

    #[test]
    fn substitution_example() {
        let e = p("x1^3", &["x1"]);
        let mut b = HashMap::new();
        b.insert("x1".to_string(), p("x1 / w", &["x1", "w"]));
        assert_eq!(e.substitute(&b).to_string(), "(x1 / w)^3");
        assert_eq!(e.substitute(&HashMap::new()), e);
    }

    #[test]
    fn free_vars_and_size() {
        let e = p("x1*x2 + sin(x1)", &["x1", "x2", "x3"]);
        let v: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(v, vec!["x1", "x2"]);
        assert!(e.dag_size() >= 5);
    }
}
