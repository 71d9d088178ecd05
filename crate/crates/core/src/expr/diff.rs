use std::collections::HashMap;

use super::{Expr, Node};

/// Exact partial derivative, memoised over the shared DAG so that repeated
/// subtrees are differentiated once.
pub(super) fn differentiate(f: &Expr, var: &str) -> Expr {
    let mut memo: HashMap<*const Node, Expr> = HashMap::new();
    d(f, var, &mut memo)
}

fn d(e: &Expr, var: &str, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    if let Some(r) = memo.get(&e.ptr()) {
        return r.clone();
    }
    let out = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(v) => {
            if &**v == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Add(a, b) => {
            let (da, db) = (d(a, var, memo), d(b, var, memo));
            Expr::add(&da, &db)
        }
        Node::Mul(a, b) => {
            let (da, db) = (d(a, var, memo), d(b, var, memo));
            Expr::add(&Expr::mul(&da, b), &Expr::mul(a, &db))
        }
        Node::Div(a, b) => {
            let (da, db) = (d(a, var, memo), d(b, var, memo));
            let first = Expr::div(&da, b);
            if db.is_zero() {
                first
            } else {
                let second = Expr::div(&Expr::mul(a, &db), &Expr::powi(b, 2));
                Expr::sub(&first, &second)
            }
        }
        Node::Neg(a) => Expr::neg(&d(a, var, memo)),
        Node::Pow(a, n) => {
            let da = d(a, var, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                let outer = Expr::mul(&Expr::constant(*n as f64), &Expr::powi(a, n - 1));
                Expr::mul(&outer, &da)
            }
        }
        Node::PowF(a, c) => {
            let da = d(a, var, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                let outer = Expr::mul(&Expr::constant(*c), &Expr::powf(a, c - 1.0));
                Expr::mul(&outer, &da)
            }
        }
        Node::Sin(a) => Expr::mul(&Expr::cos(a), &d(a, var, memo)),
        Node::Cos(a) => Expr::mul(&Expr::neg(&Expr::sin(a)), &d(a, var, memo)),
        Node::Exp(a) => Expr::mul(e, &d(a, var, memo)),
    };
    memo.insert(e.ptr(), out.clone());
    out
}
