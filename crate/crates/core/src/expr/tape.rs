use std::collections::HashMap;

use super::eval::{checked_div, real_pow, EvalError};
use super::{Expr, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Var(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Pow(usize, u32),
    PowF(usize, u64),
    Sin(usize),
    Cos(usize),
    Exp(usize),
}

/// Straight-line evaluation program for a batch of expressions.
///
/// Structurally identical subexpressions are merged (hash-consing), so
/// the many repeated subtrees in high-order Lie derivatives cost one slot
/// each. Evaluation is allocation free given a scratch buffer.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    n_vars: usize,
}

struct Builder<'a> {
    vars: &'a [&'a str],
    ops: Vec<Op>,
    dedup: HashMap<Op, usize>,
    by_ptr: HashMap<*const Node, usize>,
}

impl Builder<'_> {
    fn push(&mut self, op: Op) -> usize {
        // normalise commutative operand order so a*b and b*a share a slot
        let op = match op {
            Op::Add(a, b) if a > b => Op::Add(b, a),
            Op::Mul(a, b) if a > b => Op::Mul(b, a),
            other => other,
        };
        if let Some(&i) = self.dedup.get(&op) {
            return i;
        }
        self.ops.push(op);
        let i = self.ops.len() - 1;
        self.dedup.insert(op, i);
        i
    }

    fn visit(&mut self, root: &Expr) -> Result<usize, EvalError> {
        // iterative post-order to survive deep trees
        let mut stack: Vec<(Expr, bool)> = vec![(root.clone(), false)];
        while let Some((e, expanded)) = stack.pop() {
            if self.by_ptr.contains_key(&e.ptr()) {
                continue;
            }
            if !expanded {
                stack.push((e.clone(), true));
                for c in e.children() {
                    if !self.by_ptr.contains_key(&c.ptr()) {
                        stack.push((c.clone(), false));
                    }
                }
                continue;
            }
            let slot = |b: &Self, x: &Expr| b.by_ptr[&x.ptr()];
            let op = match e.node() {
                Node::Const(c) => Op::Const(c.to_bits()),
                Node::Var(v) => {
                    let i = self
                        .vars
                        .iter()
                        .position(|n| *n == &**v)
                        .ok_or_else(|| EvalError::MissingVariable(v.to_string()))?;
                    Op::Var(i)
                }
                Node::Add(a, b) => Op::Add(slot(self, a), slot(self, b)),
                Node::Mul(a, b) => Op::Mul(slot(self, a), slot(self, b)),
                Node::Div(a, b) => Op::Div(slot(self, a), slot(self, b)),
                Node::Neg(a) => Op::Neg(slot(self, a)),
                Node::Pow(a, n) => Op::Pow(slot(self, a), *n),
                Node::PowF(a, c) => Op::PowF(slot(self, a), c.to_bits()),
                Node::Sin(a) => Op::Sin(slot(self, a)),
                Node::Cos(a) => Op::Cos(slot(self, a)),
                Node::Exp(a) => Op::Exp(slot(self, a)),
            };
            let i = self.push(op);
            self.by_ptr.insert(e.ptr(), i);
        }
        Ok(self.by_ptr[&root.ptr()])
    }
}

impl Tape {
    /// Compile `exprs` against the positional variable list `vars`.
    pub fn compile(exprs: &[Expr], vars: &[&str]) -> Result<Tape, EvalError> {
        let mut b = Builder { vars, ops: Vec::new(), dedup: HashMap::new(), by_ptr: HashMap::new() };
        let outputs = exprs.iter().map(|e| b.visit(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(Tape { ops: b.ops, outputs, n_vars: vars.len() })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Evaluate into `out` using caller-provided scratch space.
    pub fn eval_with(&self, x: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> Result<(), EvalError> {
        assert_eq!(x.len(), self.n_vars, "tape expects {} variables", self.n_vars);
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let r = |i: usize| scratch[i];
            let v = match *op {
                Op::Const(bits) => f64::from_bits(bits),
                Op::Var(i) => x[i],
                Op::Add(a, b) => r(a) + r(b),
                Op::Mul(a, b) => r(a) * r(b),
                Op::Div(a, b) => checked_div(r(a), r(b))?,
                Op::Neg(a) => -r(a),
                Op::Pow(a, n) => r(a).powi(n as i32),
                Op::PowF(a, c) => real_pow(r(a), f64::from_bits(c))?,
                Op::Sin(a) => r(a).sin(),
                Op::Cos(a) => r(a).cos(),
                Op::Exp(a) => r(a).exp(),
            };
            scratch.push(v);
        }
        for (o, &i) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[i];
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.outputs.len()];
        let mut scratch = Vec::new();
        self.eval_with(x, &mut out, &mut scratch)?;
        Ok(out)
    }
}
