//! Small dense linear programs of the form
//!
//! ```text
//!     minimize  cᵀχ   subject to  G χ ≥ h,   χ free
//! ```
//!
//! with few variables (p ≤ 9) and many constraints. They are solved through
//! the dual `max hᵀy s.t. Gᵀy = c, y ≥ 0`, which has only p equality rows, by
//! a two-phase revised simplex. The primal solution is read off the simplex
//! multipliers of the optimal dual basis.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { chi: Vec<f64>, objective: f64 },
    /// The constraint system G χ ≥ h has no solution.
    Infeasible,
    /// The objective is unbounded below over the feasible set.
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-11;
const MAX_ITER: usize = 50_000;

struct Simplex<'a> {
    /// p × (N + p) constraint matrix: dual columns followed by artificials.
    cols: &'a dyn Fn(usize) -> DVector<f64>,
    n_cols: usize,
    basis: Vec<usize>,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Simplex<'_> {
    fn basis_matrix(&self) -> DMatrix<f64> {
        let p = self.basis.len();
        let mut b = DMatrix::zeros(p, p);
        for (k, &j) in self.basis.iter().enumerate() {
            b.set_column(k, &(self.cols)(j));
        }
        b
    }

    /// Run simplex iterations for `cost` restricted to `allowed` columns.
    fn run(&mut self, rhs: &DVector<f64>, cost: &dyn Fn(usize) -> f64, allowed: &dyn Fn(usize) -> bool) -> Step {
        let mut degenerate_streak = 0usize;
        for _ in 0..MAX_ITER {
            let b = self.basis_matrix();
            let lu = b.clone().lu();
            let xb = lu.solve(rhs).expect("singular basis");
            let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| cost(j)));
            let pi = b.transpose().lu().solve(&cb).expect("singular basis");
            // pricing: Dantzig's rule, switching to Bland's rule on long degenerate runs
            let bland = degenerate_streak > 50;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.n_cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let aj = (self.cols)(j);
                let d = cost(j) - pi.dot(&aj);
                let scale = 1.0 + cost(j).abs() + aj.amax() * pi.amax();
                if d < -PIVOT_TOL * scale {
                    match entering {
                        None => entering = Some((j, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((j, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((j, _)) = entering else {
                return Step::Optimal;
            };
            let u = lu.solve(&(self.cols)(j)).expect("singular basis");
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.basis.len() {
                if u[i] > PIVOT_TOL {
                    let ratio = xb[i].max(0.0) / u[i];
                    let better = match leave {
                        None => true,
                        Some((k, r)) => ratio < r - 1e-15 || (ratio <= r + 1e-15 && self.basis[i] < self.basis[k]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((i, ratio)) = leave else {
                return Step::Unbounded;
            };
            degenerate_streak = if ratio <= 1e-15 { degenerate_streak + 1 } else { 0 };
            self.basis[i] = j;
        }
        panic!("simplex iteration limit reached");
    }
}

/// Solve `min cᵀχ s.t. G χ ≥ h` where `g_rows[k]` is row k of G.
pub fn solve(g_rows: &[Vec<f64>], h: &[f64], c: &[f64]) -> LpOutcome {
    let p = c.len();
    let n = g_rows.len();
    assert_eq!(h.len(), n);
    assert!(g_rows.iter().all(|r| r.len() == p));
    if n == 0 {
        return if c.iter().all(|&v| v == 0.0) {
            LpOutcome::Optimal { chi: vec![0.0; p], objective: 0.0 }
        } else {
            LpOutcome::Unbounded
        };
    }
    // Dual equality rows Gᵀy = c, flipped so the right-hand side is non-negative.
    let sign: Vec<f64> = c.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let rhs = DVector::from_iterator(p, c.iter().zip(&sign).map(|(v, s)| v * s));
    let col = |j: usize| -> DVector<f64> {
        if j < n {
            DVector::from_iterator(p, g_rows[j].iter().zip(&sign).map(|(v, s)| v * s))
        } else {
            let mut e = DVector::zeros(p);
            e[j - n] = 1.0;
            e
        }
    };
    let mut sx = Simplex { cols: &col, n_cols: n + p, basis: (n..n + p).collect() };

    // phase 1: drive the artificials out
    let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    sx.run(&rhs, &phase1_cost, &|_| true);
    let xb = sx.basis_matrix().lu().solve(&rhs).expect("singular basis");
    let infeasibility: f64 = sx.basis.iter().zip(xb.iter()).filter(|(&j, _)| j >= n).map(|(_, v)| v.abs()).sum();
    if infeasibility > 1e-9 * (1.0 + rhs.amax()) {
        // dual infeasible: the primal is unbounded (or infeasible, but then the
        // caller sees no optimum either way)
        return LpOutcome::Unbounded;
    }

    // phase 2: maximise hᵀy, i.e. minimise −hᵀy; artificials may not re-enter
    let cost = |j: usize| if j < n { -h[j] } else { 0.0 };
    match sx.run(&rhs, &cost, &|j| j < n) {
        Step::Unbounded => LpOutcome::Infeasible,
        Step::Optimal => {
            let b = sx.basis_matrix();
            let cb = DVector::from_iterator(p, sx.basis.iter().map(|&j| cost(j)));
            let pi = b.transpose().lu().solve(&cb).expect("singular basis");
            // multipliers refer to the sign-flipped rows
            let chi: Vec<f64> = (0..p).map(|i| -pi[i] * sign[i]).collect();
            let objective = chi.iter().zip(c).map(|(a, b)| a * b).sum();
            LpOutcome::Optimal { chi, objective }
        }
    }
}
