//! Linear comparison models: coefficients χ with
//! L^pΓ ≤ Σ χ_i L^iΓ on a region, the companion matrix A_p and exp(A_p t).

mod expm;
pub mod lp;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use expm::matrix_exp;

use crate::error::{Error, Result};
use crate::manifold;
use crate::model::{ExtendedField, LieChain};
use crate::sampling::{self, norm};
use crate::sim::{self, IntegratorConfig, TriggerFn};

/// Direction of the Lie inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// L^pΓ ≤ Σχ_i L^iΓ: the comparison output bounds Γ from above (τ↓).
    Lower,
    /// L^pΓ ≥ Σχ_i L^iΓ: the comparison output bounds Γ from below (τ↑).
    Upper,
}

/// p × p companion matrix: ones on the superdiagonal, last row χ.
pub fn companion(chi: &[f64]) -> DMatrix<f64> {
    let p = chi.len();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, c) in chi.iter().enumerate() {
        a[(p - 1, j)] = *c;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonModel {
    pub p: usize,
    pub chi: Vec<f64>,
    pub a_p: DMatrix<f64>,
    pub sense: Sense,
    pub region_radius: f64,
    /// −max normalized residual on the verification set (≥ 0 when verified).
    pub margin: f64,
    pub t_star: f64,
    pub exp_at: DMatrix<f64>,
    pub training_samples: usize,
    pub verification_samples: usize,
    pub verified: bool,
}

impl ComparisonModel {
    pub fn new(chi: Vec<f64>, sense: Sense, region_radius: f64, t_star: f64) -> Result<Self> {
        if chi.len() < 2 {
            return Err(Error::Invalid(format!("comparison order must be at least 2, got {}", chi.len())));
        }
        if chi.len() > 8 {
            return Err(Error::Invalid(format!("comparison order above 8 is not supported, got {}", chi.len())));
        }
        if !(t_star > 0.0) {
            return Err(Error::Invalid(format!("t* must be positive, got {t_star}")));
        }
        let a_p = companion(&chi);
        let exp_at = matrix_exp(&a_p, t_star);
        Ok(ComparisonModel {
            p: chi.len(),
            chi,
            a_p,
            sense,
            region_radius,
            margin: 0.0,
            t_star,
            exp_at,
            training_samples: 0,
            verification_samples: 0,
            verified: false,
        })
    }

    pub fn with_t_star(mut self, t_star: f64) -> Result<Self> {
        if !(t_star > 0.0) {
            return Err(Error::Invalid(format!("t* must be positive, got {t_star}")));
        }
        self.t_star = t_star;
        self.exp_at = matrix_exp(&self.a_p, t_star);
        Ok(self)
    }

    /// First row of exp(A_p t).
    pub fn exp_row(&self, t: f64) -> Vec<f64> {
        if t == self.t_star {
            self.exp_at.row(0).iter().copied().collect()
        } else {
            matrix_exp(&self.a_p, t).row(0).iter().copied().collect()
        }
    }
}

/// Values of Γ and its first p−1 Lie derivatives, or an iterate of them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState(pub Vec<f64>);

/// exp(A_p t)·y0.
pub fn bound_evolve(cm: &ComparisonModel, y0: &BoundState, t: f64) -> BoundState {
    assert_eq!(y0.0.len(), cm.p, "bound state length must equal p");
    let e = if t == cm.t_star { cm.exp_at.clone() } else { matrix_exp(&cm.a_p, t) };
    BoundState((e * DVector::from_column_slice(&y0.0)).iter().copied().collect())
}

/// Normalized residual of the Lie inequality at one point given
/// `vals = (Γ, LΓ, ..., L^pΓ)`; non-positive means satisfied.
pub fn residual(vals: &[f64], chi: &[f64], sense: Sense) -> f64 {
    let p = chi.len();
    let scale = norm(&vals[..=p]);
    if scale == 0.0 {
        return 0.0;
    }
    let r = vals[p] - chi.iter().zip(vals).map(|(c, v)| c * v).sum::<f64>();
    let r = r / scale;
    match sense {
        Sense::Lower => r,
        Sense::Upper => -r,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub max_residual: f64,
    pub violations: usize,
    pub passed: bool,
}

fn report_from(values: &[Vec<f64>], chi: &[f64], sense: Sense) -> VerificationReport {
    let res: Vec<f64> = values.iter().map(|v| residual(v, chi, sense)).collect();
    let max_residual = res.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let violations = res.iter().filter(|&&r| r > 0.0).count();
    VerificationReport { samples: values.len(), max_residual, violations, passed: !values.is_empty() && violations == 0 }
}

/// Evaluate the Lie inequality for given χ on the supplied states.
pub fn verify_chi(chain: &LieChain, states: &[Vec<f64>], chi: &[f64], sense: Sense) -> Result<VerificationReport> {
    let values = chain_values(chain, states, chi.len())?;
    Ok(report_from(&values, chi, sense))
}

fn chain_values(chain: &LieChain, states: &[Vec<f64>], p: usize) -> Result<Vec<Vec<f64>>> {
    if chain.order() < p {
        return Err(Error::Invalid(format!("chain of order {} cannot certify p = {p}", chain.order())));
    }
    let vals: Vec<Option<Vec<f64>>> = states
        .par_iter()
        .map_init(Vec::new, |scratch, z| {
            let mut out = vec![0.0; chain.entries.len()];
            chain.eval_into(z, &mut out, scratch).ok()?;
            out.truncate(p + 1);
            out.iter().all(|v| v.is_finite()).then_some(out)
        })
        .collect();
    Ok(vals.into_iter().flatten().collect())
}

/// How states of the region are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// States visited between a fresh sample (e = 0) and the next trigger,
    /// rescaled along homogeneous rays to fill the region.
    Trajectory,
    /// Uniform quasi-random points of the extended-state ball.
    Ball,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub training: usize,
    /// Verification set size as a multiple of the training size.
    pub verification_factor: usize,
    pub max_rounds: usize,
    /// Consecutive unseen verification sets that must pass before χ is accepted.
    pub confirmations: usize,
    /// Normalized slack demanded on training points.
    pub slack: f64,
    pub scheme: SamplingScheme,
    pub points_per_trajectory: usize,
    /// Radius of the plant-state ball that fresh samples are drawn from when the
    /// field is homogenized (w = 1); unit directions are used otherwise.
    pub operating_radius: f64,
    /// Excluded inner radius as a fraction of the region radius.
    pub min_radius_frac: f64,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            training: 2000,
            verification_factor: 10,
            max_rounds: 24,
            confirmations: 3,
            slack: 1e-7,
            scheme: SamplingScheme::Trajectory,
            points_per_trajectory: 8,
            operating_radius: 1.0,
            min_radius_frac: 1e-3,
            seed: 1,
        }
    }
}

/// Quasi-random states of the validity region used for training and
/// verification.
pub fn region_states(
    field: &ExtendedField,
    chain: &LieChain,
    radius: f64,
    params: &SearchParams,
    count: usize,
    seed: u64,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    let dim = field.dim();
    let r_min = params.min_radius_frac * radius;
    match params.scheme {
        SamplingScheme::Ball => {
            let pts = sampling::ball_points(count * 2, dim, radius, seed);
            Ok(pts
                .into_iter()
                .map(|mut z| {
                    if field.homogenized {
                        let w = z[dim - 1].abs();
                        z[dim - 1] = w;
                    }
                    z
                })
                .filter(|z| norm(z) >= r_min && (!field.homogenized || z[dim - 1] > 0.0))
                .take(count)
                .collect())
        }
        SamplingScheme::Trajectory => {
            let gamma = TriggerFn::new(&chain.entries[0], field)?;
            let k = params.points_per_trajectory.max(2);
            let n_traj = count.div_ceil(k);
            let n = field.n;
            let fresh: Vec<Vec<f64>> = if field.homogenized || field.xi.is_none() {
                // uniform in the radius rather than the volume, so that rays
                // close to the w axis (small plant states) are well covered
                let r_op = params.operating_radius;
                sampling::ball_points(n_traj, n, r_op, seed)
                    .into_iter()
                    .map(|x| {
                        let rho = norm(&x);
                        if rho == 0.0 {
                            return x;
                        }
                        let target = r_op * (rho / r_op).powi(n as i32);
                        x.iter().map(|v| v * target / rho).collect()
                    })
                    .collect()
            } else {
                sampling::sphere_points(n_traj, n, seed)
            };
            let mut rng_q = sampling::QuasiRandom::new(1, seed ^ 0x9e37_79b9);
            let scales: Vec<f64> = (0..n_traj * k).map(|_| rng_q.next_point()[0]).collect();
            let scaling = field.xi.is_some();
            let per: Vec<Vec<Vec<f64>>> = fresh
                .par_iter()
                .enumerate()
                .map(|(ti, x)| -> Result<Vec<Vec<f64>>> {
                    if norm(x) == 0.0 {
                        return Ok(vec![]);
                    }
                    let z0 = field.fresh_state(x);
                    let (traj, t_end) = sim::flow_to_event(field, &gamma, &z0, cfg)?;
                    let mut out = Vec::with_capacity(k);
                    for j in 0..k {
                        let t = t_end * j as f64 / (k - 1) as f64;
                        let z = if traj.steps.is_empty() { z0.clone() } else { traj.at(t) };
                        let nz = norm(&z);
                        if !scaling {
                            if nz <= radius && nz >= r_min {
                                out.push(z);
                            }
                            continue;
                        }
                        let s_hi = radius / nz;
                        let s_lo = params.min_radius_frac * s_hi;
                        // entries of the chain scale with different degrees, so
                        // the residual along a ray is extreme at the end shells
                        let s = match (ti + j) % 4 {
                            0 => s_hi,
                            1 => s_lo,
                            _ => s_lo * (s_hi / s_lo).powf(scales[ti * k + j]),
                        };
                        out.push(z.iter().map(|v| v * s).collect());
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            Ok(per.into_iter().flatten().take(count).collect())
        }
    }
}

fn lp_rows(values: &[Vec<f64>], p: usize, sense: Sense, slack: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let sgn = match sense {
        Sense::Lower => 1.0,
        Sense::Upper => -1.0,
    };
    let mut g = Vec::with_capacity(values.len());
    let mut h = Vec::with_capacity(values.len());
    for v in values {
        let scale = norm(&v[..=p]);
        if scale == 0.0 {
            continue;
        }
        g.push(v[..p].iter().map(|x| sgn * x / scale).collect());
        h.push(sgn * v[p] / scale + slack);
    }
    (g, h)
}

fn solve_lp(values: &[Vec<f64>], p: usize, sense: Sense, slack: f64) -> Option<Vec<f64>> {
    for eps in [slack, 0.0] {
        let (g, h) = lp_rows(values, p, sense, eps);
        // objective: total slack over the training set, i.e. keep the
        // comparison model as tight as the constraints allow
        let mut c = vec![0.0; p];
        for row in &g {
            for (ci, gi) in c.iter_mut().zip(row) {
                *ci += gi;
            }
        }
        if let lp::LpOutcome::Optimal { chi, .. } = lp::solve(&g, &h, &c) {
            return Some(chi);
        }
    }
    None
}

/// Synthesize χ on sampled states of the region by a cutting-plane LP loop:
/// solve on the training set, test on a fresh verification set, add the
/// violators and repeat until an unseen verification set passes.
pub fn search_chi(
    field: &ExtendedField,
    chain: &LieChain,
    radius: f64,
    p: usize,
    sense: Sense,
    params: &SearchParams,
    cfg: &IntegratorConfig,
) -> Result<ComparisonModel> {
    if p < 2 {
        return Err(Error::Invalid(format!("comparison order must be at least 2, got {p}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Invalid(format!("region radius must be positive and finite, got {radius}")));
    }
    let train_states = region_states(field, chain, radius, params, params.training, params.seed, cfg)?;
    let mut training = chain_values(chain, &train_states, p)?;
    let n_ver = params.training * params.verification_factor.max(10);
    let solve = |training: &[Vec<f64>]| {
        solve_lp(training, p, sense, params.slack).ok_or_else(|| {
            Error::Infeasible(format!("no χ satisfies the order-{p} inequality on {} training states", training.len()))
        })
    };
    let mut last_max = f64::INFINITY;
    let mut chi = solve(&training)?;
    let mut streak = 0;
    let mut checked = 0;
    for round in 0..params.max_rounds.max(1) {
        let ver_seed = params.seed.wrapping_add(1000 + round as u64);
        let ver_states = region_states(field, chain, radius, params, n_ver, ver_seed, cfg)?;
        let ver_values = chain_values(chain, &ver_states, p)?;
        let report = report_from(&ver_values, &chi, sense);
        checked += report.samples;
        if report.passed {
            last_max = if streak == 0 { report.max_residual } else { last_max.max(report.max_residual) };
            streak += 1;
            if streak >= params.confirmations.max(1) {
                let mut cm = ComparisonModel::new(chi, sense, radius, 1.0)?;
                cm.margin = -last_max;
                cm.training_samples = training.len();
                cm.verification_samples = checked;
                cm.verified = true;
                return Ok(cm);
            }
            continue;
        }
        last_max = report.max_residual;
        streak = 0;
        checked = 0;
        let mut violators: Vec<(f64, Vec<f64>)> = ver_values
            .into_iter()
            .map(|v| (residual(&v, &chi, sense), v))
            .filter(|(r, _)| *r > -params.slack)
            .collect();
        violators.sort_by(|a, b| b.0.total_cmp(&a.0));
        training.extend(violators.into_iter().take(500).map(|(_, v)| v));
        chi = solve(&training)?;
    }
    Err(Error::Infeasible(format!(
        "order-{p} inequality still violated after {} rounds (max normalized residual {last_max:e})",
        params.max_rounds
    )))
}

/// Check user-supplied coefficients on a fresh verification set.
pub fn verify_only(
    field: &ExtendedField,
    chain: &LieChain,
    radius: f64,
    chi: Vec<f64>,
    sense: Sense,
    params: &SearchParams,
    cfg: &IntegratorConfig,
) -> Result<(ComparisonModel, VerificationReport)> {
    let n_ver = params.training * params.verification_factor.max(10);
    let states = region_states(field, chain, radius, params, n_ver, params.seed.wrapping_add(7777), cfg)?;
    let report = verify_chi(chain, &states, &chi, sense)?;
    let mut cm = ComparisonModel::new(chi, sense, radius, 1.0)?;
    cm.margin = -report.max_residual;
    cm.verification_samples = report.samples;
    cm.verified = report.passed;
    Ok((cm, report))
}

/// Logarithmic grid with `per_decade` points per decade on [t_min, t_max].
pub fn log_grid(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t_max / t_min).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    (0..=n).map(|k| t_min * 10f64.powf(k as f64 / per_decade as f64)).filter(|t| *t <= t_max * (1.0 + 1e-12)).collect()
}

/// Smallest grid time whose approximate isochrone, sampled along
/// `directions`, stays inside the ball of radius `radius`.
pub fn select_t_star(
    cm: &ComparisonModel,
    chain: &LieChain,
    radius: f64,
    grid: &[f64],
    directions: &[Vec<f64>],
) -> Result<f64> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return Err(Error::Invalid("t grid must be positive and strictly ascending".into()));
    }
    for &t in grid {
        let cloud = manifold::sample_approx(cm, chain, directions, t)?;
        let inside = cloud
            .points
            .iter()
            .all(|p| p.point.as_ref().is_none_or(|z| norm(z) <= radius * (1.0 + 1e-12)));
        if inside {
            return Ok(t);
        }
    }
    Err(Error::Infeasible(format!(
        "no t on the grid [{:e}, {:e}] keeps the approximate isochrone inside radius {radius}",
        grid[0],
        grid[grid.len() - 1]
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_shape() {
        let a = companion(&[1.0, 2.0, 3.0]);
        assert_eq!(a, DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0]));
    }

    #[test]
    fn linear_bound_state() {
        let cm = ComparisonModel::new(vec![0.0, 0.0], Sense::Lower, 1.0, 1.0).unwrap();
        let y = bound_evolve(&cm, &BoundState(vec![-1.0, 0.5]), 2.0);
        assert!(y.0[0].abs() < 1e-15);
        let y = bound_evolve(&cm, &BoundState(vec![-1.0, 0.5]), 0.0);
        assert_eq!(y.0, vec![-1.0, 0.5]);
    }

    #[test]
    fn order_one_rejected() {
        assert!(ComparisonModel::new(vec![1.0], Sense::Lower, 1.0, 1.0).is_err());
    }

    #[test]
    fn grid_has_requested_density() {
        let g = log_grid(1e-4, 1e-2, 32);
        assert_eq!(g.len(), 65);
        assert!((g[32] / 1e-3 - 1.0).abs() < 1e-12);
    }
}
