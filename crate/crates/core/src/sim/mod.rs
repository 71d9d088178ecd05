//! Ground-truth dynamics: flows, the event-time oracle and sample-and-hold
//! closed-loop simulation.

mod ode;

use std::io::Write;

use serde::Serialize;

pub use ode::{integrate, Dopri5, IntegratorConfig, Rhs, Step};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::model::ExtendedField;
use crate::sampling::norm;

struct FieldRhs<'a> {
    field: &'a ExtendedField,
    scratch: Vec<f64>,
}

impl Rhs for FieldRhs<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.field.eval_into(y, dy, &mut self.scratch).map_err(Error::from)
    }
}

/// Dense trajectory of a field.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(0.0, Step::t1)
    }

    /// State at time t (clamped to the integrated span).
    pub fn at(&self, t: f64) -> Vec<f64> {
        let i = self.steps.partition_point(|s| s.t1() < t).min(self.steps.len() - 1);
        self.steps[i].at(t)
    }

    pub fn end_state(&self) -> Vec<f64> {
        self.steps.last().expect("empty trajectory").y1()
    }
}

pub fn flow(field: &ExtendedField, z0: &[f64], t_end: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::Invalid(format!("flow horizon must be positive, got {t_end}")));
    }
    cfg.validate()?;
    let mut rhs = FieldRhs { field, scratch: Vec::new() };
    Ok(Trajectory { steps: integrate(&mut rhs, z0, 0.0, t_end, *cfg)? })
}

/// Γ compiled against a field's variable order.
#[derive(Debug, Clone)]
pub struct TriggerFn {
    pub expr: Expr,
    tape: Tape,
}

impl TriggerFn {
    pub fn new(gamma: &Expr, field: &ExtendedField) -> Result<Self> {
        Ok(TriggerFn { expr: gamma.clone(), tape: Tape::compile(std::slice::from_ref(gamma), &field.var_refs())? })
    }

    pub fn eval(&self, z: &[f64], scratch: &mut Vec<f64>) -> Result<f64> {
        let mut out = [0.0];
        self.tape.eval_with(z, &mut out, scratch)?;
        Ok(out[0])
    }
}

/// Dense-output sample points per step used by the sign-change scan.
const SCAN_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Integrate from `z0` at `t0` until `t_stop` or, when `detect` is set, until
/// Γ first becomes non-negative. Calls `record` with every accepted step end.
/// Returns the stop time, the state there and whether an event ended the run.
fn run_segment(
    field: &ExtendedField,
    gamma: &TriggerFn,
    z0: &[f64],
    t0: f64,
    t_stop: f64,
    detect: bool,
    cfg: &IntegratorConfig,
    mut record: impl FnMut(f64, &[f64]),
) -> Result<(f64, Vec<f64>, bool)> {
    let mut rhs = FieldRhs { field, scratch: Vec::new() };
    let mut gs = Vec::new();
    let mut stepper = Dopri5::new(&mut rhs, t0, z0, *cfg)?;
    while stepper.t() < t_stop {
        let step = stepper.step(t_stop)?;
        if detect {
            let mut lo = step.t0;
            for frac in SCAN_FRACTIONS {
                let t = step.t0 + frac * step.h;
                let z = if frac == 1.0 { step.y1() } else { step.at(t) };
                if gamma.eval(&z, &mut gs)? >= 0.0 {
                    let t_ev = bisect_event(&step, gamma, lo, t, cfg.event_bisection_tol, &mut gs)?;
                    let z_ev = step.at(t_ev);
                    record(t_ev, &z_ev);
                    return Ok((t_ev, z_ev, true));
                }
                lo = t;
            }
        }
        record(step.t1(), &step.y1());
    }
    Ok((stepper.t(), stepper.y().to_vec(), false))
}

/// Γ(lo) < 0 ≤ Γ(hi); shrink to the tolerance and return the upper end.
fn bisect_event(step: &Step, gamma: &TriggerFn, mut lo: f64, mut hi: f64, tol: f64, gs: &mut Vec<f64>) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gamma.eval(&step.at(mid), gs)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Event-triggered ground truth: first t > 0 with Γ(z(t, z0)) = 0, or +∞ if
/// none occurs before the horizon.
pub fn event_time_oracle(field: &ExtendedField, gamma: &TriggerFn, z0: &[f64], cfg: &IntegratorConfig) -> Result<f64> {
    cfg.validate()?;
    let g0 = gamma.eval(z0, &mut Vec::new())?;
    if g0 >= 0.0 {
        return Err(Error::ImmediateTrigger { gamma: g0 });
    }
    let (t, _, hit) = run_segment(field, gamma, z0, 0.0, cfg.horizon, true, cfg, |_, _| {})?;
    Ok(if hit { t } else { f64::INFINITY })
}

/// Integrate until Γ first becomes non-negative or the horizon is reached.
/// Returns the dense trajectory and the stop time.
pub fn flow_to_event(
    field: &ExtendedField,
    gamma: &TriggerFn,
    z0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, f64)> {
    let mut rhs = FieldRhs { field, scratch: Vec::new() };
    let mut gs = Vec::new();
    let mut stepper = Dopri5::new(&mut rhs, 0.0, z0, *cfg)?;
    let mut steps = Vec::new();
    while stepper.t() < cfg.horizon {
        let step = stepper.step(cfg.horizon)?;
        let mut lo = step.t0;
        for frac in SCAN_FRACTIONS {
            let t = step.t0 + frac * step.h;
            if gamma.eval(&step.at(t), &mut gs)? >= 0.0 {
                let t_ev = bisect_event(&step, gamma, lo, t, cfg.event_bisection_tol, &mut gs)?;
                steps.push(step);
                return Ok((Trajectory { steps }, t_ev));
            }
            lo = t;
        }
        steps.push(step);
    }
    Ok((Trajectory { steps }, cfg.horizon))
}

/// Something that maps a freshly sampled plant state to an inter-execution time.
pub trait IntervalPolicy: Sync {
    fn interval(&self, x: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> Result<f64> + Sync> IntervalPolicy for F {
    fn interval(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

pub enum Strategy<'a> {
    Periodic { period: f64 },
    Event,
    SelfTriggered(&'a dyn IntervalPolicy),
    /// τ = λ^{−ξ}·τ* with λ = |z(t_i)|/r, z(t_i) the fresh extended state.
    PriorWork { tau_star: f64, radius: f64, xi: f64, homogenized: bool },
}

impl Strategy<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::Periodic { .. } => "periodic",
            Strategy::Event => "event",
            Strategy::SelfTriggered(_) => "selftrig",
            Strategy::PriorWork { .. } => "prev",
        }
    }
}

/// Prior-work inter-execution time from the isotropic scaling law.
pub fn prior_work_interval(x: &[f64], tau_star: f64, radius: f64, xi: f64, homogenized: bool) -> f64 {
    let mut sq = x.iter().map(|v| v * v).sum::<f64>();
    if homogenized {
        sq += 1.0;
    }
    let lambda = sq.sqrt() / radius;
    tau_star * lambda.powf(-xi)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimTrace {
    pub strategy: String,
    pub n: usize,
    pub times: Vec<f64>,
    /// Full extended states (x, e) at each recorded time.
    pub states: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub exec_flag: Vec<bool>,
    pub exec_instants: Vec<f64>,
}

impl SimTrace {
    pub fn inter_exec(&self) -> Vec<f64> {
        self.exec_instants.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.n;
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("e{i}")));
        header.push("gamma".into());
        header.push("exec_flag".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![format!("{:e}", self.times[k])];
            row.extend(self.states[k][..2 * n].iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.gamma[k]));
            row.push(if self.exec_flag[k] { "1".into() } else { "0".into() });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Sample-and-hold simulation of the (non-homogenized) extended loop. The
/// measurement error resets to zero at each execution.
pub fn run_closed_loop(
    field: &ExtendedField,
    gamma: &TriggerFn,
    strategy: &Strategy<'_>,
    x0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<SimTrace> {
    cfg.validate()?;
    if field.homogenized {
        return Err(Error::Invalid("closed-loop simulation expects the original (non-homogenized) field".into()));
    }
    let n = field.n;
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state has {} entries, expected {n}", x0.len())));
    }
    let mut trace = SimTrace {
        strategy: strategy.tag().to_string(),
        n,
        times: vec![],
        states: vec![],
        gamma: vec![],
        exec_flag: vec![],
        exec_instants: vec![],
    };
    if !(t_end > 0.0) {
        return Ok(trace);
    }
    let mut gs = Vec::new();
    let mut t = 0.0;
    let mut x = x0.to_vec();
    while t < t_end {
        let z0 = field.fresh_state(&x);
        let g0 = gamma.eval(&z0, &mut gs)?;
        trace.times.push(t);
        trace.states.push(z0.clone());
        trace.gamma.push(g0);
        trace.exec_flag.push(true);
        trace.exec_instants.push(t);
        let (tau, detect) = match strategy {
            Strategy::Periodic { period } => (*period, false),
            Strategy::Event => {
                if g0 >= 0.0 {
                    return Err(Error::ImmediateTrigger { gamma: g0 });
                }
                (f64::INFINITY, true)
            }
            Strategy::SelfTriggered(policy) => (policy.interval(&x)?, false),
            Strategy::PriorWork { tau_star, radius, xi, homogenized } => {
                (prior_work_interval(&x, *tau_star, *radius, *xi, *homogenized), false)
            }
        };
        if !(tau > 0.0) {
            return Err(Error::ImmediateTrigger { gamma: g0 });
        }
        let t_stop = if tau.is_finite() { (t + tau).min(t_end) } else { t_end };
        let mut rec_err = None;
        let (t1, z1, _) = run_segment(field, gamma, &z0, t, t_stop, detect, cfg, |tt, zz| {
            match gamma.eval(zz, &mut Vec::new()) {
                Ok(g) => {
                    trace.times.push(tt);
                    trace.states.push(zz.to_vec());
                    trace.gamma.push(g);
                    trace.exec_flag.push(false);
                }
                Err(e) => rec_err = Some(e),
            }
        })?;
        if let Some(e) = rec_err {
            return Err(e);
        }
        // the sample at t1 is replaced by the execution record of the next loop
        if t1 < t_end {
            trace.times.pop();
            trace.states.pop();
            trace.gamma.pop();
            trace.exec_flag.pop();
        }
        if norm(&z1).is_nan() {
            return Err(Error::Integration { t: t1, reason: "non-finite state".into() });
        }
        t = t1;
        x = z1[..n].to_vec();
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_work_scaling() {
        let t = prior_work_interval(&[0.5, 0.0], 1e-3, 1.0, 2.0, false);
        assert!((t - 4e-3).abs() < 1e-15);
    }
}
