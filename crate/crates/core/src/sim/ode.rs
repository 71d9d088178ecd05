//! Dormand–Prince 5(4) with Hairer's continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size (s). Also bounds how far apart two sign
    /// changes of the trigger can be and still be resolved.
    pub max_step: f64,
    /// Width of the final bracket when locating events (s).
    pub event_bisection_tol: f64,
    /// Events beyond this time are reported as never happening (s).
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-14, max_step: 0.01, event_bisection_tol: 1e-13, horizon: 10.0 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.event_bisection_tol > 0.0
            && self.horizon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("integrator tolerances must be positive: {self:?}")))
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with the coefficients of its dense output.
#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl Step {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y0(&self) -> &[f64] {
        &self.r[0]
    }

    pub fn y1(&self) -> Vec<f64> {
        self.r[0].iter().zip(&self.r[1]).map(|(a, b)| a + b).collect()
    }

    /// Interpolated state at absolute time t ∈ [t0, t0 + h].
    pub fn at(&self, t: f64) -> Vec<f64> {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        (0..self.r[0].len())
            .map(|i| {
                let [r1, r2, r3, r4, r5] = &self.r;
                r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])))
            })
            .collect()
    }
}

pub trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F: FnMut(&[f64], &mut [f64]) -> Result<()>> Rhs for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.1)(y, dy)
    }
}

/// Stepper that advances one accepted step at a time.
pub struct Dopri5<'a, R: Rhs> {
    rhs: &'a mut R,
    cfg: IntegratorConfig,
    t: f64,
    y: Vec<f64>,
    k1: Vec<f64>,
    h: f64,
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

impl<'a, R: Rhs> Dopri5<'a, R> {
    pub fn new(rhs: &'a mut R, t0: f64, y0: &[f64], cfg: IntegratorConfig) -> Result<Self> {
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { t: t0, reason: "non-finite initial state".into() });
        }
        let mut k1 = vec![0.0; y0.len()];
        rhs.eval(y0, &mut k1)?;
        let h = initial_step(y0, &k1, &cfg);
        Ok(Dopri5 { rhs, cfg, t: t0, y: y0.to_vec(), k1, h })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Take one accepted step, not passing `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<Step> {
        let n = self.y.len();
        let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        let mut y1 = vec![0.0; n];
        let mut rejected = false;
        loop {
            let mut h = self.h.min(self.cfg.max_step);
            let remaining = t_stop - self.t;
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= 1e-15 * self.t.abs().max(1.0) {
                return Err(Error::Integration { t: self.t, reason: "step size underflow".into() });
            }
            let y = &self.y;
            let k1 = &self.k1;
            axpy(&mut tmp, y, h, &[(A21, k1)]);
            self.rhs.eval(&tmp, &mut k2)?;
            axpy(&mut tmp, y, h, &[(A31, k1), (A32, &k2)]);
            self.rhs.eval(&tmp, &mut k3)?;
            axpy(&mut tmp, y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]);
            self.rhs.eval(&tmp, &mut k4)?;
            axpy(&mut tmp, y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            self.rhs.eval(&tmp, &mut k5)?;
            axpy(&mut tmp, y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            self.rhs.eval(&tmp, &mut k6)?;
            axpy(&mut y1, y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            self.rhs.eval(&y1, &mut k7)?;

            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(y1[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
                if h <= 1e-15 * self.t.abs().max(1.0) {
                    return Err(Error::Integration { t: self.t, reason: "non-finite state".into() });
                }
                self.h = h * 0.1;
                rejected = true;
                continue;
            }
            if err <= 1.0 {
                let mut fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if rejected {
                    fac = fac.min(1.0);
                }
                let ydiff: Vec<f64> = (0..n).map(|i| y1[i] - y[i]).collect();
                let bspl: Vec<f64> = (0..n).map(|i| h * k1[i] - ydiff[i]).collect();
                let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k7[i] - bspl[i]).collect();
                let r5: Vec<f64> = (0..n)
                    .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                    .collect();
                let step = Step { t0: self.t, h, r: [y.clone(), ydiff, bspl, r4, r5] };
                self.t = if last { t_stop } else { self.t + h };
                self.y = y1;
                self.k1 = k7;
                // a truncated final step says nothing about the natural step size
                if !last {
                    self.h = h * fac;
                }
                return Ok(step);
            }
            self.h = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            rejected = true;
        }
    }
}

fn initial_step(y0: &[f64], f0: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = y0.len().max(1) as f64;
    let sc = |i: usize| cfg.abs_tol + cfg.rel_tol * y0[i].abs();
    let d0 = ((0..y0.len()).map(|i| (y0[i] / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = ((0..y0.len()).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(cfg.max_step)
}

/// Integrate from t0 to t1, returning every accepted step.
pub fn integrate<R: Rhs>(rhs: &mut R, y0: &[f64], t0: f64, t1: f64, cfg: IntegratorConfig) -> Result<Vec<Step>> {
    let mut s = Dopri5::new(rhs, t0, y0, cfg)?;
    let mut steps = Vec::new();
    while s.t() < t1 {
        steps.push(s.step(t1)?);
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> (usize, impl FnMut(&[f64], &mut [f64]) -> Result<()>) {
        (1, |y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[0];
            Ok(())
        })
    }

    #[test]
    fn exponential_decay_endpoint_and_dense_output() {
        let mut f = decay();
        let steps = integrate(&mut f, &[1.0], 0.0, 2.0, IntegratorConfig::default()).unwrap();
        let last = steps.last().unwrap();
        assert!((last.y1()[0] - (-2.0f64).exp()).abs() < 1e-10);
        for s in &steps {
            let tm = s.t0 + 0.37 * s.h;
            assert!((s.at(tm)[0] - (-tm).exp()).abs() < 1e-9, "dense output at {tm}");
        }
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let mut f = (2usize, |y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        });
        let steps = integrate(&mut f, &[1.0, 0.0], 0.0, 10.0, IntegratorConfig::default()).unwrap();
        let y = steps.last().unwrap().y1();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8 && (y[1] + 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut f = (1usize, |y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0] * y[0];
            Ok(())
        });
        assert!(integrate(&mut f, &[1.0], 0.0, 2.0, IntegratorConfig::default()).is_err());
    }
}
