use std::collections::HashMap;
use std::f64::consts::PI;

use isochron::model::{build_extended, homogenize_field, ControlModel, ExtendedField};
use isochron::sim::{event_time_oracle, flow, integrate, run_closed_loop, IntegratorConfig, Strategy, TriggerFn};
use isochron::Error;
use proptest::prelude::*;

/// Undamped oscillator ẋ1 = x2, ẋ2 = −x1 with Γ = x1 − 1/2. From (0, 1) the
/// solution is x1 = sin t, so the first event is at π/6.
fn oscillator() -> (ExtendedField, TriggerFn) {
    let m = ControlModel::parse(2, 1, &["x2", "-x1 + u1"], &["0"], "x1 - 0.5", &HashMap::new(), 1.0).unwrap();
    let f = build_extended(&m).unwrap();
    let g = TriggerFn::new(&m.gamma, &f).unwrap();
    (f, g)
}

/// Scalar loop ẋ = −x + u with u = −(x + e) and Γ = |e|² − σ²|x|².
fn scalar_loop() -> (ExtendedField, TriggerFn) {
    let m = ControlModel::parse(1, 1, &["-x1 + u1"], &["-x1"], "e1^2 - 0.25*x1^2", &HashMap::new(), 1.0).unwrap();
    let f = build_extended(&m).unwrap();
    let g = TriggerFn::new(&m.gamma, &f).unwrap();
    (f, g)
}

fn oscillator_error(rel_tol: f64) -> f64 {
    let cfg = IntegratorConfig { rel_tol, abs_tol: rel_tol * 1e-3, max_step: 1.0, ..Default::default() };
    let mut rhs = (2, |y: &[f64], dy: &mut [f64]| -> isochron::Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    });
    let steps = integrate(&mut rhs, &[0.0, 1.0], 0.0, 10.0, cfg).unwrap();
    let mut worst: f64 = 0.0;
    for s in &steps {
        for k in 0..=4 {
            let t = s.t0 + s.h * k as f64 / 4.0;
            let y = s.at(t);
            worst = worst.max((y[0] - t.sin()).abs()).max((y[1] - t.cos()).abs());
        }
    }
    worst
}

#[test]
fn dense_output_matches_closed_form() {
    assert!(oscillator_error(1e-10) < 1e-8);
}

#[test]
fn halving_rel_tol_does_not_worsen_the_solution() {
    let errs: Vec<f64> = [1e-6, 5e-7, 2.5e-7, 1.25e-7].iter().map(|&t| oscillator_error(t)).collect();
    for w in errs.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{errs:?}");
    }
    assert!(errs[3] < errs[0]);
}

#[test]
fn oracle_finds_known_event() {
    let (f, g) = oscillator();
    let tau = event_time_oracle(&f, &g, &[0.0, 1.0, 0.0, 0.0], &IntegratorConfig::default()).unwrap();
    assert!((tau - PI / 6.0).abs() < 1e-9, "τ = {tau}");
}

#[test]
fn oracle_reports_infinity_without_event() {
    let (f, g) = oscillator();
    let cfg = IntegratorConfig { horizon: 2.0, ..Default::default() };
    // amplitude 0.3 never reaches 1/2
    let tau = event_time_oracle(&f, &g, &[0.0, 0.3, 0.0, 0.0], &cfg).unwrap();
    assert!(tau.is_infinite());
    let r = event_time_oracle(&f, &g, &[0.6, 0.0, 0.0, 0.0], &cfg);
    assert!(matches!(r, Err(Error::ImmediateTrigger { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn oracle_residual_is_zero_at_the_event(amp in 0.55..1.9f64, phase in -0.4..0.25f64) {
        // x1 = amp·sin(t + phase) first reaches 1/2 at asin(1/(2 amp)) − phase
        let (f, g) = oscillator();
        let z0 = [amp * phase.sin(), amp * phase.cos(), 0.0, 0.0];
        let tau = event_time_oracle(&f, &g, &z0, &IntegratorConfig::default()).unwrap();
        let exact = (0.5 / amp).asin() - phase;
        prop_assert!((tau - exact).abs() < 1e-8, "{tau} vs {exact}");
    }
}

#[test]
fn periodic_strategy_executes_on_the_grid() {
    let (f, g) = scalar_loop();
    let period = 0.3;
    let tr = run_closed_loop(&f, &g, &Strategy::Periodic { period }, &[1.0], 2.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(tr.exec_instants.len(), 7);
    for (k, t) in tr.exec_instants.iter().enumerate() {
        assert!((t - k as f64 * period).abs() < 1e-12);
    }
    assert!(tr.inter_exec().iter().all(|d| (d - period).abs() < 1e-12));
}

#[test]
fn event_strategy_follows_the_oracle() {
    let (f, g) = scalar_loop();
    let cfg = IntegratorConfig::default();
    let tr = run_closed_loop(&f, &g, &Strategy::Event, &[1.0], 1.0, &cfg).unwrap();
    // Γ is quadratic and the loop linear, so every interval has the same length
    let first = event_time_oracle(&f, &g, &[1.0, 0.0], &cfg).unwrap();
    let gaps = tr.inter_exec();
    assert!(!gaps.is_empty());
    for d in gaps {
        assert!((d - first).abs() < 1e-9, "{d} vs {first}");
    }
}

#[test]
fn event_interval_matches_scalar_closed_form() {
    // x + e is constant, so from (x0, 0): x = x0(2e^{-t} − 1), e = 2x0(1 − e^{-t})
    // and |e| = |x|/2 first holds at e^{-t} = 5/6
    let (f, g) = scalar_loop();
    let tau = event_time_oracle(&f, &g, &[0.7, 0.0], &IntegratorConfig::default()).unwrap();
    assert!((tau - 1.2f64.ln()).abs() < 1e-9, "τ = {tau}");
}

#[test]
fn zero_horizon_gives_empty_trace() {
    let (f, g) = scalar_loop();
    let tr = run_closed_loop(&f, &g, &Strategy::Event, &[1.0], 0.0, &IntegratorConfig::default()).unwrap();
    assert!(tr.times.is_empty() && tr.exec_instants.is_empty());
    let mut out = Vec::new();
    tr.write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "t,x1,e1,gamma,exec_flag\n");
}

#[test]
fn closed_loop_rejects_homogenized_field_and_bad_state() {
    let (f, g) = scalar_loop();
    let h = homogenize_field(&f, 1.0).unwrap();
    let cfg = IntegratorConfig::default();
    assert!(run_closed_loop(&h, &g, &Strategy::Event, &[1.0], 1.0, &cfg).is_err());
    assert!(matches!(
        run_closed_loop(&f, &g, &Strategy::Event, &[1.0, 2.0], 1.0, &cfg),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn flow_matches_scalar_solution() {
    let (f, _) = scalar_loop();
    let traj = flow(&f, &[1.0, 0.0], 1.0, &IntegratorConfig::default()).unwrap();
    for t in [0.0, 0.25, 0.5, 1.0] {
        let x = traj.at(t)[0];
        assert!((x - (2.0 * (-t).exp() - 1.0)).abs() < 1e-9);
    }
}
