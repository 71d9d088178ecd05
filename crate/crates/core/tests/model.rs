use std::collections::HashMap;

use isochron::model::{
    build_extended, homogenize_field, homogenize_trigger, lie_chain, lie_derivative, scalar_degree, verify_homogeneity,
    ControlModel, ExtendedField,
};
use isochron::{Error, Expr, VarAssignment};
use proptest::prelude::*;

fn pendulum() -> ControlModel {
    let params: HashMap<String, f64> = [("g", 9.81), ("l", 2.0), ("kf", 0.3), ("mass", 1.5)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    ControlModel::parse(
        2,
        1,
        &["x2", "-g/l*sin(x1) - kf/mass*x2 + u1"],
        &["-x1 - x2"],
        "x1 - pi/6",
        &params,
        2.0,
    )
    .unwrap()
}

fn example1() -> ControlModel {
    let params: HashMap<String, f64> = [("sigma".to_string(), 0.2)].into();
    ControlModel::parse(
        2,
        1,
        &["-x1^3 + x1*x2^2", "x1*x2^2 + u1 - x1^2*x2"],
        &["-x2^3 - x1*x2^2"],
        "e1^2 + e2^2 - 0.0127^2*sigma^2*(x1^2 + x2^2)",
        &params,
        1.0,
    )
    .unwrap()
}

/// Hand-written closed loop of the pendulum with u = −(x1+e1) − (x2+e2).
fn pendulum_by_hand(z: &[f64]) -> Vec<f64> {
    let (x1, x2, e1, e2) = (z[0], z[1], z[2], z[3]);
    let u = -(x1 + e1) - (x2 + e2);
    let dx = [x2, -9.81 / 2.0 * x1.sin() - 0.3 / 1.5 * x2 + u];
    vec![dx[0], dx[1], -dx[0], -dx[1]]
}

fn scalar(e: &Expr, field: &ExtendedField, z: &[f64]) -> f64 {
    e.evaluate(&VarAssignment::from_slices(&field.vars, z)).unwrap()
}

proptest! {
    #[test]
    fn pendulum_field_matches_hand_derivation(z in prop::collection::vec(-2.0..2.0f64, 4)) {
        let f = build_extended(&pendulum()).unwrap();
        let got = f.eval(&z).unwrap();
        for (a, b) in got.iter().zip(pendulum_by_hand(&z)) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn homogenized_field_reduces_to_original_at_unit_w(z in prop::collection::vec(-2.0..2.0f64, 4), xi in 0.5..3.0f64) {
        let f = build_extended(&pendulum()).unwrap();
        let h = homogenize_field(&f, xi).unwrap();
        let mut zw = z.clone();
        zw.push(1.0);
        let got = h.eval(&zw).unwrap();
        let want = f.eval(&z).unwrap();
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
        prop_assert_eq!(got[4], 0.0);
    }

    #[test]
    fn lie_derivative_is_directional_derivative(z in prop::collection::vec(-1.0..1.0f64, 4)) {
        let m = pendulum();
        let f = build_extended(&m).unwrap();
        let lg = lie_derivative(&m.gamma, &f);
        let dz = f.eval(&z).unwrap();
        let h = 1e-6;
        let shifted = |s: f64| -> Vec<f64> { z.iter().zip(&dz).map(|(a, d)| a + s * d).collect() };
        let fd = (scalar(&m.gamma, &f, &shifted(h)) - scalar(&m.gamma, &f, &shifted(-h))) / (2.0 * h);
        let exact = scalar(&lg, &f, &z);
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }
}

#[test]
fn homogenization_passes_its_own_degree_and_no_other() {
    let f = build_extended(&pendulum()).unwrap();
    assert!(verify_homogeneity(&f, 1.0, 64, 1.0, 3).max_residual > 1e-3);
    for xi in [1.0, 2.0] {
        let h = homogenize_field(&f, xi).unwrap();
        let good = verify_homogeneity(&h, xi, 64, 1.0, 3);
        assert!(good.passed, "ξ = {xi}: residual {:e}", good.max_residual);
        assert!(!verify_homogeneity(&h, xi + 0.5, 64, 1.0, 3).passed);
    }
}

#[test]
fn polynomial_loop_is_natively_homogeneous() {
    let f = build_extended(&example1()).unwrap();
    let f = f.with_degree(2.0, 64, 5).unwrap();
    assert_eq!(f.xi, Some(2.0));
    let again = build_extended(&example1()).unwrap();
    assert!(matches!(again.with_degree(1.0, 64, 5), Err(Error::Invalid(_))));
}

#[test]
fn double_homogenization_is_rejected() {
    let f = build_extended(&pendulum()).unwrap();
    let h = homogenize_field(&f, 1.0).unwrap();
    assert!(homogenize_field(&h, 1.0).is_err());
    assert!(homogenize_field(&f, 0.0).is_err());
}

#[test]
fn trigger_degrees() {
    let m = pendulum();
    let vars = ["x1", "x2", "e1", "e2", "w"];
    assert_eq!(scalar_degree(&m.gamma, &vars, true, 1), None);
    let g = homogenize_trigger(&m.gamma, 0.0);
    assert_eq!(scalar_degree(&g, &vars, true, 1), Some(1.0));
    let e1 = example1();
    assert_eq!(scalar_degree(&e1.gamma, &vars[..4], false, 1), Some(2.0));
}

#[test]
fn chain_entries_scale_with_their_degree() {
    let m = pendulum();
    let f = homogenize_field(&build_extended(&m).unwrap(), 1.0).unwrap();
    let g = homogenize_trigger(&m.gamma, 0.0);
    let chain = lie_chain(&f, &g, 3).unwrap();
    assert_eq!(chain.order(), 3);
    let z = [0.3, -0.2, 0.05, 0.1, 1.0];
    let base = chain.eval(&z).unwrap();
    for lambda in [0.5, 3.0] {
        let zl: Vec<f64> = z.iter().map(|v| v * lambda).collect();
        let scaled = chain.eval(&zl).unwrap();
        for k in 0..=3 {
            let d = chain.entry_degree(k).unwrap();
            assert!((scaled[k] - lambda.powf(d) * base[k]).abs() <= 1e-10 * (1.0 + scaled[k].abs()));
        }
    }
}

#[test]
fn homogenized_chain_rejects_zero_w() {
    let m = pendulum();
    let f = homogenize_field(&build_extended(&m).unwrap(), 1.0).unwrap();
    let chain = lie_chain(&f, &homogenize_trigger(&m.gamma, 0.0), 2).unwrap();
    assert!(chain.eval(&[0.1, 0.1, 0.0, 0.0, 0.0]).is_err());
    assert!(f.eval(&[0.1, 0.1, 0.0, 0.0, 0.0]).is_err());
}

#[test]
fn unknown_variables_are_dimension_errors() {
    let none = HashMap::new();
    let r = ControlModel::parse(2, 1, &["x3", "u1"], &["x1"], "e1", &none, 1.0);
    assert!(r.is_err());
    let r = ControlModel::parse(2, 1, &["x2", "u1"], &["e1"], "e1", &none, 1.0);
    assert!(r.is_err());
}
