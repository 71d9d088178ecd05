use std::collections::HashMap;

use isochron::comparison::{bound_evolve, BoundState, ComparisonModel, Sense};
use isochron::manifold::{
    default_directions, hausdorff, inscribed_radius, sample_approx, sample_exact, sphere_cloud, write_csv, CloudKind,
    ExactMethod,
};
use isochron::model::{build_extended, lie_chain, ControlModel, ExtendedField, LieChain};
use isochron::sim::{event_time_oracle, IntegratorConfig, TriggerFn};

fn example1() -> (ExtendedField, TriggerFn, LieChain) {
    let params: HashMap<String, f64> = [("sigma".to_string(), 0.1)].into();
    let m = ControlModel::parse(
        2,
        1,
        &["-x1^3 + x1*x2^2", "x1*x2^2 + u1 - x1^2*x2"],
        &["-x2^3 - x1*x2^2"],
        "e1^2 + e2^2 - 0.0127^2*sigma^2*(x1^2 + x2^2)",
        &params,
        1.0,
    )
    .unwrap();
    let f = build_extended(&m).unwrap().with_degree(2.0, 32, 1).unwrap();
    let g = TriggerFn::new(&m.gamma, &f).unwrap();
    let chain = lie_chain(&f, &m.gamma, 3).unwrap();
    (f, g, chain)
}

fn cfg() -> IntegratorConfig {
    IntegratorConfig { max_step: 1e-4, ..Default::default() }
}

fn model() -> ComparisonModel {
    ComparisonModel::new(vec![105.970, 0.021, 1.033], Sense::Lower, 1.0, 1e-3).unwrap()
}

#[test]
fn unit_scale_at_the_rays_own_event_time() {
    let (f, g, _) = example1();
    let dirs = default_directions(2, false, 6);
    for d in &dirs {
        let tau = event_time_oracle(&f, &g, d, &cfg()).unwrap();
        for method in [ExactMethod::ScalingLaw, ExactMethod::Bisection] {
            let c = sample_exact(&f, &g, std::slice::from_ref(d), tau, &cfg(), method).unwrap();
            let l = c.points[0].lambda.unwrap();
            assert!((l - 1.0).abs() < 1e-6, "{method:?}: λ = {l}");
        }
    }
}

#[test]
fn doubling_t_star_shrinks_rays_by_the_homogeneity_law() {
    let (f, g, _) = example1();
    let dirs = default_directions(2, false, 16);
    let factor = 2f64.powf(-1.0 / 2.0);
    let e1 = sample_exact(&f, &g, &dirs, 1e-3, &cfg(), ExactMethod::Bisection).unwrap();
    let e2 = sample_exact(&f, &g, &dirs, 2e-3, &cfg(), ExactMethod::Bisection).unwrap();
    for (p, q) in e1.points.iter().zip(&e2.points) {
        let (l1, l2) = (p.lambda.unwrap(), q.lambda.unwrap());
        assert!((l2 / l1 - factor).abs() < 1e-6, "ray {}: {l1} → {l2}", p.index);
    }
}

#[test]
fn scaling_shortcut_agrees_with_bisection() {
    let (f, g, _) = example1();
    let dirs = default_directions(2, false, 16);
    let fast = sample_exact(&f, &g, &dirs, 1e-3, &cfg(), ExactMethod::ScalingLaw).unwrap();
    let slow = sample_exact(&f, &g, &dirs, 1e-3, &cfg(), ExactMethod::Bisection).unwrap();
    for (a, b) in fast.points.iter().zip(&slow.points) {
        let (la, lb) = (a.lambda.unwrap(), b.lambda.unwrap());
        assert!((la - lb).abs() <= 1e-6 * la, "ray {}: {la} vs {lb}", a.index);
    }
}

#[test]
fn approximate_crossing_zeroes_the_comparison_output() {
    let (_, _, chain) = example1();
    let cm = model();
    let dirs = default_directions(2, false, 24);
    let approx = sample_approx(&cm, &chain, &dirs, 1e-3).unwrap();
    for p in &approx.points {
        let z = p.point.as_ref().unwrap();
        let mu = chain.mu(z, cm.p).unwrap();
        let y = bound_evolve(&cm, &BoundState(mu.clone()), 1e-3).0[0];
        // y1 is a sum of terms of very different size; compare against their scale
        let row = cm.exp_row(1e-3);
        let scale: f64 = row.iter().zip(&mu).map(|(r, m)| (r * m).abs()).sum();
        assert!(y.abs() <= 1e-7 * scale, "ray {}: y1 = {y:e}, scale {scale:e}", p.index);
        // just inside: slightly smaller states still have y1(t*) < 0
        let inner: Vec<f64> = z.iter().map(|v| v * (1.0 - 1e-6)).collect();
        let yi = bound_evolve(&cm, &BoundState(chain.mu(&inner, cm.p).unwrap()), 1e-3).0[0];
        assert!(yi < 0.0);
    }
}

#[test]
fn sphere_and_distance_helpers() {
    let dirs = default_directions(2, true, 8);
    assert!(dirs.iter().all(|d| (d.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12));
    assert!(dirs.iter().all(|d| d.len() == 5));
    let s = sphere_cloud(&dirs, 0.5, 1e-3).unwrap();
    assert_eq!(inscribed_radius(&s), Some(0.5));
    assert_eq!(hausdorff(&s, &s), 0.0);
    let t = sphere_cloud(&dirs, 0.75, 1e-3).unwrap();
    assert!((hausdorff(&s, &t) - 0.25).abs() < 1e-12);
    assert!(sphere_cloud(&[vec![0.0, 0.0]], 1.0, 1e-3).is_err());
}

#[test]
fn csv_layout() {
    let dirs = default_directions(2, false, 3);
    let s = sphere_cloud(&dirs, 1.0, 1e-3).unwrap();
    let mut out = Vec::new();
    write_csv(&[s], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,t_star_s,index,d1,d2,d3,d4,lambda,z1,z2,z3,z4,flag");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("sphere,1e-3,0,"));
    assert_eq!(CloudKind::parse("exact"), Some(CloudKind::Exact));
    assert_eq!(CloudKind::parse("bogus"), None);
}
