//! Point clouds of isochronous manifolds: the approximation from a comparison
//! model (closed form along rays) and the exact one from the event oracle.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::ComparisonModel;
use crate::error::{Error, Result};
use crate::model::{ExtendedField, LieChain};
use crate::poly;
use crate::sampling::{self, norm};
use crate::selftrigger::ROOT_ROUNDING;
use crate::sim::{event_time_oracle, IntegratorConfig, TriggerFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudKind {
    Approx,
    Exact,
    Sphere,
}

impl CloudKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CloudKind::Approx => "approx",
            CloudKind::Exact => "exact",
            CloudKind::Sphere => "sphere",
        }
    }

    pub fn parse(s: &str) -> Option<CloudKind> {
        match s {
            "approx" => Some(CloudKind::Approx),
            "exact" => Some(CloudKind::Exact),
            "sphere" => Some(CloudKind::Sphere),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudPoint {
    pub index: usize,
    /// Unit direction of the ray.
    pub direction: Vec<f64>,
    pub lambda: Option<f64>,
    pub point: Option<Vec<f64>>,
    /// Set when the ray has no crossing (e.g. "stable_ray").
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldCloud {
    pub t_star: f64,
    pub kind: CloudKind,
    pub points: Vec<CloudPoint>,
}

fn unit(d: &[f64]) -> Result<Vec<f64>> {
    let n = norm(d);
    if !(n > 0.0) {
        return Err(Error::Invalid("direction vectors must be non-zero".into()));
    }
    Ok(d.iter().map(|v| v / n).collect())
}

/// Rays for the e = 0 slice: x on the unit sphere of R^n, with w = 1
/// appended for homogenized fields, normalized.
pub fn default_directions(n: usize, homogenized: bool, count: usize) -> Vec<Vec<f64>> {
    let xs = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => sampling::circle_points(count, 2, (0, 1), 1.0),
        3 => sampling::fibonacci_sphere(count, 1.0),
        _ => sampling::sphere_points(count, n, 11),
    };
    xs.into_iter()
        .map(|x| {
            let mut z = x;
            z.extend(std::iter::repeat_n(0.0, n));
            if homogenized {
                z.push(1.0);
            }
            let nz = norm(&z);
            z.iter().map(|v| v / nz).collect()
        })
        .collect()
}

/// Crossing of each ray with Ω↓_t: minimal positive λ with
/// Σ β_i(t, d) λ^{iξ} = 0 (after dividing out λ^ϑ), rounded towards the origin.
pub fn sample_approx(cm: &ComparisonModel, chain: &LieChain, directions: &[Vec<f64>], t_star: f64) -> Result<ManifoldCloud> {
    let xi = chain
        .xi
        .ok_or_else(|| Error::Invalid("approximate isochrones need a homogeneous field".into()))?;
    let row = cm.exp_row(t_star);
    let points = directions
        .par_iter()
        .enumerate()
        .map(|(index, d)| -> Result<CloudPoint> {
            let d = unit(d)?;
            let mu = chain.mu(&d, cm.p)?;
            let beta: Vec<f64> = (0..cm.p).map(|i| row[i] * mu[i]).collect();
            let q = if beta[0] < 0.0 { poly::min_positive_root(&beta) } else { None };
            Ok(match q {
                Some(q) => {
                    let lambda = (q * (1.0 - ROOT_ROUNDING)).powf(1.0 / xi);
                    let point = d.iter().map(|v| v * lambda).collect();
                    CloudPoint { index, direction: d, lambda: Some(lambda), point: Some(point), flag: None }
                }
                None => {
                    let flag = if beta[0] >= 0.0 { "nonnegative_gamma" } else { "stable_ray" };
                    CloudPoint { index, direction: d, lambda: None, point: None, flag: Some(flag.into()) }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldCloud { t_star, kind: CloudKind::Approx, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    /// τ(λd) = λ^{−ξ}τ(d): one oracle call per ray.
    ScalingLaw,
    /// Bisection on λ with an oracle call per probe.
    Bisection,
}

fn bisect_lambda(
    field: &ExtendedField,
    gamma: &TriggerFn,
    d: &[f64],
    t_star: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>> {
    let tau = |l: f64| -> Result<f64> {
        let z: Vec<f64> = d.iter().map(|v| v * l).collect();
        event_time_oracle(field, gamma, &z, cfg)
    };
    // τ decreases along the ray; bracket τ(lo) ≥ t* ≥ τ(hi)
    let (mut lo, mut hi) = (1.0, 1.0);
    let t1 = tau(1.0)?;
    if t1 >= t_star {
        hi = 2.0;
        let mut k = 0;
        while tau(hi)? > t_star {
            lo = hi;
            hi *= 2.0;
            k += 1;
            if k > 60 {
                return Ok(None);
            }
        }
    } else {
        lo = 0.5;
        let mut k = 0;
        while tau(lo)? < t_star {
            hi = lo;
            lo *= 0.5;
            k += 1;
            if k > 60 {
                return Ok(None);
            }
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if tau(mid)? >= t_star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Points z* = λd with τ(z*) = t* from the event oracle.
pub fn sample_exact(
    field: &ExtendedField,
    gamma: &TriggerFn,
    directions: &[Vec<f64>],
    t_star: f64,
    cfg: &IntegratorConfig,
    method: ExactMethod,
) -> Result<ManifoldCloud> {
    let xi = field.xi;
    if method == ExactMethod::ScalingLaw && xi.is_none() {
        return Err(Error::Invalid("the scaling-law shortcut needs a homogeneous field".into()));
    }
    let points = directions
        .par_iter()
        .enumerate()
        .map(|(index, d)| -> Result<CloudPoint> {
            let d = unit(d)?;
            let lambda = match method {
                ExactMethod::ScalingLaw => {
                    let tau = event_time_oracle(field, gamma, &d, cfg)?;
                    tau.is_finite().then(|| (tau / t_star).powf(1.0 / xi.unwrap()))
                }
                ExactMethod::Bisection => bisect_lambda(field, gamma, &d, t_star, cfg)?,
            };
            Ok(match lambda {
                Some(l) => {
                    let point = d.iter().map(|v| v * l).collect();
                    CloudPoint { index, direction: d, lambda: Some(l), point: Some(point), flag: None }
                }
                None => CloudPoint { index, direction: d, lambda: None, point: None, flag: Some("stable_ray".into()) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldCloud { t_star, kind: CloudKind::Exact, points })
}

/// Sphere of the given radius sampled on the same rays.
pub fn sphere_cloud(directions: &[Vec<f64>], radius: f64, t_star: f64) -> Result<ManifoldCloud> {
    let points = directions
        .iter()
        .enumerate()
        .map(|(index, d)| {
            let d = unit(d)?;
            let point = d.iter().map(|v| v * radius).collect();
            Ok(CloudPoint { index, direction: d, lambda: Some(radius), point: Some(point), flag: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldCloud { t_star, kind: CloudKind::Sphere, points })
}

/// Largest sphere (centred at the origin) inside the cloud along its rays.
pub fn inscribed_radius(cloud: &ManifoldCloud) -> Option<f64> {
    cloud.points.iter().filter_map(|p| p.lambda).reduce(f64::min)
}

/// Symmetric Hausdorff distance between the point sets of two clouds.
pub fn hausdorff(a: &ManifoldCloud, b: &ManifoldCloud) -> f64 {
    let pa: Vec<&Vec<f64>> = a.points.iter().filter_map(|p| p.point.as_ref()).collect();
    let pb: Vec<&Vec<f64>> = b.points.iter().filter_map(|p| p.point.as_ref()).collect();
    let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let directed = |s: &[&Vec<f64>], t: &[&Vec<f64>]| {
        s.iter().map(|u| t.iter().map(|v| dist(u, v)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

/// Columns: kind, index, d1..dN, lambda, z1..zN, flag.
pub fn write_csv(clouds: &[ManifoldCloud], mut w: impl Write) -> std::io::Result<()> {
    let dim = clouds.iter().flat_map(|c| c.points.first()).map(|p| p.direction.len()).next().unwrap_or(0);
    let mut header = vec!["kind".to_string(), "t_star_s".into(), "index".into()];
    header.extend((1..=dim).map(|i| format!("d{i}")));
    header.push("lambda".into());
    header.extend((1..=dim).map(|i| format!("z{i}")));
    header.push("flag".into());
    writeln!(w, "{}", header.join(","))?;
    for c in clouds {
        for p in &c.points {
            let mut row = vec![c.kind.as_str().to_string(), format!("{:e}", c.t_star), p.index.to_string()];
            row.extend(p.direction.iter().map(|v| format!("{v:e}")));
            row.push(p.lambda.map_or(String::new(), |l| format!("{l:e}")));
            match &p.point {
                Some(z) => row.extend(z.iter().map(|v| format!("{v:e}"))),
                None => row.extend(std::iter::repeat_n(String::new(), dim)),
            }
            row.push(p.flag.clone().unwrap_or_default());
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}
