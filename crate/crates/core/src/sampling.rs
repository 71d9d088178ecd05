//! Low-discrepancy point sets and direction generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Additive recurrence (Kronecker) sequence with the generalised golden
/// ratio, randomly shifted by the seed. Deterministic per (dim, seed).
#[derive(Debug, Clone)]
pub struct QuasiRandom {
    alpha: Vec<f64>,
    state: Vec<f64>,
}

impl QuasiRandom {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0);
        // phi_d is the positive root of x^(d+1) = x + 1
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alpha = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = (0..dim).map(|_| rng.gen::<f64>()).collect();
        QuasiRandom { alpha, state }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        for (s, a) in self.state.iter_mut().zip(&self.alpha) {
            *s = (*s + a).fract();
        }
        // keep strictly inside (0, 1) for the inverse normal transform
        self.state.iter().map(|v| v.clamp(1e-12, 1.0 - 1e-12)).collect()
    }
}

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error about 1e-9, plenty for direction sampling).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Map a point of the unit cube (dimension `dim`) to the unit sphere S^{dim-1}.
pub fn cube_to_sphere(u: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = u.iter().map(|&p| inverse_normal_cdf(p)).collect();
    let n = norm(&g);
    if n == 0.0 {
        let mut e = vec![0.0; u.len()];
        e[0] = 1.0;
        return e;
    }
    g.iter().map(|x| x / n).collect()
}

/// Map a point of the unit cube (dimension `dim + 1`) to the ball of radius `r`
/// in R^dim, uniformly in volume.
pub fn cube_to_ball(u: &[f64], r: f64) -> Vec<f64> {
    let dim = u.len() - 1;
    let dir = cube_to_sphere(&u[..dim]);
    let rad = r * u[dim].powf(1.0 / dim as f64);
    dir.iter().map(|x| x * rad).collect()
}

/// Quasi-random points uniformly distributed in the ball of radius `r`.
pub fn ball_points(count: usize, dim: usize, r: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut q = QuasiRandom::new(dim + 1, seed);
    (0..count).map(|_| cube_to_ball(&q.next_point(), r)).collect()
}

/// Quasi-random unit directions in R^dim.
pub fn sphere_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..count).map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }]).collect();
    }
    let mut q = QuasiRandom::new(dim, seed);
    (0..count).map(|_| cube_to_sphere(&q.next_point())).collect()
}

/// `count` equally spaced points on the circle of radius `r` in the
/// coordinate plane `(i, j)` of R^dim, starting on the positive i axis.
pub fn circle_points(count: usize, dim: usize, plane: (usize, usize), r: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let mut v = vec![0.0; dim];
            v[plane.0] = r * th.cos();
            v[plane.1] = r * th.sin();
            v
        })
        .collect()
}

/// Fibonacci lattice on the sphere of radius `r` in R^3.
pub fn fibonacci_sphere(count: usize, r: f64) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let y = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let rad = (1.0 - y * y).sqrt();
            let th = golden * k as f64;
            vec![r * rad * th.cos(), r * y, r * rad * th.sin()]
        })
        .collect()
}

/// Seeded pseudo-random generator used where a low-discrepancy sequence is
/// not needed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_normal_known_quantiles() {
        assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((inverse_normal_cdf(0.001) + 3.090232306167813).abs() < 1e-7);
    }

    #[test]
    fn ball_points_are_inside_and_deterministic() {
        let a = ball_points(500, 4, 2.0, 3);
        let b = ball_points(500, 4, 2.0, 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| norm(p) <= 2.0 + 1e-12));
        // uniform in volume: about (1/2)^4 of the points inside radius 1
        let inner = a.iter().filter(|p| norm(p) < 1.0).count() as f64 / 500.0;
        assert!((inner - 1.0 / 16.0).abs() < 0.03, "{inner}");
    }

    #[test]
    fn sequence_covers_the_cube() {
        let mut q = QuasiRandom::new(2, 0);
        let pts: Vec<_> = (0..1000).map(|_| q.next_point()).collect();
        let mean0 = pts.iter().map(|p| p[0]).sum::<f64>() / 1000.0;
        assert!((mean0 - 0.5).abs() < 0.01);
        let quadrant = pts.iter().filter(|p| p[0] < 0.5 && p[1] < 0.5).count();
        assert!((quadrant as i64 - 250).abs() < 15);
    }
}
