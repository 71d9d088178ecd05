//! Real polynomials in ascending coefficient order and Sturm-sequence root
//! isolation.

pub fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn trim(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    c
}

fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect()
}

/// Remainder of a / b (both trimmed, b non-zero).
fn rem(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.to_vec();
    let db = b.len() - 1;
    let lead = b[db];
    while r.len() > db && !r.is_empty() {
        let k = r.len() - 1 - db;
        let f = r[r.len() - 1] / lead;
        for (i, bi) in b.iter().enumerate() {
            r[k + i] -= f * bi;
        }
        r.pop();
    }
    if r.is_empty() {
        r.push(0.0);
    }
    r
}

fn magnitude(c: &[f64]) -> f64 {
    c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Sturm chain p0 = P, p1 = P', p_{k+1} = −rem(p_{k−1}, p_k).
pub struct Sturm {
    chain: Vec<Vec<f64>>,
}

impl Sturm {
    pub fn new(c: &[f64]) -> Sturm {
        let p0 = trim(c.to_vec());
        let p1 = trim(derivative(&p0));
        let scale = magnitude(&p0).max(f64::MIN_POSITIVE);
        let mut chain = vec![p0, p1];
        loop {
            let k = chain.len();
            if chain[k - 1].len() == 1 {
                break;
            }
            let r: Vec<f64> = rem(&chain[k - 2], &chain[k - 1]).into_iter().map(|v| -v).collect();
            // relative cut-off: a numerically vanishing remainder means a shared factor
            let r_scale = magnitude(&chain[k - 2]).max(scale * 1e-300);
            let r = if magnitude(&r) <= 1e-13 * r_scale { vec![0.0] } else { trim(r) };
            if r.len() == 1 && r[0] == 0.0 {
                break;
            }
            chain.push(r);
        }
        Sturm { chain }
    }

    pub fn variations(&self, x: f64) -> usize {
        let mut count = 0;
        let mut last = 0.0f64;
        for p in &self.chain {
            let v = eval(p, x);
            if v != 0.0 {
                if last != 0.0 && (v > 0.0) != (last > 0.0) {
                    count += 1;
                }
                last = v;
            }
        }
        count
    }

    /// Number of distinct real roots in (a, b].
    pub fn count(&self, a: f64, b: f64) -> usize {
        self.variations(a).saturating_sub(self.variations(b))
    }
}

/// Smallest strictly positive real root of Σ c_i x^i, or `None`.
///
/// The root is located by bisection on the Sturm count until the bracket
/// holds a single sign change, then by bisection on the sign of the
/// polynomial, to relative width ~1e-15.
pub fn min_positive_root(c: &[f64]) -> Option<f64> {
    if c.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut c = trim(c.to_vec());
    // factor out roots at zero
    while c.len() > 1 && c[0] == 0.0 {
        c.remove(0);
    }
    if c.len() <= 1 {
        return None;
    }
    let d = c.len() - 1;
    let lead = c[d];
    let bound = 1.0 + c[..d].iter().fold(0.0f64, |m, a| m.max((a / lead).abs()));
    let sturm = Sturm::new(&c);
    if sturm.count(0.0, bound) == 0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, bound);
    for _ in 0..2000 {
        let p_lo = eval(&c, lo);
        let p_hi = eval(&c, hi);
        if p_lo != 0.0 && p_hi != 0.0 && (p_lo > 0.0) != (p_hi > 0.0) && sturm.count(lo, hi) == 1 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            return Some(hi);
        }
        if sturm.count(0.0, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s_lo = eval(&c, lo) > 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        let v = eval(&c, mid);
        if v == 0.0 {
            return Some(mid);
        }
        if (v > 0.0) == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factored_cubic() {
        // (q-1)(q-2)(q-3)
        let r = min_positive_root(&[-6.0, 11.0, -6.0, 1.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn no_positive_root() {
        assert_eq!(min_positive_root(&[-1.0, 0.0, -1.0]), None);
        assert_eq!(min_positive_root(&[1.0, 1.0]), None);
        assert_eq!(min_positive_root(&[-1.0]), None);
    }

    #[test]
    fn double_root() {
        let r = min_positive_root(&[1.0, -2.0, 1.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-7, "{r}");
    }

    #[test]
    fn root_at_zero_is_skipped() {
        // q (q - 0.5)
        let r = min_positive_root(&[0.0, -0.5, 1.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sturm_counts_distinct_roots() {
        let s = Sturm::new(&[-6.0, 11.0, -6.0, 1.0]);
        assert_eq!(s.count(0.0, 10.0), 3);
        assert_eq!(s.count(1.5, 2.5), 1);
    }
}
