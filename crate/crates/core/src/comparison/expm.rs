use nalgebra::DMatrix;

// Padé(13) coefficients and the matching norm threshold (Higham 2005).
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// exp(A·t) by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exp(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert!(a.is_square(), "matrix_exp needs a square matrix");
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = a * t;
    let nrm = norm1(&m);
    if nrm == 0.0 {
        return id;
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    if s > 0 {
        m /= 2f64.powi(s);
    }
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let b = &B13;
    let u_inner = &m6 * (&m6 * b[13] + &m4 * b[11] + &m2 * b[9]) + &m6 * b[7] + &m4 * b[5] + &m2 * b[3] + &id * b[1];
    let u = &m * u_inner;
    let v = &m6 * (&m6 * b[12] + &m4 * b[10] + &m2 * b[8]) + &m6 * b[6] + &m4 * b[4] + &m2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is singular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_identity() {
        let a = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(matrix_exp(&a, 2.0), DMatrix::identity(3, 3));
    }

    #[test]
    fn nilpotent_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exp(&a, 0.7);
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.0, 1.0]);
        assert!((e - want).abs().max() < 1e-15);
    }

    #[test]
    fn large_norm_uses_squaring() {
        // rotation generator: exp is a rotation by angle t
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let t = 40.0;
        let e = matrix_exp(&a, t);
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-12);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-12);
    }
}
