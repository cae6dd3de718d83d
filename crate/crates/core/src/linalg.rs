//! Matrix helpers for the GL⁺ path constructions: polar decomposition,
//! logarithm of a rotation, powers of positive-definite matrices.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Polar decomposition `g = R·P` with `R` orthogonal and `P` symmetric
/// positive definite.
pub fn polar_decomposition(g: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let svd = g.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    if svd.singular_values.min() <= 0.0 {
        return Err(Error::SingularGroupElement(0.0));
    }
    let rotation = &u * &v_t;
    let sigma = DMatrix::from_diagonal(&svd.singular_values);
    let positive = v_t.transpose() * sigma * &v_t;
    Ok((rotation, symmetrize(&positive)))
}

/// `P^s` for a symmetric positive-definite `P`.
pub fn spd_power(p: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(p.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Numerical("matrix is not positive definite".into()));
    }
    let powered = eig.eigenvalues.map(|l| l.powf(s));
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&powered) * v.transpose())))
}

/// Principal real logarithm of a rotation `R ∈ SO(n)`, returned as a
/// skew-symmetric matrix.
///
/// Uses the real Schur form, which is block diagonal for a normal matrix:
/// 2x2 rotation blocks contribute their angle, pairs of `-1` eigenvalues
/// contribute a rotation by π.
pub fn rotation_log(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    let orth_resid = (r.transpose() * r - DMatrix::identity(n, n)).amax();
    if orth_resid > 1e-8 {
        return Err(Error::Numerical(format!(
            "matrix is not orthogonal (residual {orth_resid:e})"
        )));
    }
    if r.determinant() <= 0.0 {
        return Err(Error::Numerical("rotation has non-positive determinant".into()));
    }
    let (q, t) = r.clone().schur().unpack();
    let mut log_t = DMatrix::zeros(n, n);
    let mut minus_one = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-12 {
            let c = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let s = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
            let theta = s.atan2(c);
            log_t[(i, i + 1)] = -theta;
            log_t[(i + 1, i)] = theta;
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                minus_one.push(i);
            }
            i += 1;
        }
    }
    if minus_one.len() % 2 != 0 {
        return Err(Error::Numerical("odd number of -1 eigenvalues".into()));
    }
    for pair in minus_one.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        log_t[(a, b)] = -PI;
        log_t[(b, a)] = PI;
    }
    let log = &q * log_t * q.transpose();
    let skew = (&log - log.transpose()) * 0.5;
    let check = (skew.clone().exp() - r).amax();
    if check > 1e-8 {
        return Err(Error::Numerical(format!(
            "rotation logarithm failed to reproduce R (residual {check:e})"
        )));
    }
    Ok(skew)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Matrix exponential.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Square matrix of double-double numbers, row major.
pub(crate) type DdMatrix = Vec<Vec<TwoFloat>>;

pub(crate) fn dd_from(m: &DMatrix<f64>) -> DdMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| TwoFloat::from(m[(i, j)])).collect())
        .collect()
}

/// `a / b` by long division on the leading component.
///
/// `TwoFloat`'s own quotient refines the reciprocal with an unfused
/// multiply-subtract and so is only accurate to f64 without FMA.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let q3 = (r - b * q2).hi() / b.hi();
    (TwoFloat::from(q1) + q2) + q3
}

/// Gauss–Jordan inverse with partial pivoting; `None` when singular.
pub(crate) fn dd_inverse(m: &DMatrix<f64>) -> Option<DdMatrix> {
    let n = m.nrows();
    let mut a = dd_from(m);
    let mut inv: DdMatrix = (0..n)
        .map(|i| (0..n).map(|j| TwoFloat::from(if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())?;
        if a[pivot][col] == TwoFloat::from(0.0) {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] = dd_div(a[col][j], p);
            inv[col][j] = dd_div(inv[col][j], p);
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            for j in 0..n {
                a[row][j] = a[row][j] - factor * a[col][j];
                inv[row][j] = inv[row][j] - factor * inv[col][j];
            }
        }
    }
    Some(inv)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub(crate) fn dd_determinant(mut a: DdMatrix) -> TwoFloat {
    let n = a.len();
    let mut det = TwoFloat::from(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col] == TwoFloat::from(0.0) {
            return TwoFloat::from(0.0);
        }
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col][col..];
        for row in rest {
            let factor = dd_div(row[col], p);
            for (x, &y) in row[col..].iter_mut().zip(pivot_row) {
                *x -= factor * y;
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn polar_reconstructs() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -0.3, 1.5, 0.2, 0.7, -1.0, 2.0]);
        let (r, p) = polar_decomposition(&g).unwrap();
        assert!((&r * &p - &g).amax() < 1e-12);
        assert!((r.transpose() * &r - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!(SymmetricEigen::new(p).eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn log_of_planar_rotation() {
        let log = rotation_log(&rot2(0.7)).unwrap();
        assert!((log[(1, 0)] - 0.7).abs() < 1e-12);
        assert!((log[(0, 1)] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn log_of_half_turn() {
        let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, -1.0]));
        let log = rotation_log(&r).unwrap();
        assert!((log.exp() - r).amax() < 1e-10);
    }

    #[test]
    fn log_of_random_rotation() {
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.4, -1.1, 0.3, -0.4, 0.0, 0.9, 2.0, 1.1, -0.9, 0.0, -0.5, -0.3, -2.0, 0.5, 0.0,
        ]);
        let r = a.exp();
        let log = rotation_log(&r).unwrap();
        assert!((log.exp() - r).amax() < 1e-10);
        assert!((&log + log.transpose()).amax() < 1e-14);
    }

    #[test]
    fn spd_power_halves() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let h = spd_power(&p, 0.5).unwrap();
        assert!((&h * &h - &p).amax() < 1e-12);
        assert!((spd_power(&p, 0.0).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn double_double_inverse_and_determinant() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 2.0]);
        let inv = dd_inverse(&m).unwrap();
        let check = m.clone().try_inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((inv[i][j].hi() - check[(i, j)]).abs() < 1e-14);
            }
        }
        let det = dd_determinant(dd_from(&m));
        assert!((det.hi() - m.determinant()).abs() < 1e-12);
        assert!(dd_inverse(&DMatrix::zeros(2, 2)).is_none());
        let q = dd_div(TwoFloat::from(1.0), TwoFloat::from(3.0));
        assert!(f64::from(q * 3.0 - 1.0).abs() < 1e-31);
        assert!(q.lo() != 0.0);
        // 3·fl(1/3) − 1 cancels to zero in f64 but not in double-double
        let third = 1.0 / 3.0;
        let nearly = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, third]);
        let d = dd_determinant(dd_from(&nearly));
        assert_eq!(d.hi(), 3.0f64.mul_add(third, -1.0));
        assert_ne!(d.hi(), 0.0);
    }
}
