//! Small dense linear algebra: per-node n×n tensors (n ≤ 3) and the tiny
//! symmetric eigenproblems that arise in Rayleigh–Ritz steps.

use crate::real::{lit, Real};

/// Per-node vector; entries beyond the grid dimension stay zero.
pub type Vec3<R> = [R; 3];
/// Per-node matrix; entries beyond the grid dimension stay zero.
pub type Mat3<R> = [[R; 3]; 3];

pub fn zero_vec<R: Real>() -> Vec3<R> {
    [R::zero(); 3]
}

pub fn zero_mat<R: Real>() -> Mat3<R> {
    [[R::zero(); 3]; 3]
}

pub fn identity<R: Real>(n: usize) -> Mat3<R> {
    let mut m = zero_mat();
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = R::one();
    }
    m
}

pub fn det<R: Real>(m: &Mat3<R>, n: usize) -> R {
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Inverse by cofactors; `None` when the determinant vanishes.
pub fn inverse<R: Real>(m: &Mat3<R>, n: usize) -> Option<Mat3<R>> {
    let d = det(m, n);
    if d == R::zero() || !d.is_finite() {
        return None;
    }
    let mut inv = zero_mat();
    match n {
        1 => inv[0][0] = R::one() / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
            inv[1][1] = m[0][0] / d;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / d;
                }
            }
        }
        _ => panic!("unsupported dimension {n}"),
    }
    Some(inv)
}

pub fn mat_mul<R: Real>(a: &Mat3<R>, b: &Mat3<R>, n: usize) -> Mat3<R> {
    let mut c = zero_mat();
    for i in 0..n {
        for j in 0..n {
            let mut s = R::zero();
            for k in 0..n {
                s = s + a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn mat_vec<R: Real>(a: &Mat3<R>, v: &Vec3<R>, n: usize) -> Vec3<R> {
    let mut out = zero_vec();
    for i in 0..n {
        let mut s = R::zero();
        for k in 0..n {
            s = s + a[i][k] * v[k];
        }
        out[i] = s;
    }
    out
}

pub fn max_abs_diff<R: Real>(a: &Mat3<R>, b: &Mat3<R>, n: usize) -> R {
    let mut m = R::zero();
    for i in 0..n {
        for j in 0..n {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Eigenvalues (ascending) of the symmetric part of a per-node matrix.
pub fn sym_eigenvalues<R: Real>(m: &Mat3<R>, n: usize) -> Vec<R> {
    let half = lit::<R>(0.5);
    let a: Vec<Vec<R>> = (0..n)
        .map(|i| (0..n).map(|j| half * (m[i][j] + m[j][i])).collect())
        .collect();
    jacobi_eigen(a).0
}

/// Cyclic Jacobi rotation for a dense symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns (`vecs[row][col]`).
pub fn jacobi_eigen<R: Real>(mut a: Vec<Vec<R>>) -> (Vec<R>, Vec<Vec<R>>) {
    let m = a.len();
    let mut v: Vec<Vec<R>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { R::one() } else { R::zero() }).collect())
        .collect();
    let eps = R::epsilon();
    for _sweep in 0..100 {
        let mut off = R::zero();
        let mut diag = R::zero();
        for i in 0..m {
            diag = diag + a[i][i] * a[i][i];
            for j in (i + 1)..m {
                off = off + a[i][j] * a[i][j];
            }
        }
        if off <= eps * eps * diag.max(R::min_positive_value()) {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                if a[p][q] == R::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (lit::<R>(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + R::one()).sqrt());
                let c = R::one() / (t * t + R::one()).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..m)
        .map(|row| order.iter().map(|&col| v[row][col]).collect())
        .collect();
    (values, vecs)
}

/// Lower Cholesky factor of a dense SPD matrix.
pub fn cholesky<R: Real>(a: &[Vec<R>]) -> Option<Vec<Vec<R>>> {
    let m = a.len();
    let mut l = vec![vec![R::zero(); m]; m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            if i == j {
                if s <= R::zero() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves the symmetric-definite pencil `A x = μ B x` (small, dense).
///
/// Returns ascending eigenvalues and B-orthonormal eigenvectors as columns.
pub fn generalized_sym_eigen<R: Real>(
    a: &[Vec<R>],
    b: &[Vec<R>],
) -> Option<(Vec<R>, Vec<Vec<R>>)> {
    let m = a.len();
    let l = cholesky(b)?;
    // Linv
    let mut linv = vec![vec![R::zero(); m]; m];
    for col in 0..m {
        for i in 0..m {
            let mut s = if i == col { R::one() } else { R::zero() };
            for k in 0..i {
                s = s - l[i][k] * linv[k][col];
            }
            linv[i][col] = s / l[i][i];
        }
    }
    // C = Linv A Linv^T
    let mut tmp = vec![vec![R::zero(); m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut s = R::zero();
            for k in 0..m {
                s = s + linv[i][k] * a[k][j];
            }
            tmp[i][j] = s;
        }
    }
    let mut c = vec![vec![R::zero(); m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut s = R::zero();
            for k in 0..m {
                s = s + tmp[i][k] * linv[j][k];
            }
            c[i][j] = s;
        }
    }
    let half = lit::<R>(0.5);
    for i in 0..m {
        for j in (i + 1)..m {
            let s = half * (c[i][j] + c[j][i]);
            c[i][j] = s;
            c[j][i] = s;
        }
    }
    let (vals, y) = jacobi_eigen(c);
    // x = Linv^T y
    let mut x = vec![vec![R::zero(); m]; m];
    for i in 0..m {
        for col in 0..m {
            let mut s = R::zero();
            for k in 0..m {
                s = s + linv[k][i] * y[k][col];
            }
            x[i][col] = s;
        }
    }
    Some((vals, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip_3x3() {
        let m = [[2.0, 0.3, 0.1], [0.2, 1.5, -0.4], [0.0, 0.7, 3.0]];
        let inv = inverse(&m, 3).unwrap();
        let p = mat_mul(&m, &inv, 3);
        assert!(max_abs_diff(&p, &identity(3), 3) < 1e-14);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (vals, _) = jacobi_eigen(a);
        assert!((vals[0] - 1.0f64).abs() < 1e-14);
        assert!((vals[1] - 3.0f64).abs() < 1e-14);
    }

    #[test]
    fn generalized_pencil() {
        let a = vec![vec![4.0, 0.0], vec![0.0, 9.0]];
        let b = vec![vec![4.0, 0.0], vec![0.0, 1.0]];
        let (vals, vecs) = generalized_sym_eigen(&a, &b).unwrap();
        assert!((vals[0] - 1.0f64).abs() < 1e-13);
        assert!((vals[1] - 9.0f64).abs() < 1e-13);
        // B-normalized: 4 x0^2 = 1
        assert!((4.0 * vecs[0][0] * vecs[0][0] - 1.0f64).abs() < 1e-13);
    }
}
