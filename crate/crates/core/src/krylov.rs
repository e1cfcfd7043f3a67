//! Matrix-free Krylov solvers on flat coefficient vectors.

use crate::error::{Error, Result};
use crate::real::{axpy, dot, lit, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side.
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
///
/// `project` is applied to the right-hand side and every search direction;
/// use it to confine the iteration to the complement of a known kernel
/// (e.g. the mean-zero gauge of a periodic Poisson problem).
pub fn conjugate_gradient<R, A, P>(
    mut apply: A,
    b: &[R],
    x: &mut [R],
    tol: R,
    max_iter: usize,
    project: P,
) -> Result<SolveStats>
where
    R: Real,
    A: FnMut(&[R], &mut [R]),
    P: Fn(&mut [R]),
{
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    project(x);
    let bnorm = norm2(&rhs);
    if bnorm == R::zero() {
        x.iter_mut().for_each(|v| *v = R::zero());
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![R::zero(); n];
    apply(x, &mut ax);
    let mut r: Vec<R> = rhs.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    project(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![R::zero(); n];
    for it in 0..max_iter {
        let rel = rr.sqrt() / bnorm;
        if rel <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: rel.to_f64().unwrap_or(f64::NAN) });
        }
        apply(&p, &mut ap);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= R::zero() {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        project(&mut p);
    }
    // recompute true residual before giving up
    apply(x, &mut ax);
    let mut res: Vec<R> = rhs.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    project(&mut res);
    let rel = norm2(&res) / bnorm;
    if rel <= tol * lit(10.0) {
        return Ok(SolveStats { iterations: max_iter, relative_residual: rel.to_f64().unwrap_or(f64::NAN) });
    }
    Err(Error::NoConvergence {
        what: "conjugate gradient",
        iterations: max_iter,
        residual: rel.to_f64().unwrap_or(f64::NAN),
    })
}

/// Preconditioned conjugate gradients; `precond` must be symmetric positive definite.
pub fn preconditioned_cg<R, A, P>(apply: A, precond: P, b: &[R], x: &mut [R], tol: R, max_iter: usize) -> Result<SolveStats>
where
    R: Real,
    A: Fn(&[R], &mut [R]),
    P: Fn(&[R], &mut [R]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == R::zero() {
        x.iter_mut().for_each(|v| *v = R::zero());
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![R::zero(); n];
    apply(x, &mut ax);
    let mut r: Vec<R> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut z = vec![R::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![R::zero(); n];
    for it in 0..max_iter {
        let rel = norm2(&r) / bnorm;
        if rel <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: rel.to_f64().unwrap_or(f64::NAN) });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= R::zero() {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    apply(x, &mut ax);
    let rel = b.iter().zip(&ax).map(|(&bi, &ai)| (bi - ai) * (bi - ai)).fold(R::zero(), |a, v| a + v).sqrt() / bnorm;
    if rel <= tol * lit(10.0) {
        return Ok(SolveStats { iterations: max_iter, relative_residual: rel.to_f64().unwrap_or(f64::NAN) });
    }
    Err(Error::NoConvergence {
        what: "preconditioned conjugate gradient",
        iterations: max_iter,
        residual: rel.to_f64().unwrap_or(f64::NAN),
    })
}

/// Restarted GMRES(m) for general nonsingular operators.
pub fn gmres<R, A>(
    mut apply: A,
    b: &[R],
    x: &mut [R],
    tol: R,
    restart: usize,
    max_iter: usize,
) -> Result<SolveStats>
where
    R: Real,
    A: FnMut(&[R], &mut [R]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == R::zero() {
        x.iter_mut().for_each(|v| *v = R::zero());
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut total = 0usize;
    let mut w = vec![R::zero(); n];
    let mut rel = R::infinity();
    while total < max_iter {
        apply(x, &mut w);
        let r: Vec<R> = b.iter().zip(&w).map(|(&bi, &wi)| bi - wi).collect();
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<R>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v / beta).collect());
        let mut h = vec![vec![R::zero(); m]; m + 1];
        let mut cs = vec![R::zero(); m];
        let mut sn = vec![R::zero(); m];
        let mut g = vec![R::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            apply(&basis[k], &mut w);
            // modified Gram-Schmidt, two passes
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let hj = dot(&w, v);
                    h[j][k] = h[j][k] + hj;
                    axpy(-hj, v, &mut w);
                }
            }
            let hnorm = norm2(&w);
            h[k + 1][k] = hnorm;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == R::zero() {
                cs[k] = R::one();
                sn[k] = R::zero();
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = R::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;
            total += 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || hnorm == R::zero() {
                break;
            }
            basis.push(w.iter().map(|&v| v / hnorm).collect());
        }
        // back substitution
        let mut y = vec![R::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s = s - h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, &yj) in y.iter().enumerate() {
            axpy(yj, &basis[j], x);
        }
        if rel <= tol {
            break;
        }
    }
    apply(x, &mut w);
    let r: Vec<R> = b.iter().zip(&w).map(|(&bi, &wi)| bi - wi).collect();
    let true_rel = norm2(&r) / bnorm;
    if true_rel <= tol * lit(10.0) {
        Ok(SolveStats { iterations: total, relative_residual: true_rel.to_f64().unwrap_or(f64::NAN) })
    } else {
        Err(Error::NoConvergence {
            what: "GMRES",
            iterations: total,
            residual: true_rel.max(rel).to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Subtracts the arithmetic mean (mean-zero gauge on periodic 0-forms).
pub fn remove_mean<R: Real>(v: &mut [R]) {
    if v.is_empty() {
        return;
    }
    let mean = crate::real::neumaier_sum(v.iter().copied()) / crate::real::from_usize(v.len());
    v.iter_mut().for_each(|x| *x = *x - mean);
}
