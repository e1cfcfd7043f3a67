//! Shifted block inverse iteration with Rayleigh–Ritz for the low end of a
//! symmetric-definite pencil `K x = μ M x` given only operator applications.

use crate::error::{Error, Result};
use crate::krylov::{conjugate_gradient, preconditioned_cg};
use crate::real::{dot, lit, Real};
use crate::small::generalized_sym_eigen;

pub type Operator<'a, R> = &'a (dyn Fn(&[R], &mut [R]) + Sync);

#[derive(Debug, Clone, Copy)]
pub struct InverseIterationSettings<R> {
    pub shift: R,
    pub inner_tol: R,
    pub outer_tol: R,
    /// Absolute Ritz-value change accepted regardless of `outer_tol`.
    pub abs_tol: R,
    /// Relative tolerance for the last wanted value only; `None` uses `outer_tol`.
    pub last_tol: Option<R>,
    /// Inner tolerance for block vectors beyond the wanted ones; `None` uses `inner_tol`.
    pub guard_inner_tol: Option<R>,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl<R: Real> Default for InverseIterationSettings<R> {
    fn default() -> Self {
        Self {
            shift: lit(1e-6),
            inner_tol: lit(1e-10),
            outer_tol: lit(1e-10),
            abs_tol: R::zero(),
            last_tol: None,
            guard_inner_tol: None,
            max_outer: 500,
            max_inner: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpairs<R> {
    /// Ascending Ritz values.
    pub values: Vec<R>,
    /// M-orthonormal Ritz vectors.
    pub vectors: Vec<Vec<R>>,
    pub outer_iterations: usize,
}

fn rayleigh_ritz<R: Real>(
    k: Operator<'_, R>,
    m: Operator<'_, R>,
    block: &[Vec<R>],
) -> Result<(Vec<R>, Vec<Vec<R>>)> {
    let p = block.len();
    let len = block[0].len();
    let mut kx = vec![vec![R::zero(); len]; p];
    let mut mx = vec![vec![R::zero(); len]; p];
    for i in 0..p {
        k(&block[i], &mut kx[i]);
        m(&block[i], &mut mx[i]);
    }
    let mut a = vec![vec![R::zero(); p]; p];
    let mut b = vec![vec![R::zero(); p]; p];
    for i in 0..p {
        for j in i..p {
            let aij = lit::<R>(0.5) * (dot(&block[i], &kx[j]) + dot(&block[j], &kx[i]));
            let bij = lit::<R>(0.5) * (dot(&block[i], &mx[j]) + dot(&block[j], &mx[i]));
            a[i][j] = aij;
            a[j][i] = aij;
            b[i][j] = bij;
            b[j][i] = bij;
        }
    }
    let (vals, coeffs) = generalized_sym_eigen(&a, &b).ok_or(Error::NoConvergence {
        what: "Rayleigh-Ritz (block lost rank)",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let mut out = vec![vec![R::zero(); len]; p];
    for (col, o) in out.iter_mut().enumerate() {
        for (row, v) in block.iter().enumerate() {
            crate::real::axpy(coeffs[row][col], v, o);
        }
    }
    Ok((vals, out))
}

/// Computes the `wanted` smallest eigenpairs; `start` supplies the block
/// (its length is the block size, which must exceed `wanted`).
pub fn smallest_eigenpairs<R: Real>(
    k: Operator<'_, R>,
    m: Operator<'_, R>,
    start: Vec<Vec<R>>,
    wanted: usize,
    settings: &InverseIterationSettings<R>,
) -> Result<Eigenpairs<R>> {
    smallest_eigenpairs_preconditioned(k, m, None, start, wanted, settings)
}

/// As [`smallest_eigenpairs`], with an optional SPD approximation of
/// `(K + shift·M)⁻¹` for the inner solves.
pub fn smallest_eigenpairs_preconditioned<R: Real>(
    k: Operator<'_, R>,
    m: Operator<'_, R>,
    precond: Option<Operator<'_, R>>,
    start: Vec<Vec<R>>,
    wanted: usize,
    settings: &InverseIterationSettings<R>,
) -> Result<Eigenpairs<R>> {
    assert!(start.len() >= wanted && wanted > 0);
    let len = start[0].len();
    let (mut values, mut block) = rayleigh_ritz(k, m, &start)?;
    let sigma = settings.shift;
    let shifted = |x: &[R], y: &mut [R]| {
        k(x, y);
        let mut mx = vec![R::zero(); x.len()];
        m(x, &mut mx);
        crate::real::axpy(sigma, &mx, y);
    };
    for outer in 1..=settings.max_outer {
        let mut next = Vec::with_capacity(block.len());
        for (i, (v, &mu)) in block.iter().zip(&values).enumerate() {
            let tol = match settings.guard_inner_tol {
                Some(t) if i >= wanted => t,
                _ => settings.inner_tol,
            };
            let mut rhs = vec![R::zero(); len];
            m(v, &mut rhs);
            let scale = R::one() / (mu.max(R::zero()) + sigma);
            let mut x: Vec<R> = v.iter().map(|&t| t * scale).collect();
            match precond {
                Some(p) => preconditioned_cg(shifted, p, &rhs, &mut x, tol, settings.max_inner)?,
                None => conjugate_gradient(&shifted, &rhs, &mut x, tol, settings.max_inner, |_| {})?,
            };
            next.push(x);
        }
        let (new_values, new_block) = rayleigh_ritz(k, m, &next)?;
        let reference = new_values[new_values.len() - 1].abs().max(R::min_positive_value());
        let count = wanted.min(new_values.len());
        let converged = (0..count).all(|i| {
            let floor = reference * lit(1e-6);
            let change = (new_values[i] - values[i]).abs();
            let tol = match settings.last_tol {
                Some(t) if i + 1 == count => t,
                _ => settings.outer_tol,
            };
            change <= tol * new_values[i].abs().max(floor) || change <= settings.abs_tol
        });
        values = new_values;
        block = new_block;
        if converged && outer >= 2 {
            return Ok(Eigenpairs { values, vectors: block, outer_iterations: outer });
        }
    }
    Err(Error::NoConvergence {
        what: "block inverse iteration",
        iterations: settings.max_outer,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_kernel_and_first_mode_of_periodic_laplacian() {
        let n = 24;
        let k = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = 2.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n];
            }
        };
        let m = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let start: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..n).map(|i| ((i * (j + 1)) as f64 * 0.37).sin() + if j == 0 { 1.0 } else { 0.0 }).collect())
            .collect();
        let eig = smallest_eigenpairs(&k, &m, start, 2, &InverseIterationSettings::default()).unwrap();
        assert!(eig.values[0].abs() < 1e-10);
        let expected = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
        assert!((eig.values[1] - expected).abs() < 1e-8 * expected);
    }
}
