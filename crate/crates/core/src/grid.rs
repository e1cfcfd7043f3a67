//! Uniform periodic lattice on the unit torus and its discrete forms.
//!
//! Storage follows the primal cubical complex: a 0-form lives on nodes, the
//! component `a` of a 1-form on the edge from `x` to `x + h_a e_a` (sampled at
//! its midpoint), and the `(a, b)` component of a 2-form on the face spanned by
//! `e_a, e_b` at `x` (sampled at its centre). Every array is indexed by the
//! base node `x`, row-major with axis 1 fastest. The exterior derivatives are
//! forward differences, which commute exactly, so `d1 ∘ d0 = 0` identically
//! and the complex has the cohomology of the torus (`b1 = n`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{from_usize, lit, neumaier_sum, Real};
use crate::small::{zero_mat, zero_vec, Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicGrid {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl PeriodicGrid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        let n = sizes.len();
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {n}")));
        }
        for (a, &s) in sizes.iter().enumerate() {
            if s < 8 {
                return Err(Error::InvalidGrid(format!("axis {} has {s} nodes, need at least 8", a + 1)));
            }
            if s % 2 != 0 {
                return Err(Error::InvalidGrid(format!("axis {} has odd node count {s}", a + 1)));
            }
        }
        let mut strides = Vec::with_capacity(n);
        let mut len = 1;
        for &s in sizes {
            strides.push(len);
            len *= s;
        }
        Ok(Self { sizes: sizes.to_vec(), strides, len })
    }

    /// Same node count on every axis.
    pub fn cubic(dim: usize, size: usize) -> Result<Self> {
        Self::new(&vec![size; dim])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn spacing<R: Real>(&self, axis: usize) -> R {
        R::one() / from_usize(self.sizes[axis])
    }

    pub fn max_spacing<R: Real>(&self) -> R {
        (0..self.dim()).map(|a| self.spacing::<R>(a)).fold(R::zero(), R::max)
    }

    pub fn cell_volume<R: Real>(&self) -> R {
        R::one() / from_usize(self.len)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..self.dim() {
            c[a] = (idx / self.strides[a]) % self.sizes[a];
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .zip(&self.sizes)
            .map(|((&c, &s), &n)| (c % n) * s)
            .sum()
    }

    /// Periodic neighbour `idx + delta * e_axis`.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, delta: isize) -> usize {
        let n = self.sizes[axis] as isize;
        let stride = self.strides[axis];
        let c = ((idx / stride) % self.sizes[axis]) as isize;
        let nc = (c + delta).rem_euclid(n);
        (idx as isize + (nc - c) * stride as isize) as usize
    }

    /// Node coordinates in `[0, 1)^n`.
    pub fn point<R: Real>(&self, idx: usize) -> Vec3<R> {
        let c = self.coords(idx);
        let mut p = zero_vec();
        for a in 0..self.dim() {
            p[a] = from_usize::<R>(c[a]) * self.spacing::<R>(a);
        }
        p
    }

    /// Ordered index pairs `(a, b)`, `a < b`, enumerating 2-form components.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.dim();
        let mut out = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                out.push((a, b));
            }
        }
        out
    }

    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        self.pairs()
            .iter()
            .position(|&p| p == (a.min(b), a.max(b)))
            .expect("valid pair")
    }
}

fn check_finite<R: Real>(values: &[R], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidField(format!("{what}: non-finite value at node {pos}")));
    }
    Ok(())
}

/// A 0-form: one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<R> {
    grid: PeriodicGrid,
    values: Vec<R>,
}

impl<R: Real> ScalarField<R> {
    pub fn new(grid: &PeriodicGrid, values: Vec<R>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn constant(grid: &PeriodicGrid, value: R) -> Self {
        Self { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self::constant(grid, R::zero())
    }

    /// Samples `f` at every node.
    pub fn from_fn<F: Fn(&Vec3<R>) -> R + Sync>(grid: &PeriodicGrid, f: F) -> Result<Self> {
        let values: Vec<R> = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    /// Samples `f` after checking that it is 1-periodic along every axis at
    /// every node; rejects non-periodic samplers such as `x ↦ x1`.
    pub fn sample_periodic<F: Fn(&Vec3<R>) -> R + Sync>(grid: &PeriodicGrid, f: F) -> Result<Self> {
        let field = Self::from_fn(grid, &f)?;
        let scale = field.max_abs().max(R::one());
        for i in 0..grid.len() {
            let p = grid.point::<R>(i);
            for a in 0..grid.dim() {
                let mut q = p;
                q[a] = q[a] + R::one();
                if (f(&q) - field.values[i]).abs() > lit::<R>(1e-10) * scale {
                    return Err(Error::InvalidField(format!(
                        "sampler is not 1-periodic along axis {}",
                        a + 1
                    )));
                }
            }
        }
        Ok(field)
    }

    pub(crate) fn from_raw(grid: &PeriodicGrid, values: Vec<R>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn into_values(self) -> Vec<R> {
        self.values
    }

    pub fn max_abs(&self) -> R {
        crate::real::norm_inf(&self.values)
    }

    pub fn min(&self) -> R {
        self.values.iter().copied().fold(R::infinity(), R::min)
    }

    /// Flat (unweighted) mean.
    pub fn mean(&self) -> R {
        neumaier_sum(self.values.iter().copied()) / from_usize(self.values.len())
    }

    /// Discrete L² norm over the unit torus.
    pub fn l2_norm(&self) -> R {
        (crate::real::dot(&self.values, &self.values) * self.grid.cell_volume::<R>()).sqrt()
    }

    pub fn map<F: Fn(R) -> R>(&self, f: F) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map<F: Fn(R, R) -> R>(&self, other: &Self, f: F) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Translation by `delta` nodes along `axis` (value at x becomes value at x + delta e_axis).
    pub fn translated(&self, axis: usize, delta: isize) -> Self {
        let mut out = vec![R::zero(); self.values.len()];
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.values[self.grid.shift(i, axis, -delta)];
        }
        Self::from_raw(&self.grid, out)
    }
}

/// A 1-form on primal edges; component `a` lives on edge `x → x + h_a e_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormField<R> {
    grid: PeriodicGrid,
    comps: Vec<Vec<R>>,
}

impl<R: Real> OneFormField<R> {
    pub fn new(grid: &PeriodicGrid, comps: Vec<Vec<R>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidField(format!(
                "1-form needs {} components of {} values",
                grid.dim(),
                grid.len()
            )));
        }
        for c in &comps {
            check_finite(c, "1-form")?;
        }
        Ok(Self { grid: grid.clone(), comps })
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self { grid: grid.clone(), comps: vec![vec![R::zero(); grid.len()]; grid.dim()] }
    }

    /// Constant form `Σ c_a dx^a`.
    pub fn constant(grid: &PeriodicGrid, coeffs: &[R]) -> Self {
        Self {
            grid: grid.clone(),
            comps: (0..grid.dim()).map(|a| vec![coeffs[a]; grid.len()]).collect(),
        }
    }

    /// Samples `f(point, axis)` at edge midpoints.
    pub fn from_fn<F: Fn(&Vec3<R>, usize) -> R + Sync>(grid: &PeriodicGrid, f: F) -> Result<Self> {
        let half = lit::<R>(0.5);
        let comps = (0..grid.dim())
            .map(|a| {
                (0..grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let mut p = grid.point::<R>(i);
                        p[a] = p[a] + half * grid.spacing::<R>(a);
                        f(&p, a)
                    })
                    .collect()
            })
            .collect();
        Self::new(grid, comps)
    }

    pub(crate) fn from_raw(grid: &PeriodicGrid, comps: Vec<Vec<R>>) -> Self {
        Self { grid: grid.clone(), comps }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn comp(&self, a: usize) -> &[R] {
        &self.comps[a]
    }

    pub fn comps(&self) -> &[Vec<R>] {
        &self.comps
    }

    pub fn to_flat(&self) -> Vec<R> {
        self.comps.concat()
    }

    pub fn from_flat(grid: &PeriodicGrid, flat: &[R]) -> Self {
        assert_eq!(flat.len(), grid.len() * grid.dim());
        Self {
            grid: grid.clone(),
            comps: flat.chunks(grid.len()).map(|c| c.to_vec()).collect(),
        }
    }

    pub fn max_abs(&self) -> R {
        self.comps.iter().map(|c| crate::real::norm_inf(c)).fold(R::zero(), R::max)
    }

    /// Flat L² norm `(Σ_a ∫ η_a²)^{1/2}`.
    pub fn l2_norm(&self) -> R {
        let flat = self.to_flat();
        (crate::real::dot(&flat, &flat) * self.grid.cell_volume::<R>()).sqrt()
    }

    /// Flat mean of each component (the cohomology class of a closed form).
    pub fn component_means(&self) -> Vec<R> {
        self.comps
            .iter()
            .map(|c| neumaier_sum(c.iter().copied()) / from_usize(c.len()))
            .collect()
    }

    pub fn scaled(&self, s: R) -> Self {
        Self::from_raw(&self.grid, self.comps.iter().map(|c| c.iter().map(|&v| v * s).collect()).collect())
    }

    /// `alpha * self + beta * other`
    pub fn lincomb(&self, alpha: R, other: &Self, beta: R) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self::from_raw(
            &self.grid,
            self.comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| alpha * x + beta * y).collect())
                .collect(),
        )
    }

    pub fn translated(&self, axis: usize, delta: isize) -> Self {
        let comps = self
            .comps
            .iter()
            .map(|c| (0..c.len()).map(|i| c[self.grid.shift(i, axis, -delta)]).collect())
            .collect();
        Self::from_raw(&self.grid, comps)
    }
}

/// A 2-form on primal faces, components ordered as [`PeriodicGrid::pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFormField<R> {
    grid: PeriodicGrid,
    comps: Vec<Vec<R>>,
}

impl<R: Real> TwoFormField<R> {
    pub fn new(grid: &PeriodicGrid, comps: Vec<Vec<R>>) -> Result<Self> {
        let k = grid.dim() * (grid.dim() - 1) / 2;
        if comps.len() != k || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidField(format!("2-form needs {k} components of {} values", grid.len())));
        }
        for c in &comps {
            check_finite(c, "2-form")?;
        }
        Ok(Self { grid: grid.clone(), comps })
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        let k = grid.dim() * (grid.dim() - 1) / 2;
        Self { grid: grid.clone(), comps: vec![vec![R::zero(); grid.len()]; k] }
    }

    pub(crate) fn from_raw(grid: &PeriodicGrid, comps: Vec<Vec<R>>) -> Self {
        Self { grid: grid.clone(), comps }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn comp(&self, k: usize) -> &[R] {
        &self.comps[k]
    }

    pub fn comps(&self) -> &[Vec<R>] {
        &self.comps
    }

    pub fn to_flat(&self) -> Vec<R> {
        self.comps.concat()
    }

    pub fn from_flat(grid: &PeriodicGrid, flat: &[R]) -> Self {
        Self { grid: grid.clone(), comps: flat.chunks(grid.len()).map(|c| c.to_vec()).collect() }
    }

    pub fn max_abs(&self) -> R {
        self.comps.iter().map(|c| crate::real::norm_inf(c)).fold(R::zero(), R::max)
    }

    pub fn l2_norm(&self) -> R {
        let flat = self.to_flat();
        (crate::real::dot(&flat, &flat) * self.grid.cell_volume::<R>()).sqrt()
    }

    pub fn lincomb(&self, alpha: R, other: &Self, beta: R) -> Self {
        Self::from_raw(
            &self.grid,
            self.comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| alpha * x + beta * y).collect())
                .collect(),
        )
    }
}

/// Exterior derivative on 0-forms: `(d0 u)_a(x) = (u(x + h_a e_a) − u(x)) / h_a`.
pub fn d0<R: Real>(u: &ScalarField<R>) -> OneFormField<R> {
    let g = u.grid();
    let comps = (0..g.dim())
        .map(|a| {
            let inv_h = R::one() / g.spacing::<R>(a);
            (0..g.len())
                .map(|i| (u.values[g.shift(i, a, 1)] - u.values[i]) * inv_h)
                .collect()
        })
        .collect();
    OneFormField::from_raw(g, comps)
}

/// Exterior derivative on 1-forms: `(d1 η)_{ab} = D_a η_b − D_b η_a`.
pub fn d1<R: Real>(eta: &OneFormField<R>) -> TwoFormField<R> {
    let g = eta.grid();
    let comps = g
        .pairs()
        .into_iter()
        .map(|(a, b)| {
            let (ia, ib) = (R::one() / g.spacing::<R>(a), R::one() / g.spacing::<R>(b));
            (0..g.len())
                .map(|i| {
                    (eta.comps[b][g.shift(i, a, 1)] - eta.comps[b][i]) * ia
                        - (eta.comps[a][g.shift(i, b, 1)] - eta.comps[a][i]) * ib
                })
                .collect()
        })
        .collect();
    TwoFormField::from_raw(g, comps)
}

/// Euclidean transpose of [`d0`] (no metric weights).
pub fn d0_transpose<R: Real>(eta: &OneFormField<R>) -> ScalarField<R> {
    let g = eta.grid();
    let mut out = vec![R::zero(); g.len()];
    for a in 0..g.dim() {
        let inv_h = R::one() / g.spacing::<R>(a);
        let c = &eta.comps[a];
        for (i, o) in out.iter_mut().enumerate() {
            *o = *o + (c[g.shift(i, a, -1)] - c[i]) * inv_h;
        }
    }
    ScalarField::from_raw(g, out)
}

/// Euclidean transpose of [`d1`].
pub fn d1_transpose<R: Real>(omega: &TwoFormField<R>) -> OneFormField<R> {
    let g = omega.grid();
    let mut comps = vec![vec![R::zero(); g.len()]; g.dim()];
    for (k, (a, b)) in g.pairs().into_iter().enumerate() {
        let (ia, ib) = (R::one() / g.spacing::<R>(a), R::one() / g.spacing::<R>(b));
        let w = &omega.comps[k];
        for i in 0..g.len() {
            comps[b][i] = comps[b][i] + (w[g.shift(i, a, -1)] - w[i]) * ia;
            comps[a][i] = comps[a][i] - (w[g.shift(i, b, -1)] - w[i]) * ib;
        }
    }
    OneFormField::from_raw(g, comps)
}

/// Node value of a 1-form: average of the two edges meeting at the node
/// along each axis. For `η = d0 u` this is the centred difference of `u`.
pub fn edge_to_node<R: Real>(eta: &OneFormField<R>) -> Vec<Vec3<R>> {
    let g = eta.grid();
    let half = lit::<R>(0.5);
    (0..g.len())
        .map(|i| {
            let mut v = zero_vec();
            for a in 0..g.dim() {
                v[a] = half * (eta.comps[a][i] + eta.comps[a][g.shift(i, a, -1)]);
            }
            v
        })
        .collect()
}

/// Centred difference `D^c_a f = (f(x + h e_a) − f(x − h e_a)) / 2h` of a node array.
pub fn centered_diff<R: Real>(grid: &PeriodicGrid, f: &[R], axis: usize) -> Vec<R> {
    let inv = R::one() / (lit::<R>(2.0) * grid.spacing::<R>(axis));
    (0..grid.len())
        .map(|i| (f[grid.shift(i, axis, 1)] - f[grid.shift(i, axis, -1)]) * inv)
        .collect()
}

/// Node gradient by centred differences.
pub fn centered_gradient<R: Real>(u: &ScalarField<R>) -> Vec<Vec3<R>> {
    let g = u.grid();
    let parts: Vec<Vec<R>> = (0..g.dim()).map(|a| centered_diff(g, &u.values, a)).collect();
    (0..g.len())
        .map(|i| {
            let mut v = zero_vec();
            for a in 0..g.dim() {
                v[a] = parts[a][i];
            }
            v
        })
        .collect()
}

/// Node Jacobian `J_ij = ∂_j ζ_i` of an edge 1-form: the diagonal uses the
/// compact difference across the node, `J_ii = (ζ_i(x) − ζ_i(x − e_i)) / h_i`;
/// off-diagonal entries use centred differences of the node average.
///
/// For `ζ = d0 u` this is the standard compact Hessian of `u` (3-point on the
/// diagonal, 4-point cross stencil off it); its only null space on 0-forms is
/// the constants.
pub fn mimetic_jacobian<R: Real>(zeta: &OneFormField<R>) -> Vec<Mat3<R>> {
    let g = zeta.grid();
    let n = g.dim();
    let half = lit::<R>(0.5);
    let node: Vec<Vec<R>> = (0..n)
        .map(|a| {
            (0..g.len())
                .map(|i| half * (zeta.comps[a][i] + zeta.comps[a][g.shift(i, a, -1)]))
                .collect()
        })
        .collect();
    (0..g.len())
        .into_par_iter()
        .map(|x| {
            let mut j = zero_mat();
            for a in 0..n {
                let inv_h = R::one() / g.spacing::<R>(a);
                j[a][a] = (zeta.comps[a][x] - zeta.comps[a][g.shift(x, a, -1)]) * inv_h;
                for b in 0..n {
                    if a != b {
                        let inv2 = half / g.spacing::<R>(b);
                        j[a][b] = (node[a][g.shift(x, b, 1)] - node[a][g.shift(x, b, -1)]) * inv2;
                    }
                }
            }
            j
        })
        .collect()
}

/// Euclidean transpose of [`mimetic_jacobian`]: maps a node matrix field
/// back to an edge 1-form.
pub fn mimetic_jacobian_transpose<R: Real>(grid: &PeriodicGrid, m: &[Mat3<R>]) -> OneFormField<R> {
    let n = grid.dim();
    let half = lit::<R>(0.5);
    let mut comps = vec![vec![R::zero(); grid.len()]; n];
    for a in 0..n {
        let inv_h = R::one() / grid.spacing::<R>(a);
        // node-average contribution collected before applying A^T
        let mut f = vec![R::zero(); grid.len()];
        for b in 0..n {
            if a == b {
                continue;
            }
            let inv2 = half / grid.spacing::<R>(b);
            for (y, fy) in f.iter_mut().enumerate() {
                *fy = *fy + (m[grid.shift(y, b, -1)][a][b] - m[grid.shift(y, b, 1)][a][b]) * inv2;
            }
        }
        for x in 0..grid.len() {
            let diag = (m[x][a][a] - m[grid.shift(x, a, 1)][a][a]) * inv_h;
            comps[a][x] = diag + half * (f[x] + f[grid.shift(x, a, 1)]);
        }
    }
    OneFormField::from_raw(grid, comps)
}

/// Node value of a 2-form: average of the four faces in each plane that
/// touch the node.
pub fn face_to_node<R: Real>(omega: &TwoFormField<R>) -> TwoFormField<R> {
    let g = omega.grid();
    let q = lit::<R>(0.25);
    let comps = g
        .pairs()
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let w = &omega.comps[k];
            (0..g.len())
                .map(|i| {
                    let ia = g.shift(i, a, -1);
                    q * (w[i] + w[ia] + w[g.shift(i, b, -1)] + w[g.shift(ia, b, -1)])
                })
                .collect()
        })
        .collect();
    TwoFormField::from_raw(g, comps)
}

/// Riemann sum `(∏ h_a) Σ f · weight` with compensated summation in node order.
pub fn integrate<R: Real>(f: &ScalarField<R>, weight: &ScalarField<R>) -> R {
    assert_eq!(f.grid, weight.grid, "grid mismatch");
    neumaier_sum(f.values.iter().zip(&weight.values).map(|(&a, &b)| a * b)) * f.grid.cell_volume::<R>()
}

/// Riemann sum `(∏ h_a) Σ f`.
pub fn total<R: Real>(f: &ScalarField<R>) -> R {
    neumaier_sum(f.values.iter().copied()) * f.grid.cell_volume::<R>()
}

/// Minimal periodic representative of `y − x` per axis, in `(−1/2, 1/2]`.
pub fn torus_displacement<R: Real>(x: &[R], y: &[R]) -> Vec<R> {
    x.iter().zip(y).map(|(&a, &b)| wrap_displacement(b - a)).collect()
}

/// Reduces a displacement to `(−1/2, 1/2]` (ties go to `+1/2`).
#[inline]
pub fn wrap_displacement<R: Real>(d: R) -> R {
    d - (d - lit::<R>(0.5)).ceil()
}

/// Reduces a coordinate to `[0, 1)`.
#[inline]
pub fn wrap_coordinate<R: Real>(x: R) -> R {
    let w = x - x.floor();
    if w >= R::one() {
        R::zero()
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2(n: usize) -> PeriodicGrid {
        PeriodicGrid::cubic(2, n).unwrap()
    }

    #[test]
    fn rejects_odd_small_and_bad_dimension() {
        assert!(PeriodicGrid::new(&[9, 8]).is_err());
        assert!(PeriodicGrid::new(&[6, 8]).is_err());
        assert!(PeriodicGrid::new(&[8]).is_err());
        assert!(PeriodicGrid::new(&[8, 8, 8, 8]).is_err());
    }

    #[test]
    fn shift_wraps() {
        let g = grid2(8);
        let i = g.index(&[7, 3]);
        assert_eq!(g.coords(g.shift(i, 0, 1)), [0, 3, 0]);
        assert_eq!(g.coords(g.shift(g.index(&[0, 0]), 1, -1)), [0, 7, 0]);
    }

    #[test]
    fn d0_of_constant_is_zero() {
        let g = grid2(16);
        let u = ScalarField::constant(&g, 3.5f64);
        assert_eq!(d0(&u).max_abs(), 0.0);
    }

    #[test]
    fn d0_of_sinusoid_matches_closed_form() {
        let g = grid2(32);
        let h = 1.0 / 32.0;
        let u = ScalarField::from_fn(&g, |p: &Vec3<f64>| (2.0 * PI * p[0]).sin()).unwrap();
        let du = d0(&u);
        for i in 0..g.len() {
            let x = g.point::<f64>(i)[0] + 0.5 * h;
            let expected = 2.0 * PI * (2.0 * PI * x).cos() * (PI * h).sin() / (PI * h);
            assert!((du.comp(0)[i] - expected).abs() < 1e-12);
            assert!(du.comp(1)[i].abs() < 1e-12);
        }
    }

    #[test]
    fn non_periodic_sampler_rejected() {
        let g = grid2(16);
        assert!(ScalarField::sample_periodic(&g, |p: &Vec3<f64>| p[0]).is_err());
        assert!(ScalarField::sample_periodic(&g, |p: &Vec3<f64>| (2.0 * PI * p[0]).sin()).is_ok());
        assert!(ScalarField::new(&g, vec![f64::NAN; g.len()]).is_err());
    }

    #[test]
    fn d1_of_x2_dependent_form() {
        let g = grid2(32);
        let eta = OneFormField::from_fn(&g, |p: &Vec3<f64>, a| if a == 0 { (2.0 * PI * p[1]).sin() } else { 0.0 }).unwrap();
        let w = d1(&eta);
        let h = 1.0 / 32.0;
        for i in 0..g.len() {
            // η_1 sampled at y = x2; D_2^+ gives the difference quotient at x2 + h/2
            let y = g.point::<f64>(i)[1];
            let expected = -((2.0 * PI * (y + h)).sin() - (2.0 * PI * y).sin()) / h;
            assert!((w.comp(0)[i] - expected).abs() < 1e-11);
        }
        assert_eq!(d1(&OneFormField::constant(&g, &[1.0f64, -2.0])).max_abs(), 0.0);
    }

    #[test]
    fn integrate_trig() {
        let g = grid2(32);
        let one = ScalarField::constant(&g, 1.0f64);
        assert!((integrate(&one, &one) - 1.0).abs() < 1e-14);
        let s = ScalarField::from_fn(&g, |p: &Vec3<f64>| (2.0 * PI * p[0]).sin()).unwrap();
        assert!(integrate(&s, &one).abs() < 1e-13);
        let s2 = s.map(|v| v * v);
        assert!((integrate(&s2, &one) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn displacement_examples() {
        assert!((wrap_displacement(0.9 - 0.1f64) + 0.2).abs() < 1e-15);
        assert_eq!(wrap_displacement(0.0f64), 0.0);
        assert_eq!(wrap_displacement(0.5f64), 0.5);
        assert_eq!(wrap_displacement(-0.5f64), 0.5);
        assert_eq!(torus_displacement(&[0.0f64, 0.3], &[0.5, 0.3]), vec![0.5, 0.0]);
    }

    #[test]
    fn transposes_are_adjoint() {
        let g = PeriodicGrid::new(&[8, 10, 12]).unwrap();
        let u = ScalarField::from_fn(&g, |p: &Vec3<f64>| (2.0 * PI * p[0]).sin() * (1.0 + p[1] * 0.0) + (4.0 * PI * p[2]).cos()).unwrap();
        let eta = OneFormField::from_fn(&g, |p: &Vec3<f64>, a| ((a + 1) as f64 * 2.0 * PI * (p[0] + 2.0 * p[1] - p[2])).sin()).unwrap();
        let lhs = crate::real::dot(&d0(&u).to_flat(), &eta.to_flat());
        let rhs = crate::real::dot(u.values(), d0_transpose(&eta).values());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let omega = d1(&OneFormField::from_fn(&g, |p: &Vec3<f64>, a| ((a + 2) as f64 * 2.0 * PI * p[(a + 1) % 3]).cos()).unwrap());
        let lhs = crate::real::dot(&d1(&eta).to_flat(), &omega.to_flat());
        let rhs = crate::real::dot(&eta.to_flat(), &d1_transpose(&omega).to_flat());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        // mimetic jacobian
        let jm = mimetic_jacobian(&eta);
        let m: Vec<Mat3<f64>> = (0..g.len())
            .map(|i| {
                let mut t = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        t[a][b] = ((i * (a + 3 * b + 1)) as f64 * 0.013).sin();
                    }
                }
                t
            })
            .collect();
        let lhs: f64 = (0..g.len()).map(|i| (0..3).map(|a| (0..3).map(|b| jm[i][a][b] * m[i][a][b]).sum::<f64>()).sum::<f64>()).sum();
        let rhs = crate::real::dot(&eta.to_flat(), &mimetic_jacobian_transpose(&g, &m).to_flat());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn mimetic_jacobian_of_gradient_is_symmetric_compact_hessian() {
        let g = grid2(16);
        let u = ScalarField::from_fn(&g, |p: &Vec3<f64>| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()).unwrap();
        let j = mimetic_jacobian(&d0(&u));
        let c = centered_gradient(&u);
        let node = edge_to_node(&d0(&u));
        for i in 0..g.len() {
            assert!((j[i][0][1] - j[i][1][0]).abs() < 1e-10);
            assert!((node[i][0] - c[i][0]).abs() < 1e-12);
            let h = 1.0 / 16.0;
            let lap = (u.values()[g.shift(i, 0, 1)] - 2.0 * u.values()[i] + u.values()[g.shift(i, 0, -1)]) / (h * h);
            assert!((j[i][0][0] - lap).abs() < 1e-9);
        }
    }
}
