//! Metric-weighted inner products on discrete forms, codifferentials as exact
//! adjoints, the Hodge Laplacian on 1-forms, harmonic bases and the Hodge
//! decomposition.
//!
//! The pairings use corner quadrature: at every node each of the `2^n` cell
//! corners picks the adjacent edge (face) per axis (plane) and contracts with
//! the node metric; the corner contributions are averaged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eigen::{smallest_eigenpairs_preconditioned, InverseIterationSettings};
use crate::error::{Error, Result};
use crate::grid::{d0, d0_transpose, d1, d1_transpose, OneFormField, PeriodicGrid, ScalarField, TwoFormField};
use crate::krylov::{conjugate_gradient, remove_mean};
use crate::spectral::PoissonPreconditioner;
use crate::real::{axpy, dot, from_usize, lit, to_f64, Real};
use crate::small::{det, identity, inverse, sym_eigenvalues, zero_mat, Mat3};
use crate::state::TransportState;

/// Minimum eigenvalue accepted for a metric.
pub const METRIC_FLOOR: f64 = 1e-8;
/// Gap ratio required to certify a kernel dimension.
pub const GAP_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct MetricField<R> {
    grid: PeriodicGrid,
    g: Vec<Mat3<R>>,
    sqrt_det: Vec<R>,
    /// `√g g⁻¹ · h^n / 2^n`
    w1: Vec<Mat3<R>>,
    /// `√g (g^{ac}g^{bd} − g^{ad}g^{bc}) · h^n / 2^n` over plane pairs
    w2: Vec<Mat3<R>>,
}

impl<R: Real> MetricField<R> {
    pub fn from_matrices(grid: &PeriodicGrid, g: Vec<Mat3<R>>) -> Result<Self> {
        let n = grid.dim();
        if g.len() != grid.len() {
            return Err(Error::InvalidField("metric needs one matrix per node".into()));
        }
        let pairs = grid.pairs();
        let scale = grid.cell_volume::<R>() / from_usize::<R>(1 << n);
        let tol = lit::<R>(1e-12);
        let mut sqrt_det = Vec::with_capacity(g.len());
        let mut w1 = Vec::with_capacity(g.len());
        let mut w2 = Vec::with_capacity(g.len());
        for m in &g {
            for a in 0..n {
                for b in 0..n {
                    if (m[a][b] - m[b][a]).abs() > tol * (m[a][a].abs() + m[b][b].abs()) {
                        return Err(Error::InvalidField("metric is not symmetric".into()));
                    }
                }
            }
            let ev = sym_eigenvalues(m, n)[0];
            if !(to_f64(ev) >= METRIC_FLOOR) {
                return Err(Error::InvalidField(format!("metric eigenvalue {:e} below floor", to_f64(ev))));
            }
            let sd = det(m, n).sqrt();
            let gi = inverse(m, n).expect("positive definite");
            let mut a1 = zero_mat();
            for a in 0..n {
                for b in 0..n {
                    a1[a][b] = sd * gi[a][b] * scale;
                }
            }
            let mut a2 = zero_mat();
            for (p, &(a, b)) in pairs.iter().enumerate() {
                for (q, &(c, d)) in pairs.iter().enumerate() {
                    a2[p][q] = sd * (gi[a][c] * gi[b][d] - gi[a][d] * gi[b][c]) * scale;
                }
            }
            sqrt_det.push(sd);
            w1.push(a1);
            w2.push(a2);
        }
        Ok(Self { grid: grid.clone(), g, sqrt_det, w1, w2 })
    }

    pub fn flat(grid: &PeriodicGrid) -> Self {
        Self::from_matrices(grid, vec![identity(grid.dim()); grid.len()]).expect("identity is a metric")
    }

    /// `g = λ I`.
    pub fn conformal(lam: &ScalarField<R>) -> Result<Self> {
        let n = lam.grid().dim();
        let g = lam
            .values()
            .iter()
            .map(|&l| {
                let mut m = zero_mat();
                for (a, row) in m.iter_mut().enumerate().take(n) {
                    row[a] = l;
                }
                m
            })
            .collect();
        Self::from_matrices(lam.grid(), g)
    }

    /// `g = λ w` for n ≥ 3; for n = 2 the w-tensor itself (1-form harmonicity
    /// is conformally invariant in two dimensions).
    pub fn from_state(state: &TransportState<R>) -> Result<Self> {
        match state.metric_matrices() {
            Some(g) => Self::from_matrices(&state.grid, g),
            None => Self::from_matrices(&state.grid, state.w.clone()),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn matrices(&self) -> &[Mat3<R>] {
        &self.g
    }

    pub fn sqrt_det(&self) -> &[R] {
        &self.sqrt_det
    }
}

#[inline]
fn bit(c: usize, a: usize) -> bool {
    (c >> a) & 1 == 1
}

/// Node mass matrix `M0 = √g h^n` applied to a flat 0-form.
pub fn apply_m0<R: Real>(metric: &MetricField<R>, x: &[R], y: &mut [R]) {
    let vol = metric.grid.cell_volume::<R>();
    for ((o, &v), &s) in y.iter_mut().zip(x).zip(&metric.sqrt_det) {
        *o = s * vol * v;
    }
}

/// 1-form mass matrix applied to flat coefficients (`n` blocks of node arrays).
pub fn apply_m1<R: Real>(metric: &MetricField<R>, x: &[R], y: &mut [R]) {
    let g = &metric.grid;
    let (n, len) = (g.dim(), g.len());
    let corners = 1usize << n;
    let corner_vec = |node: usize, c: usize| {
        let mut v = [R::zero(); 3];
        for (a, va) in v.iter_mut().enumerate().take(n) {
            let e = if bit(c, a) { g.shift(node, a, -1) } else { node };
            *va = x[a * len + e];
        }
        v
    };
    y.par_chunks_mut(len).enumerate().for_each(|(a, out)| {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = R::zero();
            for c in 0..corners {
                let node = if bit(c, a) { g.shift(i, a, 1) } else { i };
                let v = corner_vec(node, c);
                let m = &metric.w1[node];
                for (b, &vb) in v.iter().enumerate().take(n) {
                    acc = acc + m[a][b] * vb;
                }
            }
            *o = acc;
        }
    });
}

/// 2-form mass matrix applied to flat coefficients.
pub fn apply_m2<R: Real>(metric: &MetricField<R>, x: &[R], y: &mut [R]) {
    let g = &metric.grid;
    let (n, len) = (g.dim(), g.len());
    let pairs = g.pairs();
    let corners = 1usize << n;
    let face = |node: usize, c: usize, (a, b): (usize, usize)| {
        let mut f = node;
        if bit(c, a) {
            f = g.shift(f, a, -1);
        }
        if bit(c, b) {
            f = g.shift(f, b, -1);
        }
        f
    };
    y.par_chunks_mut(len).enumerate().for_each(|(k, out)| {
        let (a, b) = pairs[k];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = R::zero();
            for c in 0..corners {
                let mut node = i;
                if bit(c, a) {
                    node = g.shift(node, a, 1);
                }
                if bit(c, b) {
                    node = g.shift(node, b, 1);
                }
                let m = &metric.w2[node];
                for (q, &pq) in pairs.iter().enumerate() {
                    acc = acc + m[k][q] * x[q * len + face(node, c, pq)];
                }
            }
            *o = acc;
        }
    });
}

fn solve_mass<R: Real>(apply: impl Fn(&[R], &mut [R]), rhs: &[R], tol: R) -> Result<Vec<R>> {
    let mut x = vec![R::zero(); rhs.len()];
    conjugate_gradient(apply, rhs, &mut x, tol, 2000, |_| {})?;
    Ok(x)
}

fn mass_tol<R: Real>() -> R {
    lit::<R>(1e-14).max(R::epsilon() * lit(8.0))
}

pub fn inner_product_0<R: Real>(metric: &MetricField<R>, a: &ScalarField<R>, b: &ScalarField<R>) -> R {
    let mut mb = vec![R::zero(); b.values().len()];
    apply_m0(metric, b.values(), &mut mb);
    dot(a.values(), &mb)
}

pub fn inner_product_1<R: Real>(metric: &MetricField<R>, a: &OneFormField<R>, b: &OneFormField<R>) -> R {
    let fb = b.to_flat();
    let mut mb = vec![R::zero(); fb.len()];
    apply_m1(metric, &fb, &mut mb);
    dot(&a.to_flat(), &mb)
}

pub fn inner_product_2<R: Real>(metric: &MetricField<R>, a: &TwoFormField<R>, b: &TwoFormField<R>) -> R {
    let fb = b.to_flat();
    let mut mb = vec![R::zero(); fb.len()];
    apply_m2(metric, &fb, &mut mb);
    dot(&a.to_flat(), &mb)
}

/// `M0⁻¹ d0ᵀ M1 η`, the adjoint of `d0`.
pub fn codiff_1<R: Real>(metric: &MetricField<R>, eta: &OneFormField<R>) -> ScalarField<R> {
    let g = &metric.grid;
    let flat = eta.to_flat();
    let mut m = vec![R::zero(); flat.len()];
    apply_m1(metric, &flat, &mut m);
    let t = d0_transpose(&OneFormField::from_flat(g, &m));
    let vol = g.cell_volume::<R>();
    let vals = t.values().iter().zip(&metric.sqrt_det).map(|(&v, &s)| v / (s * vol)).collect();
    ScalarField::from_raw(g, vals)
}

/// `M1⁻¹ d1ᵀ M2 ω`, the adjoint of `d1` (inner mass solve by CG).
pub fn codiff_2<R: Real>(metric: &MetricField<R>, omega: &TwoFormField<R>) -> Result<OneFormField<R>> {
    let g = &metric.grid;
    let flat = omega.to_flat();
    let mut m = vec![R::zero(); flat.len()];
    apply_m2(metric, &flat, &mut m);
    let rhs = d1_transpose(&TwoFormField::from_flat(g, &m)).to_flat();
    let x = solve_mass(|a, b| apply_m1(metric, a, b), &rhs, mass_tol())?;
    Ok(OneFormField::from_flat(g, &x))
}

/// `Δ₁ η = codiff_2(d1 η) + d0(codiff_1 η)`.
pub fn hodge_laplacian_1<R: Real>(metric: &MetricField<R>, eta: &OneFormField<R>) -> Result<OneFormField<R>> {
    let a = codiff_2(metric, &d1(eta))?;
    let b = d0(&codiff_1(metric, eta));
    Ok(a.lincomb(R::one(), &b, R::one()))
}

/// Weak form `K = d1ᵀ M2 d1 + M1 d0 M0⁻¹ d0ᵀ M1`, so that `K = M1 Δ₁`.
pub fn apply_weak_laplacian<R: Real>(metric: &MetricField<R>, x: &[R], y: &mut [R]) {
    let g = &metric.grid;
    let eta = OneFormField::from_flat(g, x);
    let w = d1(&eta).to_flat();
    let mut mw = vec![R::zero(); w.len()];
    apply_m2(metric, &w, &mut mw);
    let curl = d1_transpose(&TwoFormField::from_flat(g, &mw)).to_flat();
    let div = d0(&codiff_1(metric, &eta)).to_flat();
    apply_m1(metric, &div, y);
    for (o, c) in y.iter_mut().zip(curl) {
        *o = *o + c;
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicBasis<R> {
    pub forms: Vec<OneFormField<R>>,
    /// Ritz values of `Δ₁`; the first `forms.len()` belong to the basis, the
    /// next one is the first rejected value.
    pub eigenvalues: Vec<R>,
    pub gap_ratio: R,
    pub outer_iterations: usize,
}

fn start_block<R: Real>(grid: &PeriodicGrid, size: usize) -> Vec<Vec<R>> {
    let n = grid.dim();
    let mut block = Vec::with_capacity(size);
    for a in 0..n.min(size) {
        let mut c = vec![R::zero(); n];
        c[a] = R::one();
        block.push(OneFormField::constant(grid, &c).to_flat());
    }
    // smooth seeded guard vectors built from low Fourier modes
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c54);
    while block.len() < size {
        let modes: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..6)
            .map(|_| {
                let k = (0..n).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
                let c = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (k, c, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let form = OneFormField::from_fn(grid, |p, a| {
            let v = modes.iter().fold(0.0, |s, (k, c, ph)| {
                let phase = (0..n).fold(*ph, |t, b| t + std::f64::consts::TAU * k[b] * to_f64(p[b]));
                s + c[a] * phase.sin()
            });
            lit(v)
        })
        .expect("finite");
        block.push(form.to_flat());
    }
    block
}

/// The `expected_dim` lowest eigenforms of `Δ₁` with a certified spectral gap.
///
/// The basis is normalized so that its component means form the identity
/// (up to the Gram–Schmidt triangle), then made g-orthonormal; each form's
/// largest-magnitude mean is positive.
pub fn harmonic_basis<R: Real>(metric: &MetricField<R>, expected_dim: usize) -> Result<HarmonicBasis<R>> {
    // the first non-harmonic value only feeds the gap ratio
    let settings = InverseIterationSettings {
        last_tol: Some(lit(1e-6)),
        guard_inner_tol: Some(lit(1e-4)),
        ..Default::default()
    };
    harmonic_basis_with(metric, expected_dim, &settings)
}

pub fn harmonic_basis_with<R: Real>(
    metric: &MetricField<R>,
    expected_dim: usize,
    settings: &InverseIterationSettings<R>,
) -> Result<HarmonicBasis<R>> {
    let g = &metric.grid;
    let n = g.dim();
    let m = expected_dim.max(1);
    let k_op = |x: &[R], y: &mut [R]| apply_weak_laplacian(metric, x, y);
    let m_op = |x: &[R], y: &mut [R]| apply_m1(metric, x, y);
    // componentwise constant-coefficient Laplacian fitted to K by Rayleigh
    // quotients of single Fourier modes, weighted by the mean diagonal of M1
    let len = g.len();
    let mut weights = Vec::with_capacity(n);
    let mut ffts = Vec::with_capacity(n);
    for a in 0..n {
        let mut c = vec![R::zero(); n];
        c[a] = R::one();
        let mut y = vec![R::zero(); n * len];
        apply_m1(metric, &OneFormField::constant(g, &c).to_flat(), &mut y);
        let weight = y[a * len..(a + 1) * len].iter().map(|&v| to_f64(v)).sum::<f64>() / len as f64;
        let scale: Vec<f64> = (0..n)
            .map(|b| {
                let v = OneFormField::from_fn(g, |p, comp| {
                    if comp == a { lit::<R>((std::f64::consts::TAU * to_f64(p[b])).cos()) } else { R::zero() }
                })
                .map(|f| f.to_flat())
                .unwrap_or_else(|_| vec![R::zero(); n * len]);
                let (mut kv, mut mv) = (vec![R::zero(); n * len], vec![R::zero(); n * len]);
                k_op(&v, &mut kv);
                m_op(&v, &mut mv);
                let q: f64 = to_f64(dot(&v, &kv)) / to_f64(dot(&v, &mv)).max(f64::MIN_POSITIVE);
                let h: f64 = g.spacing(b);
                let mu = 4.0 * (std::f64::consts::PI / g.sizes()[b] as f64).sin().powi(2) / (h * h);
                (q / mu).max(1e-3)
            })
            .collect();
        weights.push(weight);
        ffts.push(PoissonPreconditioner::shifted(g, &scale, to_f64(settings.shift)));
    }
    let precond = |x: &[R], y: &mut [R]| {
        for a in 0..n {
            let block = a * len..(a + 1) * len;
            ffts[a].apply(&x[block.clone()], &mut y[block.clone()]);
            let s = lit::<R>(-1.0 / weights[a]);
            y[block].iter_mut().for_each(|v| *v = *v * s);
        }
    };
    let pairs = smallest_eigenpairs_preconditioned(&k_op, &m_op, Some(&precond), start_block(g, m + 6 * n + 4), m + 1, settings)?;
    let values = pairs.values[..=m].to_vec();
    let gap = values[m] / values[m - 1].max(lit(1e-14));
    if !(to_f64(gap) >= GAP_THRESHOLD) {
        return Err(Error::SpectralGapTooSmall { dim: m, ratio: to_f64(gap), threshold: GAP_THRESHOLD });
    }
    let mut forms: Vec<Vec<R>> = pairs.vectors[..m].to_vec();

    if m <= n {
        // change of basis making the mean matrix the identity on the first m axes
        let means: Vec<Vec<R>> = forms
            .iter()
            .map(|f| OneFormField::from_flat(g, f).component_means()[..m].to_vec())
            .collect();
        let mut cm = zero_mat::<R>();
        for (r, row) in means.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                cm[r][c] = v;
            }
        }
        if let Some(inv) = inverse(&cm, m) {
            forms = (0..m)
                .map(|a| {
                    let mut out = vec![R::zero(); forms[0].len()];
                    for (k, f) in forms.iter().enumerate() {
                        axpy(inv[a][k], f, &mut out);
                    }
                    out
                })
                .collect();
        }
    }
    let mut out: Vec<Vec<R>> = Vec::with_capacity(m);
    for mut f in forms {
        for prev in &out {
            let mut mp = vec![R::zero(); prev.len()];
            apply_m1(metric, prev, &mut mp);
            let c = dot(&f, &mp);
            axpy(-c, prev, &mut f);
        }
        let mut mf = vec![R::zero(); f.len()];
        apply_m1(metric, &f, &mut mf);
        let norm = dot(&f, &mf).sqrt();
        f.iter_mut().for_each(|v| *v = *v / norm);
        let means = OneFormField::from_flat(g, &f).component_means();
        let big = means.iter().copied().fold(R::zero(), |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if big < R::zero() {
            f.iter_mut().for_each(|v| *v = -*v);
        }
        out.push(f);
    }
    Ok(HarmonicBasis {
        forms: out.iter().map(|f| OneFormField::from_flat(g, f)).collect(),
        eigenvalues: values,
        gap_ratio: gap,
        outer_iterations: pairs.outer_iterations,
    })
}

#[derive(Debug, Clone)]
pub struct HodgeDecomposition<R> {
    pub harmonic: OneFormField<R>,
    /// `α` (mean zero) with exact part `dα`.
    pub exact_potential: ScalarField<R>,
    /// `β` with coexact part `codiff_2 β`.
    pub coexact_potential: TwoFormField<R>,
    pub exact: OneFormField<R>,
    pub coexact: OneFormField<R>,
}

impl<R: Real> HodgeDecomposition<R> {
    pub fn reconstruct(&self) -> OneFormField<R> {
        self.harmonic.lincomb(R::one(), &self.exact, R::one()).lincomb(R::one(), &self.coexact, R::one())
    }
}

pub const DECOMPOSE_TOL: f64 = 1e-11;

/// Splits `η` into harmonic, exact and coexact parts with respect to `metric`.
pub fn hodge_decompose<R: Real>(
    metric: &MetricField<R>,
    basis: &HarmonicBasis<R>,
    eta: &OneFormField<R>,
) -> Result<HodgeDecomposition<R>> {
    let g = &metric.grid;
    let tol = lit::<R>(DECOMPOSE_TOL).max(R::epsilon() * lit(64.0));
    let inner_tol = mass_tol::<R>();
    let flat = eta.to_flat();
    let len1 = flat.len();

    // exact part: d0ᵀ M1 d0 α = d0ᵀ M1 η
    let mut m_eta = vec![R::zero(); len1];
    apply_m1(metric, &flat, &mut m_eta);
    let rhs0 = d0_transpose(&OneFormField::from_flat(g, &m_eta)).into_values();
    let mut alpha = vec![R::zero(); g.len()];
    let op0 = |x: &[R], y: &mut [R]| {
        let dx = d0(&ScalarField::from_raw(g, x.to_vec())).to_flat();
        let mut mdx = vec![R::zero(); dx.len()];
        apply_m1(metric, &dx, &mut mdx);
        y.copy_from_slice(d0_transpose(&OneFormField::from_flat(g, &mdx)).values());
    };
    conjugate_gradient(op0, &rhs0, &mut alpha, tol, 20_000, |v| remove_mean(v))?;
    remove_mean(&mut alpha);
    let alpha = ScalarField::from_raw(g, alpha);
    let exact = d0(&alpha);

    // harmonic part: g-projection of η − dα onto the basis (coexact forms are
    // orthogonal to it), the remainder is coexact
    let rest = eta.lincomb(R::one(), &exact, -R::one());
    let mut harmonic = vec![R::zero(); len1];
    for h in &basis.forms {
        let c = inner_product_1(metric, &rest, h);
        axpy(c, &h.to_flat(), &mut harmonic);
    }
    let harmonic = OneFormField::from_flat(g, &harmonic);
    let coexact = rest.lincomb(R::one(), &harmonic, -R::one());

    // potential: d1ᵀ γ = M1 coexact via d1 d1ᵀ γ = d1 M1 coexact, then β = M2⁻¹ γ
    let cf = coexact.to_flat();
    let mut mc = vec![R::zero(); len1];
    apply_m1(metric, &cf, &mut mc);
    let rhs2 = d1(&OneFormField::from_flat(g, &mc)).to_flat();
    let mut gamma = vec![R::zero(); rhs2.len()];
    let op2 = |x: &[R], y: &mut [R]| {
        let t = d1_transpose(&TwoFormField::from_flat(g, x));
        y.copy_from_slice(&d1(&t).to_flat());
    };
    conjugate_gradient(op2, &rhs2, &mut gamma, tol, 20_000, |_| {})?;
    let beta = TwoFormField::from_flat(g, &solve_mass(|a, b| apply_m2(metric, a, b), &gamma, inner_tol)?);

    Ok(HodgeDecomposition {
        harmonic,
        exact_potential: alpha,
        coexact_potential: beta,
        exact,
        coexact,
    })
}
