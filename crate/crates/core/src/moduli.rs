//! Lie solutions parametrized by cohomology coordinates and a potential,
//! `η = Σ τ_a dx^a + dφ`: the Newton corrector, continuation of families,
//! the deformation map Φ and its finite-difference check, tangent-space
//! harmonicity, and the kernel dimension of the first-order system in 2D.

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::density::DensityPair;
use crate::eigen::{smallest_eigenpairs_preconditioned, InverseIterationSettings};
use crate::error::{Error, Result};
use crate::grid::{
    d0, d1, d1_transpose, edge_to_node, face_to_node, mimetic_jacobian, mimetic_jacobian_transpose, OneFormField,
    PeriodicGrid, ScalarField, TwoFormField,
};
use crate::hodge::{codiff_1, hodge_decompose, inner_product_1, HarmonicBasis, MetricField, GAP_THRESHOLD};
use crate::interp::interpolate;
use crate::krylov::{gmres, remove_mean};
use crate::real::{dot, lit, norm2, to_f64, Real};
use crate::small::{det, mat_mul, zero_mat, zero_vec, Mat3, Vec3};
use crate::spectral::PoissonPreconditioner;
use crate::state::{assemble_state, jacobian_of_map, linearized_l, mass_linearization_d, TransportState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSettings {
    pub step: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub armijo_factor: f64,
    pub armijo_slope: f64,
    /// Relative tolerance of the inner linear solves.
    pub linear_tol: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            step: 0.02,
            max_steps: 10,
            newton_tol: 1e-11,
            max_newton: 25,
            armijo_factor: 0.5,
            armijo_slope: 1e-4,
            linear_tol: 1e-10,
        }
    }
}

impl ContinuationSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step >= 0.0
            && self.newton_tol > 0.0
            && self.linear_tol > 0.0
            && self.armijo_factor > 0.0
            && self.armijo_factor < 1.0
            && self.armijo_slope > 0.0
            && self.max_newton > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid continuation settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModuliChart<R: Real> {
    pub tau: Vec<R>,
    /// Mean-zero potential.
    pub phi: ScalarField<R>,
    /// Constant absorbed by the discrete mass balance (`θ = κ` at convergence).
    pub kappa: R,
    pub state: TransportState<R>,
    pub converged: bool,
    /// `‖θ − κ‖_∞` of the returned iterate.
    pub residual_norm: R,
    pub residual_history: Vec<f64>,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
}

/// `Σ τ_a dx^a + dφ`.
pub fn closed_form<R: Real>(tau: &[R], phi: &ScalarField<R>) -> OneFormField<R> {
    d0(phi).lincomb(R::one(), &OneFormField::constant(phi.grid(), tau), R::one())
}

fn residual<R: Real>(state: &TransportState<R>, kappa: R) -> Vec<R> {
    state.theta.values().iter().map(|&t| t - kappa).collect()
}

/// Damped Newton for `θ(φ) = κ` with mean-zero `φ` and a free constant `κ`.
pub fn solve_lie<R: Real>(
    grid: &PeriodicGrid,
    cost: &CostModel<R>,
    dens: &DensityPair<R>,
    tau: &[R],
    init_phi: &ScalarField<R>,
    settings: &ContinuationSettings,
) -> Result<ModuliChart<R>> {
    settings.validate()?;
    let n = grid.dim();
    if tau.len() != n {
        return Err(Error::Config(format!("τ has {} entries, grid dim is {n}", tau.len())));
    }
    for &t in tau {
        if !(t.abs() <= cost.window.max_disp) {
            return Err(Error::CutLocus { displacement: to_f64(t), margin: to_f64(cost.window.margin) });
        }
    }
    let mut phi_vals = init_phi.values().to_vec();
    remove_mean(&mut phi_vals);
    let mut phi = ScalarField::new(grid, phi_vals)?;
    let mut kappa = R::zero();
    let mut state = assemble_state(grid, cost, dens, &closed_form(tau, &phi))?;
    let mut r = residual(&state, kappa);
    let mut history = vec![to_f64(crate::real::norm_inf(&r))];
    let tol = lit::<R>(settings.newton_tol);
    let mut newton_iterations = 0;
    let mut linear_iterations = 0;
    let mut converged = crate::real::norm_inf(&r) <= tol && state.convex;

    while !converged && newton_iterations < settings.max_newton {
        newton_iterations += 1;
        let scale: Vec<f64> = (0..n)
            .map(|a| state.w_inv.iter().map(|m| to_f64(m[a][a])).sum::<f64>() / grid.len() as f64)
            .collect();
        let pre = PoissonPreconditioner::new(grid, &scale);
        let st = &state;
        let bordered = |z: &[R], out: &mut [R]| {
            let mut p = z.to_vec();
            remove_mean(&mut p);
            let mean = crate::real::neumaier_sum(z.iter().copied()) / lit::<R>(z.len() as f64);
            let lv = linearized_l(st, &ScalarField::from_raw(grid, p));
            for (o, &v) in out.iter_mut().zip(lv.values()) {
                *o = v + mean;
            }
        };
        let mut tmp = vec![R::zero(); grid.len()];
        let precond_op = |y: &[R], out: &mut [R]| {
            let mut z = vec![R::zero(); y.len()];
            pre.apply(y, &mut z);
            bordered(&z, out);
        };
        let rhs: Vec<R> = r.iter().map(|&v| -v).collect();
        let stats = gmres(precond_op, &rhs, &mut tmp, lit(settings.linear_tol), 60, 3000)?;
        linear_iterations += stats.iterations;
        let mut z = vec![R::zero(); grid.len()];
        pre.apply(&tmp, &mut z);
        let dkappa = -crate::real::neumaier_sum(z.iter().copied()) / lit::<R>(z.len() as f64);
        remove_mean(&mut z);

        let r_norm = norm2(&r);
        let mut s = R::one();
        let mut accepted = false;
        let mut saw_nonconvex = false;
        for _ in 0..12 {
            let trial_vals: Vec<R> = phi.values().iter().zip(&z).map(|(&p, &d)| p + s * d).collect();
            let trial_phi = ScalarField::from_raw(grid, trial_vals);
            let trial_kappa = kappa + s * dkappa;
            match assemble_state(grid, cost, dens, &closed_form(tau, &trial_phi)) {
                Ok(ts) => {
                    let tr = residual(&ts, trial_kappa);
                    if !ts.convex {
                        saw_nonconvex = true;
                    } else if norm2(&tr) <= (R::one() - lit::<R>(settings.armijo_slope) * s) * r_norm {
                        phi = trial_phi;
                        kappa = trial_kappa;
                        state = ts;
                        r = tr;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::CutLocus { .. }) | Err(Error::SingularJet { .. }) => {}
                Err(e) => return Err(e),
            }
            s = s * lit::<R>(settings.armijo_factor);
        }
        if !accepted {
            if saw_nonconvex {
                return Err(Error::NonConvexBreakdown);
            }
            break;
        }
        let rn = crate::real::norm_inf(&r);
        history.push(to_f64(rn));
        converged = rn <= tol;
    }
    let residual_norm = crate::real::norm_inf(&r);
    Ok(ModuliChart {
        tau: tau.to_vec(),
        phi,
        kappa,
        state,
        converged,
        residual_norm,
        residual_history: history,
        newton_iterations,
        linear_iterations,
    })
}

#[derive(Debug)]
pub struct Family<R: Real> {
    pub charts: Vec<ModuliChart<R>>,
    /// Error that stopped the continuation early, if any.
    pub failure: Option<Error>,
}

/// Steps `τ_a` by `settings.step` up to `settings.max_steps` times, warm
/// starting each corrector from the previous potential.
pub fn continue_family<R: Real>(base: ModuliChart<R>, direction: usize, settings: &ContinuationSettings) -> Family<R> {
    let n = base.state.dim();
    let mut charts = vec![base];
    if direction >= n {
        return Family { charts, failure: Some(Error::Config(format!("direction {} out of range", direction + 1))) };
    }
    if settings.step == 0.0 {
        return Family { charts, failure: None };
    }
    let mut failure = None;
    for _ in 0..settings.max_steps {
        let prev = charts.last().expect("non-empty");
        let mut tau = prev.tau.clone();
        tau[direction] = tau[direction] + lit::<R>(settings.step);
        let st = &prev.state;
        match solve_lie(&st.grid, &st.cost, &st.dens, &tau, &prev.phi, settings) {
            Ok(chart) if chart.converged => charts.push(chart),
            Ok(chart) => {
                failure = Some(Error::NoConvergence {
                    what: "Lie corrector",
                    iterations: chart.newton_iterations,
                    residual: to_f64(chart.residual_norm),
                });
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Family { charts, failure }
}

/// The two components of Φ at a deformation `ζ` of a base state.
#[derive(Debug, Clone)]
pub struct PhiResidual<R> {
    /// Pullback of the symplectic form through `Id × T_V`, per node.
    pub kahler: TwoFormField<R>,
    /// `ρ̄(T_V) det DT_V − ρ`.
    pub mass: ScalarField<R>,
}

/// Evaluates Φ(ζ): deforms the base map vertically by `T_V = T + b⁻¹ζ`.
pub fn phi_residual<R: Real>(base: &TransportState<R>, zeta: &OneFormField<R>) -> Result<PhiResidual<R>> {
    let grid = &base.grid;
    let n = grid.dim();
    let half = lit::<R>(0.5);
    let zn = edge_to_node(zeta);
    let bound = base.cost.window.cut_bound();
    let check = |d: R| -> Result<()> {
        if d.abs() < bound {
            Ok(())
        } else {
            Err(Error::CutLocus { displacement: to_f64(d), margin: to_f64(base.cost.window.margin) })
        }
    };
    let mut disp = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let binv = &base.jets[i].b_inv;
        let mut d = base.disp[i];
        for s in 0..n {
            for k in 0..n {
                d[s] = d[s] + binv[s][k] * zn[i][k];
            }
            check(d[s])?;
        }
        disp.push(d);
    }
    let mut edge = Vec::with_capacity(n);
    for a in 0..n {
        let mut e = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let up = grid.shift(i, a, 1);
            let binv = &base.edge_b_inv[a][i];
            let mut v = base.edge_disp[a][i];
            for k in 0..n {
                let zk = if k == a { zeta.comp(a)[i] } else { half * (zn[i][k] + zn[up][k]) };
                v = v + binv[a][k] * zk;
            }
            check(v)?;
            e.push(v);
        }
        edge.push(e);
    }
    let dt = jacobian_of_map(grid, &disp, &edge);
    let pairs = grid.pairs();
    let mut kahler = vec![vec![R::zero(); grid.len()]; pairs.len()];
    let mut mass = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.point::<R>(i);
        let jet = base.cost.raw_jet(n, &x, &disp[i]);
        let m = mat_mul(&jet.b, &dt[i], n);
        for (k, &(a, b)) in pairs.iter().enumerate() {
            kahler[k][i] = m[a][b] - m[b][a];
        }
        let mut tv = zero_vec();
        for s in 0..n {
            tv[s] = crate::grid::wrap_coordinate(x[s] + disp[i][s]);
        }
        let (rb, _) = interpolate(&base.dens.rhobar, &tv);
        mass.push(rb * det(&dt[i], n) - base.dens.rho.values()[i]);
    }
    Ok(PhiResidual {
        kahler: TwoFormField::new(grid, kahler)?,
        mass: ScalarField::new(grid, mass)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DphiRow {
    pub eps: f64,
    /// `‖slope − (−dζ)‖_∞ / ‖dζ‖_∞` (absolute when `dζ = 0`).
    pub kahler_error: f64,
    /// `‖slope − ρ D(ζ)‖_∞ / ‖ρ D(ζ)‖_∞` (absolute when the target vanishes).
    pub mass_error: f64,
    pub kahler_slope_norm: f64,
    pub mass_slope_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DphiReport {
    pub rows: Vec<DphiRow>,
    pub kahler_target_norm: f64,
    pub mass_target_norm: f64,
    /// Pointwise positive factor between the mass slope and `D(ζ)`.
    pub mass_prefactor: &'static str,
    /// Least-squares `c` in `slope ≈ c·ρλ·codiff_1(ζ)` (n ≥ 3).
    pub codiff_factor: Option<f64>,
    /// Relative residual of that fit.
    pub codiff_fit_residual: Option<f64>,
}

/// Central-difference sweep of Φ along `ζ`.
pub fn verify_dphi<R: Real>(base: &TransportState<R>, zeta: &OneFormField<R>, eps_list: &[f64]) -> Result<DphiReport> {
    let grid = &base.grid;
    let kahler_target = face_to_node(&d1(zeta)).lincomb(R::zero(), &TwoFormField::zeros(grid), R::zero());
    let kahler_target = face_to_node(&d1(zeta)).lincomb(-R::one(), &kahler_target, R::zero());
    let dz = mass_linearization_d(base, zeta);
    let mass_target = dz.zip_map(&base.dens.rho, |d, r| d * r);
    let kt = to_f64(kahler_target.max_abs());
    let mt = to_f64(mass_target.max_abs());
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut last_mass_slope = None;
    for &eps in eps_list {
        let e = lit::<R>(eps);
        let plus = phi_residual(base, &zeta.scaled(e))?;
        let minus = phi_residual(base, &zeta.scaled(-e))?;
        let inv = R::one() / (lit::<R>(2.0) * e);
        let ks = plus.kahler.lincomb(inv, &minus.kahler, -inv);
        let ms = plus.mass.zip_map(&minus.mass, |a, b| (a - b) * inv);
        let kerr = to_f64(ks.lincomb(R::one(), &kahler_target, -R::one()).max_abs());
        let merr = to_f64(ms.zip_map(&mass_target, |a, b| a - b).max_abs());
        rows.push(DphiRow {
            eps,
            kahler_error: if kt > 0.0 { kerr / kt } else { kerr },
            mass_error: if mt > 0.0 { merr / mt } else { merr },
            kahler_slope_norm: to_f64(ks.max_abs()),
            mass_slope_norm: to_f64(ms.max_abs()),
        });
        last_mass_slope = Some(ms);
    }
    let (mut factor, mut fit) = (None, None);
    if let (Some(ms), Some(lam)) = (last_mass_slope, base.lam.as_ref()) {
        let metric = MetricField::from_state(base)?;
        let cd = codiff_1(&metric, zeta);
        let basis: Vec<R> = (0..grid.len()).map(|i| base.dens.rho.values()[i] * lam.values()[i] * cd.values()[i]).collect();
        let bb = dot(&basis, &basis);
        if bb > R::zero() {
            let c = dot(&basis, ms.values()) / bb;
            let res: Vec<R> = ms.values().iter().zip(&basis).map(|(&m, &b)| m - c * b).collect();
            factor = Some(to_f64(c));
            fit = Some(to_f64(norm2(&res) / norm2(ms.values()).max(R::min_positive_value())));
        }
    }
    Ok(DphiReport {
        rows,
        kahler_target_norm: kt,
        mass_target_norm: mt,
        mass_prefactor: "rho",
        codiff_factor: factor,
        codiff_fit_residual: fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentReport {
    pub harmonic_norm: f64,
    pub exact_norm: f64,
    pub coexact_norm: f64,
    /// `(‖exact‖² + ‖coexact‖²)^{1/2} / ‖harmonic‖`
    pub non_harmonic_fraction: f64,
    pub exact_fraction: f64,
    pub coexact_fraction: f64,
}

/// Hodge-decomposes a tangent vector `ξ` under `metric` (n ≥ 3).
pub fn tangent_report<R: Real>(metric: &MetricField<R>, basis: &HarmonicBasis<R>, xi: &OneFormField<R>) -> Result<TangentReport> {
    let n = metric.grid().dim();
    if n < 3 {
        return Err(Error::Dimension { required: "n >= 3", actual: n });
    }
    let dec = hodge_decompose(metric, basis, xi)?;
    let norm = |f: &OneFormField<R>| to_f64(inner_product_1(metric, f, f)).max(0.0).sqrt();
    let (h, e, c) = (norm(&dec.harmonic), norm(&dec.exact), norm(&dec.coexact));
    let hh = h.max(f64::MIN_POSITIVE);
    Ok(TangentReport {
        harmonic_norm: h,
        exact_norm: e,
        coexact_norm: c,
        non_harmonic_fraction: (e * e + c * c).sqrt() / hh,
        exact_fraction: e / hh,
        coexact_fraction: c / hh,
    })
}

/// State at the midpoint of two charts, used for the frozen metric.
pub fn midpoint_state<R: Real>(prev: &ModuliChart<R>, next: &ModuliChart<R>) -> Result<TransportState<R>> {
    let half = lit::<R>(0.5);
    let eta = prev.state.eta.lincomb(half, &next.state.eta, half);
    let st = &prev.state;
    assemble_state(&st.grid, &st.cost, &st.dens, &eta)
}

/// `ξ = (η_next − η_prev)/|Δτ|` decomposed under the mid-chart metric `g`.
pub fn tangent_harmonicity<R: Real>(prev: &ModuliChart<R>, next: &ModuliChart<R>) -> Result<TangentReport> {
    let n = prev.state.dim();
    if n < 3 {
        return Err(Error::Dimension { required: "n >= 3", actual: n });
    }
    let dtau = prev.tau.iter().zip(&next.tau).fold(R::zero(), |s, (&a, &b)| s + (b - a) * (b - a)).sqrt();
    if dtau == R::zero() {
        return Err(Error::Config("charts share the same τ".into()));
    }
    let mid = midpoint_state(prev, next)?;
    let metric = MetricField::from_state(&mid)?;
    let basis = crate::hodge::harmonic_basis(&metric, n)?;
    let inv = R::one() / dtau;
    let xi = next.state.eta.lincomb(inv, &prev.state.eta, -inv);
    tangent_report(&metric, &basis, &xi)
}

/// Which first-order operator to analyse in [`n2_kernel_dim_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOperator {
    /// `ζ ↦ (d1 ζ, D(ζ))`
    Full,
    /// Drops the derivative terms `w^{ij} ζ_{i,j}` of `D` (control).
    WithoutDerivatives,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub dim: usize,
    /// Smallest singular values, ascending.
    pub singular_values: Vec<f64>,
    pub largest_singular_value: f64,
    /// First rejected over last accepted singular value.
    pub gap_ratio: f64,
    pub certified: bool,
}

/// Per-node zeroth-order coefficient `q` with `D(ζ) = w^{ij}J(ζ)_ij + q·Aζ`.
fn zeroth_order_coefficients<R: Real>(state: &TransportState<R>) -> Vec<Vec3<R>> {
    let n = state.dim();
    (0..state.grid.len())
        .map(|x| {
            let jet = &state.jets[x];
            let winv = &state.w_inv[x];
            let mut r = zero_vec();
            for s in 0..n {
                let mut v = state.dlog_rhobar_t[x][s];
                for i in 0..n {
                    for j in 0..n {
                        v = v - winv[i][j] * jet.b_x[i][s][j];
                    }
                    for sp in 0..n {
                        v = v - jet.b_inv[sp][i] * jet.b_xbar[i][sp][s];
                    }
                }
                r[s] = v;
            }
            let mut q = zero_vec();
            for k in 0..n {
                for s in 0..n {
                    q[k] = q[k] + r[s] * jet.b_inv[s][k];
                }
            }
            q
        })
        .collect()
}

struct FirstOrderSystem<'a, R: Real> {
    state: &'a TransportState<R>,
    q: Vec<Vec3<R>>,
    with_derivatives: bool,
}

impl<R: Real> FirstOrderSystem<'_, R> {
    fn d_apply(&self, zeta: &OneFormField<R>) -> Vec<R> {
        let n = self.state.dim();
        let zn = edge_to_node(zeta);
        let jac = if self.with_derivatives { Some(mimetic_jacobian(zeta)) } else { None };
        (0..self.state.grid.len())
            .map(|x| {
                let mut v = R::zero();
                for k in 0..n {
                    v = v + self.q[x][k] * zn[x][k];
                }
                if let Some(j) = &jac {
                    for a in 0..n {
                        for b in 0..n {
                            v = v + self.state.w_inv[x][a][b] * j[x][a][b];
                        }
                    }
                }
                v
            })
            .collect()
    }

    fn d_transpose(&self, y: &[R]) -> OneFormField<R> {
        let grid = &self.state.grid;
        let n = grid.dim();
        let half = lit::<R>(0.5);
        let mut comps = vec![vec![R::zero(); grid.len()]; n];
        if self.with_derivatives {
            let m: Vec<Mat3<R>> = (0..grid.len())
                .map(|x| {
                    let mut out = zero_mat();
                    for a in 0..n {
                        for b in 0..n {
                            out[a][b] = self.state.w_inv[x][a][b] * y[x];
                        }
                    }
                    out
                })
                .collect();
            let t = mimetic_jacobian_transpose(grid, &m);
            for (a, c) in comps.iter_mut().enumerate() {
                c.copy_from_slice(t.comp(a));
            }
        }
        for (a, c) in comps.iter_mut().enumerate() {
            for (e, v) in c.iter_mut().enumerate() {
                let up = grid.shift(e, a, 1);
                *v = *v + half * (self.q[e][a] * y[e] + self.q[up][a] * y[up]);
            }
        }
        OneFormField::from_flat(grid, &comps.concat())
    }

    fn normal(&self, x: &[R], out: &mut [R]) {
        let grid = &self.state.grid;
        let zeta = OneFormField::from_flat(grid, x);
        let curl = d1_transpose(&d1(&zeta)).to_flat();
        let dz = self.d_apply(&zeta);
        let back = self.d_transpose(&dz).to_flat();
        for ((o, a), b) in out.iter_mut().zip(curl).zip(back) {
            *o = a + b;
        }
    }
}

/// Kernel dimension of `ζ ↦ (d1 ζ, D(ζ))` on a 2D state (must equal b₁ = 2).
pub fn n2_kernel_dim<R: Real>(state: &TransportState<R>) -> Result<KernelReport> {
    let report = n2_kernel_dim_with(state, KernelOperator::Full)?;
    if !report.certified {
        return Err(Error::SpectralGapTooSmall { dim: report.dim, ratio: report.gap_ratio, threshold: GAP_THRESHOLD });
    }
    Ok(report)
}

pub fn n2_kernel_dim_with<R: Real>(state: &TransportState<R>, op: KernelOperator) -> Result<KernelReport> {
    let n = state.dim();
    if n != 2 {
        return Err(Error::Dimension { required: "n = 2", actual: n });
    }
    let grid = &state.grid;
    let sys = FirstOrderSystem { state, q: zeroth_order_coefficients(state), with_derivatives: op == KernelOperator::Full };
    let len = n * grid.len();
    let normal = |x: &[R], y: &mut [R]| sys.normal(x, y);
    let identity_op = |x: &[R], y: &mut [R]| y.copy_from_slice(x);

    // power iteration for the top of the spectrum
    let mut v: Vec<R> = (0..len).map(|i| lit::<R>(((i * 7919) % 1013) as f64 / 1013.0 - 0.5)).collect();
    let mut top = R::zero();
    let mut nv = vec![R::zero(); len];
    for _ in 0..60 {
        let nrm = norm2(&v);
        v.iter_mut().for_each(|t| *t = *t / nrm);
        normal(&v, &mut nv);
        top = dot(&v, &nv);
        std::mem::swap(&mut v, &mut nv);
    }
    let sigma_max = top.max(R::zero()).sqrt();

    let wanted = 6;
    let mut start = Vec::with_capacity(wanted + 4);
    for a in 0..n {
        let mut c = vec![R::zero(); n];
        c[a] = R::one();
        start.push(OneFormField::constant(grid, &c).to_flat());
    }
    let mut k = 1usize;
    while start.len() < wanted + 4 {
        let kk = k as f64;
        let f = OneFormField::from_fn(grid, |p, a| {
            let t = std::f64::consts::TAU * (to_f64(p[0]) * ((k % 3) as f64) + to_f64(p[1]) * ((k / 3 % 3) as f64));
            lit((t + 0.7 * kk + a as f64).sin() + 0.1 * kk * a as f64)
        })?;
        start.push(f.to_flat());
        k += 1;
    }
    let settings = InverseIterationSettings {
        shift: top * lit(1e-9),
        inner_tol: lit(1e-11),
        outer_tol: lit(1e-8),
        abs_tol: top * lit(1e-15),
        last_tol: Some(lit(1e-6)),
        guard_inner_tol: Some(lit(1e-6)),
        max_outer: 300,
        max_inner: 50_000,
    };
    // the full operator is close to the flat vector Laplacian
    let fft = PoissonPreconditioner::shifted(grid, &[1.0, 1.0], to_f64(settings.shift).max(1e-12));
    let flat_inverse = |x: &[R], y: &mut [R]| {
        let cells = grid.len();
        for a in 0..n {
            let block = a * cells..(a + 1) * cells;
            fft.apply(&x[block.clone()], &mut y[block.clone()]);
            y[block].iter_mut().for_each(|v| *v = -*v);
        }
    };
    let precond: Option<crate::eigen::Operator<'_, R>> =
        if op == KernelOperator::Full { Some(&flat_inverse) } else { None };
    let pairs = smallest_eigenpairs_preconditioned(&normal, &identity_op, precond, start, wanted, &settings)?;
    let sv: Vec<f64> = pairs.values[..wanted].iter().map(|&m| to_f64(m).max(0.0).sqrt()).collect();
    let smax = to_f64(sigma_max);
    let dim = sv.iter().filter(|&&s| s < 1e-6 * smax).count();
    let gap = if dim == 0 || dim >= sv.len() {
        0.0
    } else {
        sv[dim] / sv[dim - 1].max(1e-14 * smax)
    };
    Ok(KernelReport {
        dim,
        singular_values: sv,
        largest_singular_value: smax,
        gap_ratio: gap,
        certified: gap >= GAP_THRESHOLD,
    })
}
