//! Geometric bundle of a candidate map `T = cexp(η)`: the Jacobian, the
//! w-tensor, the mass-balance residual θ, the conformal factor λ, and the
//! linearized operators.
//!
//! Node quantities use the node covector `Aη` (edge average). The diagonal
//! of `DT` is differenced across the node from displacements evaluated at the
//! edge midpoints, which keeps `DT` and `w` on the same compact stencils; for
//! the quadratic cost this makes `w = DT` exactly on closed forms.

use rayon::prelude::*;

use crate::cost::{CostJet, CostModel};
use crate::density::DensityPair;
use crate::error::{Error, Result};
use crate::grid::{centered_diff, d0, d1, edge_to_node, mimetic_jacobian, OneFormField, PeriodicGrid, ScalarField};
use crate::interp::interpolate;
use crate::real::{lit, to_f64, Real};
use crate::small::{det, identity, inverse, mat_mul, sym_eigenvalues, zero_mat, zero_vec, Mat3, Vec3};

/// Closedness tolerance on `‖d1 η‖_∞`.
pub const CLOSED_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TransportState<R: Real> {
    pub grid: PeriodicGrid,
    pub cost: CostModel<R>,
    pub dens: DensityPair<R>,
    pub eta: OneFormField<R>,
    /// Node covector `Aη`.
    pub eta_node: Vec<Vec3<R>>,
    /// `T(x) − x`, unwrapped.
    pub disp: Vec<Vec3<R>>,
    /// `T(x)` reduced to `[0,1)^n`.
    pub t_map: Vec<Vec3<R>>,
    /// `[axis][node]`: component `axis` of the displacement at the edge midpoint.
    pub edge_disp: Vec<Vec<R>>,
    /// `[axis][node]`: `b⁻¹` at the edge midpoint pair.
    pub edge_b_inv: Vec<Vec<Mat3<R>>>,
    pub jets: Vec<CostJet<R>>,
    pub dt: Vec<Mat3<R>>,
    pub w: Vec<Mat3<R>>,
    pub w_inv: Vec<Mat3<R>>,
    pub theta: ScalarField<R>,
    pub det_dt: ScalarField<R>,
    /// `ρ̄(T(x))`.
    pub rhobar_t: ScalarField<R>,
    /// `(ln ρ̄)_s` at `T(x)`.
    pub dlog_rhobar_t: Vec<Vec3<R>>,
    /// Only for n ≥ 3.
    pub lam: Option<ScalarField<R>>,
    pub convex: bool,
    pub min_w_eigenvalue: R,
}

fn cexp_with_jet<R: Real>(cost: &CostModel<R>, n: usize, x: &Vec3<R>, eta: &Vec3<R>) -> Result<(Vec3<R>, Vec3<R>, CostJet<R>)> {
    let (xbar, d) = cost.cexp(n, x, eta)?;
    let jet = cost.jet_at_displacement(n, x, &d)?;
    Ok((xbar, d, jet))
}

/// Builds the state for `η`. Non-convex states are returned with `convex = false`.
pub fn assemble_state<R: Real>(
    grid: &PeriodicGrid,
    cost: &CostModel<R>,
    dens: &DensityPair<R>,
    eta: &OneFormField<R>,
) -> Result<TransportState<R>> {
    let n = grid.dim();
    if eta.grid() != grid || dens.rho.grid() != grid {
        return Err(Error::InvalidField("state inputs live on different grids".into()));
    }
    cost.validate_for_dim(n)?;
    let defect = to_f64(d1(eta).max_abs());
    if defect > CLOSED_TOL {
        return Err(Error::NotClosed { defect });
    }
    let eta_node = edge_to_node(eta);

    let node: Vec<(Vec3<R>, Vec3<R>, CostJet<R>)> = (0..grid.len())
        .into_par_iter()
        .map(|i| cexp_with_jet(cost, n, &grid.point(i), &eta_node[i]))
        .collect::<Result<_>>()?;
    let mut t_map = Vec::with_capacity(grid.len());
    let mut disp = Vec::with_capacity(grid.len());
    let mut jets = Vec::with_capacity(grid.len());
    for (xb, d, j) in node {
        t_map.push(xb);
        disp.push(d);
        jets.push(j);
    }

    let half = lit::<R>(0.5);
    let mut edge_disp = Vec::with_capacity(n);
    let mut edge_b_inv = Vec::with_capacity(n);
    for a in 0..n {
        let h = grid.spacing::<R>(a);
        let per_edge: Vec<(R, Mat3<R>)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mut y = grid.point::<R>(i);
                y[a] = y[a] + half * h;
                let up = grid.shift(i, a, 1);
                let mut cov = zero_vec();
                for b in 0..n {
                    cov[b] = if b == a { eta.comp(a)[i] } else { half * (eta_node[i][b] + eta_node[up][b]) };
                }
                let (_, d, jet) = cexp_with_jet(cost, n, &y, &cov)?;
                Ok((d[a], jet.b_inv))
            })
            .collect::<Result<_>>()?;
        let (ed, eb): (Vec<R>, Vec<Mat3<R>>) = per_edge.into_iter().unzip();
        edge_disp.push(ed);
        edge_b_inv.push(eb);
    }

    let dt = jacobian_of_map(grid, &disp, &edge_disp);
    let jac = mimetic_jacobian(eta);

    let interp: Vec<(R, Vec3<R>)> = t_map.par_iter().map(|p| interpolate(&dens.rhobar, p)).collect();
    let mut rhobar_t = Vec::with_capacity(grid.len());
    let mut dlog = Vec::with_capacity(grid.len());
    for (v, gr) in interp {
        rhobar_t.push(v);
        let mut l = zero_vec();
        for s in 0..n {
            l[s] = gr[s] / v;
        }
        dlog.push(l);
    }

    let tiny = lit::<R>(1e-300_f64.max(to_f64(R::min_positive_value())));
    let mut w = Vec::with_capacity(grid.len());
    let mut w_inv = Vec::with_capacity(grid.len());
    let mut theta = Vec::with_capacity(grid.len());
    let mut det_dt = Vec::with_capacity(grid.len());
    let mut min_eig = R::infinity();
    for i in 0..grid.len() {
        let mut wi = zero_mat();
        for a in 0..n {
            for b in 0..n {
                wi[a][b] = half * (jac[i][a][b] + jac[i][b][a]) + jets[i].c_xx[a][b];
            }
        }
        let ev = sym_eigenvalues(&wi, n)[0];
        min_eig = min_eig.min(ev);
        let dw = det(&wi, n);
        w_inv.push(inverse(&wi, n).unwrap_or_else(|| identity(n)));
        w.push(wi);
        theta.push(dw.max(tiny).ln() - jets[i].det_b.ln() - dens.rho.values()[i].ln() + rhobar_t[i].ln());
        det_dt.push(det(&dt[i], n));
    }

    let lam = if n >= 3 {
        let p = R::one() / lit::<R>((n - 2) as f64);
        Some(ScalarField::new(
            grid,
            (0..grid.len()).map(|i| (dens.rho.values()[i] * rhobar_t[i] / jets[i].det_b).powf(p)).collect(),
        )?)
    } else {
        None
    };

    Ok(TransportState {
        grid: grid.clone(),
        cost: cost.clone(),
        dens: dens.clone(),
        eta: eta.clone(),
        eta_node,
        disp,
        t_map,
        edge_disp,
        edge_b_inv,
        jets,
        dt,
        w,
        w_inv,
        theta: ScalarField::new(grid, theta)?,
        det_dt: ScalarField::new(grid, det_dt)?,
        rhobar_t: ScalarField::new(grid, rhobar_t)?,
        dlog_rhobar_t: dlog,
        lam,
        convex: min_eig > R::zero(),
        min_w_eigenvalue: min_eig,
    })
}

/// `DT = I + ∇(T − x)`: compact diagonal from edge-midpoint displacements,
/// centred differences of node displacements off the diagonal.
pub fn jacobian_of_map<R: Real>(grid: &PeriodicGrid, disp: &[Vec3<R>], edge_disp: &[Vec<R>]) -> Vec<Mat3<R>> {
    let n = grid.dim();
    let comps: Vec<Vec<R>> = (0..n).map(|a| disp.iter().map(|d| d[a]).collect()).collect();
    let cd: Vec<Vec<Vec<R>>> = (0..n).map(|a| (0..n).map(|b| if a == b { Vec::new() } else { centered_diff(grid, &comps[a], b) }).collect()).collect();
    (0..grid.len())
        .map(|i| {
            let mut m = identity(n);
            for a in 0..n {
                let inv_h = R::one() / grid.spacing::<R>(a);
                m[a][a] = m[a][a] + (edge_disp[a][i] - edge_disp[a][grid.shift(i, a, -1)]) * inv_h;
                for b in 0..n {
                    if a != b {
                        m[a][b] = cd[a][b][i];
                    }
                }
            }
            m
        })
        .collect()
}

impl<R: Real> TransportState<R> {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `g = λ w` per node (n ≥ 3).
    pub fn metric_matrices(&self) -> Option<Vec<Mat3<R>>> {
        let lam = self.lam.as_ref()?;
        let n = self.dim();
        Some(
            self.w
                .iter()
                .zip(lam.values())
                .map(|(w, &l)| {
                    let mut g = zero_mat();
                    for a in 0..n {
                        for b in 0..n {
                            g[a][b] = l * w[a][b];
                        }
                    }
                    g
                })
                .collect(),
        )
    }

    /// `max |w − b·DT|` over nodes and entries.
    pub fn id1_defect(&self) -> R {
        let n = self.dim();
        (0..self.grid.len())
            .map(|i| {
                let bdt = mat_mul(&self.jets[i].b, &self.dt[i], n);
                crate::small::max_abs_diff(&self.w[i], &bdt, n)
            })
            .fold(R::zero(), R::max)
    }
}

/// `ρ̄(T)·det DT − ρ` per node.
pub fn pushforward_residual<R: Real>(state: &TransportState<R>) -> ScalarField<R> {
    let vals = (0..state.grid.len())
        .map(|i| state.rhobar_t.values()[i] * state.det_dt.values()[i] - state.dens.rho.values()[i])
        .collect();
    ScalarField::from_raw(&state.grid, vals)
}

/// Linearization of the mass balance along a 1-form `ζ` (no λ prefactor):
/// `w^{ij}ζ_{i,j} − w^{ij}b_{ip̄,j}b^{pk}ζ_k − b^{pk}b_{ip̄,r̄}b^{ri}ζ_k + (ln ρ̄)_s b^{sk}ζ_k`.
pub fn mass_linearization_d<R: Real>(state: &TransportState<R>, zeta: &OneFormField<R>) -> ScalarField<R> {
    let n = state.dim();
    let jac = mimetic_jacobian(zeta);
    let zbar = edge_to_node(zeta);
    let vals: Vec<R> = (0..state.grid.len())
        .into_par_iter()
        .map(|x| {
            let jet = &state.jets[x];
            let winv = &state.w_inv[x];
            let mut u = zero_vec();
            for s in 0..n {
                for k in 0..n {
                    u[s] = u[s] + jet.b_inv[s][k] * zbar[x][k];
                }
            }
            let mut out = R::zero();
            for i in 0..n {
                for j in 0..n {
                    let mut c3 = R::zero();
                    for s in 0..n {
                        c3 = c3 + jet.b_x[i][s][j] * u[s];
                    }
                    out = out + winv[i][j] * (jac[x][i][j] - c3);
                }
            }
            for s in 0..n {
                for i in 0..n {
                    for p in 0..n {
                        out = out - jet.b_inv[s][i] * jet.b_xbar[i][s][p] * u[p];
                    }
                }
                out = out + state.dlog_rhobar_t[x][s] * u[s];
            }
            out
        })
        .collect();
    ScalarField::from_raw(&state.grid, vals)
}

/// Linearized operator `L v = D(d0 v)`: the exact derivative of θ along `η + t·d0 v`.
pub fn linearized_l<R: Real>(state: &TransportState<R>, v: &ScalarField<R>) -> ScalarField<R> {
    mass_linearization_d(state, &d0(v))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LbReport {
    pub linf: f64,
    pub l2: f64,
    pub lhs_l2: f64,
    pub rhs_l2: f64,
}

/// Compares `L z` with `λ(Δ_g z + ½⟨∇θ, ∇z⟩_g)`.
///
/// The right side is evaluated in expanded form,
/// `λ(g^{ij}z_{,ij} + (1/√g) ∂_j(√g g^{ij}) ∂_i z + ½ g^{ij}θ_{,i}z_{,j})`,
/// with the same compact Hessian as `L`.
pub fn lb_check<R: Real>(state: &TransportState<R>, z: &ScalarField<R>) -> Result<LbReport> {
    let n = state.dim();
    let lam = state.lam.as_ref().ok_or(Error::Dimension { required: "n >= 3", actual: n })?;
    if !state.convex {
        return Err(Error::NonConvexBreakdown);
    }
    let grid = &state.grid;
    let lhs = linearized_l(state, z);
    let hz = mimetic_jacobian(&d0(z));
    let lam_v = lam.values();
    let sqrt_g: Vec<R> = (0..grid.len())
        .map(|i| (lam_v[i].powi(n as i32) * det(&state.w[i], n)).sqrt())
        .collect();
    // flux_j = √g g^{ij} summed later against ∂_i z
    let mut div = vec![vec![R::zero(); grid.len()]; n];
    for i in 0..n {
        for j in 0..n {
            let f: Vec<R> = (0..grid.len()).map(|x| sqrt_g[x] * state.w_inv[x][i][j] / lam_v[x]).collect();
            let df = centered_diff(grid, &f, j);
            for x in 0..grid.len() {
                div[i][x] = div[i][x] + df[x];
            }
        }
    }
    let dz: Vec<Vec<R>> = (0..n).map(|a| centered_diff(grid, z.values(), a)).collect();
    let dth: Vec<Vec<R>> = (0..n).map(|a| centered_diff(grid, state.theta.values(), a)).collect();
    let half = lit::<R>(0.5);
    let rhs: Vec<R> = (0..grid.len())
        .map(|x| {
            let mut s = R::zero();
            for i in 0..n {
                s = s + div[i][x] / sqrt_g[x] * dz[i][x];
                for j in 0..n {
                    let gij = state.w_inv[x][i][j] / lam_v[x];
                    s = s + gij * (hz[x][i][j] + half * dth[i][x] * dz[j][x]);
                }
            }
            lam_v[x] * s
        })
        .collect();
    let rhs = ScalarField::from_raw(grid, rhs);
    let diff = lhs.zip_map(&rhs, |a, b| a - b);
    Ok(LbReport {
        linf: to_f64(diff.max_abs()),
        l2: to_f64(diff.l2_norm()),
        lhs_l2: to_f64(lhs.l2_norm()),
        rhs_l2: to_f64(rhs.l2_norm()),
    })
}
